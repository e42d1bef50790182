#include "orbcorr/sim/miss.hpp"

#include "orbcorr/errors.hpp"

#include <fmt/format.h>

#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace orbcorr::sim {

namespace {

// Curve point in the perifocal frame.
struct Curve {
    double p, e;

    Eigen::Vector2d at(double theta) const {
        const double r = p / (1.0 + e * std::cos(theta));
        return {r * std::cos(theta), r * std::sin(theta)};
    }
};

Eigen::Matrix3d perifocal_to_eci(const OrbitalElements& x) {
    return (Eigen::AngleAxisd(x.raan, Vec3::UnitZ()) * Eigen::AngleAxisd(x.i, Vec3::UnitX()) *
            Eigen::AngleAxisd(x.argp, Vec3::UnitZ()))
        .toRotationMatrix();
}

// Coarse curve samples shared by every query against the same (p, e).
struct Table {
    Curve curve;
    double h = 0.0;
    Eigen::Matrix2Xd points;

    Table(const Curve& c, double step) : curve(c) {
        const int n = static_cast<int>(std::ceil(astro::kTwoPi / step));
        h = astro::kTwoPi / n;
        points.resize(2, n);
        for (int k = 0; k < n; ++k) points.col(k) = curve.at(k * h);
    }
};

double in_frame_distance(const Vec3& q, const Table& table, const MissOptions& opts) {
    const Curve& curve = table.curve;
    const double h = table.h;
    auto d2 = [&](double th) {
        const Eigen::Vector2d c = curve.at(th);
        return (q.head<2>() - c).squaredNorm() + q.z() * q.z();
    };
    Eigen::Index best = 0;
    const double best_d2 = (table.points.colwise() - q.head<2>()).colwise().squaredNorm().minCoeff(&best) +
                           q.z() * q.z();
    // golden-section on the bracketing cells
    double lo = (best - 1) * h;
    double hi = (best + 1) * h;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    const double tol = opts.tolerance / std::max(curve.p, 1.0);
    double x1 = hi - g * (hi - lo);
    double x2 = lo + g * (hi - lo);
    double f1 = d2(x1), f2 = d2(x2);
    while (hi - lo > tol) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = d2(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = d2(x2);
        }
    }
    return std::sqrt(std::min({best_d2, f1, f2}));
}

}  // namespace

OrbitalElements drifted(const OrbitalElements& x, double t, const PhysicalConstants& c) {
    if (t == 0.0) return x;
    return OrbitalElements::from_vector(x.as_vector() + astro::secular_rates(x, c) * t).wrapped();
}

double distance_to_orbit(const Vec3& position, const OrbitalElements& target,
                         const PhysicalConstants&, const MissOptions& opts) {
    const Vec3 q = perifocal_to_eci(target).transpose() * position;
    return in_frame_distance(q, Table({target.p(), target.e}, opts.grid_step), opts);
}

double miss_distance(const Trajectory& traj, const OrbitalElements& target,
                     const PhysicalConstants& c, const MissOptions& opts) {
    if (traj.empty()) throw DomainError("miss distance needs a non-empty trajectory");
    if (!(opts.grid_step > 0.0) || !(opts.tolerance > 0.0)) {
        throw DomainError(fmt::format("miss distance grid {} and tolerance {} must be positive",
                                      opts.grid_step, opts.tolerance));
    }
    const Table table({target.p(), target.e}, opts.grid_step);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const auto& s = traj.samples[k];
        const OrbitalElements tgt = opts.drift ? drifted(target, s.t, c) : target;
        const Vec3 r = astro::elements_to_cartesian(s.x, c, s.t).position;
        best = std::min(best, in_frame_distance(perifocal_to_eci(tgt).transpose() * r, table, opts));
    }
    return best;
}

}  // namespace orbcorr::sim
