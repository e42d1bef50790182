#include "orbcorr/astro/elements.hpp"

#include "orbcorr/errors.hpp"

#include <Eigen/Geometry>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace orbcorr::astro {

PhysicalConstants::PhysicalConstants(double mu, double re, double j2) : mu_(mu), re_(re), j2_(j2) {
    if (!(mu > 0.0) || !(re > 0.0) || !(j2 >= 0.0)) {
        throw DomainError("physical constants must be positive");
    }
}

double wrap_two_pi(double angle) {
    double w = std::fmod(angle, kTwoPi);
    if (w < 0.0) w += kTwoPi;
    // fmod of a tiny negative value can round up to exactly 2pi
    if (w >= kTwoPi) w = 0.0;
    return w;
}

double wrap_pi(double angle) {
    double w = wrap_two_pi(angle);
    return w > std::numbers::pi ? w - kTwoPi : w;
}

double OrbitalElements::radius() const { return p() / (1.0 + e * std::cos(true_anomaly())); }

double OrbitalElements::angular_momentum(const PhysicalConstants& c) const {
    return std::sqrt(c.mu() * p());
}

void OrbitalElements::validate() const {
    const bool finite = std::isfinite(a) && std::isfinite(e) && std::isfinite(i) &&
                        std::isfinite(raan) && std::isfinite(argp) && std::isfinite(u);
    if (!finite) throw DomainError("orbital elements contain non-finite entries");
    if (!(a > 0.0)) throw DomainError(fmt::format("semi-major axis must be positive (a = {})", a));
    if (!(e >= 0.0 && e < 1.0)) {
        throw DomainError(fmt::format("eccentricity outside [0, 1) (e = {})", e));
    }
    if (!(i >= 0.0 && i <= std::numbers::pi)) {
        throw DomainError(fmt::format("inclination outside [0, pi] (i = {})", i));
    }
}

OrbitalElements OrbitalElements::wrapped() const {
    OrbitalElements w = *this;
    w.raan = wrap_two_pi(raan);
    w.argp = wrap_two_pi(argp);
    w.u = wrap_two_pi(u);
    return w;
}

Vec6 OrbitalElements::as_vector() const {
    Vec6 v;
    v << a, e, i, raan, argp, u;
    return v;
}

OrbitalElements OrbitalElements::from_vector(const Vec6& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

double mean_motion(double a, const PhysicalConstants& c) {
    if (!(a > 0.0)) throw DomainError(fmt::format("mean motion needs a > 0 (a = {})", a));
    return std::sqrt(c.mu() / (a * a * a));
}

CartesianState elements_to_cartesian(const OrbitalElements& x, const PhysicalConstants& c,
                                     double epoch) {
    const double p = x.p();
    const double r = x.radius();
    const double cO = std::cos(x.raan), sO = std::sin(x.raan);
    const double cu = std::cos(x.u), su = std::sin(x.u);
    const double ci = std::cos(x.i), si = std::sin(x.i);
    const double cw = std::cos(x.argp), sw = std::sin(x.argp);
    const double k = std::sqrt(c.mu() / p);

    CartesianState s;
    s.epoch = epoch;
    s.position = r * Vec3(cO * cu - sO * su * ci, sO * cu + cO * su * ci, su * si);
    const double su_e = su + x.e * sw;
    const double cu_e = cu + x.e * cw;
    s.velocity = -k * Vec3(cO * su_e + sO * cu_e * ci, sO * su_e - cO * cu_e * ci, -cu_e * si);
    return s;
}

OrbitalElements cartesian_to_elements(const CartesianState& s, const PhysicalConstants& c) {
    const Vec3& rv = s.position;
    const Vec3& vv = s.velocity;
    const double r = rv.norm();
    if (!(r > 0.0)) throw DomainError("position vector has zero length");
    const double v2 = vv.squaredNorm();
    const double energy = 0.5 * v2 - c.mu() / r;
    if (!(energy < 0.0)) {
        throw UnsupportedRegimeError(
            fmt::format("state is not a bound orbit (specific energy {} km^2/s^2)", energy));
    }

    const Vec3 hv = rv.cross(vv);
    const double h = hv.norm();
    const Vec3 h_hat = hv / h;
    const Vec3 e_vec = ((v2 - c.mu() / r) * rv - rv.dot(vv) * vv) / c.mu();

    OrbitalElements x;
    x.a = -c.mu() / (2.0 * energy);
    x.e = e_vec.norm();
    x.i = std::acos(std::clamp(h_hat.z(), -1.0, 1.0));

    // In-plane basis: p_hat along the line of nodes (or +X when equatorial).
    Vec3 p_hat;
    if (std::sin(x.i) < kDegenerateTolerance) {
        x.raan = 0.0;
        p_hat = Vec3::UnitX();
    } else {
        x.raan = wrap_two_pi(std::atan2(hv.x(), -hv.y()));
        p_hat = Vec3(std::cos(x.raan), std::sin(x.raan), 0.0);
    }
    const Vec3 q_hat = h_hat.cross(p_hat);

    x.u = wrap_two_pi(std::atan2(rv.dot(q_hat), rv.dot(p_hat)));
    if (x.e < kDegenerateTolerance) {
        x.argp = 0.0;
    } else {
        x.argp = wrap_two_pi(std::atan2(e_vec.dot(q_hat), e_vec.dot(p_hat)));
    }
    return x;
}

Eigen::Matrix3d lvlh_to_eci(const CartesianState& s) {
    const Vec3 r_hat = s.position.normalized();
    const Vec3 n_hat = s.position.cross(s.velocity).normalized();
    const Vec3 t_hat = n_hat.cross(r_hat);
    Eigen::Matrix3d m;
    m.col(0) = r_hat;
    m.col(1) = t_hat;
    m.col(2) = n_hat;
    return m;
}

Vec6 element_difference(const OrbitalElements& lhs, const OrbitalElements& rhs) {
    Vec6 d = lhs.as_vector() - rhs.as_vector();
    for (int k = 3; k < 6; ++k) d[k] = wrap_pi(d[k]);
    return d;
}

}  // namespace orbcorr::astro
