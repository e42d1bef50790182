#include "orbcorr/astro/dynamics.hpp"

#include "orbcorr/errors.hpp"

#include <Eigen/Geometry>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace orbcorr::astro {

namespace {

constexpr double kMoonMu = 4902.800066;          // km^3/s^2
constexpr double kMoonDistance = 384400.0;       // km
constexpr double kMoonPeriod = 27.321661 * 86400.0;
constexpr double kSunMu = 1.32712440018e11;
constexpr double kSunDistance = 149597870.7;
constexpr double kSunPeriod = 365.25636 * 86400.0;
constexpr double kObliquity = 23.4392911 * kDeg;

Vec3 ecliptic_direction(double longitude) {
    return {std::cos(longitude), std::sin(longitude) * std::cos(kObliquity),
            std::sin(longitude) * std::sin(kObliquity)};
}

Vec3 tidal_acceleration(const Vec3& r, const Vec3& body, double mu) {
    const Vec3 rel = body - r;
    return mu * (rel / std::pow(rel.norm(), 3) - body / std::pow(body.norm(), 3));
}

// e < 0 from an overshooting stage is the same orbit with the perigee flipped.
OrbitalElements canonical(OrbitalElements x) {
    if (x.e < 0.0) {
        x.e = -x.e;
        x.argp += std::numbers::pi;
    }
    return x;
}

}  // namespace

bool DisturbanceConfig::is_zero() const {
    const bool drag_off = drag.ballistic_coefficient == 0.0 || drag.reference_density == 0.0;
    const bool srp_off = !srp.enabled || srp.acceleration == 0.0;
    return drag_off && srp_off && !third_body.moon && !third_body.sun && noise_std == 0.0;
}

DisturbanceConfig DisturbanceConfig::deterministic() const {
    DisturbanceConfig d = *this;
    d.noise_std = 0.0;
    return d;
}

void DisturbanceConfig::validate() const {
    if (drag.ballistic_coefficient < 0.0 || drag.reference_density < 0.0 ||
        srp.acceleration < 0.0 || noise_std < 0.0) {
        throw DomainError("disturbance magnitudes must be non-negative");
    }
    if (!(drag.scale_height > 0.0)) throw DomainError("drag scale height must be positive");
}

Vec6 secular_rates(const OrbitalElements& x, const PhysicalConstants& c) {
    const double n = mean_motion(x.a, c);
    const double p = x.p();
    const double h = x.angular_momentum(c);
    const double r = x.radius();
    const double k = c.re() * c.re() * c.j2() * n / (p * p);
    const double s2 = std::sin(x.i) * std::sin(x.i);
    const double eta = std::sqrt(1.0 - x.e * x.e);

    Vec6 rates = Vec6::Zero();
    rates[3] = -1.5 * k * std::cos(x.i);
    rates[4] = 0.75 * k * (4.0 - 5.0 * s2);
    rates[5] = h / (r * r) - 0.75 * k * (s2 * (5.0 - 3.0 * eta) + (2.0 * eta - 4.0));
    return rates;
}

ControlMatrix control_matrix(const OrbitalElements& x, const PhysicalConstants& c) {
    if (x.e < kEccentricityMin) {
        throw SingularityError(
            "e", fmt::format("control matrix singular: e = {} below e_min = {}", x.e,
                             kEccentricityMin));
    }
    if (std::sin(x.i) < std::sin(kInclinationMin)) {
        throw SingularityError(
            "i", fmt::format("control matrix singular: i = {} deg below i_min = {} deg",
                             x.i / kDeg, kInclinationMin / kDeg));
    }
    const double p = x.p();
    const double h = x.angular_momentum(c);
    const double r = x.radius();
    const double th = x.true_anomaly();
    const double st = std::sin(th), ct = std::cos(th);
    const double su = std::sin(x.u), cu = std::cos(x.u);
    const double a2 = x.a * x.a;

    ControlMatrix b = ControlMatrix::Zero();
    b(0, 0) = 2.0 * a2 / h * x.e * st;
    b(0, 1) = 2.0 * a2 * p / (h * r);
    b(1, 0) = p * st / h;
    b(1, 1) = ((p + r) * ct + r * x.e) / h;
    b(2, 2) = r * cu / h;
    b(3, 2) = r * su / (h * std::sin(x.i));
    b(4, 0) = -p / (h * x.e) * ct;
    b(4, 1) = p / (h * x.e) * (1.0 + r / p) * st;
    b(4, 2) = -r * su / (h * std::tan(x.i));
    b(5, 2) = -r * su / (h * std::tan(x.i));
    return b;
}

ControlMatrix control_matrix_guarded(const OrbitalElements& x, const PhysicalConstants& c) {
    OrbitalElements g = x;
    g.e = std::max(g.e, kEccentricityMin);
    if (std::sin(g.i) < std::sin(kInclinationMin)) {
        g.i = g.i < std::numbers::pi / 2 ? kInclinationMin : std::numbers::pi - kInclinationMin;
    }
    return control_matrix(g, c);
}

Vec3 disturbance_acceleration(const CartesianState& s, const DisturbanceConfig& cfg,
                              const Vec3& noise_draw, const PhysicalConstants& c) {
    Vec3 eci = Vec3::Zero();
    const Vec3& r = s.position;
    const Vec3& v = s.velocity;

    if (cfg.drag.ballistic_coefficient > 0.0 && cfg.drag.reference_density > 0.0) {
        const double altitude = r.norm() - c.re();
        const double rho = cfg.drag.reference_density *
                           std::exp(-(altitude - cfg.drag.reference_altitude) / cfg.drag.scale_height);
        const double speed_m = v.norm() * 1000.0;
        // 0.5 rho v^2 (CdA/m) in m/s^2, converted to km/s^2
        const double mag = 0.5 * rho * speed_m * speed_m * cfg.drag.ballistic_coefficient / 1000.0;
        eci -= mag * v.normalized();
    }
    if (cfg.srp.enabled && cfg.srp.acceleration > 0.0) {
        const double lon = cfg.third_body.sun_phase + kTwoPi * s.epoch / kSunPeriod;
        eci -= cfg.srp.acceleration * ecliptic_direction(lon);
    }
    if (cfg.third_body.moon) {
        const double lon = cfg.third_body.moon_phase + kTwoPi * s.epoch / kMoonPeriod;
        eci += tidal_acceleration(r, kMoonDistance * ecliptic_direction(lon), kMoonMu);
    }
    if (cfg.third_body.sun) {
        const double lon = cfg.third_body.sun_phase + kTwoPi * s.epoch / kSunPeriod;
        eci += tidal_acceleration(r, kSunDistance * ecliptic_direction(lon), kSunMu);
    }

    Vec3 lvlh = lvlh_to_eci(s).transpose() * eci;
    if (cfg.noise_std > 0.0) lvlh += cfg.noise_std * noise_draw;
    return lvlh;
}

Vec6 derivative(const OrbitalElements& x, const Vec3& control, const Vec3& disturbance,
                const PhysicalConstants& c) {
    Vec6 xdot = secular_rates(x, c);
    const Vec3 forcing = control + disturbance;
    if (!forcing.isZero(0.0)) xdot += control_matrix(x, c) * forcing;
    return xdot;
}

OrbitalElements apply_impulse(const OrbitalElements& x, const Vec3& dv,
                              const Eigen::Matrix3d& pointing, const PhysicalConstants& c) {
    if (dv.isZero(0.0)) return x;
    CartesianState s = elements_to_cartesian(x, c);
    s.velocity += lvlh_to_eci(s) * (pointing * dv);
    return cartesian_to_elements(s, c);
}

CartesianState Trajectory::cartesian(std::size_t k, const PhysicalConstants& c) const {
    return elements_to_cartesian(samples.at(k).x, c, samples.at(k).t);
}

Propagator::Propagator(const OrbitalElements& x0, double t0, DisturbanceConfig cfg, double dt,
                       std::uint64_t seed, PhysicalConstants constants)
    : x_(x0.wrapped()), t0_(t0), t_(t0), cfg_(cfg), forced_(!cfg.is_zero()), dt_(dt), rng_(seed),
      constants_(constants) {
    if (!(dt > 0.0)) throw DomainError(fmt::format("integration step must be positive (dt = {})", dt));
    cfg_.validate();
    x_.validate();
}

double Propagator::cell_end() const {
    const double k = std::floor((t_ - t0_) / dt_ + 1e-9);
    return t0_ + (k + 1.0) * dt_;
}

void Propagator::step(double h) {
    if (cfg_.noise_std > 0.0) {
        const long cell = static_cast<long>(std::floor((t_ - t0_) / dt_ + 1e-9));
        for (; cell_ < cell; ++cell_) {
            for (int k = 0; k < 3; ++k) noise_[k] = normal_(rng_);
        }
    }
    const Vec3& noise = noise_;

    auto f = [&](const Vec6& xv, double t) -> Vec6 {
        const OrbitalElements x = canonical(OrbitalElements::from_vector(xv));
        Vec6 xdot = secular_rates(x, constants_);
        if (forced_) {
            const CartesianState s = elements_to_cartesian(x, constants_, t);
            const Vec3 d = disturbance_acceleration(s, cfg_, noise, constants_);
            xdot += control_matrix_guarded(x, constants_) * d;
        }
        return xdot;
    };

    const Vec6 y = x_.as_vector();
    const Vec6 k1 = f(y, t_);
    const Vec6 k2 = f(y + 0.5 * h * k1, t_ + 0.5 * h);
    const Vec6 k3 = f(y + 0.5 * h * k2, t_ + 0.5 * h);
    const Vec6 k4 = f(y + h * k3, t_ + h);
    const Vec6 next = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    OrbitalElements x = canonical(OrbitalElements::from_vector(next));
    const double t_next = t_ + h;
    if (!next.allFinite() || !(x.a > 0.0) || !(x.e < 1.0) || x.i < 0.0 ||
        x.i > std::numbers::pi) {
        throw PropagationError(
            t_next, fmt::format("integration step to t = {} s produced invalid elements "
                                "(a = {}, e = {}, i = {})", t_next, x.a, x.e, x.i));
    }
    if (x.a * (1.0 - x.e) <= constants_.re()) {
        throw PropagationError(t_next, fmt::format("perigee below the surface at t = {} s", t_next));
    }
    x_ = x.wrapped();
    t_ = t_next;
}

void Propagator::apply(const Vec3& dv, const Eigen::Matrix3d& pointing) {
    x_ = apply_impulse(x_, dv, pointing, constants_).wrapped();
}

Trajectory propagate(const OrbitalElements& x0, std::span<const LvlhImpulse> burns,
                     const DisturbanceConfig& cfg, double t_span, double dt, std::uint64_t seed,
                     const PhysicalConstants& c, double sample_interval) {
    if (!(t_span >= 0.0)) throw DomainError("propagation span must be non-negative");
    for (std::size_t k = 0; k < burns.size(); ++k) {
        if (burns[k].epoch < 0.0 || burns[k].epoch > t_span) {
            throw DomainError(fmt::format("burn {} epoch {} s outside [0, {}]", k, burns[k].epoch, t_span));
        }
        if (k > 0 && burns[k].epoch < burns[k - 1].epoch) {
            throw DomainError("burn epochs must be sorted");
        }
        if (!burns[k].dv.allFinite()) throw DomainError(fmt::format("burn {} has non-finite dv", k));
    }

    Propagator prop(x0, 0.0, cfg, dt, seed, c);
    const double interval = sample_interval > 0.0 ? sample_interval : dt;
    Trajectory traj;
    traj.samples.push_back({0.0, prop.state()});
    double next_sample = interval;
    auto record = [&](double t, const OrbitalElements& x) {
        if (t >= next_sample - 1e-9) {
            traj.samples.push_back({t, x});
            while (next_sample <= t + 1e-9) next_sample += interval;
        }
    };
    for (const auto& burn : burns) {
        prop.advance_to(burn.epoch, record);
        prop.apply(burn.dv);
    }
    prop.advance_to(t_span, record);
    if (traj.samples.back().t < t_span - 1e-9) {
        traj.samples.push_back({t_span, prop.state()});
    } else {
        traj.samples.back().x = prop.state();
    }
    return traj;
}

}  // namespace orbcorr::astro
