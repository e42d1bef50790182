#pragma once

#include "orbcorr/astro/elements.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace orbcorr::astro {

using ControlMatrix = Eigen::Matrix<double, 6, 3>;

/// Exponential-atmosphere cannonball drag.
struct DragModel {
    double ballistic_coefficient = 0.0;  // Cd*A/m, m^2/kg
    double reference_density = 0.0;      // kg/m^3 at reference_altitude
    double reference_altitude = 700.0;   // km
    double scale_height = 100.0;         // km
};

/// Constant-magnitude solar radiation pressure pushing away from the Sun, no eclipse.
struct SrpModel {
    bool enabled = false;
    double acceleration = 0.0;  // km/s^2
};

/// Point-mass lunisolar tidal terms on circular ecliptic ephemerides.
struct ThirdBodyModel {
    bool moon = false;
    bool sun = false;
    double moon_phase = 0.0;  // ecliptic longitude at t = 0, rad
    double sun_phase = 0.0;
};

/// Environmental forcing d of the state-space model. All zeros means d = 0.
struct DisturbanceConfig {
    DragModel drag;
    SrpModel srp;
    ThirdBodyModel third_body;
    double noise_std = 0.0;  // white-noise acceleration per axis, km/s^2

    bool is_zero() const;
    /// Only deterministic terms (drag, SRP, third body); noise removed.
    DisturbanceConfig deterministic() const;
    void validate() const;
};

/// Impulsive burn [f_r, f_c, f_n] in km/s at a scenario epoch in seconds.
struct LvlhImpulse {
    Vec3 dv = Vec3::Zero();
    double epoch = 0.0;
};

/// J2 secular rates A(x) = [0, 0, 0, raan_dot, argp_dot, u_dot].
Vec6 secular_rates(const OrbitalElements& x, const PhysicalConstants& c = {});

/// Gauss variational coupling B(x); columns are [f_r, f_c, f_n].
/// Throws SingularityError when e < e_min or sin i < sin(i_min).
ControlMatrix control_matrix(const OrbitalElements& x, const PhysicalConstants& c = {});

/// B(x) evaluated with e and i lifted to their floors. Used inside the integrator,
/// where a transiently near-circular state must not abort the run.
ControlMatrix control_matrix_guarded(const OrbitalElements& x, const PhysicalConstants& c = {});

/// Disturbance acceleration in LVLH (km/s^2). `noise_draw` is a standard-normal triple
/// scaled by cfg.noise_std; pass zero for the deterministic part only.
Vec3 disturbance_acceleration(const CartesianState& s, const DisturbanceConfig& cfg,
                              const Vec3& noise_draw = Vec3::Zero(),
                              const PhysicalConstants& c = {});

/// x_dot = A(x) + B(x)(control + disturbance), both LVLH accelerations in km/s^2.
Vec6 derivative(const OrbitalElements& x, const Vec3& control, const Vec3& disturbance,
                const PhysicalConstants& c = {});

/// Instantaneous burn: the LVLH dv is rotated by `pointing` (thrust-direction error), added
/// to the ECI velocity and the state converted back. Throws UnsupportedRegimeError when
/// the result is unbound.
OrbitalElements apply_impulse(const OrbitalElements& x, const Vec3& dv,
                              const Eigen::Matrix3d& pointing = Eigen::Matrix3d::Identity(),
                              const PhysicalConstants& c = {});

struct TrajectorySample {
    double t = 0.0;
    OrbitalElements x;
};

struct Trajectory {
    std::vector<TrajectorySample> samples;

    const TrajectorySample& back() const { return samples.back(); }
    bool empty() const { return samples.empty(); }
    std::size_t size() const { return samples.size(); }
    CartesianState cartesian(std::size_t k, const PhysicalConstants& c = {}) const;
};

/// Fixed-step RK4 integrator of the element dynamics with burns applied on demand.
/// Steps stay inside the grid cells [t0 + k dt, t0 + (k+1) dt]; the noise triple is drawn once
/// per cell, so the realization depends only on the seed and the grid, not on where burns
/// split the steps.
class Propagator {
public:
    Propagator(const OrbitalElements& x0, double t0, DisturbanceConfig cfg, double dt,
               std::uint64_t seed, PhysicalConstants constants = {});

    /// Integrates to epoch t (>= time()); the last step is shortened to land exactly on t.
    /// `on_step` (if set) is called after every completed step.
    template <typename OnStep>
    void advance_to(double t, OnStep&& on_step);
    void advance_to(double t) {
        advance_to(t, [](double, const OrbitalElements&) {});
    }

    void apply(const Vec3& dv, const Eigen::Matrix3d& pointing = Eigen::Matrix3d::Identity());

    const OrbitalElements& state() const { return x_; }
    double time() const { return t_; }
    const PhysicalConstants& constants() const { return constants_; }
    void reset_state(const OrbitalElements& x) { x_ = x; }

private:
    void step(double h);
    double cell_end() const;

    OrbitalElements x_;
    double t0_;
    double t_;
    long cell_ = -1;
    Vec3 noise_ = Vec3::Zero();
    DisturbanceConfig cfg_;
    bool forced_;
    double dt_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    PhysicalConstants constants_;
};

template <typename OnStep>
void Propagator::advance_to(double t, OnStep&& on_step) {
    while (t - t_ > 1e-9) {
        step(std::min(cell_end(), t) - t_);
        on_step(t_, x_);
    }
}

/// Integrates x0 over [0, t_span] applying sorted `burns` at their epochs.
/// Samples are recorded at t = 0, every `sample_interval` seconds (default: each step)
/// and at t_span.
Trajectory propagate(const OrbitalElements& x0, std::span<const LvlhImpulse> burns,
                     const DisturbanceConfig& cfg, double t_span, double dt, std::uint64_t seed,
                     const PhysicalConstants& c = {}, double sample_interval = 0.0);

}  // namespace orbcorr::astro
