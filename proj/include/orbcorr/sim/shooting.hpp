#pragma once

#include "orbcorr/astro/dynamics.hpp"

#include <Eigen/Core>

#include <optional>

namespace orbcorr::sim {

using astro::DisturbanceConfig;
using astro::OrbitalElements;
using astro::PhysicalConstants;
using astro::Vec3;
using astro::Vec6;

using ShootingJacobian = Eigen::Matrix<double, 6, 4>;

struct ShootingOptions {
    int max_iterations = 20;
    double tolerance = 1e-3;      // weighted residual norm counted as a hit
    double step_tolerance = 1e-6; // relative decrease predicted by the linear model; below it is stationary
    double dt = 120.0;            // oracle integration step, s
    double fd_dv = 1e-6;          // km/s
    double fd_epoch = 1.0;        // s
    /// Residual scales for (a km, e cos w, e sin w, i, raan, u).
    Vec6 scales = (Vec6() << 1.0, 1e-3, 1e-3, 0.01 * astro::kDeg, 0.01 * astro::kDeg,
                   0.1 * astro::kDeg).finished();
};

/// One burn to retarget: from x_now at t_now, coast to burn_epoch + shift, fire
/// planned_dv + correction tilted by the pointing bias, coast to arrival_epoch and compare
/// with waypoint.
struct ShootingProblem {
    OrbitalElements x_now;
    double t_now = 0.0;
    Vec3 planned_dv = Vec3::Zero();
    double burn_epoch = 0.0;
    Eigen::Vector2d pointing_bias = Eigen::Vector2d::Zero();  // rad, thrust-aligned angles
    OrbitalElements waypoint;
    double arrival_epoch = 0.0;
    DisturbanceConfig disturbances;  // deterministic part only is used
    double min_shift = -120.0;       // s, bounds on the epoch shift
    double max_shift = 120.0;
};

struct ShootingResult {
    Vec3 dv = Vec3::Zero();  // correction added to planned_dv, km/s
    double epoch_shift = 0.0;
    int iterations = 0;
    bool converged = false;
    double residual = 0.0;   // weighted norm at the solution
    ShootingJacobian jacobian = ShootingJacobian::Zero();
};

/// Command whose biased execution equals `planned` (fixed point of the thrust-aligned rotation).
Vec3 compensated_command(const Vec3& planned, const Eigen::Vector2d& bias);

/// Weighted nonsingular element error at arrival for the given correction.
Vec6 shooting_residual(const ShootingProblem& pb, const Vec3& dv, double shift,
                       const ShootingOptions& opts = {}, const PhysicalConstants& c = {});

/// Levenberg-Marquardt on (dv, shift) with a central-difference Jacobian. `warm` seeds the
/// unknowns and its Jacobian is used for the first step. Converged means the weighted residual
/// fell below opts.tolerance or the least-squares solution became stationary.
/// The shift is also kept at or after t_now and before the midpoint to arrival.
/// Throws DomainError when arrival_epoch <= burn_epoch or the shift bounds are empty.
ShootingResult shooting_correction(const ShootingProblem& pb, const ShootingOptions& opts = {},
                                   const PhysicalConstants& c = {},
                                   const std::optional<ShootingResult>& warm = std::nullopt);

}  // namespace orbcorr::sim
