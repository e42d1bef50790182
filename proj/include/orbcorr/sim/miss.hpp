#pragma once

#include "orbcorr/astro/dynamics.hpp"

namespace orbcorr::sim {

using astro::OrbitalElements;
using astro::PhysicalConstants;
using astro::Trajectory;
using astro::Vec3;

struct MissOptions {
    double grid_step = 0.1 * astro::kDeg;  // coarse anomaly spacing of the target curve
    double tolerance = 1e-3;               // km, golden-section stopping width along the curve
    bool drift = true;                     // target plane precesses with the J2 secular rates
};

/// Distance from an ECI point to the orbit curve of `target` (closed ellipse), km.
double distance_to_orbit(const Vec3& position, const OrbitalElements& target,
                         const PhysicalConstants& c = {}, const MissOptions& opts = {});

/// Minimum over the trajectory samples of the distance to the target orbit curve, where the
/// target elements are given at t = 0 and (with opts.drift) moved to each sample's epoch.
/// Throws DomainError for an empty trajectory.
double miss_distance(const Trajectory& traj, const OrbitalElements& target,
                     const PhysicalConstants& c = {}, const MissOptions& opts = {});

/// Target elements at epoch t under the secular J2 rates (exact for the ideal model).
OrbitalElements drifted(const OrbitalElements& x, double t, const PhysicalConstants& c = {});

}  // namespace orbcorr::sim
