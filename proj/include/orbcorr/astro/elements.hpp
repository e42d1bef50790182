#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <numbers>

namespace orbcorr::astro {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kDeg = std::numbers::pi / 180.0;

/// Eccentricity floor of the Gauss variational form (1/e terms).
inline constexpr double kEccentricityMin = 1e-4;
/// Inclination floor of the Gauss variational form (1/sin i terms).
inline constexpr double kInclinationMin = 0.1 * kDeg;
/// Below this e (or sin i) the perigee (or node) direction is numerically undefined.
inline constexpr double kDegenerateTolerance = 1e-11;

/// Earth model. Defaults are WGS-84 / EGM values.
class PhysicalConstants {
public:
    PhysicalConstants() = default;
    PhysicalConstants(double mu, double re, double j2);

    double mu() const noexcept { return mu_; }
    double re() const noexcept { return re_; }
    double j2() const noexcept { return j2_; }

    /// Same body with the J2 term removed (Keplerian checks).
    PhysicalConstants without_j2() const { return {mu_, re_, 0.0}; }

private:
    double mu_ = 398600.4418;   // km^3/s^2
    double re_ = 6378.137;      // km
    double j2_ = 1.08262668e-3;
};

/// Wraps to [0, 2pi).
double wrap_two_pi(double angle);
/// Wraps to (-pi, pi]; the shortest-arc difference convention used everywhere.
double wrap_pi(double angle);

/// Classical elements with argument of latitude u = argp + true anomaly.
/// Angles in radians, a in km.
struct OrbitalElements {
    double a = 0.0;
    double e = 0.0;
    double i = 0.0;
    double raan = 0.0;
    double argp = 0.0;
    double u = 0.0;

    double p() const { return a * (1.0 - e * e); }
    double true_anomaly() const { return wrap_two_pi(u - argp); }
    double radius() const;
    double angular_momentum(const PhysicalConstants& c) const;

    /// Throws DomainError if a <= 0, e outside [0, 1), i outside [0, pi] or any entry non-finite.
    void validate() const;
    /// Copy with raan, argp, u wrapped to [0, 2pi).
    OrbitalElements wrapped() const;

    Vec6 as_vector() const;
    static OrbitalElements from_vector(const Vec6& v);
};

/// ECI state. Positions in km, velocities in km/s, epoch in seconds from scenario start.
struct CartesianState {
    Vec3 position = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
    double epoch = 0.0;
};

/// n = sqrt(mu / a^3). Throws DomainError for a <= 0.
double mean_motion(double a, const PhysicalConstants& c = {});

CartesianState elements_to_cartesian(const OrbitalElements& x, const PhysicalConstants& c = {},
                                     double epoch = 0.0);

/// Inverse of elements_to_cartesian. Degenerate conventions: a circular state gives argp = 0
/// (u carries the in-plane angle from the node); an equatorial state gives raan = 0 (u is
/// measured from +X). Throws UnsupportedRegimeError for non-elliptic states.
OrbitalElements cartesian_to_elements(const CartesianState& s, const PhysicalConstants& c = {});

/// Rotation from LVLH [radial, along-track, cross-track] into ECI at the given state.
Eigen::Matrix3d lvlh_to_eci(const CartesianState& s);

/// Element difference with angle rows wrapped to (-pi, pi].
Vec6 element_difference(const OrbitalElements& lhs, const OrbitalElements& rhs);

}  // namespace orbcorr::astro
