#pragma once

#include "orbcorr/astro/dynamics.hpp"

#include <Eigen/Core>

namespace orbcorr::est {

using astro::ControlMatrix;
using astro::OrbitalElements;
using astro::PhysicalConstants;
using astro::Vec3;
using astro::Vec6;

using Vec8 = Eigen::Matrix<double, 8, 1>;
using Mat8 = Eigen::Matrix<double, 8, 8>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec2 = Eigen::Vector2d;

constexpr int kElementStates = 6;
constexpr int kBiasIndex = 6;

/// Mean and covariance of [da, dex, dey, di, draan, du, beta_1, beta_2]: deviations from the
/// reference trajectory in nonsingular elements, then the two thrust-pointing bias angles.
struct FilterState {
    Vec8 mean = Vec8::Zero();
    Mat8 cov = Mat8::Identity();
    double epoch = 0.0;

    Vec2 bias() const { return mean.tail<2>(); }
    /// sqrt of the bias covariance trace, rad.
    double bias_sigma() const;
    /// Throws NumericalError unless cov is finite, symmetric and PSD within 1e-10.
    void check() const;
};

/// Nonsingular set (a, e cos w, e sin w, i, raan, u); well defined for circular orbits.
Vec6 nonsingular(const OrbitalElements& x);
OrbitalElements from_nonsingular(const Vec6& y);
/// y_a - y_b with the three angle rows wrapped to (-pi, pi].
Vec6 nonsingular_difference(const Vec6& y_a, const Vec6& y_b);
Vec6 nonsingular_difference(const OrbitalElements& a, const OrbitalElements& b);
/// d(nonsingular)/d(elements) at x.
Mat6 nonsingular_jacobian(const OrbitalElements& x);
/// Control matrix mapped to nonsingular coordinates (guarded B).
ControlMatrix nonsingular_control(const OrbitalElements& x, const PhysicalConstants& c = {});

/// Orthonormal pair spanning the plane normal to dv, fixed relative to the LVLH frame.
Eigen::Matrix<double, 3, 2> bias_axes(const Vec3& dv);
/// Rotation tilting the thrust direction of dv by beta about bias_axes(dv).
Eigen::Matrix3d pointing_rotation(const Vec3& dv, const Vec2& beta);

struct ObservationNoise {
    double sigma_a = 0.05;                 // km
    double sigma_e = 1e-5;
    double sigma_angle = 0.003 * astro::kDeg;

    Mat6 covariance() const;
};

/// State transition over dt: Jacobian of the J2 secular-rate flow in nonsingular coordinates
/// about `ref`. Bias block is identity.
Mat8 transition_matrix(const OrbitalElements& ref, double dt, const PhysicalConstants& c = {});

/// Process noise for white acceleration of std `accel_std` (km/s^2) acting through B over dt,
/// plus a bias random walk of `bias_rw` rad/sqrt(s).
Mat8 process_noise(const OrbitalElements& ref, double dt, double accel_std, double bias_rw,
                   const PhysicalConstants& c = {});

FilterState kf_predict(const FilterState& fs, const Mat8& F, const Mat8& Q, double dt);

/// Joseph-form update. Throws NumericalError when the innovation covariance is singular.
FilterState kf_update(const FilterState& fs, const Eigen::VectorXd& z, const Eigen::MatrixXd& H,
                      const Eigen::MatrixXd& R);

/// Update from an element observation (nonsingular coordinates) relative to the reference.
FilterState observe_elements(const FilterState& fs, const Vec6& deviation, const Mat6& R);

/// Post-burn residual update of the bias angles. `observed_change` and `predicted_change` are
/// nonsingular differences across the burn (measured, and modelled for the commanded dv with
/// no bias); `B` is the nonsingular control matrix at the burn point. The innovation is
/// observed - predicted - B (R(beta) dv - dv), linearized about the current bias estimate.
/// Zero-magnitude dv returns fs unchanged.
FilterState ingest_burn_residual(const FilterState& fs, const astro::LvlhImpulse& commanded,
                                 const Vec6& observed_change, const Vec6& predicted_change,
                                 const ControlMatrix& B, const Mat6& R);

/// Normalized estimation error squared (x - mean)' P^-1 (x - mean).
double nees(const FilterState& fs, const Vec8& truth);

}  // namespace orbcorr::est
