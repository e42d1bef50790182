#include "orbcorr/estimator/kalman.hpp"

#include "orbcorr/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <fmt/format.h>

#include <cmath>

namespace orbcorr::est {

using astro::wrap_pi;


double FilterState::bias_sigma() const {
    return std::sqrt(std::max(0.0, cov.bottomRightCorner<2, 2>().trace()));
}

void FilterState::check() const {
    if (!mean.allFinite() || !cov.allFinite()) {
        throw NumericalError(fmt::format("filter state at t = {} s has non-finite entries", epoch));
    }
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    const double asym = (cov - cov.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * scale) {
        throw NumericalError(fmt::format("covariance asymmetric by {} at t = {} s", asym, epoch));
    }
    const double min_eig = Eigen::SelfAdjointEigenSolver<Mat8>(cov, Eigen::EigenvaluesOnly)
                               .eigenvalues()
                               .minCoeff();
    if (min_eig < -1e-10 * scale) {
        throw NumericalError(fmt::format("covariance not PSD (min eigenvalue {}) at t = {} s",
                                         min_eig, epoch));
    }
}

Vec6 nonsingular(const OrbitalElements& x) {
    Vec6 y;
    y << x.a, x.e * std::cos(x.argp), x.e * std::sin(x.argp), x.i, x.raan, x.u;
    return y;
}

OrbitalElements from_nonsingular(const Vec6& y) {
    const double e = std::hypot(y[1], y[2]);
    const double w = e > 0.0 ? std::atan2(y[2], y[1]) : 0.0;
    return {y[0], e, y[3], y[4], w, y[5]};
}

Vec6 nonsingular_difference(const Vec6& y_a, const Vec6& y_b) {
    Vec6 d = y_a - y_b;
    for (int k = 3; k < 6; ++k) d[k] = wrap_pi(d[k]);
    return d;
}

Vec6 nonsingular_difference(const OrbitalElements& a, const OrbitalElements& b) {
    return nonsingular_difference(nonsingular(a), nonsingular(b));
}

Mat6 nonsingular_jacobian(const OrbitalElements& x) {
    // rows a, ex, ey, i, raan, u; columns a, e, i, raan, argp, u
    const double cw = std::cos(x.argp), sw = std::sin(x.argp);
    Mat6 t = Mat6::Zero();
    t(0, 0) = 1.0;
    t(1, 1) = cw;
    t(1, 4) = -x.e * sw;
    t(2, 1) = sw;
    t(2, 4) = x.e * cw;
    t(3, 2) = 1.0;
    t(4, 3) = 1.0;
    t(5, 5) = 1.0;
    return t;
}

ControlMatrix nonsingular_control(const OrbitalElements& x, const PhysicalConstants& c) {
    return nonsingular_jacobian(x) * astro::control_matrix_guarded(x, c);
}

Eigen::Matrix<double, 3, 2> bias_axes(const Vec3& dv) {
    const Vec3 d = dv.normalized();
    // commands stay far from radial, so the frame is smooth over every burn direction used
    Vec3 p1 = d.cross(Vec3::UnitX());
    if (p1.norm() < 0.1) p1 = d.cross(Vec3::UnitZ());
    p1.normalize();
    Eigen::Matrix<double, 3, 2> axes;
    axes.col(0) = p1;
    axes.col(1) = d.cross(p1);
    return axes;
}

Eigen::Matrix3d pointing_rotation(const Vec3& dv, const Vec2& beta) {
    if (dv.isZero(0.0) || beta.isZero(0.0)) return Eigen::Matrix3d::Identity();
    const auto axes = bias_axes(dv);
    // rotating about p2 tilts d toward p1, about -p1 tilts d toward p2
    const Vec3 rot = beta[0] * axes.col(1) - beta[1] * axes.col(0);
    return Eigen::AngleAxisd(rot.norm(), rot.normalized()).toRotationMatrix();
}

Mat6 ObservationNoise::covariance() const {
    Vec6 s;
    s << sigma_a, sigma_e, sigma_e, sigma_angle, sigma_angle, sigma_angle;
    return s.cwiseAbs2().asDiagonal();
}

Mat8 transition_matrix(const OrbitalElements& ref, double dt, const PhysicalConstants& c) {
    if (!(dt > 0.0)) throw DomainError(fmt::format("transition step must be positive (dt = {})", dt));
    // Jacobian of the secular-rate flow over dt, by central differences of the integrator
    const Vec6 y0 = nonsingular(ref);
    Vec6 steps;
    steps << 1e-3, 1e-7, 1e-7, 1e-7, 1e-7, 1e-7;
    auto flow = [&](const Vec6& y) {
        astro::Propagator prop(from_nonsingular(y), 0.0, {}, std::min(dt, 30.0), 0, c);
        prop.advance_to(dt);
        return nonsingular(prop.state());
    };
    Mat8 f = Mat8::Identity();
    for (int k = 0; k < 6; ++k) {
        Vec6 up = y0, dn = y0;
        up[k] += steps[k];
        dn[k] -= steps[k];
        f.block<6, 1>(0, k) = nonsingular_difference(flow(up), flow(dn)) / (2.0 * steps[k]);
    }
    return f;
}

Mat8 process_noise(const OrbitalElements& ref, double dt, double accel_std, double bias_rw,
                   const PhysicalConstants& c) {
    if (!(dt > 0.0) || accel_std < 0.0 || bias_rw < 0.0) {
        throw DomainError("process noise needs dt > 0 and non-negative intensities");
    }
    Mat8 q = Mat8::Zero();
    const ControlMatrix g = nonsingular_control(ref, c);
    q.topLeftCorner<6, 6>() = accel_std * accel_std * dt * g * g.transpose();
    q.bottomRightCorner<2, 2>() = bias_rw * bias_rw * dt * Eigen::Matrix2d::Identity();
    return q;
}

FilterState kf_predict(const FilterState& fs, const Mat8& F, const Mat8& Q, double dt) {
    if (!(dt > 0.0)) throw DomainError(fmt::format("predict step must be positive (dt = {})", dt));
    FilterState out;
    out.mean = F * fs.mean;
    out.cov = F * fs.cov * F.transpose() + Q;
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    out.epoch = fs.epoch + dt;
    return out;
}

FilterState kf_update(const FilterState& fs, const Eigen::VectorXd& z, const Eigen::MatrixXd& H,
                      const Eigen::MatrixXd& R) {
    const Eigen::Index m = z.size();
    if (H.rows() != m || H.cols() != 8 || R.rows() != m || R.cols() != m) {
        throw DomainError(fmt::format("update dimensions mismatch: z {}, H {}x{}, R {}x{}", m,
                                      H.rows(), H.cols(), R.rows(), R.cols()));
    }
    const Eigen::MatrixXd S = H * fs.cov * H.transpose() + R;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(S).singularValues();
    const double cond = sv[0] / sv[sv.size() - 1];
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || !std::isfinite(cond) || cond > 1e15) {
        throw NumericalError(fmt::format(
            "innovation covariance not invertible (condition number {:.3e})", cond));
    }
    const Eigen::MatrixXd K = ldlt.solve(H * fs.cov).transpose();
    FilterState out = fs;
    out.mean = fs.mean + K * (z - H * fs.mean);
    const Eigen::MatrixXd ikh = Eigen::MatrixXd::Identity(8, 8) - K * H;
    out.cov = ikh * fs.cov * ikh.transpose() + K * R * K.transpose();
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    return out;
}

FilterState observe_elements(const FilterState& fs, const Vec6& deviation, const Mat6& R) {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(6, 8);
    H.leftCols(6).setIdentity();
    return kf_update(fs, deviation, H, R);
}

FilterState ingest_burn_residual(const FilterState& fs, const astro::LvlhImpulse& commanded,
                                 const Vec6& observed_change, const Vec6& predicted_change,
                                 const ControlMatrix& B, const Mat6& R) {
    const Vec3& dv = commanded.dv;
    if (dv.norm() < 1e-12) return fs;

    const Vec2 beta = fs.bias();
    auto h = [&](const Vec2& b) -> Vec6 { return B * (pointing_rotation(dv, b) * dv - dv); };

    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(6, 8);
    constexpr double step = 1e-6;
    for (int k = 0; k < 2; ++k) {
        Vec2 up = beta, dn = beta;
        up[k] += step;
        dn[k] -= step;
        H.col(kBiasIndex + k) = (h(up) - h(dn)) / (2.0 * step);
    }
    const Vec6 innovation = nonsingular_difference(observed_change, predicted_change) - h(beta);
    const Eigen::VectorXd z = innovation + H * fs.mean;
    return kf_update(fs, z, H, R);
}

double nees(const FilterState& fs, const Vec8& truth) {
    const Vec8 d = truth - fs.mean;
    return d.dot(fs.cov.ldlt().solve(d));
}

}  // namespace orbcorr::est
