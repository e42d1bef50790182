#include "orbcorr/errors.hpp"
#include "orbcorr/estimator/kalman.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <doctest.h>

#include <random>

using namespace orbcorr;
using namespace orbcorr::astro;
using namespace orbcorr::est;

namespace {

OrbitalElements leo() { return {7078.137, 1e-3, 51.6 * kDeg, 0.5, 0.3, 1.2}; }

Vec8 normal8(std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    Vec8 v;
    for (int k = 0; k < 8; ++k) v[k] = n(rng);
    return v;
}

// Linear-Gaussian system shared by the consistency tests.
struct Synthetic {
    Mat8 F;
    Mat8 Q;
    Eigen::MatrixXd H;
    Eigen::MatrixXd R;
    Mat8 P0;

    Synthetic() {
        std::mt19937_64 rng(99);
        std::uniform_real_distribution<double> u(-0.05, 0.05);
        F = Mat8::Identity();
        for (int r = 0; r < 8; ++r) {
            for (int c = 0; c < 8; ++c) F(r, c) += u(rng);
        }
        Q = 0.01 * Mat8::Identity();
        H = Eigen::MatrixXd::Zero(5, 8);
        for (int r = 0; r < 5; ++r) {
            H(r, r) = 1.0;
            H(r, r + 3) = 0.5;
        }
        R = 0.04 * Eigen::MatrixXd::Identity(5, 5);
        P0 = Mat8::Identity();
    }

    Mat8 q_sqrt() const { return Q.llt().matrixL(); }
};

}  // namespace

TEST_CASE("predict") {
    FilterState fs;
    fs.mean << 1, 2, 3, 4, 5, 6, 0.1, -0.2;
    fs.cov = Mat8::Identity() * 0.5;

    const auto same = kf_predict(fs, Mat8::Identity(), Mat8::Zero(), 60.0);
    CHECK(same.mean == fs.mean);
    CHECK(same.cov == fs.cov);
    CHECK(same.epoch == 60.0);

    const Mat8 q = process_noise(leo(), 60.0, 1e-9, 1e-5);
    const auto grown = kf_predict(fs, Mat8::Identity(), q, 60.0);
    CHECK(grown.cov.trace() >= fs.cov.trace());
    CHECK_NOTHROW(grown.check());

    const Mat8 f = transition_matrix(leo(), 60.0);
    const auto moved = kf_predict(fs, f, q, 60.0);
    CHECK(moved.mean.tail<2>() == fs.mean.tail<2>());
    CHECK(f.bottomRightCorner<2, 2>() == Eigen::Matrix2d::Identity());
    CHECK(f.topRightCorner<6, 2>().isZero(0.0));

    CHECK_THROWS_AS(kf_predict(fs, f, q, 0.0), DomainError);
}

TEST_CASE("transition matrix against propagated deviations") {
    const auto ref = leo();
    Vec6 dy;
    dy << 0.5, 2e-5, -1e-5, 1e-5, -2e-5, 3e-5;
    const auto pert = from_nonsingular(nonsingular(ref) + dy);
    const double dt = 60.0;
    const auto ref_end = propagate(ref, {}, {}, dt, 10.0, 0).back().x;
    const auto pert_end = propagate(pert, {}, {}, dt, 10.0, 0).back().x;
    const Vec6 truth = nonsingular_difference(pert_end, ref_end);
    Vec8 d8 = Vec8::Zero();
    d8.head<6>() = dy;
    const Vec6 lin = (transition_matrix(ref, dt) * d8).head<6>();
    for (int k = 0; k < 6; ++k) {
        CHECK(std::abs(lin[k] - truth[k]) < 1e-3 * std::abs(truth[k]) + 1e-10);
    }
}

TEST_CASE("update limits") {
    FilterState fs;
    fs.cov = Mat8::Identity() * 1e-2;
    Vec6 z;
    z << 0.3, -0.2, 0.1, 0.05, -0.04, 0.02;

    const auto weak = observe_elements(fs, z, Mat6::Identity() * 1e12);
    CHECK((weak.mean.head<6>()).norm() < 1e-6 * z.norm());

    const auto sharp = observe_elements(fs, z, Mat6::Identity() * 1e-12);
    CHECK((sharp.mean.head<6>() - z).cwiseAbs().maxCoeff() < 1e-6);
    CHECK_NOTHROW(sharp.check());

    FilterState zero;
    zero.cov.setZero();
    CHECK_THROWS_AS(observe_elements(zero, z, Mat6::Zero()), NumericalError);

    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 7);
    CHECK_THROWS_AS(kf_update(fs, Eigen::VectorXd::Zero(2), h, Eigen::MatrixXd::Identity(2, 2)),
                    DomainError);
}

TEST_CASE("covariance check rejects indefinite matrices") {
    FilterState fs;
    fs.cov(0, 0) = -1.0;
    CHECK_THROWS_AS(fs.check(), NumericalError);
    fs.cov = Mat8::Identity();
    fs.cov(0, 1) = 0.1;
    CHECK_THROWS_AS(fs.check(), NumericalError);
    fs.cov = Mat8::Identity();
    fs.mean[0] = std::nan("");
    CHECK_THROWS_AS(fs.check(), NumericalError);
}

TEST_CASE("NEES stays in the chi-square envelope on a linear system") {
    const Synthetic sys;
    constexpr int runs = 50;
    constexpr int steps = 200;
    std::mt19937_64 rng(4242);
    const Mat8 lq = sys.q_sqrt();
    const Mat8 lp = sys.P0.llt().matrixL();

    std::vector<double> step_sum(steps, 0.0);
    double total = 0.0;
    for (int r = 0; r < runs; ++r) {
        Vec8 x = lp * normal8(rng);
        FilterState fs;
        fs.cov = sys.P0;
        for (int k = 0; k < steps; ++k) {
            x = sys.F * x + lq * normal8(rng);
            fs = kf_predict(fs, sys.F, sys.Q, 1.0);
            Eigen::VectorXd z = sys.H * x;
            for (int m = 0; m < z.size(); ++m) z[m] += 0.2 * normal8(rng)[0];
            fs = kf_update(fs, z, sys.H, sys.R);
            fs.check();
            const double e = nees(fs, x);
            step_sum[k] += e;
            total += e;
        }
    }
    using boost::math::chi_squared;
    using boost::math::quantile;
    const chi_squared per_step(8.0 * runs);
    const double lo = quantile(per_step, 0.025), hi = quantile(per_step, 0.975);
    int inside = 0;
    for (double s : step_sum) inside += (s >= lo && s <= hi) ? 1 : 0;
    CHECK(static_cast<double>(inside) / steps >= 0.9);

    const chi_squared all(8.0 * runs * steps);
    CHECK(total >= quantile(all, 0.025));
    CHECK(total <= quantile(all, 0.975));
}

TEST_CASE("estimation error is unbiased") {
    const Synthetic sys;
    constexpr int trials = 500;
    std::mt19937_64 rng(777);
    const Mat8 lq = sys.q_sqrt();
    Vec8 err_sum = Vec8::Zero();
    Vec8 var = Vec8::Zero();
    for (int t = 0; t < trials; ++t) {
        Vec8 x = normal8(rng);
        FilterState fs;
        fs.cov = sys.P0;
        for (int k = 0; k < 20; ++k) {
            x = sys.F * x + lq * normal8(rng);
            fs = kf_predict(fs, sys.F, sys.Q, 1.0);
            Eigen::VectorXd z = sys.H * x;
            for (int m = 0; m < z.size(); ++m) z[m] += 0.2 * normal8(rng)[0];
            fs = kf_update(fs, z, sys.H, sys.R);
        }
        err_sum += x - fs.mean;
        var = fs.cov.diagonal();
    }
    const Vec8 mean_err = err_sum / trials;
    for (int k = 0; k < 8; ++k) {
        CHECK(std::abs(mean_err[k]) < 3.0 * std::sqrt(var[k]) / std::sqrt(double(trials)));
    }
}

TEST_CASE("nonsingular coordinates") {
    const auto x = leo();
    const auto back = from_nonsingular(nonsingular(x));
    CHECK(back.e == doctest::Approx(x.e).epsilon(1e-12));
    CHECK(std::abs(wrap_pi(back.argp - x.argp)) < 1e-12);

    const Mat6 t = nonsingular_jacobian(x);
    for (int k = 0; k < 6; ++k) {
        const double h = k == 0 ? 1e-4 : 1e-7;
        Vec6 up = x.as_vector(), dn = x.as_vector();
        up[k] += h;
        dn[k] -= h;
        const Vec6 fd = nonsingular_difference(nonsingular(OrbitalElements::from_vector(up)),
                                               nonsingular(OrbitalElements::from_vector(dn))) / (2.0 * h);
        CHECK((fd - t.col(k)).cwiseAbs().maxCoeff() < 1e-7);
    }

    // impulse oracle: B in nonsingular coordinates predicts the change of a small burn
    const ControlMatrix b = nonsingular_control(x);
    const Vec3 dv(1e-6, -2e-6, 1.5e-6);
    const Vec6 change = nonsingular_difference(apply_impulse(x, dv), x);
    CHECK((change - b * dv).cwiseAbs().maxCoeff() < 1e-3 * change.cwiseAbs().maxCoeff());
}

TEST_CASE("pointing rotation") {
    for (const Vec3& dv : {Vec3(0.0, 0.012, 0.0), Vec3(0.0, -0.0003, 0.07), Vec3(0.01, 0.02, -0.03)}) {
        const auto axes = bias_axes(dv);
        CHECK(std::abs(axes.col(0).dot(dv)) < 1e-15);
        CHECK(std::abs(axes.col(1).dot(dv)) < 1e-15);
        CHECK(axes.col(0).norm() == doctest::Approx(1.0));

        const Vec2 beta(4.0 * kDeg, -3.0 * kDeg);
        const Eigen::Matrix3d r = pointing_rotation(dv, beta);
        CHECK((r * r.transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-14);
        const Vec3 out = r * dv;
        CHECK(out.norm() == doctest::Approx(dv.norm()).epsilon(1e-14));
        const double ang = std::acos(std::clamp(out.normalized().dot(dv.normalized()), -1.0, 1.0));
        CHECK(ang == doctest::Approx(5.0 * kDeg).epsilon(1e-9));

        const Vec2 small(1e-6, -2e-6);
        const Vec3 tilt = (pointing_rotation(dv, small) * dv - dv) / dv.norm();
        CHECK((tilt - axes * small).norm() < 1e-11);
    }
    CHECK(pointing_rotation(Vec3::Zero(), Vec2(0.1, 0.1)) == Eigen::Matrix3d::Identity());
}

namespace {

struct BurnRun {
    Vec2 estimate;
    double sigma;
};

BurnRun run_burns(const Vec2& true_bias, double noise_scale, int burns, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ang(0.0, kTwoPi), pick(0.0, 1.0);
    std::normal_distribution<double> n;
    const ObservationNoise noise;
    const Mat6 r = 2.0 * noise.covariance();
    const Mat6 l = r.llt().matrixL();

    FilterState fs;
    fs.cov = Mat8::Identity() * 1e-6;
    fs.cov.bottomRightCorner<2, 2>() = Eigen::Matrix2d::Identity() * std::pow(10.0 * kDeg, 2);
    OrbitalElements x = leo();
    for (int k = 0; k < burns; ++k) {
        x.u = ang(rng);
        Vec3 dv;
        if (k % 2 == 0) {
            dv = Vec3(0.0, (pick(rng) < 0.5 ? 1.0 : -1.0) * (0.010 + 0.005 * pick(rng)), 0.0);
        } else {
            dv = Vec3(0.0, -0.0003, (pick(rng) < 0.5 ? 1.0 : -1.0) * (0.05 + 0.02 * pick(rng)));
        }
        const auto post = apply_impulse(x, dv, pointing_rotation(dv, true_bias));
        Vec6 eps;
        for (int m = 0; m < 6; ++m) eps[m] = n(rng);
        const Vec6 observed = nonsingular_difference(post, x) + noise_scale * (l * eps);
        const Vec6 predicted = nonsingular_difference(apply_impulse(x, dv), x);
        fs = ingest_burn_residual(fs, {dv, 0.0}, observed, predicted, nonsingular_control(x), r);
        fs.check();
        x = post;
    }
    return {fs.bias(), fs.bias_sigma()};
}

}  // namespace

TEST_CASE("burn residuals estimate the pointing bias") {
    SUBCASE("no bias, no noise") {
        const auto res = run_burns(Vec2::Zero(), 0.0, 10, 3);
        CHECK(res.estimate.cwiseAbs().maxCoeff() < 1e-9);
    }
    SUBCASE("constant 5 deg bias over 20 burns") {
        for (const Vec2& truth : {Vec2(5.0 * kDeg, 0.0), Vec2(-3.0 * kDeg, 4.0 * kDeg)}) {
            const auto res = run_burns(truth, 1.0, 20, 11);
            CHECK(std::abs(res.estimate[0] - truth[0]) < 1.0 * kDeg);
            CHECK(std::abs(res.estimate[1] - truth[1]) < 1.0 * kDeg);
            CHECK(res.sigma < 1.0 * kDeg);
        }
    }
    SUBCASE("zero dv leaves the filter untouched") {
        FilterState fs;
        fs.mean[6] = 0.1;
        const auto out = ingest_burn_residual(fs, {Vec3::Zero(), 0.0}, Vec6::Ones(), Vec6::Zero(),
                                              nonsingular_control(leo()), Mat6::Identity());
        CHECK(out.mean == fs.mean);
        CHECK(out.cov == fs.cov);
    }
}
