#include "orbcorr/errors.hpp"
#include "orbcorr/sim/miss.hpp"
#include "orbcorr/sim/shooting.hpp"
#include "orbcorr/estimator/kalman.hpp"

#include <doctest.h>

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <random>

using namespace orbcorr;
using namespace orbcorr::astro;
using namespace orbcorr::sim;

namespace {

const MissOptions kStatic{0.1 * kDeg, 1e-3, false};

OrbitalElements rotated(const OrbitalElements& x, const Eigen::Matrix3d& R) {
    auto s = elements_to_cartesian(x);
    s.position = R * s.position;
    s.velocity = R * s.velocity;
    return cartesian_to_elements(s);
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    return q.normalized().toRotationMatrix();
}

}  // namespace

TEST_CASE("point on the target orbit") {
    const OrbitalElements target{7000.0, 0.02, 40.0 * kDeg, 1.0, 0.4, 0.0};
    for (double u : {0.0, 0.37, 2.9, 5.5}) {
        OrbitalElements on = target;
        on.u = u;
        CHECK(distance_to_orbit(elements_to_cartesian(on).position, target, {}, kStatic) < 1e-3);
    }
    Trajectory traj;
    OrbitalElements on = target;
    on.u = 1.234;
    traj.samples.push_back({0.0, on});
    CHECK(miss_distance(traj, target, {}, kStatic) < 1e-3);
}

TEST_CASE("coplanar concentric circles") {
    const OrbitalElements outer{7100.0, 0.0, 51.6 * kDeg, 0.5, 0.0, 0.0};
    for (double r1 : {6900.0, 7050.0, 7099.0, 7400.0}) {
        for (double u : {0.1, 2.0, 4.4}) {
            const OrbitalElements inner{r1, 0.0, 51.6 * kDeg, 0.5, 0.0, u};
            const double d = distance_to_orbit(elements_to_cartesian(inner).position, outer, {}, kStatic);
            CHECK(std::abs(d - std::abs(r1 - 7100.0)) < 1e-3);
        }
    }
}

TEST_CASE("halving the anomaly grid changes the distance by less than a metre") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi), off(-30.0, 30.0);
    const OrbitalElements target{7200.0, 0.05, 63.0 * kDeg, 2.0, 1.0, 0.0};
    MissOptions fine = kStatic;
    fine.grid_step = 0.05 * kDeg;
    for (int k = 0; k < 50; ++k) {
        OrbitalElements p = target;
        p.u = ang(rng);
        Vec3 r = elements_to_cartesian(p).position;
        r += Vec3(off(rng), off(rng), off(rng));
        CHECK(std::abs(distance_to_orbit(r, target, {}, kStatic) - distance_to_orbit(r, target, {}, fine)) < 1e-3);
    }
}

TEST_CASE("miss distance is invariant under a rigid rotation") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
    const OrbitalElements target{7078.0, 0.01, 51.6 * kDeg, 0.5, 1.0, 0.0};
    Trajectory traj;
    for (int k = 0; k < 20; ++k) {
        traj.samples.push_back({10.0 * k, {7090.0 + k, 0.012, 51.0 * kDeg, 0.51, 1.1, ang(rng)}});
    }
    const double base = miss_distance(traj, target, {}, kStatic);
    CHECK(base > 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const auto R = random_rotation(rng);
        Trajectory moved;
        for (const auto& s : traj.samples) moved.samples.push_back({s.t, rotated(s.x, R)});
        CHECK(std::abs(miss_distance(moved, rotated(target, R), {}, kStatic) - base) < 1e-6);
    }
}

TEST_CASE("drifted target moves with the secular rates") {
    const OrbitalElements x{7078.0, 1e-3, 51.6 * kDeg, 0.5, 0.2, 0.0};
    const auto d = drifted(x, 86400.0);
    const Vec6 rates = secular_rates(x);
    CHECK(d.a == x.a);
    CHECK(wrap_pi(d.raan - x.raan) == doctest::Approx(wrap_pi(rates[3] * 86400.0)));
    CHECK(drifted(x, 0.0).u == doctest::Approx(x.u));
}

TEST_CASE("miss distance errors") {
    const OrbitalElements target{7000.0, 0.0, 0.5, 0.0, 0.0, 0.0};
    CHECK_THROWS_AS(miss_distance(Trajectory{}, target), DomainError);
    Trajectory one;
    one.samples.push_back({0.0, target});
    MissOptions bad;
    bad.grid_step = 0.0;
    CHECK_THROWS_AS(miss_distance(one, target, {}, bad), DomainError);
}

namespace {

// Propagates the planned burn from x_now and returns the state at arrival.
OrbitalElements fly(const ShootingProblem& pb, const Vec3& dv, const ShootingOptions& opts = {}) {
    Propagator p(pb.x_now, pb.t_now, pb.disturbances.deterministic(), opts.dt, 0);
    p.advance_to(pb.burn_epoch);
    p.apply(dv);
    p.advance_to(pb.arrival_epoch);
    return p.state();
}

ShootingProblem base_problem() {
    ShootingProblem pb;
    pb.x_now = {6378.137 + 720.0, 1e-3, 51.6 * kDeg, 0.5, 0.0, 0.3};
    pb.t_now = 0.0;
    pb.burn_epoch = 600.0;
    pb.arrival_epoch = 3600.0;
    pb.planned_dv = Vec3(0.0, 0.01, 0.0);
    pb.disturbances.drag.ballistic_coefficient = 0.0165;
    pb.disturbances.drag.reference_density = 3.6e-14;
    return pb;
}

}  // namespace

TEST_CASE("shooting: state already on the waypoint trajectory") {
    auto pb = base_problem();
    pb.waypoint = fly(pb, pb.planned_dv);
    const auto r = shooting_correction(pb);
    CHECK(r.converged);
    CHECK(r.dv.norm() < 1e-6);
    CHECK(std::abs(r.epoch_shift) < 1e-3);
}

TEST_CASE("shooting: along-track deficit of 1 m/s is recovered") {
    auto pb = base_problem();
    pb.waypoint = fly(pb, Vec3(0.0, 0.011, 0.0));
    const auto r = shooting_correction(pb);
    CHECK(r.converged);
    CHECK(r.residual < 1e-3);
    CHECK(r.dv.y() == doctest::Approx(1e-3).epsilon(0.02));
    CHECK(std::abs(r.dv.x()) < 2e-5);
    CHECK(std::abs(r.dv.z()) < 2e-5);
}

TEST_CASE("shooting: pointing bias is compensated") {
    auto pb = base_problem();
    pb.waypoint = fly(pb, pb.planned_dv);
    pb.pointing_bias = Eigen::Vector2d(8.0 * kDeg, -5.0 * kDeg);
    const auto r = shooting_correction(pb);
    CHECK(r.converged);
    const Vec3 cmd = pb.planned_dv + r.dv;
    const Vec3 executed = est::pointing_rotation(cmd, pb.pointing_bias) * cmd;
    CHECK((executed - pb.planned_dv).norm() < 2e-5);
}

TEST_CASE("compensated command undoes the bias rotation") {
    for (const Vec3& planned : {Vec3(0.0, 0.012, 0.0), Vec3(0.0, -4e-4, 0.075), Vec3(0.0, -0.012, 0.0)}) {
        for (double b : {1.0, 10.0, 30.0}) {
            const Eigen::Vector2d beta(b * kDeg, -0.6 * b * kDeg);
            const Vec3 cmd = compensated_command(planned, beta);
            CHECK((est::pointing_rotation(cmd, beta) * cmd - planned).norm() < 1e-14);
        }
    }
}

TEST_CASE("shooting: epoch shift stays inside its bounds") {
    auto pb = base_problem();
    pb.waypoint = fly(pb, Vec3(0.0, 0.0105, 0.0));
    pb.min_shift = -5.0;
    pb.max_shift = 5.0;
    const auto r = shooting_correction(pb);
    CHECK(r.epoch_shift >= -5.0);
    CHECK(r.epoch_shift <= 5.0);
    pb.t_now = 598.0;
    pb.x_now = drifted(pb.x_now, 598.0);
    pb.waypoint = fly(pb, Vec3(0.0, 0.0105, 0.0));
    const auto late = shooting_correction(pb);
    CHECK(late.epoch_shift >= -2.0);
}

TEST_CASE("shooting errors") {
    auto pb = base_problem();
    pb.waypoint = fly(pb, pb.planned_dv);
    pb.arrival_epoch = pb.burn_epoch;
    CHECK_THROWS_AS(shooting_correction(pb), DomainError);
    pb = base_problem();
    pb.waypoint = fly(pb, pb.planned_dv);
    pb.min_shift = 10.0;
    pb.max_shift = -10.0;
    CHECK_THROWS_AS(shooting_correction(pb), DomainError);
}
