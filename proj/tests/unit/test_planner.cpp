#include "orbcorr/errors.hpp"
#include "orbcorr/planner/planner.hpp"

#include <doctest.h>

#include <cmath>

using namespace orbcorr;
using namespace orbcorr::astro;
using namespace orbcorr::planner;

namespace {

constexpr double kDay = 86400.0;
constexpr double kA700 = 6378.137 + 700.0;

OrbitalElements leo() { return {kA700, 1e-3, 51.6 * kDeg, 30.0 * kDeg, 0.0, 0.0}; }

struct Closure {
    double d_a, d_i, d_raan, d_u;  // executed minus drifted target
};

Closure execute(const ManeuverPlan& plan, double tau) {
    const auto burns = plan.impulses();
    const auto traj = propagate(plan.x0, burns, {}, tau, 10.0, 7);
    const auto xt = target_at(plan.xf, tau);
    const auto& x = traj.back().x;
    return {x.a - xt.a, x.i - xt.i, wrap_pi(x.raan - xt.raan), wrap_pi(x.u - xt.u)};
}

}  // namespace

TEST_CASE("required nodal rate") {
    CHECK(required_nodal_rate(0.3, 0.3, -1e-6, 1000.0) == -1e-6);
    // (pi/180)/604800 evaluated independently
    CHECK(required_nodal_rate(0.0, 1.0 * kDeg, 0.0, 7.0 * kDay) ==
          doctest::Approx(2.8857957208900952e-08).epsilon(1e-12));
    CHECK(required_nodal_rate(359.0 * kDeg, 1.0 * kDeg, 0.0, 1.0) == doctest::Approx(2.0 * kDeg));
    CHECK_THROWS_AS(required_nodal_rate(0.0, 0.1, 0.0, 0.0), DomainError);
}

TEST_CASE("transfer inclination") {
    CHECK(transfer_inclination(0.0, kA700, 1e-3) == doctest::Approx(std::numbers::pi / 2));

    const auto x = leo();
    const double natural = secular_rates(x)[3];
    CHECK(std::abs(transfer_inclination(natural, x.a, x.e) - x.i) < 1e-9);

    // -4.3 deg/day at 700 km inverts to 51.5868 deg (closed form evaluated independently)
    CHECK(transfer_inclination(-4.3 * kDeg / kDay, kA700, 1e-3) / kDeg ==
          doctest::Approx(51.58681224061164).epsilon(1e-10));

    SUBCASE("unreachable rate reports the ceiling") {
        try {
            transfer_inclination(-20.0 * kDeg / kDay, kA700, 1e-3);
            FAIL("expected InfeasibleError");
        } catch (const InfeasibleError& e) {
            CHECK(std::string(e.what()).find("largest achievable") != std::string::npos);
        }
    }
}

TEST_CASE("J2 phase variation closed form") {
    auto xf = leo();
    TransferDesign d{xf.i, xf.a, 100, 7.0 * kDay, 0.0};
    CHECK(delta_u_j2(d, xf, d.tau) == 0.0);

    d.a_t = xf.a + 10.0;
    // both terms evaluated independently from the closed form
    CHECK(delta_u_j2(d, xf, d.tau) == doctest::Approx(-4.894235951512422).epsilon(1e-12));
    d.a_t = xf.a - 10.0;
    CHECK(delta_u_j2(d, xf, d.tau) == doctest::Approx(4.894235951512422).epsilon(1e-12));

    d.a_t = xf.a;
    d.i_t = 52.6 * kDeg;
    CHECK(delta_u_j2(d, xf, d.tau) == doctest::Approx(0.014367145457786456).epsilon(1e-12));

    xf.i = 90.0 * kDeg;
    d.i_t = 80.0 * kDeg;
    CHECK(std::abs(delta_u_j2(d, xf, d.tau)) < 1e-15);
}

TEST_CASE("transfer semi-major axis") {
    CHECK(transfer_sma(0.4, 0.4, 10, 7000.0, 0.0) == 7000.0);
    CHECK(transfer_sma(0.0, std::numbers::pi, 100, 1.0, 0.0) ==
          doctest::Approx(1.0033305617104507).epsilon(1e-13));

    double prev = transfer_sma(0.0, 0.5, 1, 7000.0, 0.0);
    for (int k = 2; k < 400; k *= 2) {
        const double a = transfer_sma(0.0, 0.5, k, 7000.0, 0.0);
        CHECK(a < prev);
        CHECK(a > 7000.0);
        prev = a;
    }
    // 359 deg apart is a 1 deg lag, not a 359 deg lead
    CHECK(transfer_sma(1.0 * kDeg, 0.0, 1, 7000.0, 0.0) < 7000.0);
    CHECK(transfer_sma(359.0 * kDeg, 0.0, 1, 7000.0, 0.0) > 7000.0);

    CHECK_THROWS_AS(transfer_sma(0.0, 0.1, 0, 7000.0, 0.0), DomainError);
    CHECK_THROWS_AS(transfer_sma(0.0, 0.0, 1, 7000.0, -7.0), InfeasibleError);
}

TEST_CASE("Hohmann semi-major axis pair") {
    const OrbitalElements x{7078.137, 1e-4, 51.6 * kDeg, 0.0, 0.0, 0.0};
    CHECK(burn_dv_sma(x.a, x.a, x, 0.0).empty());

    const auto up = burn_dv_sma(7078.137, 7178.137, x, 100.0);
    REQUIRE(up.size() == 2);
    const double total = up[0].dv.norm() + up[1].dv.norm();
    // vis-viva evaluation of both impulses
    CHECK(total == doctest::Approx(0.05245451168845924).epsilon(1e-12));
    CHECK(up[0].epoch == 100.0);
    CHECK(up[1].epoch > up[0].epoch);
    CHECK(up[0].dv[0] == 0.0);
    CHECK(up[0].dv[2] == 0.0);

    const auto down = burn_dv_sma(7178.137, 7078.137, x, 0.0);
    CHECK(down[0].dv.norm() + down[1].dv.norm() == doctest::Approx(total).epsilon(1e-12));
    CHECK(down[0].dv[1] < 0.0);

    const auto traj = propagate(x, up, {}, up[1].epoch + 10.0, 10.0, 1);
    CHECK(std::abs(traj.back().x.a - 7178.137) < 0.1);
    CHECK(traj.back().x.e < 1e-3);

    OrbitalElements ecc = x;
    ecc.e = 0.06;
    CHECK_THROWS_AS(burn_dv_sma(x.a, 7200.0, ecc, 0.0), UnsupportedRegimeError);
    CHECK_THROWS_AS(burn_dv_sma(x.a, 6400.0, x, 0.0), InfeasibleError);
}

TEST_CASE("plane change at the next node") {
    const OrbitalElements x{7078.137, 1e-3, 51.6 * kDeg, 0.4, 0.2, 40.0 * kDeg};

    const auto none = burn_dv_inc(x.i, x.i, x, 50.0);
    CHECK(none.dv.norm() == 0.0);

    const auto imp = burn_dv_inc(x.i, x.i + 1.0 * kDeg, x, 50.0);
    CHECK(imp.epoch > 50.0);
    const auto at_node = propagate(x, {}, {}, imp.epoch - 50.0, 10.0, 1).back().x;
    CHECK(std::abs(std::sin(at_node.u)) < 1e-6);
    const double v = at_node.angular_momentum(PhysicalConstants{}) / at_node.radius();
    CHECK(imp.dv.norm() == doctest::Approx(2.0 * v * std::sin(0.5 * kDeg)).epsilon(1e-12));
    // 7.504 km/s circular speed at 700 km: about 131 m/s
    CHECK(imp.dv.norm() == doctest::Approx(0.130968).epsilon(2e-3));
    CHECK(std::abs(imp.dv[2]) > 50.0 * std::abs(imp.dv[1]));

    const LvlhImpulse shifted{imp.dv, imp.epoch - 50.0};
    const auto after = propagate(x, std::span(&shifted, 1), {}, shifted.epoch + 60.0, 10.0, 1).back().x;
    CHECK(std::abs(after.i - (x.i + 1.0 * kDeg)) < 0.001 * kDeg);
    CHECK(std::abs(after.a - x.a) < 1.0);

    SUBCASE("descending node lowers with the same sign convention") {
        OrbitalElements y = x;
        y.u = 200.0 * kDeg;
        const auto dn = burn_dv_inc(y.i, y.i - 0.5 * kDeg, y, 0.0);
        const auto post = propagate(y, std::span(&dn, 1), {}, dn.epoch + 60.0, 10.0, 1).back().x;
        CHECK(std::abs(post.i - (y.i - 0.5 * kDeg)) < 0.001 * kDeg);
    }
}

TEST_CASE("plan with nothing to correct") {
    const auto x = leo();
    const auto plan = plan_sequence(x, x, 7.0 * kDay);
    CHECK(plan.burns.empty());
    CHECK(plan.total_dv == 0.0);
    CHECK(plan.waypoints[3].label == BurnLabel::InclineToFinal);
}

TEST_CASE("plan for a node and phase offset closes in the ideal world") {
    const auto x0 = leo();
    auto xf = x0;
    xf.raan += 1.0 * kDeg;
    xf.u += 10.0 * kDeg;
    const double tau = 7.0 * kDay;
    const auto plan = plan_sequence(x0, xf, tau);

    REQUIRE(!plan.burns.empty());
    double sum = 0.0;
    for (std::size_t k = 0; k < plan.burns.size(); ++k) {
        CHECK(plan.burns[k].epoch >= 0.0);
        CHECK(plan.burns[k].epoch <= tau);
        if (k > 0) CHECK(plan.burns[k].epoch > plan.burns[k - 1].epoch);
        sum += plan.burns[k].dv.norm();
    }
    CHECK(plan.total_dv == sum);
    for (auto l : {BurnLabel::RaiseToTransfer, BurnLabel::InclineToTransfer,
                   BurnLabel::RaiseToFinal, BurnLabel::InclineToFinal}) {
        CHECK(plan.group_dv(l) > 0.0);
    }
    CHECK(plan.design.k >= 1);
    CHECK(plan.design.a_t > 6378.137 + 100.0);

    const auto c = execute(plan, tau);
    CHECK(std::abs(c.d_a) < 1.0);
    CHECK(std::abs(c.d_i) < 0.01 * kDeg);
    CHECK(std::abs(c.d_raan) < 0.05 * 1.0 * kDeg + 0.01 * kDeg);
    CHECK(std::abs(c.d_u) < 0.05 * 10.0 * kDeg + 0.5 * kDeg);
}

TEST_CASE("plan closes with altitude and inclination offsets") {
    auto x0 = leo();
    auto xf = x0;
    xf.a += 20.0;
    xf.i += 0.2 * kDeg;
    xf.raan -= 0.5 * kDeg;
    xf.u -= 40.0 * kDeg;
    const double tau = 5.0 * kDay;
    const auto plan = plan_sequence(x0, xf, tau);
    const auto c = execute(plan, tau);
    CHECK(std::abs(c.d_a) < 0.005 * 20.0 + 1.0);
    CHECK(std::abs(c.d_i) < 0.05 * 0.2 * kDeg + 0.01 * kDeg);
    CHECK(std::abs(c.d_raan) < 0.05 * 0.5 * kDeg + 0.01 * kDeg);
    CHECK(std::abs(c.d_u) < 0.05 * 40.0 * kDeg + 0.5 * kDeg);
}

TEST_CASE("longer maneuver time never costs more") {
    const auto x0 = leo();
    auto xf = x0;
    xf.raan += 1.0 * kDeg;
    double prev = std::numeric_limits<double>::infinity();
    for (double days : {4.0, 7.0, 10.0, 14.0}) {
        const double dv = plan_sequence(x0, xf, days * kDay).total_dv;
        CHECK(dv <= prev);
        prev = dv;
    }
}

TEST_CASE("planner errors") {
    const auto x0 = leo();
    auto xf = x0;
    xf.raan += 60.0 * kDeg;
    CHECK_THROWS_AS(plan_sequence(x0, xf, 1.0 * kDay), InfeasibleError);

    auto ecc = x0;
    ecc.e = 0.1;
    CHECK_THROWS_AS(plan_sequence(ecc, x0, 7.0 * kDay), UnsupportedRegimeError);
    CHECK_THROWS_AS(plan_sequence(x0, x0, 3000.0), DomainError);
}

TEST_CASE("plan document round trip") {
    const auto x0 = leo();
    auto xf = x0;
    xf.raan += 0.3 * kDeg;
    xf.u += 5.0 * kDeg;
    const auto plan = plan_sequence(x0, xf, 5.0 * kDay);
    const auto j = to_json(plan);
    CHECK(j.at("schema") == "orbcorr.plan/1");
    CHECK(j.at("burns").size() == plan.burns.size());

    const auto back = plan_from_json(nlohmann::json::parse(j.dump()));
    REQUIRE(back.burns.size() == plan.burns.size());
    for (std::size_t k = 0; k < plan.burns.size(); ++k) {
        CHECK(back.burns[k].epoch == plan.burns[k].epoch);
        CHECK(back.burns[k].dv == plan.burns[k].dv);
        CHECK(back.burns[k].label == plan.burns[k].label);
    }
    CHECK(back.total_dv == plan.total_dv);
    CHECK(back.design.k == plan.design.k);
    CHECK(back.waypoints[2].x.a == doctest::Approx(plan.waypoints[2].x.a));

    CHECK_THROWS_AS(plan_from_json(nlohmann::json{{"burns", 3}}), ConfigError);
    CHECK_THROWS_AS(burn_label_from_string("sideways"), ConfigError);
}
