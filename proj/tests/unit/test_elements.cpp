#include "orbcorr/astro/elements.hpp"
#include "orbcorr/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace orbcorr;
using namespace orbcorr::astro;

namespace {

double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

}  // namespace

TEST_CASE("mean motion") {
    // sqrt(398600.4418 / 7078.137^3) evaluated independently in double precision
    CHECK(mean_motion(7078.137) == doctest::Approx(1.0602064484506297e-3).epsilon(1e-12));
    for (double a : {6800.0, 7078.137, 42164.0}) {
        CHECK(rel_err(mean_motion(4.0 * a), mean_motion(a) / 8.0) < 1e-14);
    }
    CHECK_THROWS_AS(mean_motion(0.0), DomainError);
    CHECK_THROWS_AS(mean_motion(-7000.0), DomainError);
}

TEST_CASE("angle wrapping") {
    CHECK(wrap_two_pi(-0.1) == doctest::Approx(kTwoPi - 0.1));
    CHECK(wrap_two_pi(kTwoPi) == 0.0);
    CHECK(wrap_pi(359.0 * kDeg - 1.0 * kDeg) == doctest::Approx(-2.0 * kDeg));
    CHECK(wrap_pi(1.0 * kDeg - 359.0 * kDeg) == doctest::Approx(2.0 * kDeg));
    CHECK(wrap_pi(std::numbers::pi) == doctest::Approx(std::numbers::pi));
}

TEST_CASE("elements to cartesian geometry") {
    SUBCASE("equatorial near-circular orbit starts on +X") {
        const OrbitalElements x{7000.0, kEccentricityMin, 0.0, 0.0, 0.0, 0.0};
        const auto s = elements_to_cartesian(x);
        CHECK(s.position.x() == doctest::Approx(7000.0 * (1.0 - kEccentricityMin)));
        CHECK(std::abs(s.position.y()) < 1e-9);
        CHECK(std::abs(s.position.z()) < 1e-9);
    }
    SUBCASE("periapsis radius") {
        const OrbitalElements x{7078.137, 0.001, 0.9, 0.3, 1.1, 1.1};
        CHECK(elements_to_cartesian(x).position.norm() == doctest::Approx(7071.058863).epsilon(1e-10));
    }
}

TEST_CASE("cartesian round trip over random valid elements") {
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> a_d(6700.0, 42000.0), e_d(1.001e-4, 0.9),
        i_d(1.0 * kDeg, 179.0 * kDeg), ang(0.0, kTwoPi);
    for (int k = 0; k < 1000; ++k) {
        OrbitalElements x{a_d(rng), e_d(rng), i_d(rng), ang(rng), ang(rng), ang(rng)};
        // keep perigee above the surface so the state is physical
        x.a = std::max(x.a, 6800.0 / (1.0 - x.e));
        const auto y = cartesian_to_elements(elements_to_cartesian(x));
        REQUIRE(rel_err(y.a, x.a) < 1e-9);
        REQUIRE(rel_err(y.e, x.e) < 1e-9);
        REQUIRE(std::abs(y.i - x.i) < 1e-9);
        REQUIRE(std::abs(wrap_pi(y.raan - x.raan)) < 1e-9);
        // the perigee direction degrades as 1/e
        REQUIRE(std::abs(wrap_pi(y.argp - x.argp)) < 1e-9 / std::min(1.0, x.e / 1e-3));
        REQUIRE(std::abs(wrap_pi(y.u - x.u)) < 1e-9);
    }
}

TEST_CASE("cartesian to elements conventions and errors") {
    SUBCASE("circular equatorial state") {
        CartesianState s;
        const double r = 7000.0;
        const double ang = 0.7;
        s.position = r * Vec3(std::cos(ang), std::sin(ang), 0.0);
        s.velocity = std::sqrt(398600.4418 / r) * Vec3(-std::sin(ang), std::cos(ang), 0.0);
        const auto x = cartesian_to_elements(s);
        CHECK(x.argp == 0.0);
        CHECK(x.raan == 0.0);
        CHECK(x.u == doctest::Approx(ang).epsilon(1e-12));
    }
    SUBCASE("positive radial velocity at true anomaly 90 deg") {
        const OrbitalElements src{7200.0, 0.02, 0.8, 1.0, 0.4, 0.4 + std::numbers::pi / 2};
        const auto s = elements_to_cartesian(src);
        CHECK(s.position.dot(s.velocity) > 0.0);
        const auto x = cartesian_to_elements(s);
        CHECK(std::abs(x.e - src.e) < 1e-9);
    }
    SUBCASE("hyperbolic state is rejected") {
        CartesianState s;
        s.position = Vec3(7000.0, 0.0, 0.0);
        s.velocity = Vec3(0.0, 12.0, 0.0);
        CHECK_THROWS_AS(cartesian_to_elements(s), UnsupportedRegimeError);
    }
}

TEST_CASE("element validation") {
    CHECK_NOTHROW(OrbitalElements{7000.0, 0.0, 1.0, 0.0, 0.0, 0.0}.validate());
    CHECK_THROWS_AS((OrbitalElements{-1.0, 0.0, 1.0, 0.0, 0.0, 0.0}.validate()), DomainError);
    CHECK_THROWS_AS((OrbitalElements{7000.0, 1.0, 1.0, 0.0, 0.0, 0.0}.validate()), DomainError);
    CHECK_THROWS_AS((OrbitalElements{7000.0, 0.1, 4.0, 0.0, 0.0, 0.0}.validate()), DomainError);
    CHECK_THROWS_AS(PhysicalConstants(-1.0, 6378.0, 1e-3), DomainError);
}
