#include "orbcorr/sim/experiment.hpp"

#include "orbcorr/errors.hpp"
#include "orbcorr/util/hash.hpp"

#include <fmt/format.h>

#include <random>

namespace orbcorr::sim {

using astro::kDeg;
using nlohmann::json;

namespace {

template <typename F>
auto guarded(std::string_view where, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("{}: {}", where, e.what()));
    } catch (const DomainError& e) {
        throw ConfigError(fmt::format("{}: {}", where, e.what()));
    }
}

}  // namespace

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, std::string_view where) {
    if (!j.is_object()) throw ConfigError(fmt::format("{}: expected an object", where));
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || k == a;
        if (!ok) throw ConfigError(fmt::format("{}: unknown key '{}'", where, k));
    }
}

DisturbanceConfig reference_disturbances() {
    DisturbanceConfig d;
    d.drag.ballistic_coefficient = 0.0165;  // Cd 2.2, 0.01 m^2, 1.33 kg
    d.drag.reference_density = 3.6e-14;
    d.drag.reference_altitude = 700.0;
    d.drag.scale_height = 88.0;
    d.srp.enabled = true;
    d.srp.acceleration = 4.4e-11;
    d.third_body.moon = true;
    d.third_body.sun = true;
    d.noise_std = 1e-10;
    return d;
}

json disturbances_to_json(const DisturbanceConfig& d) {
    return {{"drag",
             {{"ballistic_coefficient", d.drag.ballistic_coefficient},
              {"reference_density", d.drag.reference_density},
              {"reference_altitude_km", d.drag.reference_altitude},
              {"scale_height_km", d.drag.scale_height}}},
            {"srp", {{"enabled", d.srp.enabled}, {"acceleration", d.srp.acceleration}}},
            {"third_body",
             {{"moon", d.third_body.moon},
              {"sun", d.third_body.sun},
              {"moon_phase_deg", d.third_body.moon_phase / kDeg},
              {"sun_phase_deg", d.third_body.sun_phase / kDeg}}},
            {"noise_std", d.noise_std}};
}

DisturbanceConfig disturbances_from_json(const json& j) {
    return guarded("disturbances", [&] {
        reject_unknown_keys(j, {"drag", "srp", "third_body", "noise_std"}, "disturbances");
        DisturbanceConfig d;
        if (j.contains("drag")) {
            const auto& g = j.at("drag");
            reject_unknown_keys(g, {"ballistic_coefficient", "reference_density", "reference_altitude_km",
                                    "scale_height_km"}, "disturbances.drag");
            d.drag.ballistic_coefficient = g.at("ballistic_coefficient").get<double>();
            d.drag.reference_density = g.at("reference_density").get<double>();
            d.drag.reference_altitude = g.at("reference_altitude_km").get<double>();
            d.drag.scale_height = g.at("scale_height_km").get<double>();
        }
        if (j.contains("srp")) {
            const auto& s = j.at("srp");
            reject_unknown_keys(s, {"enabled", "acceleration"}, "disturbances.srp");
            d.srp.enabled = s.value("enabled", true);
            d.srp.acceleration = s.at("acceleration").get<double>();
        }
        if (j.contains("third_body")) {
            const auto& t = j.at("third_body");
            reject_unknown_keys(t, {"moon", "sun", "moon_phase_deg", "sun_phase_deg"}, "disturbances.third_body");
            d.third_body.moon = t.at("moon").get<bool>();
            d.third_body.sun = t.at("sun").get<bool>();
            d.third_body.moon_phase = t.value("moon_phase_deg", 0.0) * kDeg;
            d.third_body.sun_phase = t.value("sun_phase_deg", 0.0) * kDeg;
        }
        d.noise_std = j.value("noise_std", d.noise_std);
        d.validate();
        return d;
    });
}

json observation_to_json(const est::ObservationNoise& n) {
    return {{"sigma_a_km", n.sigma_a}, {"sigma_e", n.sigma_e}, {"sigma_angle_deg", n.sigma_angle / kDeg}};
}

est::ObservationNoise observation_from_json(const json& j) {
    return guarded("observation", [&] {
        reject_unknown_keys(j, {"sigma_a_km", "sigma_e", "sigma_angle_deg"}, "observation");
        est::ObservationNoise n;
        n.sigma_a = j.at("sigma_a_km").get<double>();
        n.sigma_e = j.at("sigma_e").get<double>();
        n.sigma_angle = j.at("sigma_angle_deg").get<double>() * kDeg;
        if (!(n.sigma_a > 0.0) || !(n.sigma_e > 0.0) || !(n.sigma_angle > 0.0)) {
            throw ConfigError("observation: sigmas must be positive");
        }
        return n;
    });
}

json scenario_to_json(const Scenario& sc) {
    return {{"x0", planner::elements_to_json(sc.x0)},
            {"xf", planner::elements_to_json(sc.xf)},
            {"tau_s", sc.tau},
            {"disturbances", disturbances_to_json(sc.disturbances)},
            {"pointing_sigma_deg", sc.pointing_sigma_deg},
            {"observation", observation_to_json(sc.obs)},
            {"seed", sc.seed}};
}

Scenario scenario_from_json(const json& j) {
    return guarded("scenario", [&] {
        reject_unknown_keys(j, {"x0", "xf", "tau_s", "disturbances", "pointing_sigma_deg", "observation", "seed"},
                            "scenario");
        Scenario sc;
        sc.x0 = planner::elements_from_json(j.at("x0"));
        sc.xf = planner::elements_from_json(j.at("xf"));
        sc.tau = j.at("tau_s").get<double>();
        sc.pointing_sigma_deg = j.at("pointing_sigma_deg").get<double>();
        sc.disturbances = disturbances_from_json(j.at("disturbances"));
        sc.obs = observation_from_json(j.at("observation"));
        sc.seed = j.value("seed", std::uint64_t{0});
        sc.validate();
        return sc;
    });
}

void ScenarioTemplate::validate() const {
    if (!(altitude_min > 100.0) || !(altitude_max >= altitude_min)) {
        throw ConfigError(fmt::format("scenario template: altitude range [{}, {}] km is invalid", altitude_min,
                                      altitude_max));
    }
    if (!(eccentricity >= 0.0 && eccentricity < 0.05)) {
        throw ConfigError(fmt::format("scenario template: eccentricity {} outside [0, 0.05)", eccentricity));
    }
    if (!(inclination_deg > 0.0 && inclination_deg < 180.0)) {
        throw ConfigError(fmt::format("scenario template: inclination {} deg outside (0, 180)", inclination_deg));
    }
    if (!(tau_days > 0.0)) throw ConfigError("scenario template: tau_days must be positive");
    try {
        disturbances.validate();
    } catch (const DomainError& e) {
        throw ConfigError(fmt::format("scenario template: {}", e.what()));
    }
}

json ScenarioTemplate::to_json() const {
    return {{"altitude_min_km", altitude_min},
            {"altitude_max_km", altitude_max},
            {"eccentricity", eccentricity},
            {"inclination_deg", inclination_deg},
            {"raan_deg", raan_deg},
            {"u_deg", u_deg},
            {"delta_raan_deg", delta_raan_deg},
            {"delta_u_deg", delta_u_deg},
            {"tau_days", tau_days},
            {"disturbances", disturbances_to_json(disturbances)},
            {"observation", observation_to_json(obs)}};
}

ScenarioTemplate ScenarioTemplate::from_json(const json& j) {
    return guarded("scenario template", [&] {
        reject_unknown_keys(j, {"altitude_min_km", "altitude_max_km", "eccentricity", "inclination_deg", "raan_deg",
                                "u_deg", "delta_raan_deg", "delta_u_deg", "tau_days", "disturbances",
                                "observation"},
                            "scenario");
        ScenarioTemplate t;
        // physically meaningful values must be stated explicitly
        t.altitude_min = j.at("altitude_min_km").get<double>();
        t.altitude_max = j.at("altitude_max_km").get<double>();
        t.eccentricity = j.at("eccentricity").get<double>();
        t.inclination_deg = j.at("inclination_deg").get<double>();
        t.raan_deg = j.at("raan_deg").get<double>();
        t.u_deg = j.at("u_deg").get<double>();
        t.delta_raan_deg = j.at("delta_raan_deg").get<double>();
        t.delta_u_deg = j.at("delta_u_deg").get<double>();
        t.tau_days = j.at("tau_days").get<double>();
        // an empty disturbances object means the ideal J2 model
        t.disturbances = disturbances_from_json(j.at("disturbances"));
        t.obs = observation_from_json(j.at("observation"));
        t.validate();
        return t;
    });
}

Scenario sample_scenario(const ScenarioTemplate& tpl, double alpha_deg, std::uint64_t seed) {
    tpl.validate();
    std::mt19937_64 rng(util::derive_seed(seed, 4));
    std::uniform_real_distribution<double> alt(tpl.altitude_min, tpl.altitude_max);
    const double h = tpl.altitude_max > tpl.altitude_min ? alt(rng) : tpl.altitude_min;
    Scenario sc;
    sc.x0 = {6378.137 + h, tpl.eccentricity, tpl.inclination_deg * kDeg, tpl.raan_deg * kDeg, 0.0, tpl.u_deg * kDeg};
    sc.xf = sc.x0;
    sc.xf.raan = astro::wrap_two_pi(sc.x0.raan + tpl.delta_raan_deg * kDeg);
    sc.xf.u = astro::wrap_two_pi(sc.x0.u + tpl.delta_u_deg * kDeg);
    sc.x0 = sc.x0.wrapped();
    sc.tau = tpl.tau_days * 86400.0;
    sc.disturbances = tpl.disturbances;
    sc.obs = tpl.obs;
    sc.pointing_sigma_deg = alpha_deg;
    sc.seed = seed;
    return sc;
}

}  // namespace orbcorr::sim
