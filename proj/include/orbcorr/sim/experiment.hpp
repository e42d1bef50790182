#pragma once

#include "orbcorr/sim/trial.hpp"

#include <json.hpp>

#include <cstdint>

namespace orbcorr::sim {

/// Small CubeSat at ~700 km: drag, SRP, Sun and Moon, and a weak white-noise acceleration.
DisturbanceConfig reference_disturbances();

/// Distribution of Monte Carlo / dataset scenarios. The chaser starts at a random altitude and
/// must reach the slot offset by (delta_raan, delta_u) at the same altitude after tau.
struct ScenarioTemplate {
    double altitude_min = 700.0;  // km
    double altitude_max = 800.0;
    double eccentricity = 1e-3;
    double inclination_deg = 51.6;
    double raan_deg = 30.0;
    double u_deg = 0.0;
    double delta_raan_deg = 1.0;
    double delta_u_deg = 10.0;
    double tau_days = 7.0;
    DisturbanceConfig disturbances = reference_disturbances();
    est::ObservationNoise obs;

    void validate() const;
    nlohmann::json to_json() const;
    static ScenarioTemplate from_json(const nlohmann::json& j);
};

/// Altitude ~ U[min, max] from the seed; alpha sets the pointing sigma.
Scenario sample_scenario(const ScenarioTemplate& tpl, double alpha_deg, std::uint64_t seed);

nlohmann::json disturbances_to_json(const DisturbanceConfig& d);
DisturbanceConfig disturbances_from_json(const nlohmann::json& j);
nlohmann::json observation_to_json(const est::ObservationNoise& n);
est::ObservationNoise observation_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& sc);
Scenario scenario_from_json(const nlohmann::json& j);

/// Throws ConfigError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         std::string_view where);

}  // namespace orbcorr::sim
