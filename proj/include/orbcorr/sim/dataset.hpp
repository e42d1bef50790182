#pragma once

#include "orbcorr/neural/training.hpp"
#include "orbcorr/sim/experiment.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>

namespace orbcorr::sim {

struct DatasetConfig {
    ScenarioTemplate scenario;
    double alpha_min_deg = 0.0;
    double alpha_max_deg = 25.0;
    int scenarios = 40;
    /// Probability that the oracle's correction is executed at a decision; otherwise the burn
    /// flies as planned, so the data covers states the network will meet uncorrected.
    double expert_fraction = 0.75;
    HarnessConfig harness;

    void validate() const;
    nlohmann::json to_json() const;
    static DatasetConfig from_json(const nlohmann::json& j);
};

struct DatasetReport {
    int scenarios = 0;
    int infeasible = 0;       // planner rejected the scenario
    int decisions = 0;
    int nonconvergent = 0;    // decisions dropped because a label did not converge
    int sequences = 0;
    double mean_iterations = 0.0;
    double max_label_dv = 0.0;  // km/s, before clamping

    nlohmann::json to_json() const;
};

struct DatasetResult {
    nn::SequenceDataset data;
    DatasetReport report;
};

/// Shooting problem for re-targeting `d`'s burn from the truth at history snapshot `k`, with the
/// filter's bias estimate at that snapshot. The waypoint keeps the truth's current
/// argument-of-latitude offset from the nominal.
ShootingProblem labelling_problem(const Decision& d, std::size_t k, const Scenario& sc,
                                  const HarnessConfig& cfg);

/// Oracle correction from the newest snapshot.
Policy oracle_policy(const Scenario& sc, const HarnessConfig& cfg, const PhysicalConstants& c = {});

/// One sequence per burn decision of every sampled scenario; targets are clamped oracle labels
/// (dv km/s LVLH, epoch shift s). Deterministic per seed.
DatasetResult generate_dataset(const DatasetConfig& cfg, std::uint64_t seed, const PhysicalConstants& c = {});

}  // namespace orbcorr::sim
