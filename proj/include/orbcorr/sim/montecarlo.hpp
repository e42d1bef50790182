#pragma once

#include "orbcorr/sim/experiment.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace orbcorr::sim {

struct MonteCarloConfig {
    ScenarioTemplate scenario;
    std::vector<double> alpha_grid = {0.0, 5.0, 10.0, 15.0, 20.0};  // deg
    int trials = 100;
    HarnessConfig harness;

    void validate() const;
    nlohmann::json to_json() const;
    static MonteCarloConfig from_json(const nlohmann::json& j);
};

/// One trial at one alpha; closed is empty when no model was given or the run failed.
struct TrialRecord {
    double alpha_deg = 0.0;
    int trial = 0;
    std::optional<double> open_miss, closed_miss;  // km
    std::optional<double> open_dv, closed_dv;      // km/s
};

struct MonteCarloRow {
    double alpha_deg = 0.0;
    Mode mode = Mode::OpenLoop;
    int trials = 0;  // successful
    int failures = 0;
    double mean_miss = 0.0, std_miss = 0.0, min_miss = 0.0, max_miss = 0.0;
    double mean_dv = 0.0;
};

struct MonteCarloReport {
    std::vector<MonteCarloRow> rows;   // alpha-major, open before closed
    std::vector<TrialRecord> records;  // alpha-major, trial order
    std::uint64_t seed = 0;
    std::string config_hash;

    /// Comment line with version, seed and config hash, then the column header and rows.
    std::string to_csv() const;
    void save(const std::string& path) const;
};

/// Trial j uses the same scenario seed at every alpha, so altitude, disturbance noise and the
/// bias direction are shared across the grid (only the bias scale changes) and between modes.
MonteCarloReport monte_carlo(const MonteCarloConfig& cfg, std::uint64_t seed, const nn::Model* model,
                             const PhysicalConstants& c = {});

}  // namespace orbcorr::sim
