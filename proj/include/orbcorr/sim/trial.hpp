#pragma once

#include "orbcorr/estimator/kalman.hpp"
#include "orbcorr/neural/network.hpp"
#include "orbcorr/planner/planner.hpp"
#include "orbcorr/sim/miss.hpp"
#include "orbcorr/sim/shooting.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace orbcorr::sim {

using astro::DisturbanceConfig;
using astro::Trajectory;
using planner::ManeuverPlan;

inline constexpr int kFeatureDim = 17;
inline constexpr int kTargetDim = 4;

enum class Mode { OpenLoop, ClosedLoop };

std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view s);

struct Scenario {
    OrbitalElements x0;
    OrbitalElements xf;
    double tau = 0.0;  // s
    DisturbanceConfig disturbances;
    double pointing_sigma_deg = 0.0;
    est::ObservationNoise obs;
    std::uint64_t seed = 0;

    /// Throws ConfigError on invalid elements, tau <= 0 or negative sigma.
    void validate() const;
};

struct HarnessConfig {
    double dt = 60.0;               // truth step, observation cadence and snapshot spacing, s
    int history = 10;               // snapshots per network decision
    double clamp_fraction = 0.5;    // |dv correction| <= fraction * |planned dv|
    double max_epoch_shift = 120.0; // s
    double accel_noise_floor = 1e-9;  // km/s^2 added to the filter's process noise
    double bias_random_walk = 1e-7;   // rad/sqrt(s)
    double min_bias_prior_deg = 0.1;  // filter prior sigma on each bias angle when alpha is tiny
    double sample_interval = 10.0;    // truth sampling over the arrival arc, s
    double correction_horizon = 10800.0;  // a correction targets the nominal state at most this far past its burn, s
    ShootingOptions shooting;
    MissOptions miss;

    void validate() const;
    nlohmann::json to_json() const;
    static HarnessConfig from_json(const nlohmann::json& j);
};

/// What the network sees at one filter epoch, plus the truth kept for labelling.
struct Snapshot {
    double t = 0.0;
    OrbitalElements truth;
    OrbitalElements nominal;
    Eigen::Matrix<double, kFeatureDim, 1> features;
};

struct Correction {
    Vec3 dv = Vec3::Zero();
    double epoch_shift = 0.0;
};

/// Everything a policy may use when a burn comes up.
struct Decision {
    std::size_t burn_index = 0;
    const planner::PlannedBurn* burn = nullptr;
    std::span<const Snapshot> history;  // oldest first, at most HarnessConfig::history
    double now = 0.0;                   // earliest executable epoch
    OrbitalElements waypoint;           // nominal state at arrival_epoch
    double arrival_epoch = 0.0;         // next burn, capped at burn epoch + correction_horizon
    est::Vec2 true_bias = est::Vec2::Zero();  // rad; only labelling policies may look
};

using Policy = std::function<Correction(const Decision&)>;

struct BurnLog {
    std::string label;
    double planned_epoch = 0.0;
    double executed_epoch = 0.0;
    Vec3 planned_dv = Vec3::Zero();
    Vec3 correction = Vec3::Zero();
    double epoch_shift = 0.0;
    est::Vec2 bias_estimate = est::Vec2::Zero();
    double bias_sigma = 0.0;
};

struct TrialResult {
    Mode mode = Mode::OpenLoop;
    double miss_distance = 0.0;  // km
    double total_dv = 0.0;       // executed commanded |dv| sum, km/s
    double planned_dv = 0.0;
    std::vector<BurnLog> log;
    est::Vec2 true_bias = est::Vec2::Zero();
    OrbitalElements final_state;
    OrbitalElements final_target;

    nlohmann::json to_json() const;
};

/// Nominal (ideal J2, error-free) trajectory of a plan on the harness grid.
class NominalTrajectory {
public:
    NominalTrajectory(const ManeuverPlan& plan, double tau, double t_start, double dt,
                      const PhysicalConstants& c = {});

    /// State at a grid epoch t_start + k dt (k clamped to the table).
    const OrbitalElements& at_grid(long k) const;
    /// State at any epoch in [t_start, tau].
    OrbitalElements at(double t) const;
    /// Nominal state just before / after burn b.
    const OrbitalElements& pre_burn(std::size_t b) const { return pre_.at(b); }
    const OrbitalElements& post_burn(std::size_t b) const { return post_.at(b); }
    const OrbitalElements& final_state() const { return final_; }
    double t_start() const { return t_start_; }
    double dt() const { return dt_; }

private:
    double t_start_, dt_;
    PhysicalConstants c_;
    std::vector<double> epochs_;
    std::vector<Vec3> dvs_;
    std::vector<OrbitalElements> grid_;
    std::vector<OrbitalElements> pre_, post_;
    OrbitalElements final_;
};

/// Seconds of observation before t = 0 so the first burn has a full history.
double lead_time(const HarnessConfig& cfg);

/// Runs one trial. `policy` supplies per-burn corrections; when empty the plan is executed
/// verbatim and the filter is not run.
TrialResult simulate(const Scenario& sc, const ManeuverPlan& plan, Mode mode, const Policy& policy,
                     const HarnessConfig& cfg = {}, const PhysicalConstants& c = {});

/// Open loop executes the plan verbatim; closed loop asks `model` for a correction before
/// every burn. Throws ConfigError for closed loop without a model.
TrialResult run_trial(const Scenario& sc, Mode mode, const nn::Model* model,
                      const HarnessConfig& cfg = {}, const PhysicalConstants& c = {},
                      const ManeuverPlan* plan = nullptr);

/// Network policy: last-row output of the model on the decision history, clamped.
Policy network_policy(const nn::Model& model, const HarnessConfig& cfg);

/// Scales dv to |planned| * clamp_fraction and the shift to +-max_epoch_shift (and >= now).
Correction clamp_correction(const Correction& raw, const Decision& d, const HarnessConfig& cfg);

/// Pointing bias of a scenario, rad; per-axis N(0, alpha^2) from the scenario seed.
est::Vec2 draw_pointing_bias(const Scenario& sc);

}  // namespace orbcorr::sim
