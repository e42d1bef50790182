#include "orbcorr/sim/dataset.hpp"

#include "orbcorr/errors.hpp"
#include "orbcorr/util/hash.hpp"

#include <fmt/format.h>

#include <cmath>
#include <random>

namespace orbcorr::sim {

using nlohmann::json;

void DatasetConfig::validate() const {
    scenario.validate();
    harness.validate();
    if (!(alpha_min_deg >= 0.0) || !(alpha_max_deg >= alpha_min_deg)) {
        throw ConfigError(fmt::format("dataset: alpha range [{}, {}] deg is invalid", alpha_min_deg, alpha_max_deg));
    }
    if (scenarios < 1) throw ConfigError("dataset: scenarios must be >= 1");
    if (!(expert_fraction >= 0.0 && expert_fraction <= 1.0)) {
        throw ConfigError(fmt::format("dataset: expert_fraction {} outside [0, 1]", expert_fraction));
    }
}

json DatasetConfig::to_json() const {
    return {{"scenario", scenario.to_json()},
            {"alpha_min_deg", alpha_min_deg},
            {"alpha_max_deg", alpha_max_deg},
            {"scenarios", scenarios},
            {"expert_fraction", expert_fraction},
            {"harness", harness.to_json()}};
}

DatasetConfig DatasetConfig::from_json(const json& j) {
    reject_unknown_keys(j, {"scenario", "alpha_min_deg", "alpha_max_deg", "scenarios", "expert_fraction", "harness"},
                        "dataset");
    DatasetConfig d;
    try {
        d.scenario = ScenarioTemplate::from_json(j.at("scenario"));
        d.alpha_min_deg = j.value("alpha_min_deg", d.alpha_min_deg);
        d.alpha_max_deg = j.value("alpha_max_deg", d.alpha_max_deg);
        d.scenarios = j.value("scenarios", d.scenarios);
        d.expert_fraction = j.value("expert_fraction", d.expert_fraction);
        if (j.contains("harness")) d.harness = HarnessConfig::from_json(j.at("harness"));
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("dataset: {}", e.what()));
    }
    d.validate();
    return d;
}

json DatasetReport::to_json() const {
    return {{"scenarios", scenarios},           {"infeasible", infeasible},
            {"decisions", decisions},           {"nonconvergent", nonconvergent},
            {"sequences", sequences},           {"mean_iterations", mean_iterations},
            {"max_label_dv_kms", max_label_dv}};
}

ShootingProblem labelling_problem(const Decision& d, std::size_t k, const Scenario& sc, const HarnessConfig& cfg) {
    const Snapshot& s = d.history[k];
    ShootingProblem pb;
    pb.x_now = s.truth;
    pb.t_now = s.t;
    pb.planned_dv = d.burn->dv;
    pb.burn_epoch = d.burn->epoch;
    // the bias the filter believes at this snapshot, so labels are a function of what the network sees
    pb.pointing_bias = s.features.segment<2>(12);
    // the accumulated along-track offset is carried, not chased
    pb.waypoint = d.waypoint;
    pb.waypoint.u = astro::wrap_two_pi(d.waypoint.u + astro::wrap_pi(s.truth.u - s.nominal.u));
    pb.arrival_epoch = d.arrival_epoch;
    pb.disturbances = sc.disturbances.deterministic();
    pb.min_shift = std::max(-cfg.max_epoch_shift, d.now - d.burn->epoch);
    pb.max_shift = std::max(pb.min_shift, std::min(cfg.max_epoch_shift, 0.5 * (d.arrival_epoch - d.burn->epoch)));
    return pb;
}

Policy oracle_policy(const Scenario& sc, const HarnessConfig& cfg, const PhysicalConstants& c) {
    return [sc, cfg, c](const Decision& d) {
        if (d.history.empty()) return Correction{};
        try {
            const auto r = shooting_correction(labelling_problem(d, d.history.size() - 1, sc, cfg), cfg.shooting, c);
            return Correction{r.dv, r.epoch_shift};
        } catch (const Error&) {
            return Correction{};
        }
    };
}

namespace {

// A snapshot taken before the previous burn still points at that burn.
bool predates_previous_burn(const Snapshot& s, const Decision& d) {
    return std::abs(s.t + s.features[15] - d.burn->epoch) > 1e-6;
}

}  // namespace

DatasetResult generate_dataset(const DatasetConfig& cfg, std::uint64_t seed, const PhysicalConstants& c) {
    cfg.validate();
    DatasetResult out;
    auto& rep = out.report;
    rep.scenarios = cfg.scenarios;
    long iterations = 0, labels = 0;

    for (int i = 0; i < cfg.scenarios; ++i) {
        const auto idx = static_cast<std::uint64_t>(i);
        std::mt19937_64 rng(util::derive_seed(seed, 12, idx));
        const double alpha = std::uniform_real_distribution<double>(cfg.alpha_min_deg, cfg.alpha_max_deg)(rng);
        const Scenario sc = sample_scenario(cfg.scenario, alpha, util::derive_seed(seed, 11, idx));
        ManeuverPlan plan;
        try {
            plan = planner::plan_sequence(sc.x0, sc.xf, sc.tau);
        } catch (const Error&) {
            ++rep.infeasible;
            continue;
        }

        std::bernoulli_distribution expert(cfg.expert_fraction);
        auto policy = [&](const Decision& d) -> Correction {
            ++rep.decisions;
            const bool execute = expert(rng);
            const auto n = static_cast<Eigen::Index>(d.history.size());
            if (n == 0) return {};
            nn::Sequence seq;
            seq.features.resize(n, kFeatureDim);
            seq.targets.resize(n, kTargetDim);
            std::optional<ShootingResult> warm;
            bool ok = true;
            for (Eigen::Index k = 0; k < n && ok; ++k) {
                const auto& s = d.history[static_cast<std::size_t>(k)];
                seq.features.row(k) = s.features.transpose();
                if (predates_previous_burn(s, d)) {
                    seq.targets.row(k).setConstant(std::nan(""));
                    continue;
                }
                ShootingResult r;
                try {
                    r = shooting_correction(labelling_problem(d, static_cast<std::size_t>(k), sc, cfg.harness),
                                            cfg.harness.shooting, c, warm);
                } catch (const Error&) {
                    ok = false;
                    break;
                }
                iterations += r.iterations;
                ++labels;
                if (!r.converged) {
                    ok = false;
                    break;
                }
                warm = r;
                rep.max_label_dv = std::max(rep.max_label_dv, r.dv.norm());
                const Correction clamped = clamp_correction({r.dv, r.epoch_shift}, d, cfg.harness);
                seq.targets.row(k) << clamped.dv.transpose(), clamped.epoch_shift;
            }
            if (!ok) {
                ++rep.nonconvergent;
                return {};
            }
            // rows before the previous burn inherit the first valid label
            Eigen::Index first = 0;
            while (first < n && std::isnan(seq.targets(first, 0))) ++first;
            if (first == n) return {};
            for (Eigen::Index k = 0; k < first; ++k) seq.targets.row(k) = seq.targets.row(first);
            seq.id = static_cast<int>(out.data.sequences.size());
            const Eigen::RowVectorXd last = seq.targets.row(n - 1);
            out.data.sequences.push_back(std::move(seq));
            if (!execute) return {};
            return Correction{last.head<3>().transpose(), last[3]};
        };
        simulate(sc, plan, Mode::ClosedLoop, policy, cfg.harness, c);
    }

    rep.sequences = static_cast<int>(out.data.sequences.size());
    rep.mean_iterations = labels > 0 ? static_cast<double>(iterations) / static_cast<double>(labels) : 0.0;
    const json conf = cfg.to_json();
    out.data.header = {{"generator", "orbcorr gen-dataset"},
                       {"version", std::string(util::kVersion)},
                       {"seed", seed},
                       {"config_hash", util::config_hash(conf)},
                       {"config", conf},
                       {"report", rep.to_json()}};
    if (out.data.sequences.empty()) throw InfeasibleError("dataset generation produced no sequences");
    return out;
}

}  // namespace orbcorr::sim
