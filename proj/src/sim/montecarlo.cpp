#include "orbcorr/sim/montecarlo.hpp"

#include "orbcorr/errors.hpp"
#include "orbcorr/util/hash.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace orbcorr::sim {

using nlohmann::json;

void MonteCarloConfig::validate() const {
    scenario.validate();
    harness.validate();
    if (alpha_grid.empty()) throw ConfigError("montecarlo: alpha_grid is empty");
    for (double a : alpha_grid) {
        if (!(a >= 0.0)) throw ConfigError(fmt::format("montecarlo: alpha {} deg must be >= 0", a));
    }
    if (trials < 1) throw ConfigError("montecarlo: trials must be >= 1");
}

json MonteCarloConfig::to_json() const {
    return {{"scenario", scenario.to_json()},
            {"alpha_grid_deg", alpha_grid},
            {"trials", trials},
            {"harness", harness.to_json()}};
}

MonteCarloConfig MonteCarloConfig::from_json(const json& j) {
    reject_unknown_keys(j, {"scenario", "alpha_grid_deg", "trials", "harness"}, "montecarlo");
    MonteCarloConfig m;
    try {
        m.scenario = ScenarioTemplate::from_json(j.at("scenario"));
        if (j.contains("alpha_grid_deg")) m.alpha_grid = j.at("alpha_grid_deg").get<std::vector<double>>();
        m.trials = j.value("trials", m.trials);
        if (j.contains("harness")) m.harness = HarnessConfig::from_json(j.at("harness"));
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("montecarlo: {}", e.what()));
    }
    m.validate();
    return m;
}

namespace {

MonteCarloRow aggregate(double alpha, Mode mode, const std::vector<double>& miss, const std::vector<double>& dv,
                        int failures) {
    MonteCarloRow row;
    row.alpha_deg = alpha;
    row.mode = mode;
    row.trials = static_cast<int>(miss.size());
    row.failures = failures;
    if (miss.empty()) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.mean_miss = row.std_miss = row.min_miss = row.max_miss = row.mean_dv = nan;
        return row;
    }
    const double n = static_cast<double>(miss.size());
    double sum = 0.0, sum_dv = 0.0;
    for (std::size_t k = 0; k < miss.size(); ++k) {
        sum += miss[k];
        sum_dv += dv[k];
    }
    row.mean_miss = sum / n;
    row.mean_dv = sum_dv / n;
    double ss = 0.0;
    for (double m : miss) ss += (m - row.mean_miss) * (m - row.mean_miss);
    row.std_miss = miss.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    const auto [lo, hi] = std::minmax_element(miss.begin(), miss.end());
    row.min_miss = *lo;
    row.max_miss = *hi;
    return row;
}

}  // namespace

MonteCarloReport monte_carlo(const MonteCarloConfig& cfg, std::uint64_t seed, const nn::Model* model,
                             const PhysicalConstants& c) {
    cfg.validate();
    MonteCarloReport rep;
    rep.seed = seed;
    rep.config_hash = model ? util::config_hash({{"config", cfg.to_json()}, {"model", model->config_hash}})
                            : util::config_hash(cfg.to_json());
    std::optional<Policy> policy;
    if (model) policy = network_policy(*model, cfg.harness);

    // plans depend only on the trial's geometry, which is shared across alpha
    std::vector<std::optional<ManeuverPlan>> plans(static_cast<std::size_t>(cfg.trials));
    std::vector<bool> planned(plans.size(), false);

    for (double alpha : cfg.alpha_grid) {
        std::vector<double> open_miss, open_dv, closed_miss, closed_dv;
        int open_fail = 0, closed_fail = 0;
        for (int j = 0; j < cfg.trials; ++j) {
            const auto ju = static_cast<std::size_t>(j);
            const Scenario sc = sample_scenario(cfg.scenario, alpha, util::derive_seed(seed, 7, ju));
            if (!planned[ju]) {
                try {
                    plans[ju] = planner::plan_sequence(sc.x0, sc.xf, sc.tau);
                } catch (const Error&) {
                }
                planned[ju] = true;
            }
            TrialRecord rec;
            rec.alpha_deg = alpha;
            rec.trial = j;
            if (plans[ju]) {
                try {
                    const auto r = simulate(sc, *plans[ju], Mode::OpenLoop, {}, cfg.harness, c);
                    rec.open_miss = r.miss_distance;
                    rec.open_dv = r.total_dv;
                } catch (const Error&) {
                }
                if (policy) {
                    try {
                        const auto r = simulate(sc, *plans[ju], Mode::ClosedLoop, *policy, cfg.harness, c);
                        rec.closed_miss = r.miss_distance;
                        rec.closed_dv = r.total_dv;
                    } catch (const Error&) {
                    }
                }
            }
            if (rec.open_miss) {
                open_miss.push_back(*rec.open_miss);
                open_dv.push_back(*rec.open_dv);
            } else {
                ++open_fail;
            }
            if (policy) {
                if (rec.closed_miss) {
                    closed_miss.push_back(*rec.closed_miss);
                    closed_dv.push_back(*rec.closed_dv);
                } else {
                    ++closed_fail;
                }
            }
            rep.records.push_back(rec);
        }
        rep.rows.push_back(aggregate(alpha, Mode::OpenLoop, open_miss, open_dv, open_fail));
        if (policy) rep.rows.push_back(aggregate(alpha, Mode::ClosedLoop, closed_miss, closed_dv, closed_fail));
    }
    return rep;
}

std::string MonteCarloReport::to_csv() const {
    std::string out = fmt::format("# orbcorr montecarlo version={} seed={} config_hash={}\n", util::kVersion, seed,
                                  config_hash);
    out += "alpha_deg,mode,trials,mean_miss_km,std_miss_km,min_km,max_km,mean_dv_kms\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", r.alpha_deg,
                           r.mode == Mode::OpenLoop ? "open-loop" : "closed-loop", r.trials, r.mean_miss, r.std_miss,
                           r.min_miss, r.max_miss, r.mean_dv);
    }
    return out;
}

void MonteCarloReport::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError(fmt::format("cannot write Monte Carlo report '{}'", path));
    f << to_csv();
    if (!f) throw ConfigError(fmt::format("failed writing Monte Carlo report '{}'", path));
}

}  // namespace orbcorr::sim
