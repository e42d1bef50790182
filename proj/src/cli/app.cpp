#include "orbcorr/cli/app.hpp"

#include "orbcorr/errors.hpp"
#include "orbcorr/neural/training.hpp"
#include "orbcorr/sim/dataset.hpp"
#include "orbcorr/sim/montecarlo.hpp"
#include "orbcorr/util/hash.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace orbcorr::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using astro::kDeg;
using astro::OrbitalElements;
using astro::Vec3;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    std::string mode;
    std::string model;
    std::optional<int> trials;
    std::string alpha_grid;
};

json read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path));
    try {
        json j = json::parse(in);
        if (!j.is_object()) throw ConfigError(fmt::format("config '{}' must be a JSON object", path));
        return j;
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("config '{}': {}", path, e.what()));
    }
}

fs::path out_file(const Options& o, const char* name) {
    fs::create_directories(o.out);
    return fs::path(o.out) / name;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error(fmt::format("cannot write '{}'", p.string()));
    f << text;
    if (!f) throw Error(fmt::format("failed writing '{}'", p.string()));
}

std::string provenance(std::string_view what, std::uint64_t seed, const std::string& hash) {
    return fmt::format("# orbcorr {} version={} seed={} config_hash={}\n", what, util::kVersion, seed, hash);
}

void stamp(json& j, std::uint64_t seed, const std::string& hash) {
    j["version"] = util::kVersion;
    j["seed"] = seed;
    j["config_hash"] = hash;
}

OrbitalElements elements_at(const json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(fmt::format("missing '{}'", key));
    const auto x = planner::elements_from_json(j.at(key));
    try {
        x.validate();
    } catch (const DomainError& e) {
        throw ConfigError(fmt::format("{}: {}", key, e.what()));
    }
    return x;
}

double positive(const json& j, const char* key) {
    double v = 0.0;
    try {
        v = j.at(key).get<double>();
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("'{}': {}", key, e.what()));
    }
    if (!(v > 0.0)) throw ConfigError(fmt::format("'{}' must be positive", key));
    return v;
}

std::vector<double> parse_grid(const std::string& csv) {
    std::vector<double> grid;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            grid.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(fmt::format("--alpha-grid: '{}' is not a number", item));
        }
    }
    if (grid.empty()) throw ConfigError("--alpha-grid is empty");
    return grid;
}

sim::Mode parse_mode(const Options& o, sim::Mode fallback) {
    return o.mode.empty() ? fallback : sim::mode_from_string(o.mode);
}

int cmd_plan(const Options& o, std::ostream& out) {
    const json cfg = read_config(o.config);
    sim::reject_unknown_keys(cfg, {"x0", "xf", "tau_s"}, "plan");
    const auto x0 = elements_at(cfg, "x0");
    const auto xf = elements_at(cfg, "xf");
    const double tau = positive(cfg, "tau_s");
    const std::uint64_t seed = o.seed.value_or(0);
    const auto plan = planner::plan_sequence(x0, xf, tau);
    json doc = planner::to_json(plan);
    stamp(doc, seed, util::config_hash(cfg));
    const auto path = out_file(o, "plan.json");
    write_text(path, doc.dump(2) + "\n");
    out << fmt::format("plan: {} burns, total dv {:.6f} km/s -> {}\n", plan.burns.size(), plan.total_dv,
                       path.string());
    return kExitOk;
}

int cmd_propagate(const Options& o, std::ostream& out) {
    const json cfg = read_config(o.config);
    sim::reject_unknown_keys(cfg, {"x0", "xf", "tau_s", "dt_s", "sample_interval_s", "disturbances", "burns"},
                             "propagate");
    const auto x0 = elements_at(cfg, "x0");
    const double tau = positive(cfg, "tau_s");
    const double dt = positive(cfg, "dt_s");
    const double interval = cfg.contains("sample_interval_s") ? positive(cfg, "sample_interval_s") : dt;
    if (!cfg.contains("disturbances")) throw ConfigError("missing 'disturbances' (use {} for the ideal model)");
    const auto dist = sim::disturbances_from_json(cfg.at("disturbances"));
    if (cfg.contains("xf") && cfg.contains("burns")) throw ConfigError("give either 'xf' or 'burns', not both");

    std::vector<astro::LvlhImpulse> burns;
    if (cfg.contains("xf")) {
        const auto plan = planner::plan_sequence(x0, elements_at(cfg, "xf"), tau);
        for (const auto& b : plan.burns) burns.push_back({b.dv, b.epoch});
    } else if (cfg.contains("burns")) {
        try {
            for (const auto& b : cfg.at("burns")) {
                sim::reject_unknown_keys(b, {"epoch_s", "dv_kms"}, "propagate.burns");
                const auto v = b.at("dv_kms").get<std::vector<double>>();
                if (v.size() != 3) throw ConfigError("burn dv_kms needs 3 components");
                burns.push_back({Vec3(v[0], v[1], v[2]), b.at("epoch_s").get<double>()});
            }
        } catch (const json::exception& e) {
            throw ConfigError(fmt::format("propagate.burns: {}", e.what()));
        }
    }
    const std::uint64_t seed = o.seed.value_or(0);
    astro::Trajectory traj;
    try {
        traj = astro::propagate(x0, burns, dist, tau, dt, seed, {}, interval);
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }

    std::string csv = provenance("propagate", seed, util::config_hash(cfg));
    csv += "t_s,a_km,e,i_deg,raan_deg,argp_deg,u_deg,x_km,y_km,z_km,vx_kms,vy_kms,vz_kms\n";
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const auto& s = traj.samples[k];
        const auto c = traj.cartesian(k);
        csv += fmt::format("{:.9g},{:.12g},{:.9g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g}\n",
                           s.t, s.x.a, s.x.e, s.x.i / kDeg, s.x.raan / kDeg, s.x.argp / kDeg, s.x.u / kDeg,
                           c.position.x(), c.position.y(), c.position.z(), c.velocity.x(), c.velocity.y(),
                           c.velocity.z());
    }
    const auto path = out_file(o, "trajectory.csv");
    write_text(path, csv);
    out << fmt::format("propagate: {} samples over {} s -> {}\n", traj.size(), tau, path.string());
    return kExitOk;
}

int cmd_gen_dataset(const Options& o, std::ostream& out) {
    const auto cfg = sim::DatasetConfig::from_json(read_config(o.config));
    const std::uint64_t seed = o.seed.value_or(0);
    const auto res = sim::generate_dataset(cfg, seed);
    const auto path = out_file(o, "dataset.csv");
    res.data.save(path.string());
    json report = {{"report", res.report.to_json()}};
    stamp(report, seed, res.data.header.at("config_hash").get<std::string>());
    const auto rpath = out_file(o, "dataset_report.json");
    write_text(rpath, report.dump(2) + "\n");
    out << fmt::format("gen-dataset: {} sequences from {} scenarios ({} decisions skipped, {} infeasible) -> {}\n",
                       res.report.sequences, res.report.scenarios, res.report.nonconvergent, res.report.infeasible,
                       path.string());
    return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
    const json cfg = read_config(o.config);
    sim::reject_unknown_keys(cfg, {"dataset", "hyper"}, "train");
    if (!cfg.contains("dataset") || !cfg.at("dataset").is_string()) {
        throw ConfigError("train: 'dataset' must name a dataset file");
    }
    fs::path data_path = cfg.at("dataset").get<std::string>();
    if (data_path.is_relative()) data_path = fs::path(o.config).parent_path() / data_path;
    auto hyper = cfg.contains("hyper") ? nn::TrainingHyper::from_json(cfg.at("hyper")) : nn::TrainingHyper{};
    if (o.seed) hyper.seed = *o.seed;

    const auto data = nn::SequenceDataset::load(data_path.string());
    const auto res = nn::train(data, hyper);
    json model = res.model.to_json();
    stamp(model, hyper.seed, res.report.config_hash);
    const auto mpath = out_file(o, "model.json");
    write_text(mpath, model.dump() + "\n");
    const auto rpath = out_file(o, "cv_report.csv");
    res.report.save(rpath.string());
    out << fmt::format("train: best fold {} val loss {:.6g} -> {}, {}\n", res.report.best_fold,
                       res.report.best_val_loss, mpath.string(), rpath.string());
    return kExitOk;
}

std::optional<nn::Model> load_model(const Options& o) {
    if (o.model.empty()) return std::nullopt;
    return nn::Model::load(o.model);
}

int cmd_simulate(const Options& o, std::ostream& out) {
    const json cfg = read_config(o.config);
    sim::reject_unknown_keys(cfg, {"scenario", "harness"}, "simulate");
    if (!cfg.contains("scenario")) throw ConfigError("simulate: missing 'scenario'");
    auto sc = sim::scenario_from_json(cfg.at("scenario"));
    if (o.seed) sc.seed = *o.seed;
    const auto harness = cfg.contains("harness") ? sim::HarnessConfig::from_json(cfg.at("harness"))
                                                 : sim::HarnessConfig{};
    const auto mode = parse_mode(o, sim::Mode::OpenLoop);
    const auto model = load_model(o);
    if (mode == sim::Mode::ClosedLoop && !model) throw ConfigError("simulate: closed loop needs --model");

    const auto res = sim::run_trial(sc, mode, model ? &*model : nullptr, harness);
    json doc = res.to_json();
    json effective = cfg;
    effective["scenario"]["seed"] = sc.seed;
    if (model) effective["model_hash"] = model->config_hash;
    stamp(doc, sc.seed, util::config_hash(effective));
    const auto path = out_file(o, "trial.json");
    write_text(path, doc.dump(2) + "\n");
    out << fmt::format("simulate: {} miss {:.6f} km, dv {:.6f} km/s -> {}\n", sim::to_string(mode),
                       res.miss_distance, res.total_dv, path.string());
    return kExitOk;
}

int cmd_montecarlo(const Options& o, std::ostream& out) {
    json j = read_config(o.config);
    if (o.trials) j["trials"] = *o.trials;
    if (!o.alpha_grid.empty()) j["alpha_grid_deg"] = parse_grid(o.alpha_grid);
    const auto cfg = sim::MonteCarloConfig::from_json(j);
    const auto model = load_model(o);
    const auto mode = parse_mode(o, model ? sim::Mode::ClosedLoop : sim::Mode::OpenLoop);
    if (mode == sim::Mode::ClosedLoop && !model) throw ConfigError("montecarlo: closed loop needs --model");
    const std::uint64_t seed = o.seed.value_or(0);

    const auto rep = sim::monte_carlo(cfg, seed, mode == sim::Mode::ClosedLoop ? &*model : nullptr);
    const auto path = out_file(o, "montecarlo.csv");
    rep.save(path.string());
    out << fmt::format("montecarlo: {} alphas x {} trials -> {}\n", cfg.alpha_grid.size(), cfg.trials,
                       path.string());
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"J2-optimized orbit correction pipeline", "orbcorr"};
    app.set_version_flag("--version", std::string(util::kVersion));
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON configuration")->required();
        sub->add_option("--seed", o.seed, "master seed");
        sub->add_option("--out", o.out, "output directory")->capture_default_str();
    };
    auto* plan = app.add_subcommand("plan", "elements in, maneuver plan JSON out");
    auto* prop = app.add_subcommand("propagate", "trajectory CSV");
    auto* gen = app.add_subcommand("gen-dataset", "labelled sequence dataset");
    auto* train = app.add_subcommand("train", "cross-validated network training");
    auto* simulate = app.add_subcommand("simulate", "one trial, open or closed loop");
    auto* mc = app.add_subcommand("montecarlo", "miss statistics over a misalignment grid");
    for (auto* s : {plan, prop, gen, train, simulate, mc}) add_common(s);
    for (auto* s : {simulate, mc}) {
        s->add_option("--mode", o.mode, "open or closed");
        s->add_option("--model", o.model, "trained model JSON");
    }
    mc->add_option("--trials", o.trials, "trials per alpha");
    mc->add_option("--alpha-grid", o.alpha_grid, "comma-separated misalignment sigmas, deg");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << util::kVersion << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kExitOk;
        }
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        if (plan->parsed()) return cmd_plan(o, out);
        if (prop->parsed()) return cmd_propagate(o, out);
        if (gen->parsed()) return cmd_gen_dataset(o, out);
        if (train->parsed()) return cmd_train(o, out);
        if (simulate->parsed()) return cmd_simulate(o, out);
        return cmd_montecarlo(o, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace orbcorr::cli
