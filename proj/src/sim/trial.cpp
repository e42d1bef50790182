#include "orbcorr/sim/trial.hpp"

#include "orbcorr/errors.hpp"
#include "orbcorr/util/hash.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>

namespace orbcorr::sim {

using astro::kDeg;
using astro::Propagator;
using est::Mat6;
using est::Mat8;
using est::Vec2;

namespace {

// Error-state filter around a propagated reference; the element part of the mean is folded
// into the reference after every update.
class Navigator {
public:
    Navigator(const Vec6& first_obs, double t, const Scenario& sc, const HarnessConfig& cfg,
              const PhysicalConstants& c)
        : ref_(est::from_nonsingular(first_obs).wrapped()), det_(sc.disturbances.deterministic()),
          R_(sc.obs.covariance()), cfg_(cfg), c_(c) {
        fs_.epoch = t;
        fs_.cov.setZero();
        fs_.cov.topLeftCorner<6, 6>() = R_;
        const double prior = std::max(sc.pointing_sigma_deg, cfg.min_bias_prior_deg) * kDeg;
        fs_.cov(6, 6) = fs_.cov(7, 7) = prior * prior;
        const double q = sc.disturbances.noise_std;
        accel_std_ = std::sqrt(q * q * cfg.dt + cfg.accel_noise_floor * cfg.accel_noise_floor);
    }

    void predict_to(double t) {
        const double h = t - fs_.epoch;
        if (h < 1e-9) return;
        const Mat8 F = est::transition_matrix(ref_, h, c_);
        const Mat8 Q = est::process_noise(ref_, h, accel_std_, cfg_.bias_random_walk, c_);
        Propagator p(ref_, fs_.epoch, det_, h, 0, c_);
        p.advance_to(t);
        ref_ = p.state();
        fs_ = est::kf_predict(fs_, F, Q, h);
        fs_.epoch = t;
    }

    void observe(const Vec6& y) {
        fs_ = est::observe_elements(fs_, est::nonsingular_difference(y, est::nonsingular(ref_)), R_);
        fold();
    }

    void burn(const Vec3& dv, const Vec6& y_post) {
        const OrbitalElements pre = ref_;
        const Vec6 y_pre = est::nonsingular(pre);
        const Vec6 observed = est::nonsingular_difference(y_post, y_pre);
        const Vec6 predicted =
            est::nonsingular_difference(est::nonsingular(astro::apply_impulse(pre, dv, Eigen::Matrix3d::Identity(), c_)), y_pre);
        const astro::ControlMatrix B = est::nonsingular_control(pre, c_);
        const Mat6 R = R_ + fs_.cov.topLeftCorner<6, 6>();
        fs_ = est::ingest_burn_residual(fs_, {dv, fs_.epoch}, observed, predicted, B, R);

        // The post-burn element error now carries the remaining bias error.
        auto post = [&](const Vec2& b) {
            return est::nonsingular(astro::apply_impulse(pre, dv, est::pointing_rotation(dv, b), c_));
        };
        const Vec2 beta = fs_.bias();
        Mat8 phi = Mat8::Identity();
        constexpr double step = 1e-6;
        for (int k = 0; k < 2; ++k) {
            Vec2 up = beta, dn = beta;
            up[k] += step;
            dn[k] -= step;
            phi.block<6, 1>(0, est::kBiasIndex + k) = est::nonsingular_difference(post(up), post(dn)) / (2.0 * step);
        }
        ref_ = astro::apply_impulse(pre, dv, est::pointing_rotation(dv, beta), c_).wrapped();
        fs_.cov = phi * fs_.cov * phi.transpose();
        fs_.cov = 0.5 * (fs_.cov + fs_.cov.transpose()).eval();
        fold();
    }

    const OrbitalElements& estimate() const { return ref_; }
    const est::FilterState& state() const { return fs_; }

private:
    void fold() {
        Vec6 y = est::nonsingular(ref_) + fs_.mean.head<6>();
        ref_ = est::from_nonsingular(y).wrapped();
        fs_.mean.head<6>().setZero();
        fs_.check();
    }

    OrbitalElements ref_;
    est::FilterState fs_;
    DisturbanceConfig det_;
    Mat6 R_;
    HarnessConfig cfg_;
    PhysicalConstants c_;
    double accel_std_ = 0.0;
};

// Observation noise indexed by event so that runs differing in burn timing share draws.
Vec6 observation(const OrbitalElements& truth, const est::ObservationNoise& noise,
                 std::uint64_t seed, std::uint64_t index) {
    std::mt19937_64 rng(util::derive_seed(seed, 0, index));
    std::normal_distribution<double> n;
    Vec6 s;
    s << noise.sigma_a, noise.sigma_e, noise.sigma_e, noise.sigma_angle, noise.sigma_angle,
        noise.sigma_angle;
    Vec6 y = est::nonsingular(truth);
    for (int k = 0; k < 6; ++k) y[k] += s[k] * n(rng);
    return y;
}

}  // namespace

std::string_view to_string(Mode m) {
    return m == Mode::OpenLoop ? "open" : "closed";
}

Mode mode_from_string(std::string_view s) {
    if (s == "open" || s == "open-loop") return Mode::OpenLoop;
    if (s == "closed" || s == "closed-loop") return Mode::ClosedLoop;
    throw ConfigError(fmt::format("unknown mode '{}' (expected open or closed)", s));
}

void Scenario::validate() const {
    try {
        x0.validate();
        xf.validate();
        disturbances.validate();
    } catch (const DomainError& e) {
        throw ConfigError(fmt::format("scenario: {}", e.what()));
    }
    if (!(tau > 0.0)) throw ConfigError(fmt::format("scenario: tau must be positive ({})", tau));
    if (!(pointing_sigma_deg >= 0.0)) {
        throw ConfigError(fmt::format("scenario: pointing sigma must be >= 0 ({})", pointing_sigma_deg));
    }
    if (!(obs.sigma_a > 0.0) || !(obs.sigma_e > 0.0) || !(obs.sigma_angle > 0.0)) {
        throw ConfigError("scenario: observation noise must be positive");
    }
}

void HarnessConfig::validate() const {
    if (!(dt > 0.0)) throw ConfigError("harness: dt must be positive");
    if (history < 1) throw ConfigError("harness: history must be >= 1");
    if (!(clamp_fraction >= 0.0)) throw ConfigError("harness: clamp_fraction must be >= 0");
    if (!(max_epoch_shift >= 0.0)) throw ConfigError("harness: max_epoch_shift must be >= 0");
    if (!(sample_interval > 0.0)) throw ConfigError("harness: sample_interval must be positive");
    if (!(correction_horizon > 0.0)) throw ConfigError("harness: correction_horizon must be positive");
    if (shooting.max_iterations < 1 || !(shooting.dt > 0.0) || !(shooting.tolerance > 0.0)) {
        throw ConfigError("harness: shooting needs iterations >= 1, dt > 0 and tolerance > 0");
    }
}

nlohmann::json HarnessConfig::to_json() const {
    return {{"dt_s", dt},
            {"history", history},
            {"clamp_fraction", clamp_fraction},
            {"max_epoch_shift_s", max_epoch_shift},
            {"accel_noise_floor", accel_noise_floor},
            {"bias_random_walk", bias_random_walk},
            {"min_bias_prior_deg", min_bias_prior_deg},
            {"sample_interval_s", sample_interval},
            {"correction_horizon_s", correction_horizon},
            {"shooting",
             {{"max_iterations", shooting.max_iterations},
              {"tolerance", shooting.tolerance},
              {"dt_s", shooting.dt}}}};
}

HarnessConfig HarnessConfig::from_json(const nlohmann::json& j) {
    HarnessConfig h;
    static const std::vector<std::string> keys = {
        "dt_s", "history", "clamp_fraction", "max_epoch_shift_s", "accel_noise_floor",
        "bias_random_walk", "min_bias_prior_deg", "sample_interval_s", "correction_horizon_s", "shooting"};
    try {
        for (const auto& [k, v] : j.items()) {
            if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
                throw ConfigError(fmt::format("harness: unknown key '{}'", k));
            }
        }
        h.dt = j.value("dt_s", h.dt);
        h.history = j.value("history", h.history);
        h.clamp_fraction = j.value("clamp_fraction", h.clamp_fraction);
        h.max_epoch_shift = j.value("max_epoch_shift_s", h.max_epoch_shift);
        h.accel_noise_floor = j.value("accel_noise_floor", h.accel_noise_floor);
        h.bias_random_walk = j.value("bias_random_walk", h.bias_random_walk);
        h.min_bias_prior_deg = j.value("min_bias_prior_deg", h.min_bias_prior_deg);
        h.sample_interval = j.value("sample_interval_s", h.sample_interval);
        h.correction_horizon = j.value("correction_horizon_s", h.correction_horizon);
        if (j.contains("shooting")) {
            const auto& s = j.at("shooting");
            for (const auto& [k, v] : s.items()) {
                if (k != "max_iterations" && k != "tolerance" && k != "dt_s") {
                    throw ConfigError(fmt::format("harness.shooting: unknown key '{}'", k));
                }
            }
            h.shooting.max_iterations = s.value("max_iterations", h.shooting.max_iterations);
            h.shooting.tolerance = s.value("tolerance", h.shooting.tolerance);
            h.shooting.dt = s.value("dt_s", h.shooting.dt);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("harness: {}", e.what()));
    }
    h.validate();
    return h;
}

nlohmann::json TrialResult::to_json() const {
    nlohmann::json burns = nlohmann::json::array();
    for (const auto& b : log) {
        burns.push_back({{"label", b.label},
                         {"planned_epoch_s", b.planned_epoch},
                         {"executed_epoch_s", b.executed_epoch},
                         {"planned_dv_kms", {b.planned_dv.x(), b.planned_dv.y(), b.planned_dv.z()}},
                         {"correction_kms", {b.correction.x(), b.correction.y(), b.correction.z()}},
                         {"epoch_shift_s", b.epoch_shift},
                         {"bias_estimate_deg", {b.bias_estimate[0] / kDeg, b.bias_estimate[1] / kDeg}},
                         {"bias_sigma_deg", b.bias_sigma / kDeg}});
    }
    return {{"mode", to_string(mode)},
            {"miss_distance_km", miss_distance},
            {"total_dv_kms", total_dv},
            {"planned_dv_kms", planned_dv},
            {"true_bias_deg", {true_bias[0] / kDeg, true_bias[1] / kDeg}},
            {"final_state", planner::elements_to_json(final_state)},
            {"final_target", planner::elements_to_json(final_target)},
            {"burns", burns}};
}

NominalTrajectory::NominalTrajectory(const ManeuverPlan& plan, double tau, double t_start, double dt,
                                     const PhysicalConstants& c)
    : t_start_(t_start), dt_(dt), c_(c) {
    for (const auto& b : plan.burns) {
        epochs_.push_back(b.epoch);
        dvs_.push_back(b.dv);
    }
    Propagator p(drifted(plan.x0, t_start, c), t_start, {}, dt, 0, c);
    grid_.push_back(p.state());
    std::size_t b = 0;
    for (long k = 1;; ++k) {
        const double tk = std::min(t_start + static_cast<double>(k) * dt, tau);
        while (b < epochs_.size() && epochs_[b] <= tk) {
            p.advance_to(epochs_[b]);
            pre_.push_back(p.state());
            p.apply(dvs_[b]);
            post_.push_back(p.state());
            ++b;
        }
        p.advance_to(tk);
        grid_.push_back(p.state());
        if (tk >= tau) break;
    }
    final_ = p.state();
}

const OrbitalElements& NominalTrajectory::at_grid(long k) const {
    return grid_[static_cast<std::size_t>(std::clamp<long>(k, 0, static_cast<long>(grid_.size()) - 1))];
}

OrbitalElements NominalTrajectory::at(double t) const {
    const long k = std::clamp<long>(static_cast<long>(std::floor((t - t_start_) / dt_ + 1e-9)), 0,
                                    static_cast<long>(grid_.size()) - 1);
    const double tk = t_start_ + static_cast<double>(k) * dt_;
    if (t - tk < 1e-9) return grid_[static_cast<std::size_t>(k)];
    Propagator p(grid_[static_cast<std::size_t>(k)], tk, {}, dt_, 0, c_);
    for (std::size_t b = 0; b < epochs_.size(); ++b) {
        if (epochs_[b] > tk && epochs_[b] <= t) {
            p.advance_to(epochs_[b]);
            p.apply(dvs_[b]);
        }
    }
    p.advance_to(t);
    return p.state();
}

double lead_time(const HarnessConfig& cfg) {
    return (std::ceil((cfg.history * cfg.dt + cfg.max_epoch_shift) / cfg.dt) + 1.0) * cfg.dt;
}

Vec2 draw_pointing_bias(const Scenario& sc) {
    std::mt19937_64 rng(util::derive_seed(sc.seed, 2));
    std::normal_distribution<double> n;
    const double s = sc.pointing_sigma_deg * kDeg;
    const double b0 = n(rng);
    const double b1 = n(rng);
    return {s * b0, s * b1};
}

Correction clamp_correction(const Correction& raw, const Decision& d, const HarnessConfig& cfg) {
    Correction out = raw;
    if (!out.dv.allFinite()) out.dv.setZero();
    if (!std::isfinite(out.epoch_shift)) out.epoch_shift = 0.0;
    const double limit = cfg.clamp_fraction * d.burn->dv.norm();
    const double n = out.dv.norm();
    if (n > limit) out.dv *= (n > 0.0 ? limit / n : 0.0);
    const double lo = std::max(-cfg.max_epoch_shift, d.now - d.burn->epoch);
    const double hi = std::max(lo, std::min(cfg.max_epoch_shift, 0.5 * (d.arrival_epoch - d.burn->epoch)));
    out.epoch_shift = std::clamp(out.epoch_shift, lo, hi);
    return out;
}

Policy network_policy(const nn::Model& model, const HarnessConfig& cfg) {
    if (model.dims().input != kFeatureDim || model.dims().output != kTargetDim) {
        throw ConfigError(fmt::format("model dims {}->{} do not match the harness ({}->{})",
                                      model.dims().input, model.dims().output, kFeatureDim, kTargetDim));
    }
    return [&model, cfg](const Decision& d) {
        Eigen::MatrixXd seq(static_cast<Eigen::Index>(d.history.size()), kFeatureDim);
        for (std::size_t k = 0; k < d.history.size(); ++k) {
            seq.row(static_cast<Eigen::Index>(k)) = d.history[k].features.transpose();
        }
        const Eigen::MatrixXd out = model.predict(seq);
        const auto last = out.row(out.rows() - 1);
        Correction c;
        c.dv = last.head<3>().transpose();
        c.epoch_shift = last[3];
        return c;
    };
}

TrialResult simulate(const Scenario& sc, const ManeuverPlan& plan, Mode mode, const Policy& policy,
                     const HarnessConfig& cfg, const PhysicalConstants& c) {
    sc.validate();
    cfg.validate();
    const double t0 = -lead_time(cfg);
    const NominalTrajectory nominal(plan, sc.tau, t0, cfg.dt, c);
    const Vec2 beta = draw_pointing_bias(sc);
    const std::uint64_t obs_seed = util::derive_seed(sc.seed, 3);
    const std::size_t nb = plan.burns.size();
    const bool navigate = static_cast<bool>(policy);

    Propagator truth(drifted(sc.x0, t0, c), t0, sc.disturbances, cfg.dt, util::derive_seed(sc.seed, 1), c);
    std::optional<Navigator> nav;
    std::deque<Snapshot> history;
    std::uint64_t obs_index = 0;

    TrialResult res;
    res.mode = mode;
    res.true_bias = beta;
    res.planned_dv = plan.total_dv;

    std::size_t next = 0;
    double last_burn = t0;
    auto snapshot = [&](double t) {
        Snapshot s;
        s.t = t;
        s.truth = truth.state();
        s.nominal = nominal.at(t);
        const auto& fs = nav->state();
        s.features.setZero();
        s.features.head<6>() = est::nonsingular_difference(nav->estimate(), s.nominal);
        if (next < nb) {
            s.features.segment<6>(6) = est::nonsingular_difference(nominal.post_burn(next), nominal.pre_burn(next));
            s.features[15] = plan.burns[next].epoch - t;
        }
        s.features[12] = fs.bias()[0];
        s.features[13] = fs.bias()[1];
        s.features[14] = fs.bias_sigma();
        s.features[16] = t - last_burn;
        history.push_back(std::move(s));
        while (static_cast<int>(history.size()) > cfg.history) history.pop_front();
    };
    auto observe = [&]() {
        // burn-time observations use a separate index range from the grid ticks
        return observation(truth.state(), sc.obs, obs_seed, obs_index);
    };

    if (navigate) {
        obs_index = 0;
        nav.emplace(observe(), t0, sc, cfg, c);
        snapshot(t0);
    }

    Trajectory arc;
    auto record = [&](double t) {
        if (next == nb && t >= 0.0) arc.samples.push_back({t, truth.state()});
    };
    if (nb == 0) record(0.0);

    bool decided = false;
    Correction cur;
    double t_exec = 0.0;
    double now = t0;
    long k = 0;
    for (;;) {
        if (next < nb && !decided) {
            const auto& burn = plan.burns[next];
            const double t_tick = t0 + static_cast<double>(k + 1) * cfg.dt;
            const double t_decide = std::max(burn.epoch - cfg.max_epoch_shift, now);
            if (t_decide < t_tick) {
                Decision d;
                d.burn_index = next;
                d.burn = &burn;
                d.now = now;
                const bool last = next + 1 == nb;
                const double following = last ? sc.tau : plan.burns[next + 1].epoch;
                const double capped = burn.epoch + cfg.correction_horizon;
                if (capped < following) {
                    d.arrival_epoch = capped;
                    d.waypoint = nominal.at(capped);
                } else {
                    d.arrival_epoch = following;
                    d.waypoint = last ? nominal.final_state() : nominal.pre_burn(next + 1);
                }
                d.true_bias = beta;
                std::vector<Snapshot> hist(history.begin(), history.end());
                d.history = hist;
                cur = navigate ? clamp_correction(policy(d), d, cfg) : Correction{};
                t_exec = std::max(now, burn.epoch + cur.epoch_shift);
                decided = true;
            }
        }
        const double t_tick = t0 + static_cast<double>(k + 1) * cfg.dt;
        if (decided && t_exec <= t_tick) {
            const auto& burn = plan.burns[next];
            truth.advance_to(t_exec);
            const Vec3 dv = burn.dv + cur.dv;
            truth.apply(dv, est::pointing_rotation(dv, beta));
            BurnLog entry;
            entry.label = std::string(planner::to_string(burn.label));
            entry.planned_epoch = burn.epoch;
            entry.executed_epoch = t_exec;
            entry.planned_dv = burn.dv;
            entry.correction = cur.dv;
            entry.epoch_shift = t_exec - burn.epoch;
            if (navigate) {
                nav->predict_to(t_exec);
                obs_index = (1ULL << 40) + next;
                nav->burn(dv, observe());
                entry.bias_estimate = nav->state().bias();
                entry.bias_sigma = nav->state().bias_sigma();
            }
            res.log.push_back(entry);
            res.total_dv += dv.norm();
            last_burn = t_exec;
            now = t_exec;
            ++next;
            decided = false;
            if (navigate) snapshot(t_exec);
            record(t_exec);
            continue;
        }
        if (now >= sc.tau - 1e-9) break;
        const double t_end = std::min(t_tick, sc.tau);
        if (next == nb) {
            double t = now;
            while (t_end - t > 1e-9) {
                t = std::min(t + cfg.sample_interval, t_end);
                truth.advance_to(t);
                record(t);
            }
        } else {
            truth.advance_to(t_end);
        }
        if (navigate) {
            nav->predict_to(t_end);
            obs_index = static_cast<std::uint64_t>(k + 1);
            nav->observe(observe());
            snapshot(t_end);
        }
        now = t_end;
        ++k;
    }
    if (next != nb) {
        throw PropagationError(now, fmt::format("trial ended with {} of {} burns executed", next, nb));
    }

    res.final_state = truth.state();
    res.final_target = drifted(sc.xf, sc.tau, c);
    res.miss_distance = miss_distance(arc, sc.xf, c, cfg.miss);
    return res;
}

TrialResult run_trial(const Scenario& sc, Mode mode, const nn::Model* model, const HarnessConfig& cfg,
                      const PhysicalConstants& c, const ManeuverPlan* plan) {
    if (mode == Mode::ClosedLoop && model == nullptr) {
        throw ConfigError("closed-loop trials need a trained model");
    }
    sc.validate();
    std::optional<ManeuverPlan> own;
    if (plan == nullptr) {
        own = planner::plan_sequence(sc.x0, sc.xf, sc.tau, c);
        plan = &*own;
    }
    const Policy policy = mode == Mode::ClosedLoop ? network_policy(*model, cfg) : Policy{};
    return simulate(sc, *plan, mode, policy, cfg, c);
}

}  // namespace orbcorr::sim
