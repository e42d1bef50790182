#include "orbcorr/planner/planner.hpp"

#include "orbcorr/errors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <optional>

namespace orbcorr::planner {

using astro::kDeg;
using astro::kTwoPi;
using astro::mean_motion;
using astro::Propagator;
using astro::wrap_pi;
using astro::wrap_two_pi;

namespace {

constexpr double kNodeSlack = 1e-6;   // rad; a state this close to a node is treated as on it
constexpr double kMaxEccentricity = 0.05;
constexpr double kMinAltitude = 100.0;

double u_rate(const OrbitalElements& x, const PhysicalConstants& c) {
    return astro::secular_rates(x, c)[5];
}

double hohmann_time(double a1, double a2, const PhysicalConstants& c) {
    const double at = 0.5 * (a1 + a2);
    return std::numbers::pi * std::sqrt(at * at * at / c.mu());
}

struct Schedule {
    std::vector<PlannedBurn> burns;
    std::array<Waypoint, 4> waypoints;
    OrbitalElements final_state;
    double hold_time = 0.0;  // time spent at i_t between the two inclination burns
};

class ScheduleBuilder {
public:
    ScheduleBuilder(const OrbitalElements& x0, const OrbitalElements& xf, double tau,
                    const PhysicalConstants& c, double dt)
        : x0_(x0), xf_(xf), tau_(tau), c_(c), dt_(dt) {}

    Schedule run(double a_t, double i_t) const {
        Schedule s;
        Propagator prop(x0_, 0.0, {}, dt_, 0, c_);

        sma_group(prop, a_t, 0.0, BurnLabel::RaiseToTransfer, s);
        s.waypoints[0] = {BurnLabel::RaiseToTransfer, prop.time(), prop.state()};

        const double t_incl1 = inc_group(prop, i_t, BurnLabel::InclineToTransfer, s);
        s.waypoints[1] = {BurnLabel::InclineToTransfer, prop.time(), prop.state()};

        const double t_final = mean_motion(xf_.a, c_);
        const double period_f = kTwoPi / t_final;
        const double t3 = tau_ - 1.5 * period_f - hohmann_time(prop.state().a, xf_.a, c_);
        if (t3 <= prop.time()) {
            throw InfeasibleError(fmt::format(
                "maneuver time {} s too short: the final raise must start at {} s, before the "
                "transfer orbit is reached at {} s", tau_, t3, prop.time()));
        }
        sma_group(prop, xf_.a, t3, BurnLabel::RaiseToFinal, s);
        s.waypoints[2] = {BurnLabel::RaiseToFinal, prop.time(), prop.state()};

        const double t_incl2 = inc_group(prop, xf_.i, BurnLabel::InclineToFinal, s);
        s.waypoints[3] = {BurnLabel::InclineToFinal, prop.time(), prop.state()};

        prop.advance_to(tau_);
        s.final_state = prop.state();
        s.hold_time = std::max(t_incl2 - t_incl1, period_f);
        return s;
    }

private:
    void sma_group(Propagator& prop, double a_to, double start, BurnLabel label, Schedule& s) const {
        prop.advance_to(start);
        const auto imps = burn_dv_sma(prop.state().a, a_to, prop.state(), prop.time(), c_);
        for (const auto& imp : imps) {
            prop.advance_to(imp.epoch);
            prop.apply(imp.dv);
            s.burns.push_back({imp.epoch, imp.dv, label});
        }
    }

    // Returns the burn epoch (or the current time when no burn is needed).
    double inc_group(Propagator& prop, double i_to, BurnLabel label, Schedule& s) const {
        if (std::abs(i_to - prop.state().i) < 1e-12) return prop.time();
        const double te = next_node_epoch(prop.state(), prop.time(), c_);
        prop.advance_to(te);
        const auto imp = burn_dv_inc(prop.state().i, i_to, prop.state(), prop.time(), c_);
        prop.advance_to(imp.epoch);
        prop.apply(imp.dv);
        s.burns.push_back({imp.epoch, imp.dv, label});
        return imp.epoch;
    }

    OrbitalElements x0_, xf_;
    double tau_;
    PhysicalConstants c_;
    double dt_;
};

struct Candidate {
    Schedule schedule;
    TransferDesign design;
    double total_dv = 0.0;
};

double sum_dv(const std::vector<PlannedBurn>& burns) {
    double total = 0.0;
    for (const auto& b : burns) total += b.dv.norm();
    return total;
}

}  // namespace

std::string_view to_string(BurnLabel label) {
    switch (label) {
        case BurnLabel::RaiseToTransfer: return "raise-to-transfer";
        case BurnLabel::InclineToTransfer: return "incline-to-transfer";
        case BurnLabel::RaiseToFinal: return "raise-to-final";
        case BurnLabel::InclineToFinal: return "incline-to-final";
    }
    return "unknown";
}

BurnLabel burn_label_from_string(std::string_view s) {
    for (auto l : {BurnLabel::RaiseToTransfer, BurnLabel::InclineToTransfer,
                   BurnLabel::RaiseToFinal, BurnLabel::InclineToFinal}) {
        if (to_string(l) == s) return l;
    }
    throw ConfigError(fmt::format("unknown burn label '{}'", s));
}

std::vector<LvlhImpulse> ManeuverPlan::impulses() const {
    std::vector<LvlhImpulse> out;
    out.reserve(burns.size());
    for (const auto& b : burns) out.push_back(b.impulse());
    return out;
}

double ManeuverPlan::group_dv(BurnLabel label) const {
    double total = 0.0;
    for (const auto& b : burns) {
        if (b.label == label) total += b.dv.norm();
    }
    return total;
}

double required_nodal_rate(double raan_0, double raan_f, double raan_dot, double tau) {
    if (!(tau > 0.0)) throw DomainError(fmt::format("maneuver time must be positive (tau = {})", tau));
    return raan_dot + wrap_pi(raan_f - raan_0) / tau;
}

double transfer_inclination(double target_rate, double a_t, double e_t, const PhysicalConstants& c) {
    if (!(a_t > 0.0) || e_t < 0.0 || e_t >= 1.0) {
        throw DomainError(fmt::format("invalid transfer orbit (a = {}, e = {})", a_t, e_t));
    }
    const double p = a_t * (1.0 - e_t * e_t);
    const double n = mean_motion(a_t, c);
    const double max_rate = 1.5 * c.re() * c.re() * c.j2() * n / (p * p);
    if (max_rate == 0.0) {
        if (target_rate == 0.0) return std::numbers::pi / 2;
        throw InfeasibleError("nodal rate cannot be changed without J2");
    }
    const double cos_i = -target_rate / max_rate;
    if (std::abs(cos_i) > 1.0) {
        throw InfeasibleError(fmt::format(
            "RAAN unreachable: required nodal rate {:.6e} rad/s exceeds the largest achievable "
            "|rate| {:.6e} rad/s at a = {:.3f} km", target_rate, max_rate, a_t));
    }
    return std::acos(cos_i);
}

double delta_u_j2(const TransferDesign& design, const OrbitalElements& x_f, double tau,
                  const PhysicalConstants& c) {
    const double re2j2 = c.re() * c.re() * c.j2();
    const double af = x_f.a;
    const double nf = mean_motion(af, c);
    const double s = std::sin(x_f.i);
    const double first = -3.0 * re2j2 / (af * af * af) * (s * s - 1.0) *
                         (3.0 * c.mu() / (4.0 * af * af * nf) + nf) * (af - design.a_t) * tau;
    const double second = -1.5 * re2j2 * nf / (af * af) * std::sin(2.0 * x_f.i) *
                          (x_f.i - design.i_t) * tau;
    return first + second;
}

double transfer_sma(double u_0, double u_f, int k, double a_f, double delta_u) {
    if (k < 1) throw DomainError(fmt::format("revolution count must be >= 1 (k = {})", k));
    const double base = 1.0 + (wrap_pi(u_f - u_0) + delta_u) / (kTwoPi * k);
    if (!(base > 0.0)) {
        throw InfeasibleError(fmt::format(
            "phase unreachable in {} revolutions (base {:.6f} <= 0); increase k", k, base));
    }
    return a_f * std::pow(base, 2.0 / 3.0);
}

std::vector<LvlhImpulse> burn_dv_sma(double a_from, double a_to, const OrbitalElements& at,
                                     double epoch, const PhysicalConstants& c) {
    if (at.e > kMaxEccentricity) {
        throw UnsupportedRegimeError(fmt::format(
            "in-plane transfer needs a near-circular orbit (e = {} > {})", at.e, kMaxEccentricity));
    }
    const double floor = c.re() + kMinAltitude;
    if (a_from <= floor || a_to <= floor) {
        throw InfeasibleError(fmt::format(
            "semi-major axis transfer {:.3f} -> {:.3f} km dips below {:.3f} km", a_from, a_to, floor));
    }
    if (a_from == a_to) return {};
    const double sum = a_from + a_to;
    const double dv1 = std::sqrt(c.mu() / a_from) * (std::sqrt(2.0 * a_to / sum) - 1.0);
    const double dv2 = std::sqrt(c.mu() / a_to) * (1.0 - std::sqrt(2.0 * a_from / sum));
    return {{Vec3(0.0, dv1, 0.0), epoch},
            {Vec3(0.0, dv2, 0.0), epoch + hohmann_time(a_from, a_to, c)}};
}

double next_node_epoch(const OrbitalElements& x, double epoch, const PhysicalConstants& c) {
    const double d = std::fmod(wrap_two_pi(x.u), std::numbers::pi);
    if (d < kNodeSlack || std::numbers::pi - d < kNodeSlack) return epoch;
    const double remaining = std::numbers::pi - d;

    constexpr double kStep = 10.0;
    Propagator prop(x, epoch, {}, kStep, 0, c);
    double swept = 0.0;
    for (;;) {
        const OrbitalElements before = prop.state();
        const double t_before = prop.time();
        prop.advance_to(t_before + kStep);
        const double inc = wrap_pi(prop.state().u - before.u);
        if (swept + inc < remaining) {
            swept += inc;
            continue;
        }
        // Newton on the short arc from the bracketing state
        const double left = remaining - swept;
        double h = left / u_rate(before, c);
        for (int it = 0; it < 6; ++it) {
            Propagator q(before, t_before, {}, kStep, 0, c);
            q.advance_to(t_before + h);
            const double err = left - wrap_pi(q.state().u - before.u);
            h += err / u_rate(q.state(), c);
            if (std::abs(err) < 1e-13) break;
        }
        return t_before + h;
    }
}

LvlhImpulse burn_dv_inc(double i_from, double i_to, const OrbitalElements& x, double epoch,
                        const PhysicalConstants& c) {
    const double te = next_node_epoch(x, epoch, c);
    OrbitalElements at = x;
    if (te > epoch) {
        Propagator prop(x, epoch, {}, 10.0, 0, c);
        prop.advance_to(te);
        at = prop.state();
    }
    const double di = i_to - i_from;
    if (di == 0.0) return {Vec3::Zero(), te};
    // horizontal speed at the node; rotating it by di about the radial axis changes only i
    const double v = at.angular_momentum(c) / at.radius();
    const double node_sign = std::cos(at.u) >= 0.0 ? 1.0 : -1.0;
    return {Vec3(0.0, -v * (1.0 - std::cos(di)), node_sign * v * std::sin(di)), te};
}

OrbitalElements target_at(const OrbitalElements& x_f, double t, const PhysicalConstants& c, double dt) {
    Propagator prop(x_f, 0.0, {}, dt, 0, c);
    prop.advance_to(t);
    return prop.state();
}

ManeuverPlan plan_sequence(const OrbitalElements& x_0, const OrbitalElements& x_f, double tau,
                           const PhysicalConstants& c, const PlannerOptions& opts) {
    x_0.validate();
    x_f.validate();
    if (x_0.e > kMaxEccentricity || x_f.e > kMaxEccentricity) {
        throw UnsupportedRegimeError(fmt::format(
            "planner needs near-circular orbits (e_0 = {}, e_f = {}, limit {})", x_0.e, x_f.e,
            kMaxEccentricity));
    }
    const double n_f = mean_motion(x_f.a, c);
    if (!(tau >= 2.0 * kTwoPi / n_f)) {
        throw DomainError(fmt::format("maneuver time {} s shorter than two revolutions", tau));
    }

    ManeuverPlan plan;
    plan.x0 = x_0;
    plan.xf = x_f;

    const double d_raan = wrap_pi(x_f.raan - x_0.raan);
    const double d_u = wrap_pi(x_0.u - x_f.u);
    if (x_0.a == x_f.a && x_0.i == x_f.i && d_raan == 0.0 && d_u == 0.0 && x_0.e == x_f.e) {
        plan.design = {x_0.i, x_0.a, std::max(1, static_cast<int>(std::lround(tau * n_f / kTwoPi))), tau, 0.0};
        const auto labels = {BurnLabel::RaiseToTransfer, BurnLabel::InclineToTransfer,
                             BurnLabel::RaiseToFinal, BurnLabel::InclineToFinal};
        std::size_t k = 0;
        for (auto l : labels) plan.waypoints[k++] = {l, 0.0, x_0};
        return plan;
    }

    const OrbitalElements target_end = target_at(x_f, tau, c, opts.dt);
    const double natural_rate = astro::secular_rates(x_f, c)[3];
    const ScheduleBuilder builder(x_0, x_f, tau, c, opts.dt);
    // rough transfer duration, used for the revolution count
    const double transfer_time = tau - 2.5 * kTwoPi / n_f;

    std::optional<Candidate> best;
    std::string last_failure;
    for (int m = -opts.revolution_window; m <= opts.revolution_window; ++m) {
        try {
            double correction = 0.0;
            double rate = required_nodal_rate(x_0.raan, x_f.raan, natural_rate, tau);
            int k = std::max(1, static_cast<int>(std::lround(transfer_time * n_f / kTwoPi)));
            double a_t = x_f.a;
            double i_t = x_0.i;
            double prev_a = std::numeric_limits<double>::infinity();
            Schedule sched;
            bool converged = false;
            for (int it = 0; it < opts.max_iterations; ++it) {
                a_t = transfer_sma(x_f.u, x_0.u, k, x_f.a, kTwoPi * m + correction);
                i_t = transfer_inclination(rate, a_t, x_0.e, c);
                sched = builder.run(a_t, i_t);
                const double err_u = wrap_pi(sched.final_state.u - target_end.u);
                const double err_raan = wrap_pi(sched.final_state.raan - target_end.raan);
                if (std::abs(err_u) < opts.phase_tolerance &&
                    std::abs(err_raan) < opts.raan_tolerance &&
                    std::abs(a_t - prev_a) < opts.sma_tolerance) {
                    converged = true;
                    break;
                }
                prev_a = a_t;
                correction += err_u;
                rate -= err_raan / sched.hold_time;
                if (it < 3) {
                    k = std::max(1, static_cast<int>(std::lround(transfer_time * mean_motion(a_t, c) / kTwoPi)));
                }
            }
            if (!converged) {
                last_failure = fmt::format("phase offset {} rev did not converge", m);
                continue;
            }
            Candidate cand{sched, {i_t, a_t, k, tau, correction}, sum_dv(sched.burns)};
            if (!best || cand.total_dv < best->total_dv) best = std::move(cand);
        } catch (const InfeasibleError& e) {
            last_failure = e.what();
        } catch (const PropagationError& e) {
            last_failure = e.what();
        }
    }
    if (!best) {
        throw InfeasibleError(fmt::format("no feasible transfer orbit: {}", last_failure));
    }
    plan.burns = std::move(best->schedule.burns);
    plan.waypoints = best->schedule.waypoints;
    plan.design = best->design;
    plan.total_dv = best->total_dv;
    return plan;
}

nlohmann::json elements_to_json(const OrbitalElements& x) {
    return {{"a_km", x.a},           {"e", x.e},
            {"i_deg", x.i / kDeg},   {"raan_deg", x.raan / kDeg},
            {"argp_deg", x.argp / kDeg}, {"u_deg", x.u / kDeg}};
}

OrbitalElements elements_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("orbital elements must be an object");
    for (const auto& [k, v] : j.items()) {
        if (k != "a_km" && k != "e" && k != "i_deg" && k != "raan_deg" && k != "argp_deg" && k != "u_deg") {
            throw ConfigError(fmt::format("orbital elements: unknown key '{}'", k));
        }
    }
    try {
        return {j.at("a_km").get<double>(),          j.at("e").get<double>(),
                j.at("i_deg").get<double>() * kDeg,  j.at("raan_deg").get<double>() * kDeg,
                j.at("argp_deg").get<double>() * kDeg, j.at("u_deg").get<double>() * kDeg};
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("bad orbital elements: {}", e.what()));
    }
}

nlohmann::json to_json(const ManeuverPlan& plan) {
    nlohmann::json burns = nlohmann::json::array();
    for (const auto& b : plan.burns) {
        burns.push_back({{"epoch_s", b.epoch},
                         {"dv_kms", {b.dv[0], b.dv[1], b.dv[2]}},
                         {"label", to_string(b.label)}});
    }
    nlohmann::json waypoints = nlohmann::json::array();
    for (const auto& w : plan.waypoints) {
        waypoints.push_back({{"label", to_string(w.label)}, {"epoch_s", w.epoch},
                             {"elements", elements_to_json(w.x)}});
    }
    return {{"schema", "orbcorr.plan/1"},
            {"total_dv_kms", plan.total_dv},
            {"design",
             {{"i_t_deg", plan.design.i_t / kDeg},
              {"a_t_km", plan.design.a_t},
              {"k", plan.design.k},
              {"tau_s", plan.design.tau},
              {"delta_u_j2_rad", plan.design.delta_u_j2}}},
            {"initial", elements_to_json(plan.x0)},
            {"final", elements_to_json(plan.xf)},
            {"burns", burns},
            {"waypoints", waypoints}};
}

ManeuverPlan plan_from_json(const nlohmann::json& j) {
    try {
        ManeuverPlan plan;
        const auto& d = j.at("design");
        plan.design = {d.at("i_t_deg").get<double>() * kDeg, d.at("a_t_km").get<double>(),
                       d.at("k").get<int>(), d.at("tau_s").get<double>(),
                       d.at("delta_u_j2_rad").get<double>()};
        plan.x0 = elements_from_json(j.at("initial"));
        plan.xf = elements_from_json(j.at("final"));
        for (const auto& b : j.at("burns")) {
            const auto& v = b.at("dv_kms");
            plan.burns.push_back({b.at("epoch_s").get<double>(),
                                  Vec3(v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()),
                                  burn_label_from_string(b.at("label").get<std::string>())});
        }
        const auto& w = j.at("waypoints");
        if (w.size() != 4) throw ConfigError("plan must carry four waypoints");
        for (std::size_t k = 0; k < 4; ++k) {
            plan.waypoints[k] = {burn_label_from_string(w[k].at("label").get<std::string>()),
                                 w[k].at("epoch_s").get<double>(), elements_from_json(w[k].at("elements"))};
        }
        plan.total_dv = j.at("total_dv_kms").get<double>();
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("bad plan document: {}", e.what()));
    }
}

}  // namespace orbcorr::planner
