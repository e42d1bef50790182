#pragma once

#include "orbcorr/astro/dynamics.hpp"

#include <json.hpp>

#include <array>
#include <string_view>
#include <vector>

namespace orbcorr::planner {

using astro::LvlhImpulse;
using astro::OrbitalElements;
using astro::PhysicalConstants;
using astro::Vec3;

/// Transfer orbit chosen so that J2 drift closes the RAAN and phase errors.
struct TransferDesign {
    double i_t = 0.0;         // rad
    double a_t = 0.0;         // km
    int k = 1;                // revolutions spent in the transfer orbit
    double tau = 0.0;         // s
    double delta_u_j2 = 0.0;  // rad, phase correction absorbed by the transfer orbit
};

enum class BurnLabel { RaiseToTransfer, InclineToTransfer, RaiseToFinal, InclineToFinal };

std::string_view to_string(BurnLabel label);
BurnLabel burn_label_from_string(std::string_view s);

struct PlannedBurn {
    double epoch = 0.0;  // s
    Vec3 dv = Vec3::Zero();
    BurnLabel label = BurnLabel::RaiseToTransfer;

    LvlhImpulse impulse() const { return {dv, epoch}; }
};

struct Waypoint {
    BurnLabel label = BurnLabel::RaiseToTransfer;
    double epoch = 0.0;
    OrbitalElements x;
};

/// Output of the J2-optimized sequence: burns in epoch order, the expected elements after
/// each of the four groups, and the summed burn magnitudes.
struct ManeuverPlan {
    std::vector<PlannedBurn> burns;
    std::array<Waypoint, 4> waypoints;
    double total_dv = 0.0;  // km/s
    TransferDesign design;
    OrbitalElements x0;
    OrbitalElements xf;

    std::vector<LvlhImpulse> impulses() const;
    /// Sum of |dv| over the burns carrying `label`.
    double group_dv(BurnLabel label) const;
};

struct PlannerOptions {
    double dt = 60.0;                // integration step of the internal ideal-world runs, s
    int max_iterations = 40;
    int revolution_window = 2;       // revolution counts tried on each side of the nominal k
    double phase_tolerance = 1e-7;   // rad
    double raan_tolerance = 1e-8;    // rad
    double sma_tolerance = 1e-3;     // km
};

/// Transfer-orbit nodal rate that makes RAAN converge: raan_dot + wrap(raan_f - raan_0) / tau.
double required_nodal_rate(double raan_0, double raan_f, double raan_dot, double tau);

/// Inclination whose J2 nodal rate equals `target_rate` at (a_t, e_t).
/// Throws InfeasibleError (with the largest achievable |rate|) if no inclination reaches it.
double transfer_inclination(double target_rate, double a_t, double e_t,
                            const PhysicalConstants& c = {});

/// First-order J2 phase variation of the transfer orbit:
/// -(3 Re^2 J2 / a_f^3)(sin^2 i_f - 1)(3 mu / (4 a_f^2 n_f) + n_f)(a_f - a_t) tau
/// - (3 Re^2 n_f J2 / (2 a_f^2)) sin(2 i_f)(i_f - i_t) tau.
double delta_u_j2(const TransferDesign& design, const OrbitalElements& x_f, double tau,
                  const PhysicalConstants& c = {});

/// a_f (1 + (wrap(u_f - u_0) + delta_u) / (2 pi k))^(2/3). Throws InfeasibleError when the
/// base is not positive and DomainError for k < 1.
double transfer_sma(double u_0, double u_f, int k, double a_f, double delta_u);

/// Hohmann pair (along-track only) from a_from to a_to starting at `epoch`;
/// the second impulse follows half a transfer period later. Empty when a_from == a_to.
std::vector<LvlhImpulse> burn_dv_sma(double a_from, double a_to, const OrbitalElements& at,
                                     double epoch, const PhysicalConstants& c = {});

/// Epoch of the next nodal crossing (u = 0 or pi) at or after `epoch` on the ideal J2 orbit.
double next_node_epoch(const OrbitalElements& x, double epoch, const PhysicalConstants& c = {});

/// Plane change from i_from to i_to executed at the next node after (x, epoch). The impulse
/// rotates the horizontal velocity, |dv| = 2 v sin(|di| / 2); its cross-track part carries
/// the change.
LvlhImpulse burn_dv_inc(double i_from, double i_to, const OrbitalElements& x, double epoch,
                        const PhysicalConstants& c = {});

/// Four-group J2-optimized sequence from x_0 to the target slot x_f (which itself drifts under
/// J2) over tau seconds.
ManeuverPlan plan_sequence(const OrbitalElements& x_0, const OrbitalElements& x_f, double tau,
                           const PhysicalConstants& c = {}, const PlannerOptions& opts = {});

/// Elements of the target slot after `t` seconds of J2 drift.
OrbitalElements target_at(const OrbitalElements& x_f, double t, const PhysicalConstants& c = {},
                          double dt = 10.0);

/// Plan document: burns (epoch_s, dv_kms, label), waypoints (degrees), total_dv_kms, design.
nlohmann::json to_json(const ManeuverPlan& plan);
ManeuverPlan plan_from_json(const nlohmann::json& j);

nlohmann::json elements_to_json(const OrbitalElements& x);
OrbitalElements elements_from_json(const nlohmann::json& j);

}  // namespace orbcorr::planner
