#include "orbcorr/sim/shooting.hpp"

#include "orbcorr/errors.hpp"
#include "orbcorr/estimator/kalman.hpp"

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace orbcorr::sim {

using Vec4 = Eigen::Vector4d;

namespace {

Vec4 pack(const Vec3& dv, double shift) { return {dv.x(), dv.y(), dv.z(), shift}; }

}  // namespace

Vec3 compensated_command(const Vec3& planned, const Eigen::Vector2d& bias) {
    Vec3 cmd = planned;
    for (int k = 0; k < 100; ++k) {
        const Vec3 next = est::pointing_rotation(cmd, bias).transpose() * planned;
        const bool done = (next - cmd).norm() <= 1e-15 * planned.norm();
        cmd = next;
        if (done) break;
    }
    return cmd;
}

Vec6 shooting_residual(const ShootingProblem& pb, const Vec3& dv, double shift,
                       const ShootingOptions& opts, const PhysicalConstants& c) {
    const double t_burn = pb.burn_epoch + shift;
    astro::Propagator prop(pb.x_now, pb.t_now, pb.disturbances.deterministic(), opts.dt, 0, c);
    prop.advance_to(t_burn);
    const Vec3 cmd = pb.planned_dv + dv;
    prop.apply(cmd, est::pointing_rotation(cmd, pb.pointing_bias));
    prop.advance_to(pb.arrival_epoch);
    const Vec6 err = est::nonsingular_difference(prop.state(), pb.waypoint);
    return err.cwiseQuotient(opts.scales);
}

ShootingResult shooting_correction(const ShootingProblem& pb, const ShootingOptions& opts,
                                   const PhysicalConstants& c,
                                   const std::optional<ShootingResult>& warm) {
    if (!(pb.arrival_epoch > pb.burn_epoch)) {
        throw DomainError(fmt::format("arrival epoch {} s must follow the burn epoch {} s",
                                      pb.arrival_epoch, pb.burn_epoch));
    }
    const double lo = std::max(pb.min_shift, pb.t_now - pb.burn_epoch);
    const double hi = std::min(pb.max_shift, 0.5 * (pb.arrival_epoch - pb.burn_epoch));
    if (!(lo <= hi)) {
        throw DomainError(fmt::format("empty epoch-shift interval [{}, {}] s", lo, hi));
    }

    auto residual = [&](const Vec4& z) { return shooting_residual(pb, z.head<3>(), z[3], opts, c); };
    auto clamp = [&](Vec4 z) {
        z[3] = std::clamp(z[3], lo, hi);
        return z;
    };
    auto jacobian = [&](const Vec4& z) {
        ShootingJacobian J;
        const double steps[4] = {opts.fd_dv, opts.fd_dv, opts.fd_dv, opts.fd_epoch};
        for (int k = 0; k < 4; ++k) {
            Vec4 up = z, dn = z;
            up[k] += steps[k];
            dn[k] -= steps[k];
            // one-sided at a shift bound
            double span = 2.0 * steps[k];
            if (k == 3 && up[3] > hi) {
                up[3] = z[3];
                span = steps[k];
            } else if (k == 3 && dn[3] < lo) {
                dn[3] = z[3];
                span = steps[k];
            }
            J.col(k) = (residual(up) - residual(dn)) / span;
        }
        return J;
    };

    ShootingResult out;
    Vec4 z = warm ? clamp(pack(warm->dv, warm->epoch_shift)) : Vec4::Zero();
    Vec6 r = residual(z);
    double cost = r.squaredNorm();
    if (!warm) {
        // command pre-rotated against the bias; long coasts make the plain plan a poor start
        const Vec4 zc = pack(compensated_command(pb.planned_dv, pb.pointing_bias) - pb.planned_dv, 0.0);
        try {
            const Vec6 rc = residual(zc);
            if (rc.allFinite() && rc.squaredNorm() < cost) {
                z = zc;
                r = rc;
                cost = rc.squaredNorm();
            }
        } catch (const Error&) {
        }
    }
    ShootingJacobian J = warm && !warm->jacobian.isZero() ? warm->jacobian : jacobian(z);
    bool fresh = !(warm && !warm->jacobian.isZero());
    double lambda = 1e-3;

    for (int it = 1; it <= opts.max_iterations; ++it) {
        out.iterations = it;
        if (std::sqrt(cost) < opts.tolerance) {
            out.converged = true;
            break;
        }
        const Eigen::Matrix4d JtJ = J.transpose() * J;
        const Vec4 g = J.transpose() * r;
        Eigen::Matrix4d D = JtJ.diagonal().asDiagonal();
        D.diagonal().array() += 1e-12 * (JtJ.diagonal().maxCoeff() + 1.0);
        // the shift is held when it sits on a bound and the step pushes outward
        auto solve = [&](double lam) {
            const Eigen::Matrix4d A = JtJ + lam * D;
            Vec4 step = -A.ldlt().solve(g);
            if ((z[3] <= lo && step[3] < 0.0) || (z[3] >= hi && step[3] > 0.0)) {
                step.setZero();
                step.head<3>() = -A.topLeftCorner<3, 3>().ldlt().solve(g.head<3>());
            }
            return step;
        };
        if (fresh) {
            // linear model predicts no meaningful decrease: least-squares stationary point
            const Vec4 s = solve(0.0);
            const double predicted = cost - (r + J * s).squaredNorm();
            if (predicted < opts.step_tolerance * cost) {
                out.converged = true;
                break;
            }
        }

        bool accepted = false;
        for (int tries = 0; tries < 8 && !accepted; ++tries) {
            const Vec4 step = solve(lambda);
            const Vec4 zn = clamp(z + step);
            Vec6 rn;
            try {
                rn = residual(zn);
            } catch (const Error&) {
                // trial step left the regime (e.g. perigee into the surface); shrink it
                lambda *= 10.0;
                continue;
            }
            const double cn = rn.allFinite() ? rn.squaredNorm() : std::numeric_limits<double>::infinity();
            if (cn < cost) {
                z = zn;
                r = rn;
                cost = cn;
                lambda = std::max(lambda * 0.1, 1e-9);
                accepted = true;
            } else {
                lambda *= 10.0;
            }
        }
        if (!accepted && fresh) {
            out.converged = true;  // no descent left: stationary point
            break;
        }
        J = jacobian(z);
        fresh = true;
    }
    if (!out.converged && std::sqrt(cost) < opts.tolerance) out.converged = true;
    out.dv = z.head<3>();
    out.epoch_shift = z[3];
    out.residual = std::sqrt(cost);
    out.jacobian = J;
    return out;
}

}  // namespace orbcorr::sim
