#pragma once

// Certification tools that do not trust the dynamics: direct constraint
// checks, KKT residuals, the Lyapunov function of the convergence proof,
// a Slater margin screen and an interior-point reference solver.

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "mtsed/dynamics.hpp"
#include "mtsed/problem.hpp"
#include "mtsed/projection.hpp"
#include "mtsed/qp.hpp"

namespace mtsed {

namespace detail {

inline double max_abs(const Eigen::Ref<const Eigen::VectorXd>& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

inline double max_pos(const Eigen::Ref<const Eigen::VectorXd>& v)
{
    return v.size() ? std::max(v.maxCoeff(), 0.0) : 0.0;
}

} // namespace detail

struct KktReport
{
    // Raw residuals, problem units.
    double eq_residual = 0.0;
    double ineq_violation = 0.0;
    double box_violation = 0.0;
    double dual_negativity = 0.0;
    double complementarity = 0.0;
    double stationarity = 0.0;
    double simultaneous_charge_discharge = 0.0; ///< diagnostic only

    // Normalized by (1 + |D|), (1 + |F|), (1 + |g|).
    double eq_scaled = 0.0;
    double ineq_scaled = 0.0;
    double complementarity_scaled = 0.0;
    double stationarity_scaled = 0.0;

    double tol = 0.0;
    bool certified = false;

    double worst_scaled() const
    {
        return std::max({eq_scaled, ineq_scaled, complementarity_scaled, stationarity_scaled, box_violation,
                         dual_negativity});
    }
};

/// KKT residuals of (xt, y, z) for the compact QP. Stationarity uses the
/// variational form P(xt - g) = xt with g = A xt + b + C'y + E'z.
inline KktReport check_kkt(const Eigen::Ref<const Eigen::VectorXd>& xt, const Eigen::Ref<const Eigen::VectorXd>& y,
                           const Eigen::Ref<const Eigen::VectorXd>& z, const CompactProblem& cp, double tol)
{
    const Layout& L = cp.layout;
    require_dim(xt.size() == L.nx() && y.size() == L.ny() && z.size() == L.nz(), "check_kkt: dimension mismatch");
    KktReport r;
    r.tol = tol;

    const Eigen::VectorXd eq = cp.C * xt - cp.D;
    const Eigen::VectorXd slack = cp.E * xt - cp.F;
    r.eq_residual = detail::max_abs(eq);
    r.ineq_violation = detail::max_pos(slack);
    r.box_violation =
        std::max(detail::max_pos(cp.omega.lo - xt), detail::max_pos(xt - cp.omega.hi));
    r.dual_negativity = detail::max_pos(-z);
    r.complementarity = detail::max_abs(z.cwiseProduct(slack));

    const Eigen::VectorXd g = cp.A * xt + cp.b + cp.C.transpose() * y + cp.E.transpose() * z;
    const Eigen::VectorXd moved = project_box(xt - g, cp.omega);
    r.stationarity = detail::max_abs(moved - xt);

    for (Eigen::Index i = 0; i < L.n; ++i)
        for (Eigen::Index k = 0; k < L.tau; ++k) {
            const double pc = xt[L.local(Layout::PC, i, k)], pd = xt[L.local(Layout::PD, i, k)];
            r.simultaneous_charge_discharge = std::max(r.simultaneous_charge_discharge, pc * pd);
        }

    r.eq_scaled = r.eq_residual / (1.0 + detail::max_abs(cp.D));
    r.ineq_scaled = r.ineq_violation / (1.0 + detail::max_abs(cp.F));
    r.complementarity_scaled = r.complementarity / (1.0 + detail::max_abs(cp.F));
    r.stationarity_scaled = r.stationarity / (1.0 + detail::max_abs(g));
    r.certified = r.worst_scaled() <= tol;
    return r;
}

/// Worst violation of each constraint family, evaluated bus by bus from the
/// problem data rather than from the compact matrices. Powers in p.u.,
/// energies in p.u.-hours.
struct FeasibilityReport
{
    double balance_p = 0.0;
    double balance_q = 0.0;
    double gen_box = 0.0;
    double storage_box = 0.0;
    double voltage_box = 0.0;
    double ramp = 0.0;
    double energy = 0.0;
    double base_mva = 100.0;

    double worst() const { return std::max({balance_p, balance_q, gen_box, storage_box, voltage_box, ramp, energy}); }
    bool feasible(double tol) const { return worst() <= tol; }
    double mw(double pu) const { return pu * base_mva; }
};

inline FeasibilityReport check_feasibility(const MtsedProblem& P, const Eigen::Ref<const Eigen::VectorXd>& x)
{
    const Layout L = P.layout();
    require_dim(x.size() == L.nx(), "check_feasibility: solution has wrong dimension");
    FeasibilityReport r;
    r.base_mva = P.base_mva;
    const double To = P.horizon.slot_hours;
    auto at = [&](Layout::Block b, Eigen::Index i, Eigen::Index k) { return x[L.local(b, i, k)]; };
    auto outside = [](double v, double lo, double hi) { return std::max({lo - v, v - hi, 0.0}); };

    for (const BusProblem& bp : P.buses) {
        const Eigen::Index i = bp.index;
        double prev = bp.p0;
        double energy = bp.c0;
        for (Eigen::Index k = 0; k < L.tau; ++k) {
            const double pg = at(Layout::PG, i, k), qg = at(Layout::QG, i, k), pc = at(Layout::PC, i, k),
                         pd = at(Layout::PD, i, k), v = at(Layout::V, i, k);
            // DLPF injections: P = G v - B' theta, Q = -(B v + G theta).
            double inj_p = 0.0, inj_q = 0.0;
            for (Eigen::Index j = 0; j < L.n; ++j) {
                const double vj = at(Layout::V, j, k), thj = at(Layout::TH, j, k);
                inj_p += P.dlpf.G(i, j) * vj - P.dlpf.Bp(i, j) * thj;
                inj_q -= P.dlpf.B(i, j) * vj + P.dlpf.G(i, j) * thj;
            }
            r.balance_p = std::max(r.balance_p, std::abs(pg - pc + pd - bp.d_p[k] - inj_p));
            r.balance_q = std::max(r.balance_q, std::abs(qg - bp.d_q[k] - inj_q));

            r.gen_box = std::max({r.gen_box, outside(pg, bp.p_min, bp.p_max), outside(qg, bp.q_min, bp.q_max)});
            r.storage_box = std::max({r.storage_box, outside(pc, 0.0, bp.pc_max), outside(pd, 0.0, bp.pd_max)});
            r.voltage_box = std::max(r.voltage_box, outside(v, bp.v_min, bp.v_max));

            r.ramp = std::max(r.ramp, outside(pg - prev, bp.ramp_down * To, bp.ramp_up * To));
            prev = pg;

            energy += To * (bp.eta_c * pc - bp.eta_d_inv * pd);
            r.energy = std::max(r.energy, outside(energy, bp.c_min, bp.c_max));
        }
    }
    return r;
}

/// V = W(x) + 1/2(|y - y*|^2 + |z - z*|^2 + |rho - rho*|^2) with
/// W(x) = 1/2|x - xt*|^2 - 1/2|x - P(x)|^2, plus the bounds
/// 1/2|P(x) - xt*|^2 <= W <= 1/2|x - xt*|^2.
struct LyapunovValue
{
    double V = 0.0;
    double W = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    bool sandwich_ok = true;
};

inline LyapunovValue lyapunov(const SystemState& zeta, const SystemState& star, const CompactProblem& cp)
{
    require_dim(zeta.data.size() == cp.layout.total() && star.data.size() == cp.layout.total(),
                "lyapunov: state dimension mismatch");
    const Eigen::VectorXd xt = project_box(zeta.x(), cp.omega);
    const Eigen::VectorXd xt_star = project_box(star.x(), cp.omega);
    LyapunovValue out;
    out.upper = 0.5 * (zeta.x() - xt_star).squaredNorm();
    out.W = out.upper - 0.5 * (zeta.x() - xt).squaredNorm();
    out.lower = 0.5 * (xt - xt_star).squaredNorm();
    out.V = out.W + 0.5 * ((zeta.y() - star.y()).squaredNorm() + (zeta.z() - star.z()).squaredNorm() +
                           (zeta.rho() - star.rho()).squaredNorm());
    const double slack = 1e-12 * (1.0 + out.upper);
    out.sandwich_ok = out.lower <= out.W + slack && out.W <= out.upper + slack;
    return out;
}

struct OracleResult
{
    qp::Status status = qp::Status::IterationLimit;
    Eigen::VectorXd x, y, z;
    KktReport kkt;
    double cost = 0.0; ///< $/h including constants
    int iterations = 0;
    double infeasibility = 0.0;

    bool solved() const { return status == qp::Status::Solved; }
};

/// Centralized reference: interior-point solve of the compact QP. The
/// returned multipliers follow the sign convention of check_kkt.
inline OracleResult oracle(const CompactProblem& cp, double tol = 1e-6, const qp::Settings& settings = {})
{
    qp::Data d;
    d.P = Eigen::MatrixXd(cp.A);
    d.q = cp.b;
    d.A = Eigen::MatrixXd(cp.C);
    d.b = cp.D;
    d.G = Eigen::MatrixXd(cp.E);
    d.h = cp.F;
    d.lo = cp.omega.lo;
    d.hi = cp.omega.hi;
    const qp::Result r = qp::solve(d, settings);

    OracleResult out;
    out.status = r.status;
    out.iterations = r.iterations;
    out.infeasibility = r.infeasibility;
    out.x = r.x;
    out.y = r.y;
    out.z = r.z;
    if (r.status == qp::Status::Solved) {
        out.kkt = check_kkt(out.x, out.y, out.z, cp, tol);
        out.cost = cp.cost(out.x);
    }
    return out;
}

/// The equilibrium of the dynamics that corresponds to a KKT point:
/// x* = xt* - (A xt* + b + C'y* + E'z*), rho* = 0.
inline SystemState equilibrium_state(const CompactProblem& cp, const Eigen::Ref<const Eigen::VectorXd>& xt,
                                     const Eigen::Ref<const Eigen::VectorXd>& y,
                                     const Eigen::Ref<const Eigen::VectorXd>& z)
{
    require_dim(xt.size() == cp.layout.nx() && y.size() == cp.layout.ny() && z.size() == cp.layout.nz(),
                "equilibrium_state: dimension mismatch");
    SystemState s(cp.layout);
    s.x() = xt - (cp.A * xt + cp.b + cp.C.transpose() * y + cp.E.transpose() * z);
    s.y() = y;
    s.z() = z;
    return s;
}

inline SystemState equilibrium_state(const CompactProblem& cp, const OracleResult& o)
{
    return equilibrium_state(cp, o.x, o.y, o.z);
}

struct SlaterReport
{
    bool feasible = false; ///< margin program has a feasible point
    bool satisfied = false;
    double margin = 0.0;
    Eigen::VectorXd point; ///< maximizing candidate, compact x ordering
};

/// Largest uniform margin by which the device, voltage, ramp and energy
/// limits can all hold strictly while the balances hold exactly. Limits of
/// absent devices are the zero conventions, not real constraints, and are
/// left without margin.
inline SlaterReport slater_screen(const MtsedProblem& P, double threshold = 1e-7)
{
    const CompactProblem cp = compact_matrices(P);
    const Layout& L = cp.layout;
    const Eigen::Index nx = L.nx(), nv = nx + 1;
    const double inf = std::numeric_limits<double>::infinity();

    qp::Data d;
    d.P = Eigen::MatrixXd::Zero(nv, nv);
    d.q = Eigen::VectorXd::Zero(nv);
    d.q[nx] = -1.0;
    d.A = Eigen::MatrixXd::Zero(L.ny(), nv);
    d.A.leftCols(nx) = Eigen::MatrixXd(cp.C);
    d.b = cp.D;
    d.lo = Eigen::VectorXd::Constant(nv, -inf);
    d.hi = Eigen::VectorXd::Constant(nv, inf);
    d.lo[nx] = 0.0;

    std::vector<Eigen::VectorXd> rows;
    std::vector<double> rhs;
    auto add_row = [&](const Eigen::VectorXd& a, double h) {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
        row.head(nx) = a;
        row[nx] = 1.0;
        rows.push_back(std::move(row));
        rhs.push_back(h);
    };
    auto box_with_margin = [&](Eigen::Index col) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(nx);
        e[col] = 1.0;
        add_row(e, cp.omega.hi[col]);
        add_row(-e, -cp.omega.lo[col]);
    };

    const Eigen::MatrixXd E = Eigen::MatrixXd(cp.E);
    const Eigen::Index nt = L.nt();
    for (const BusProblem& bp : P.buses) {
        for (Eigen::Index k = 0; k < L.tau; ++k) {
            const Eigen::Index i = bp.index;
            auto fix = [&](Layout::Block b) {
                const auto c = L.local(b, i, k);
                d.lo[c] = cp.omega.lo[c];
                d.hi[c] = cp.omega.hi[c];
            };
            if (bp.has_generator) {
                box_with_margin(L.local(Layout::PG, i, k));
                box_with_margin(L.local(Layout::QG, i, k));
                const Eigen::Index r = i * L.tau + k;
                add_row(E.row(r).transpose(), cp.F[r]);
                add_row(E.row(nt + r).transpose(), cp.F[nt + r]);
            } else {
                fix(Layout::PG);
                fix(Layout::QG);
            }
            if (bp.has_storage) {
                box_with_margin(L.local(Layout::PC, i, k));
                box_with_margin(L.local(Layout::PD, i, k));
                const Eigen::Index r = i * L.tau + k;
                add_row(E.row(2 * nt + r).transpose(), cp.F[2 * nt + r]);
                add_row(E.row(3 * nt + r).transpose(), cp.F[3 * nt + r]);
            } else {
                fix(Layout::PC);
                fix(Layout::PD);
            }
            box_with_margin(L.local(Layout::V, i, k));
        }
    }
    d.G.resize(static_cast<Eigen::Index>(rows.size()), nv);
    d.h.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        d.G.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
        d.h[static_cast<Eigen::Index>(r)] = rhs[r];
    }

    qp::Settings st;
    st.tol = 1e-10;
    const qp::Result res = qp::solve(d, st);
    SlaterReport out;
    if (res.status == qp::Status::Infeasible)
        return out;
    if (res.status != qp::Status::Solved)
        throw std::runtime_error("slater_screen: margin program did not converge in " +
                                 std::to_string(res.iterations) + " iterations");
    out.feasible = true;
    out.margin = std::max(res.x[nx], 0.0);
    out.satisfied = out.margin > threshold;
    out.point = res.x.head(nx);
    return out;
}

} // namespace mtsed
