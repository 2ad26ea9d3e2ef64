#pragma once

// Right-hand side of the projected primal-dual dynamics. Two routes compute
// the same vector field: per-bus agents that read only local state and
// neighbor messages, and the stacked compact form
//   x' = -x + P(x) - A P(x) - b - C'(y + rho) - E' z+
//   y' = C P(x) - D,   z' = z+ - z,   rho' = -rho + C P(x) - D
// with z+ = max(E P(x) - F + z, 0).

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mtsed/problem.hpp"
#include "mtsed/projection.hpp"

namespace mtsed {

/// Full stacked state col(x, y, z, rho).
struct SystemState
{
    Layout layout;
    Eigen::VectorXd data;

    SystemState() = default;
    explicit SystemState(const Layout& L) : layout(L), data(Eigen::VectorXd::Zero(L.total())) {}

    auto x() { return data.segment(0, layout.nx()); }
    auto y() { return data.segment(layout.nx(), layout.ny()); }
    auto z() { return data.segment(layout.nx() + layout.ny(), layout.nz()); }
    auto rho() { return data.segment(layout.nx() + layout.ny() + layout.nz(), layout.ny()); }
    auto x() const { return data.segment(0, layout.nx()); }
    auto y() const { return data.segment(layout.nx(), layout.ny()); }
    auto z() const { return data.segment(layout.nx() + layout.ny(), layout.nz()); }
    auto rho() const { return data.segment(layout.nx() + layout.ny() + layout.nz(), layout.ny()); }

    auto block(Layout::Block b) { return data.segment(layout.offset(b), layout.nt()); }
    auto block(Layout::Block b) const { return data.segment(layout.offset(b), layout.nt()); }
};

/// One bus's fourteen tau-vectors, viewed inside some larger buffer.
/// Field `b` occupies [data + b*stride, data + b*stride + tau).
template <typename T>
struct BasicAgentView
{
    T* data = nullptr;
    Eigen::Index stride = 0;
    Eigen::Index tau = 0;

    std::span<T> operator[](Layout::Block b) const
    {
        return {data + static_cast<Eigen::Index>(b) * stride, static_cast<std::size_t>(tau)};
    }
};

using AgentView = BasicAgentView<const double>;
using AgentMutView = BasicAgentView<double>;

inline AgentView agent_view(const SystemState& s, Eigen::Index bus)
{
    return {s.data.data() + bus * s.layout.tau, s.layout.nt(), s.layout.tau};
}

inline AgentMutView agent_view(SystemState& s, Eigen::Index bus)
{
    return {s.data.data() + bus * s.layout.tau, s.layout.nt(), s.layout.tau};
}

/// Owning single-bus state, for tests and standalone use.
struct AgentState
{
    Eigen::Index tau = 0;
    Eigen::VectorXd data;

    explicit AgentState(Eigen::Index tau_ = 0) : tau(tau_), data(Eigen::VectorXd::Zero(14 * tau_)) {}

    auto field(Layout::Block b) { return data.segment(static_cast<Eigen::Index>(b) * tau, tau); }
    auto field(Layout::Block b) const { return data.segment(static_cast<Eigen::Index>(b) * tau, tau); }
    AgentView view() const { return {data.data(), tau, tau}; }
    AgentMutView view() { return {data.data(), tau, tau}; }
};

/// What bus `sender` publishes to its neighbors each round. The voltage box
/// is exchanged once at handshake; the receiver projects v itself.
struct NeighborMessage
{
    int sender = -1;
    double v_min = 0.0, v_max = 0.0;
    std::span<const double> v, theta, lambda_p, lambda_q, rho_p, rho_q;
};

inline NeighborMessage publish(const AgentView& s, const BusProblem& bp)
{
    return {bp.index,   bp.v_min,           bp.v_max,           s[Layout::V],  s[Layout::TH],
            s[Layout::LP], s[Layout::LQ], s[Layout::RP], s[Layout::RQ]};
}

/// Projected and auxiliary quantities a bus derives from one snapshot.
struct ProjectedView
{
    Eigen::VectorXd pt_g, qt_g, pt_c, pt_d, vt;
    Eigen::VectorXd lt_p, lt_q;
    Eigen::VectorXd mt_M, mt_m, gt_M, gt_m;

    explicit ProjectedView(Eigen::Index tau = 0)
        : pt_g(tau), qt_g(tau), pt_c(tau), pt_d(tau), vt(tau), lt_p(tau), lt_q(tau), mt_M(tau), mt_m(tau),
          gt_M(tau), gt_m(tau)
    {}
};

namespace detail {

inline void check_inbox(const BusProblem& bp, std::span<const NeighborMessage> msgs, Eigen::Index tau)
{
    if (msgs.size() != bp.couplings.size())
        throw std::invalid_argument("bus " + std::to_string(bp.id) + ": expected " +
                                    std::to_string(bp.couplings.size()) + " neighbor messages, got " +
                                    std::to_string(msgs.size()));
    for (std::size_t m = 0; m < msgs.size(); ++m) {
        if (msgs[m].sender != bp.couplings[m].neighbor)
            throw std::invalid_argument("bus " + std::to_string(bp.id) + ": missing message from neighbor index " +
                                        std::to_string(bp.couplings[m].neighbor));
        require_dim(static_cast<Eigen::Index>(msgs[m].v.size()) == tau &&
                        static_cast<Eigen::Index>(msgs[m].lambda_q.size()) == tau,
                    "neighbor message has wrong length");
    }
}

} // namespace detail

/// Box projections of the primal states and the auxiliary balance, ramp and
/// energy quantities. `msgs` must follow the order of `bp.couplings`.
inline void projected_view(const AgentView& s, const BusProblem& bp, std::span<const NeighborMessage> msgs,
                           ProjectedView& out)
{
    const Eigen::Index tau = s.tau;
    require_dim(bp.d_p.size() == tau, "projected_view: state length does not match horizon");
    detail::check_inbox(bp, msgs, tau);
    const double To = bp.slot_hours;

    const auto pg = s[Layout::PG], qg = s[Layout::QG], pc = s[Layout::PC], pd = s[Layout::PD], v = s[Layout::V],
               th = s[Layout::TH];
    const auto muM = s[Layout::MUM], mum = s[Layout::MUm], gaM = s[Layout::GAM], gam = s[Layout::GAm];

    double prev = bp.p0;
    double cum = 0.0; // running To*(eta_c pc - pd/eta_d)
    for (Eigen::Index k = 0; k < tau; ++k) {
        const double ptg = clamp_scalar(pg[k], bp.p_min, bp.p_max);
        const double ptc = clamp_scalar(pc[k], 0.0, bp.pc_max);
        const double ptd = clamp_scalar(pd[k], 0.0, bp.pd_max);
        const double vtk = clamp_scalar(v[k], bp.v_min, bp.v_max);
        out.pt_g[k] = ptg;
        out.qt_g[k] = clamp_scalar(qg[k], bp.q_min, bp.q_max);
        out.pt_c[k] = ptc;
        out.pt_d[k] = ptd;
        out.vt[k] = vtk;

        double flow_p = bp.g_self * vtk - bp.bp_self * th[k];
        double flow_q = bp.b_self * vtk + bp.g_self * th[k];
        for (std::size_t m = 0; m < msgs.size(); ++m) {
            const auto& cpl = bp.couplings[m];
            const double vj = clamp_scalar(msgs[m].v[k], msgs[m].v_min, msgs[m].v_max);
            flow_p += cpl.g * vj - cpl.bp * msgs[m].theta[k];
            flow_q += cpl.b * vj + cpl.g * msgs[m].theta[k];
        }
        out.lt_p[k] = ptg - bp.d_p[k] - ptc + ptd - flow_p;
        out.lt_q[k] = out.qt_g[k] - bp.d_q[k] + flow_q;

        const double step = ptg - prev;
        prev = ptg;
        out.mt_M[k] = std::max(muM[k] + step - bp.ramp_up * To, 0.0);
        out.mt_m[k] = std::max(mum[k] + bp.ramp_down * To - step, 0.0);

        cum += To * (bp.eta_c * ptc - bp.eta_d_inv * ptd);
        out.gt_M[k] = std::max(gaM[k] + (bp.c0 - bp.c_max) + cum, 0.0);
        out.gt_m[k] = std::max(gam[k] + (bp.c_min - bp.c0) - cum, 0.0);
    }
}

inline ProjectedView projected_view(const AgentView& s, const BusProblem& bp, std::span<const NeighborMessage> msgs)
{
    ProjectedView out(s.tau);
    projected_view(s, bp, msgs, out);
    return out;
}

/// Time derivative of one bus's state, written into `out`.
inline void agent_rhs(const AgentView& s, const ProjectedView& pv, const BusProblem& bp,
                      std::span<const NeighborMessage> msgs, const AgentMutView& out)
{
    const Eigen::Index tau = s.tau;
    require_dim(out.tau == tau && pv.pt_g.size() == tau, "agent_rhs: dimension mismatch");
    detail::check_inbox(bp, msgs, tau);
    const double To = bp.slot_hours;

    const auto pg = s[Layout::PG], qg = s[Layout::QG], pc = s[Layout::PC], pd = s[Layout::PD], v = s[Layout::V];
    const auto lp = s[Layout::LP], lq = s[Layout::LQ], rp = s[Layout::RP], rq = s[Layout::RQ];
    const auto muM = s[Layout::MUM], mum = s[Layout::MUm], gaM = s[Layout::GAM], gam = s[Layout::GAm];

    const auto dpg = out[Layout::PG], dqg = out[Layout::QG], dpc = out[Layout::PC], dpd = out[Layout::PD],
               dv = out[Layout::V], dth = out[Layout::TH], dlp = out[Layout::LP], dlq = out[Layout::LQ],
               drp = out[Layout::RP], drq = out[Layout::RQ], dmuM = out[Layout::MUM], dmum = out[Layout::MUm],
               dgaM = out[Layout::GAM], dgam = out[Layout::GAm];

    // Hs (gt_M - gt_m), a reverse running sum.
    double tail = 0.0;
    for (Eigen::Index k = tau - 1; k >= 0; --k) {
        tail += pv.gt_M[k] - pv.gt_m[k];
        dpc[k] = tail; // stash, overwritten below
    }

    for (Eigen::Index k = 0; k < tau; ++k) {
        const double lam_p = lp[k] + rp[k];
        const double lam_q = lq[k] + rq[k];
        const double w_k = pv.mt_M[k] - pv.mt_m[k];
        const double w_next = k + 1 < tau ? pv.mt_M[k + 1] - pv.mt_m[k + 1] : 0.0;
        const double hs_gamma = dpc[k];

        dpg[k] = pv.pt_g[k] - pg[k] - bp.a_g * pv.pt_g[k] - bp.b_g - lam_p + (w_next - w_k);
        dqg[k] = pv.qt_g[k] - qg[k] - lam_q;
        dpc[k] = pv.pt_c[k] - pc[k] - bp.a_s + lam_p - bp.eta_c * To * hs_gamma;
        dpd[k] = pv.pt_d[k] - pd[k] - bp.a_s - lam_p + bp.eta_d_inv * To * hs_gamma;

        double sv = bp.g_self * lam_p - bp.b_self * lam_q;
        double sth = bp.bp_self * lam_p + bp.g_self * lam_q;
        for (std::size_t m = 0; m < msgs.size(); ++m) {
            const auto& cpl = bp.couplings[m];
            const double lpj = msgs[m].lambda_p[k] + msgs[m].rho_p[k];
            const double lqj = msgs[m].lambda_q[k] + msgs[m].rho_q[k];
            sv += cpl.g * lpj - cpl.b * lqj;
            sth += cpl.bp * lpj + cpl.g * lqj;
        }
        dv[k] = pv.vt[k] - v[k] + sv;
        dth[k] = -sth;

        dlp[k] = pv.lt_p[k];
        dlq[k] = pv.lt_q[k];
        drp[k] = -rp[k] + pv.lt_p[k];
        drq[k] = -rq[k] + pv.lt_q[k];
        dmuM[k] = pv.mt_M[k] - muM[k];
        dmum[k] = pv.mt_m[k] - mum[k];
        dgaM[k] = pv.gt_M[k] - gaM[k];
        dgam[k] = pv.gt_m[k] - gam[k];
    }
}

inline AgentState agent_rhs(const AgentView& s, const ProjectedView& pv, const BusProblem& bp,
                            std::span<const NeighborMessage> msgs)
{
    AgentState out(s.tau);
    agent_rhs(s, pv, bp, msgs, out.view());
    return out;
}

/// Projection of x onto Omega and the projected multipliers z+.
struct CompactProjection
{
    Eigen::VectorXd xt;
    Eigen::VectorXd zplus;
    Eigen::VectorXd balance; ///< C P(x) - D
};

inline CompactProjection compact_projection(const SystemState& zeta, const CompactProblem& cp)
{
    require_dim(zeta.layout.total() == cp.layout.total() && zeta.data.size() == cp.layout.total(),
                "compact_rhs: state dimension mismatch");
    CompactProjection out;
    out.xt = project_box(zeta.x(), cp.omega);
    out.zplus = (cp.E * out.xt - cp.F + zeta.z()).cwiseMax(0.0);
    out.balance = cp.C * out.xt - cp.D;
    return out;
}

inline SystemState compact_rhs(const SystemState& zeta, const CompactProblem& cp)
{
    const CompactProjection pr = compact_projection(zeta, cp);
    SystemState d(zeta.layout);
    const Eigen::VectorXd yr = zeta.y() + zeta.rho();
    d.x() = -zeta.x() + pr.xt - cp.A * pr.xt - cp.b - cp.C.transpose() * yr - cp.E.transpose() * pr.zplus;
    d.y() = pr.balance;
    d.z() = pr.zplus - zeta.z();
    d.rho() = -zeta.rho() + pr.balance;
    return d;
}

} // namespace mtsed
