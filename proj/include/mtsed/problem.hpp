#pragma once

// Multi-time-slot economic dispatch problem: per-bus local data in per-unit,
// horizon shift matrices, cost functions, and the stacked compact form
//   min 1/2 x'Ax + b'x  s.t.  Cx = D,  Ex <= F,  x in Omega
// with x = col(p_g, q_g, p_c, p_d, v, theta), each block bus-major.

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "mtsed/network.hpp"
#include "mtsed/projection.hpp"

namespace mtsed {

struct HorizonConfig
{
    int tau = 1;
    double slot_hours = 1.0;
};

struct HorizonMatrices
{
    Eigen::MatrixXd Hg;  ///< ones on the superdiagonal
    Eigen::MatrixXd Hs;  ///< upper triangular ones
    Eigen::VectorXd hg0; ///< first unit vector
};

inline HorizonMatrices horizon_matrices(int tau)
{
    if (tau < 1)
        throw std::invalid_argument("horizon_matrices: tau must be at least 1");
    HorizonMatrices h;
    h.Hg = Eigen::MatrixXd::Zero(tau, tau);
    for (int k = 0; k + 1 < tau; ++k)
        h.Hg(k, k + 1) = 1.0;
    h.Hs = Eigen::MatrixXd::Zero(tau, tau);
    for (int i = 0; i < tau; ++i)
        for (int j = i; j < tau; ++j)
            h.Hs(i, j) = 1.0;
    h.hg0 = Eigen::VectorXd::Unit(tau, 0);
    return h;
}

/// One bus's share of the problem, in per-unit power, per-unit-hours energy
/// and internal cost units. Absent devices follow the zero conventions:
/// singleton {0} boxes, zero ramps, zero efficiencies and energy bounds.
struct BusProblem
{
    int id = 0;
    int index = 0;
    bool has_generator = false;
    bool has_storage = false;

    double a_g = 0.0, b_g = 0.0; ///< gradient of the generator cost: a_g p + b_g
    double a_s = 0.0;            ///< storage cost slope
    double p_min = 0.0, p_max = 0.0;
    double q_min = 0.0, q_max = 0.0;
    double pc_max = 0.0, pd_max = 0.0;
    double v_min = 0.0, v_max = 0.0;
    double ramp_up = 0.0;   ///< per hour
    double ramp_down = 0.0; ///< per hour, signed lower bound (<= 0 for a real generator)
    double p0 = 0.0;
    double eta_c = 0.0, eta_d_inv = 0.0;
    double c_min = 0.0, c_max = 0.0, c0 = 0.0;
    double slot_hours = 1.0;

    Eigen::VectorXd d_p, d_q; ///< length tau

    double g_self = 0.0, b_self = 0.0, bp_self = 0.0;

    struct Coupling
    {
        int neighbor = 0; ///< bus index
        double g = 0.0, b = 0.0, bp = 0.0;
    };
    std::vector<Coupling> couplings; ///< graph neighbors only

    Box p_box(int tau) const { return Box::uniform(tau, p_min, p_max); }
    Box q_box(int tau) const { return Box::uniform(tau, q_min, q_max); }
    Box pc_box(int tau) const { return Box::uniform(tau, 0.0, pc_max); }
    Box pd_box(int tau) const { return Box::uniform(tau, 0.0, pd_max); }
    Box v_box(int tau) const { return Box::uniform(tau, v_min, v_max); }
};

/// Index arithmetic for stacked vectors. Each block holds n*tau entries,
/// bus-major: entry (bus i, slot k) sits at i*tau + k within its block.
struct Layout
{
    enum Block : int {
        PG = 0, QG, PC, PD, V, TH,  // x
        LP, LQ,                     // y
        MUM, MUm, GAM, GAm,         // z
        RP, RQ,                     // rho
        kBlocks
    };

    Eigen::Index n = 0;
    Eigen::Index tau = 0;

    Eigen::Index nt() const { return n * tau; }
    Eigen::Index nx() const { return 6 * nt(); }
    Eigen::Index ny() const { return 2 * nt(); }
    Eigen::Index nz() const { return 4 * nt(); }
    Eigen::Index total() const { return 14 * nt(); }

    Eigen::Index offset(Block b) const { return static_cast<Eigen::Index>(b) * nt(); }
    Eigen::Index at(Block b, Eigen::Index bus, Eigen::Index k) const { return offset(b) + bus * tau + k; }
    /// Position within the x, y, z or rho sub-vector.
    Eigen::Index local(Block b, Eigen::Index bus, Eigen::Index k) const
    {
        const int blk = static_cast<int>(b);
        const int first = blk < LP ? PG : blk < MUM ? LP : blk < RP ? MUM : RP;
        return (blk - first) * nt() + bus * tau + k;
    }
};

inline const char* block_name(Layout::Block b)
{
    static const char* names[] = {"p_g",  "q_g",  "p_c",     "p_d",     "v",       "theta",  "lambda_p",
                                  "lambda_q", "mu_M", "mu_m", "gamma_M", "gamma_m", "rho_p", "rho_q"};
    return names[static_cast<int>(b)];
}

struct MtsedProblem
{
    NetworkCase network;
    DlpfMatrices dlpf;
    HorizonConfig horizon;
    HorizonMatrices hm;
    std::vector<BusProblem> buses;
    double base_mva = 100.0;
    double cost_base = 1000.0;
    double cost_offset = 0.0; ///< sum of c_g and b_s over buses and slots, $/h

    Layout layout() const { return Layout{static_cast<Eigen::Index>(buses.size()), horizon.tau}; }
    int tau() const { return horizon.tau; }
    Eigen::Index num_buses() const { return static_cast<Eigen::Index>(buses.size()); }
};

inline MtsedProblem assemble_problem(const NetworkCase& c, const DlpfMatrices& dlpf, const HorizonConfig& hz)
{
    validate_case(c);
    if (hz.tau != c.horizon.tau)
        throw CaseError("horizon tau " + std::to_string(hz.tau) + " does not match case tau " +
                            std::to_string(c.horizon.tau),
                        "horizon.tau");
    if (!(hz.slot_hours > 0))
        throw CaseError("slot length must be positive", "horizon.slot_minutes");
    const auto n = static_cast<Eigen::Index>(c.num_buses());
    require_dim(dlpf.G.rows() == n && dlpf.B.rows() == n && dlpf.Bp.rows() == n,
                "assemble_problem: DLPF matrices do not match bus count");

    MtsedProblem P;
    P.network = c;
    P.dlpf = dlpf;
    P.horizon = hz;
    P.hm = horizon_matrices(hz.tau);
    P.base_mva = c.base_mva;
    P.cost_base = c.cost_base;

    const double S = c.base_mva;
    const double K = c.cost_base;
    const int tau = hz.tau;
    P.buses.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& bd = c.buses[static_cast<std::size_t>(i)];
        BusProblem& b = P.buses[static_cast<std::size_t>(i)];
        b.id = bd.id;
        b.index = static_cast<int>(i);
        b.v_min = bd.v_min;
        b.v_max = bd.v_max;
        b.slot_hours = hz.slot_hours;
        b.d_p = Eigen::VectorXd::Zero(tau);
        b.d_q = Eigen::VectorXd::Zero(tau);
        if (const auto* d = c.demand_at(bd.id)) {
            for (int k = 0; k < tau; ++k) {
                b.d_p[k] = d->p_mw[static_cast<std::size_t>(k)] / S;
                b.d_q[k] = d->q_mvar[static_cast<std::size_t>(k)] / S;
            }
        }
        if (const auto* g = c.generator_at(bd.id)) {
            b.has_generator = true;
            b.a_g = g->a * S * S / K;
            b.b_g = g->b * S / K;
            b.p_min = g->p_min / S;
            b.p_max = g->p_max / S;
            b.q_min = g->q_min / S;
            b.q_max = g->q_max / S;
            b.ramp_up = g->ramp_up / S;
            b.ramp_down = -g->ramp_down / S;
            b.p0 = g->p0 / S;
            P.cost_offset += tau * g->c;
        }
        if (const auto* s = c.storage_at(bd.id)) {
            b.has_storage = true;
            b.a_s = s->a * S / K;
            b.pc_max = s->pc_max / S;
            b.pd_max = s->pd_max / S;
            b.eta_c = s->eta_c;
            b.eta_d_inv = 1.0 / s->eta_d;
            b.c_min = s->c_min / S;
            b.c_max = s->c_max / S;
            b.c0 = s->c0 / S;
            P.cost_offset += tau * s->b;
        }
        b.g_self = dlpf.G(i, i);
        b.b_self = dlpf.B(i, i);
        b.bp_self = dlpf.Bp(i, i);
        for (int nb : neighbors(c, bd.id)) {
            const auto j = static_cast<Eigen::Index>(c.index_of(nb));
            b.couplings.push_back({static_cast<int>(j), dlpf.G(i, j), dlpf.B(i, j), dlpf.Bp(i, j)});
        }
    }
    return P;
}

/// Convenience: DLPF + assembly with the case's own horizon.
inline MtsedProblem make_problem(const NetworkCase& c)
{
    return assemble_problem(c, build_dlpf(c), HorizonConfig{c.horizon.tau, c.horizon.slot_hours()});
}

/// $/h for output p in MW.
inline double gen_cost(const GeneratorParams& g, double p_mw) { return 0.5 * g.a * p_mw * p_mw + g.b * p_mw + g.c; }

inline double storage_cost(const StorageParams& s, double pc_mw, double pd_mw)
{
    if (pc_mw < 0 || pd_mw < 0)
        throw std::invalid_argument("storage_cost: charging and discharging powers must be non-negative");
    return s.a * (pc_mw + pd_mw) + s.b;
}

/// Total cost in $/h summed over buses and slots, for x in compact ordering (p.u.).
inline double total_cost(const MtsedProblem& P, const Eigen::Ref<const Eigen::VectorXd>& x)
{
    const Layout L = P.layout();
    require_dim(x.size() == L.nx(), "total_cost: solution has wrong dimension");
    const double S = P.base_mva;
    double cost = 0.0;
    for (const auto& b : P.buses) {
        const auto* g = P.network.generator_at(b.id);
        const auto* s = P.network.storage_at(b.id);
        for (Eigen::Index k = 0; k < L.tau; ++k) {
            if (g)
                cost += gen_cost(*g, S * x[L.at(Layout::PG, b.index, k)]);
            if (s)
                cost += s->a * S * (x[L.at(Layout::PC, b.index, k)] + x[L.at(Layout::PD, b.index, k)]) + s->b;
        }
    }
    return cost;
}

using SparseMatrix = Eigen::SparseMatrix<double>;

struct CompactProblem
{
    Layout layout;
    SparseMatrix A; ///< 6nt x 6nt, only the p_g block is nonzero
    Eigen::VectorXd b;
    SparseMatrix C; ///< 2nt x 6nt
    Eigen::VectorXd D;
    SparseMatrix E; ///< 4nt x 6nt: ramp-up, ramp-down, energy-upper, energy-lower
    Eigen::VectorXd F;
    Box omega;          ///< theta block unbounded
    double cost_scale;  ///< $/h per internal cost unit
    double cost_offset; ///< $/h

    /// Objective in internal units, excluding the constant offset.
    double objective(const Eigen::Ref<const Eigen::VectorXd>& x) const { return 0.5 * x.dot(A * x) + b.dot(x); }
    /// Objective in $/h including constants.
    double cost(const Eigen::Ref<const Eigen::VectorXd>& x) const { return cost_scale * objective(x) + cost_offset; }
};

inline CompactProblem compact_matrices(const MtsedProblem& P)
{
    using T = Eigen::Triplet<double>;
    const Layout L = P.layout();
    const Eigen::Index n = L.n, tau = L.tau, nt = L.nt();
    const double To = P.horizon.slot_hours;
    const double inf = std::numeric_limits<double>::infinity();

    CompactProblem cp;
    cp.layout = L;
    cp.cost_scale = P.cost_base;
    cp.cost_offset = P.cost_offset;
    cp.b = Eigen::VectorXd::Zero(L.nx());
    cp.D = Eigen::VectorXd::Zero(L.ny());
    cp.F = Eigen::VectorXd::Zero(L.nz());
    Eigen::VectorXd lo(L.nx()), hi(L.nx());

    auto xi = [&](Layout::Block blk, Eigen::Index i, Eigen::Index k) { return L.local(blk, i, k); };

    std::vector<T> a, c, e;
    for (Eigen::Index i = 0; i < n; ++i) {
        const BusProblem& bp = P.buses[static_cast<std::size_t>(i)];
        for (Eigen::Index k = 0; k < tau; ++k) {
            const auto pg = xi(Layout::PG, i, k), qg = xi(Layout::QG, i, k), pc = xi(Layout::PC, i, k),
                       pd = xi(Layout::PD, i, k), v = xi(Layout::V, i, k), th = xi(Layout::TH, i, k);
            if (bp.a_g != 0.0)
                a.emplace_back(pg, pg, bp.a_g);
            cp.b[pg] = bp.b_g;
            cp.b[pc] = bp.a_s;
            cp.b[pd] = bp.a_s;
            lo[pg] = bp.p_min, hi[pg] = bp.p_max;
            lo[qg] = bp.q_min, hi[qg] = bp.q_max;
            lo[pc] = 0.0, hi[pc] = bp.pc_max;
            lo[pd] = 0.0, hi[pd] = bp.pd_max;
            lo[v] = bp.v_min, hi[v] = bp.v_max;
            lo[th] = -inf, hi[th] = inf;

            // Balance rows: [I, 0, -I, I, -G, B'] and [0, I, 0, 0, B, G].
            const Eigen::Index rp = i * tau + k, rq = nt + i * tau + k;
            c.emplace_back(rp, pg, 1.0);
            c.emplace_back(rp, pc, -1.0);
            c.emplace_back(rp, pd, 1.0);
            c.emplace_back(rq, qg, 1.0);
            for (Eigen::Index j = 0; j < n; ++j) {
                const double g = P.dlpf.G(i, j), bb = P.dlpf.B(i, j), bpr = P.dlpf.Bp(i, j);
                if (g != 0.0) {
                    c.emplace_back(rp, xi(Layout::V, j, k), -g);
                    c.emplace_back(rq, xi(Layout::TH, j, k), g);
                }
                if (bpr != 0.0)
                    c.emplace_back(rp, xi(Layout::TH, j, k), bpr);
                if (bb != 0.0)
                    c.emplace_back(rq, xi(Layout::V, j, k), bb);
            }
            cp.D[rp] = bp.d_p[k];
            cp.D[rq] = bp.d_q[k];

            // Ramp rows: (I - Hg')p_g, i.e. p[k] - p[k-1].
            const Eigen::Index ru = i * tau + k, rd = nt + ru, eu = 2 * nt + ru, el = 3 * nt + ru;
            e.emplace_back(ru, pg, 1.0);
            e.emplace_back(rd, pg, -1.0);
            if (k > 0) {
                e.emplace_back(ru, xi(Layout::PG, i, k - 1), -1.0);
                e.emplace_back(rd, xi(Layout::PG, i, k - 1), 1.0);
            }
            const double p0_term = k == 0 ? bp.p0 : 0.0;
            cp.F[ru] = p0_term + To * bp.ramp_up;
            cp.F[rd] = -p0_term - To * bp.ramp_down;

            // Energy rows: To (Gamma_c x Hs') p_c - To (Gamma_d^-1 x Hs') p_d, a running sum.
            for (Eigen::Index l = 0; l <= k; ++l) {
                if (bp.eta_c != 0.0) {
                    e.emplace_back(eu, xi(Layout::PC, i, l), To * bp.eta_c);
                    e.emplace_back(el, xi(Layout::PC, i, l), -To * bp.eta_c);
                }
                if (bp.eta_d_inv != 0.0) {
                    e.emplace_back(eu, xi(Layout::PD, i, l), -To * bp.eta_d_inv);
                    e.emplace_back(el, xi(Layout::PD, i, l), To * bp.eta_d_inv);
                }
            }
            cp.F[eu] = bp.c_max - bp.c0;
            cp.F[el] = bp.c0 - bp.c_min;
        }
    }
    cp.A.resize(L.nx(), L.nx());
    cp.A.setFromTriplets(a.begin(), a.end());
    cp.C.resize(L.ny(), L.nx());
    cp.C.setFromTriplets(c.begin(), c.end());
    cp.E.resize(L.nz(), L.nx());
    cp.E.setFromTriplets(e.begin(), e.end());
    cp.omega = Box(lo, hi);
    return cp;
}

namespace detail {

inline void write_mm_sparse(std::ostream& os, const char* name, const SparseMatrix& M)
{
    os << "%%MatrixMarket matrix coordinate real general\n% " << name << "\n";
    os << M.rows() << ' ' << M.cols() << ' ' << M.nonZeros() << '\n';
    for (int col = 0; col < M.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(M, col); it; ++it)
            os << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
}

inline void write_mm_dense(std::ostream& os, const char* name, const Eigen::VectorXd& v)
{
    os << "%%MatrixMarket matrix array real general\n% " << name << "\n";
    os << v.size() << " 1\n";
    for (Eigen::Index k = 0; k < v.size(); ++k)
        os << v[k] << '\n';
}

} // namespace detail

/// Debug dump: each matrix and vector as a Matrix Market section.
inline void write_matrix_market(std::ostream& os, const CompactProblem& cp)
{
    const auto old = os.precision(17);
    detail::write_mm_sparse(os, "A", cp.A);
    detail::write_mm_dense(os, "b", cp.b);
    detail::write_mm_sparse(os, "C", cp.C);
    detail::write_mm_dense(os, "D", cp.D);
    detail::write_mm_sparse(os, "E", cp.E);
    detail::write_mm_dense(os, "F", cp.F);
    detail::write_mm_dense(os, "omega_lo", cp.omega.lo);
    detail::write_mm_dense(os, "omega_hi", cp.omega.hi);
    os.precision(old);
}

} // namespace mtsed
