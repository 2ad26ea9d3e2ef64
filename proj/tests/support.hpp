#pragma once

// Helpers shared by the unit tests and the acceptance runner: bundled case
// loading, small hand-made cases, random instances built around a strictly
// feasible point, and an exhaustive active-set enumerator used as an
// independent reference for the interior-point oracle.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mtsed/mtsed.hpp"

namespace mtsed::testing {

inline NetworkCase bundled(const std::string& name)
{
    return load_case(std::filesystem::path(MTSED_CASE_DIR) / (name + ".json"));
}

inline NetworkCase one_bus_case() { return bundled("one_bus"); }
inline NetworkCase ieee14_case() { return bundled("ieee14_mtsed"); }

/// Two buses joined by one branch; generator at bus 1, storage and load at
/// bus 2. With p_min above the load the storage has to absorb the surplus.
inline NetworkCase gen_storage_pair(int tau, double load_mw, double p_min_mw, double slot_minutes = 10.0)
{
    NetworkCase c;
    c.name = "gen_storage_pair";
    c.horizon = {tau, slot_minutes};
    c.buses = {{1, 0.0, 0.0, 0.9, 1.1}, {2, 0.0, 0.0, 0.9, 1.1}};
    c.branches = {{1, 2, 0.01, 0.1, 0.0}};
    c.generators = {{1, 0.02, 10.0, 100.0, p_min_mw, 100.0, -30.0, 30.0, 200.0, 200.0, p_min_mw}};
    c.storages = {{2, 10.5, 120.0, 25.0, 25.0, 0.95, 0.9, 1.25, 25.0, 6.25}};
    c.demand = {{2, std::vector<double>(static_cast<std::size_t>(tau), load_mw),
                 std::vector<double>(static_cast<std::size_t>(tau), 2.0)}};
    return c;
}

/// Device placement for a random instance.
struct InstanceShape
{
    int n = 1;
    int tau = 1;
    std::vector<bool> gen;
    std::vector<bool> storage;
};

/// Shapes with at most ten two-sided constraint pairs, so that 3^m
/// enumeration stays cheap.
inline std::vector<InstanceShape> small_shapes()
{
    return {
        {1, 1, {true}, {true}},
        {2, 1, {true, false}, {false, true}},
        {3, 1, {true, false, false}, {false, true, false}},
        {1, 2, {true}, {false}},
        {2, 2, {true, false}, {false, false}},
    };
}

/// Random case whose limits are drawn around a strictly interior operating
/// point. Demand is whatever balances that point, so the instance is
/// feasible with a positive Slater margin; limits sit close enough to the
/// point that some of them bind at the optimum.
inline NetworkCase random_instance(std::mt19937_64& rng, const InstanceShape& sh)
{
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto u = [&](double a, double b) { return a + (b - a) * U(rng); };
    const int n = sh.n, tau = sh.tau;
    const auto T = static_cast<std::size_t>(tau);

    NetworkCase c;
    c.name = "random";
    c.base_mva = 100.0;
    c.cost_base = 1000.0;
    c.horizon = {tau, U(rng) < 0.5 ? 30.0 : 60.0};
    const double To = c.horizon.slot_hours();
    for (int i = 1; i <= n; ++i)
        c.buses.push_back({i, 0.0, u(0.0, 0.1), 0.9, 1.1});
    for (int i = 1; i < n; ++i)
        c.branches.push_back({i, i + 1, u(0.0, 0.05), u(0.05, 0.3), u(0.0, 0.03)});

    const std::size_t nn = static_cast<std::size_t>(n);
    std::vector<std::vector<double>> pg(nn, std::vector<double>(T, 0.0)), qg = pg, pc = pg, pd = pg, v = pg, th = pg;
    for (std::size_t i = 0; i < nn; ++i) {
        for (std::size_t k = 0; k < T; ++k) {
            v[i][k] = u(0.93, 1.07);
            th[i][k] = u(-0.1, 0.1);
        }
        if (sh.gen[i]) {
            GeneratorParams g;
            g.bus = static_cast<int>(i) + 1;
            g.a = u(0.005, 0.05);
            g.b = u(5.0, 20.0);
            g.c = u(100.0, 300.0);
            g.p_min = u(0.0, 30.0);
            g.p_max = g.p_min + u(40.0, 100.0);
            g.q_min = -u(10.0, 30.0);
            g.q_max = u(10.0, 30.0);
            g.p0 = g.p_min + u(0.2, 0.8) * (g.p_max - g.p_min);
            double prev = g.p0, up = 0.0, down = 0.0;
            for (std::size_t k = 0; k < T; ++k) {
                pg[i][k] = g.p_min + u(0.2, 0.8) * (g.p_max - g.p_min);
                qg[i][k] = g.q_min + u(0.2, 0.8) * (g.q_max - g.q_min);
                up = std::max(up, pg[i][k] - prev);
                down = std::max(down, prev - pg[i][k]);
                prev = pg[i][k];
            }
            g.ramp_up = (up + u(1.0, 15.0)) / To;
            g.ramp_down = (down + u(1.0, 15.0)) / To;
            c.generators.push_back(g);
        }
        if (sh.storage[i]) {
            StorageParams s;
            s.bus = static_cast<int>(i) + 1;
            s.a = u(2.0, 15.0);
            s.b = u(50.0, 150.0);
            s.pc_max = u(10.0, 30.0);
            s.pd_max = u(10.0, 30.0);
            s.eta_c = u(0.85, 1.0);
            s.eta_d = u(0.85, 1.0);
            s.c0 = u(5.0, 15.0);
            double e = s.c0, lo = s.c0, hi = s.c0;
            for (std::size_t k = 0; k < T; ++k) {
                pc[i][k] = u(0.2, 0.8) * s.pc_max;
                pd[i][k] = u(0.2, 0.8) * s.pd_max;
                e += To * (s.eta_c * pc[i][k] - pd[i][k] / s.eta_d);
                lo = std::min(lo, e);
                hi = std::max(hi, e);
            }
            s.c_min = std::max(0.0, lo - u(0.5, 3.0));
            s.c_max = hi + u(0.5, 3.0);
            c.storages.push_back(s);
        }
    }

    const DlpfMatrices M = build_dlpf(c);
    const double S = c.base_mva;
    for (std::size_t i = 0; i < nn; ++i) {
        DemandProfile d;
        d.bus = static_cast<int>(i) + 1;
        for (std::size_t k = 0; k < T; ++k) {
            double inj_p = 0.0, inj_q = 0.0;
            for (std::size_t j = 0; j < nn; ++j) {
                const auto I = static_cast<Eigen::Index>(i), J = static_cast<Eigen::Index>(j);
                inj_p += M.G(I, J) * v[j][k] - M.Bp(I, J) * th[j][k];
                inj_q -= M.B(I, J) * v[j][k] + M.G(I, J) * th[j][k];
            }
            d.p_mw.push_back(pg[i][k] - pc[i][k] + pd[i][k] - S * inj_p);
            d.q_mvar.push_back(qg[i][k] - S * inj_q);
        }
        c.demand.push_back(d);
    }
    validate_case(c);
    return c;
}

struct EnumerationResult
{
    bool found = false;
    double cost = 0.0; ///< $/h
    Eigen::VectorXd x;
    long patterns = 0;
    long valid = 0;
    int pairs = 0;
};

/// Exhaustive active-set search. Every two-sided constraint pair (box,
/// ramp up/down, energy upper/lower) is inactive, at its upper side or at
/// its lower side; each of the 3^m patterns gives an equality-constrained
/// QP whose KKT system is solved directly. A pattern counts when its
/// solution is feasible and its multipliers have the right sign. For a
/// convex QP every such point is optimal; the cheapest one is returned.
inline EnumerationResult enumerate_active_sets(const CompactProblem& cp, int max_pairs = 12)
{
    const Layout& L = cp.layout;
    const Eigen::Index nx = L.nx(), nt = L.nt();
    const Eigen::MatrixXd A = Eigen::MatrixXd(cp.A), C = Eigen::MatrixXd(cp.C), E = Eigen::MatrixXd(cp.E);

    // Fixed coordinates: singleton boxes, plus the angle of the first bus
    // when shifting all angles is an exact symmetry.
    Eigen::VectorXd x_fix = Eigen::VectorXd::Zero(nx);
    std::vector<bool> fixed(static_cast<std::size_t>(nx), false);
    for (Eigen::Index j = 0; j < nx; ++j)
        if (cp.omega.lo[j] == cp.omega.hi[j]) {
            fixed[static_cast<std::size_t>(j)] = true;
            x_fix[j] = cp.omega.lo[j];
        }
    {
        Eigen::VectorXd shift = Eigen::VectorXd::Zero(nx);
        for (Eigen::Index i = 0; i < L.n; ++i)
            for (Eigen::Index k = 0; k < L.tau; ++k)
                shift[L.local(Layout::TH, i, k)] = 1.0;
        if ((C * shift).cwiseAbs().maxCoeff() < 1e-12)
            for (Eigen::Index k = 0; k < L.tau; ++k)
                fixed[static_cast<std::size_t>(L.local(Layout::TH, 0, k))] = true;
    }
    std::vector<Eigen::Index> freev;
    for (Eigen::Index j = 0; j < nx; ++j)
        if (!fixed[static_cast<std::size_t>(j)])
            freev.push_back(j);
    const auto nf = static_cast<Eigen::Index>(freev.size());
    auto restrict_row = [&](const Eigen::RowVectorXd& r) {
        Eigen::RowVectorXd out(nf);
        for (Eigen::Index c = 0; c < nf; ++c)
            out[c] = r[freev[static_cast<std::size_t>(c)]];
        return out;
    };

    Eigen::MatrixXd Pf(nf, nf);
    Eigen::VectorXd qf(nf);
    const Eigen::VectorXd Ax = A * x_fix;
    for (Eigen::Index a = 0; a < nf; ++a) {
        qf[a] = cp.b[freev[static_cast<std::size_t>(a)]] + Ax[freev[static_cast<std::size_t>(a)]];
        for (Eigen::Index b = 0; b < nf; ++b)
            Pf(a, b) = A(freev[static_cast<std::size_t>(a)], freev[static_cast<std::size_t>(b)]);
    }

    std::vector<Eigen::RowVectorXd> eq_rows;
    std::vector<double> eq_rhs;
    const Eigen::VectorXd Dres = cp.D - C * x_fix;
    for (Eigen::Index r = 0; r < C.rows(); ++r) {
        const Eigen::RowVectorXd row = restrict_row(C.row(r));
        if (row.cwiseAbs().maxCoeff() > 0) {
            eq_rows.push_back(row);
            eq_rhs.push_back(Dres[r]);
        }
    }

    struct Pair
    {
        Eigen::RowVectorXd up;
        double h_up;
        Eigen::RowVectorXd dn;
        double h_dn;
    };
    std::vector<Pair> pairs;
    for (Eigen::Index c = 0; c < nf; ++c) {
        const auto j = freev[static_cast<std::size_t>(c)];
        if (std::isfinite(cp.omega.lo[j]) && std::isfinite(cp.omega.hi[j])) {
            Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(nf);
            e[c] = 1.0;
            pairs.push_back({e, cp.omega.hi[j], -e, -cp.omega.lo[j]});
        }
    }
    const Eigen::VectorXd Fres = cp.F - E * x_fix;
    for (Eigen::Index base : {Eigen::Index(0), 2 * nt})
        for (Eigen::Index r = 0; r < nt; ++r) {
            const Eigen::RowVectorXd up = restrict_row(E.row(base + r)), dn = restrict_row(E.row(base + nt + r));
            if (up.cwiseAbs().maxCoeff() > 0)
                pairs.push_back({up, Fres[base + r], dn, Fres[base + nt + r]});
        }

    EnumerationResult out;
    out.pairs = static_cast<int>(pairs.size());
    if (out.pairs > max_pairs)
        throw std::invalid_argument("enumerate_active_sets: too many constraint pairs");
    const auto me = static_cast<Eigen::Index>(eq_rows.size());
    const auto m = pairs.size();
    long total = 1;
    for (std::size_t k = 0; k < m; ++k)
        total *= 3;

    const double tol = 1e-9;
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> digit(m);
    for (long code = 0; code < total; ++code) {
        long rest = code;
        std::size_t na = 0;
        for (std::size_t k = 0; k < m; ++k) {
            digit[k] = static_cast<int>(rest % 3);
            rest /= 3;
            na += digit[k] != 0;
        }
        const Eigen::Index nk = nf + me + static_cast<Eigen::Index>(na);
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nk, nk);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nk);
        K.topLeftCorner(nf, nf) = Pf;
        rhs.head(nf) = -qf;
        for (Eigen::Index r = 0; r < me; ++r) {
            K.block(nf + r, 0, 1, nf) = eq_rows[static_cast<std::size_t>(r)];
            K.block(0, nf + r, nf, 1) = eq_rows[static_cast<std::size_t>(r)].transpose();
            rhs[nf + r] = eq_rhs[static_cast<std::size_t>(r)];
        }
        Eigen::Index row = nf + me;
        for (std::size_t k = 0; k < m; ++k) {
            if (!digit[k])
                continue;
            const auto& a = digit[k] == 1 ? pairs[k].up : pairs[k].dn;
            K.block(row, 0, 1, nf) = a;
            K.block(0, row, nf, 1) = a.transpose();
            rhs[row] = digit[k] == 1 ? pairs[k].h_up : pairs[k].h_dn;
            ++row;
        }
        ++out.patterns;
        const Eigen::VectorXd sol = K.completeOrthogonalDecomposition().solve(rhs);
        if ((K * sol - rhs).cwiseAbs().maxCoeff() > tol * (1.0 + rhs.cwiseAbs().maxCoeff()))
            continue;
        const Eigen::VectorXd xf = sol.head(nf);
        bool ok = true;
        row = nf + me;
        for (std::size_t k = 0; k < m && ok; ++k) {
            ok = pairs[k].up.dot(xf) <= pairs[k].h_up + tol && pairs[k].dn.dot(xf) <= pairs[k].h_dn + tol;
            if (digit[k])
                ok = ok && sol[row++] >= -tol;
        }
        if (!ok)
            continue;
        ++out.valid;
        Eigen::VectorXd x = x_fix;
        for (Eigen::Index c = 0; c < nf; ++c)
            x[freev[static_cast<std::size_t>(c)]] = xf[c];
        const double cost = cp.cost(x);
        if (cost < best) {
            best = cost;
            out.x = x;
        }
    }
    out.found = std::isfinite(best);
    out.cost = best;
    return out;
}

struct FuzzCount
{
    long samples = 0;
    long failures = 0;
    long skipped = 0; ///< finite-difference samples too close to a kink
};

/// P(xi + eta) = xi  iff  xi >= 0, eta <= 0, xi'eta = 0. Components are
/// drawn from a mix of zeros, complementary pairs and generic values so both
/// sides of the equivalence are exercised.
inline FuzzCount fuzz_lemma1(std::mt19937_64& rng, long samples)
{
    std::uniform_int_distribution<int> kind(0, 5), len(1, 6);
    std::normal_distribution<double> N(0.0, 1.0);
    FuzzCount fc;
    for (long s = 0; s < samples; ++s) {
        const int n = len(rng);
        Eigen::VectorXd xi(n), eta(n);
        for (int i = 0; i < n; ++i) {
            switch (kind(rng)) {
            case 0: xi[i] = std::abs(N(rng)); eta[i] = 0.0; break;
            case 1: xi[i] = 0.0; eta[i] = -std::abs(N(rng)); break;
            case 2: xi[i] = 0.0; eta[i] = 0.0; break;
            case 3: xi[i] = std::abs(N(rng)); eta[i] = -std::abs(N(rng)); break;
            case 4: xi[i] = -std::abs(N(rng)); eta[i] = 0.0; break;
            default: xi[i] = N(rng); eta[i] = N(rng); break;
            }
        }
        const bool lhs = project_nonneg(xi + eta) == xi;
        const bool rhs = (xi.array() >= 0).all() && (eta.array() <= 0).all() && xi.dot(eta) == 0.0;
        ++fc.samples;
        fc.failures += lhs != rhs;
    }
    return fc;
}

inline Box random_box(std::mt19937_64& rng, int n)
{
    std::normal_distribution<double> N(0.0, 1.0);
    std::uniform_real_distribution<double> U(0.0, 2.0);
    Eigen::VectorXd lo(n), hi(n);
    for (int i = 0; i < n; ++i) {
        lo[i] = N(rng);
        hi[i] = lo[i] + (U(rng) < 0.1 ? 0.0 : U(rng));
    }
    return Box(lo, hi);
}

inline Eigen::VectorXd point_in(std::mt19937_64& rng, const Box& b)
{
    std::uniform_real_distribution<double> U(0.0, 1.0);
    Eigen::VectorXd y(b.size());
    for (Eigen::Index i = 0; i < y.size(); ++i)
        y[i] = b.lo[i] + U(rng) * (b.hi[i] - b.lo[i]);
    return y;
}

/// (P(x) - y)'(x - P(x)) >= 0 for every y in the box.
inline FuzzCount fuzz_lemma4(std::mt19937_64& rng, long samples)
{
    std::uniform_int_distribution<int> len(1, 8);
    std::normal_distribution<double> N(0.0, 2.0);
    FuzzCount fc;
    for (long s = 0; s < samples; ++s) {
        const Box b = random_box(rng, len(rng));
        Eigen::VectorXd x(b.size());
        for (Eigen::Index i = 0; i < x.size(); ++i)
            x[i] = N(rng);
        const Eigen::VectorXd p = project_box(x, b), y = point_in(rng, b);
        ++fc.samples;
        fc.failures += (p - y).dot(x - p) < -1e-12;
    }
    return fc;
}

/// psi(x, y) = 1/2(|x - y|^2 - |x - P(x)|^2): the lower bound
/// psi >= 1/2|P(x) - y|^2 and the gradient P(x) - y against central
/// differences away from kinks.
inline FuzzCount fuzz_lemma3(std::mt19937_64& rng, long samples)
{
    std::uniform_int_distribution<int> len(1, 8);
    std::normal_distribution<double> N(0.0, 2.0);
    const double h = 1e-6;
    FuzzCount fc;
    auto psi = [](const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Box& b) {
        return 0.5 * ((x - y).squaredNorm() - (x - project_box(x, b)).squaredNorm());
    };
    for (long s = 0; s < samples; ++s) {
        const Box b = random_box(rng, len(rng));
        Eigen::VectorXd x(b.size());
        for (Eigen::Index i = 0; i < x.size(); ++i)
            x[i] = N(rng);
        const Eigen::VectorXd y = point_in(rng, b), p = project_box(x, b);
        ++fc.samples;
        bool bad = psi(x, y, b) < 0.5 * (p - y).squaredNorm() - 1e-12;
        const bool near_kink = ((x - b.lo).cwiseAbs().array() < 10 * h).any() ||
                               ((x - b.hi).cwiseAbs().array() < 10 * h).any();
        if (near_kink) {
            ++fc.skipped;
        } else {
            const Eigen::VectorXd grad = p - y;
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                Eigen::VectorXd xp = x, xm = x;
                xp[i] += h;
                xm[i] -= h;
                const double fd = (psi(xp, y, b) - psi(xm, y, b)) / (2 * h);
                bad = bad || std::abs(fd - grad[i]) > 1e-6;
            }
        }
        fc.failures += bad;
    }
    return fc;
}

} // namespace mtsed::testing
