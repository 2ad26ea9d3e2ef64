#pragma once

// Dense convex QP by a primal-dual interior-point method (Mehrotra
// predictor-corrector):
//
//   min 1/2 x'Px + q'x   s.t.  Ax = b,  Gx <= h,  lo <= x <= hi.
//
// Fixed variables (lo == hi) are eliminated up front; finite bounds become
// inequality rows. When the main solve fails, an elastic phase-I program
// decides between infeasibility and budget exhaustion.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "mtsed/error.hpp"

namespace mtsed::qp {

struct Data
{
    Eigen::MatrixXd P;
    Eigen::VectorXd q;
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    Eigen::MatrixXd G;
    Eigen::VectorXd h;
    Eigen::VectorXd lo, hi;

    Eigen::Index num_vars() const { return q.size(); }
};

struct Settings
{
    double tol = 1e-10;
    int max_iter = 100;
    double reg = 1e-11;
    double feas_tol = 1e-7; ///< phase-I optimum above this means infeasible
    bool phase_one = true;
    bool polish = true; ///< re-solve on the identified active set after convergence
};

enum class Status { Solved, Infeasible, IterationLimit };

inline const char* to_string(Status s)
{
    switch (s) {
    case Status::Solved: return "solved";
    case Status::Infeasible: return "infeasible";
    case Status::IterationLimit: return "iteration_limit";
    }
    return "?";
}

struct Result
{
    Status status = Status::IterationLimit;
    Eigen::VectorXd x; ///< primal
    Eigen::VectorXd y; ///< equality multipliers
    Eigen::VectorXd z; ///< inequality multipliers, >= 0
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double mu = 0.0;
    double infeasibility = 0.0; ///< phase-I optimum when status == Infeasible
};

namespace detail {

struct Reduced
{
    std::vector<Eigen::Index> free_vars;
    Eigen::VectorXd x_fixed_full; ///< full-length, fixed entries set
    std::vector<Eigen::Index> eq_rows, ineq_rows;
    Eigen::MatrixXd P, A, G;
    Eigen::VectorXd q, b, h;
    std::vector<bool> relaxable; ///< per row of G: true for original rows, false for bound rows
    bool trivially_infeasible = false;
    double infeasibility = 0.0;
};

inline Reduced reduce(const Data& d)
{
    const Eigen::Index n = d.num_vars();
    Reduced r;
    r.x_fixed_full = Eigen::VectorXd::Zero(n);
    std::vector<Eigen::Index> fixed;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (d.lo[j] == d.hi[j]) {
            fixed.push_back(j);
            r.x_fixed_full[j] = d.lo[j];
        } else {
            r.free_vars.push_back(j);
        }
    }
    const auto nf = static_cast<Eigen::Index>(r.free_vars.size());
    auto gather_cols = [&](const Eigen::MatrixXd& M) {
        Eigen::MatrixXd out(M.rows(), nf);
        for (Eigen::Index c = 0; c < nf; ++c)
            out.col(c) = M.col(r.free_vars[static_cast<std::size_t>(c)]);
        return out;
    };

    const Eigen::VectorXd Px = d.P.rows() ? Eigen::VectorXd(d.P * r.x_fixed_full) : Eigen::VectorXd::Zero(n);
    r.P.resize(nf, nf);
    r.q.resize(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
        const auto ja = r.free_vars[static_cast<std::size_t>(a)];
        r.q[a] = d.q[ja] + Px[ja];
        for (Eigen::Index c = 0; c < nf; ++c)
            r.P(a, c) = d.P.rows() ? d.P(ja, r.free_vars[static_cast<std::size_t>(c)]) : 0.0;
    }

    const double tol = 1e-12;
    const Eigen::MatrixXd Af = gather_cols(d.A);
    const Eigen::VectorXd bf = d.b - d.A * r.x_fixed_full;
    for (Eigen::Index i = 0; i < Af.rows(); ++i) {
        if (nf > 0 && Af.row(i).cwiseAbs().maxCoeff() > 0.0) {
            r.eq_rows.push_back(i);
            continue;
        }
        if (std::abs(bf[i]) > tol * (1.0 + std::abs(d.b[i]))) {
            r.trivially_infeasible = true;
            r.infeasibility = std::max(r.infeasibility, std::abs(bf[i]));
        }
    }
    const Eigen::MatrixXd Gf = gather_cols(d.G);
    const Eigen::VectorXd hf = d.h - d.G * r.x_fixed_full;
    for (Eigen::Index i = 0; i < Gf.rows(); ++i) {
        if (nf > 0 && Gf.row(i).cwiseAbs().maxCoeff() > 0.0) {
            r.ineq_rows.push_back(i);
            continue;
        }
        if (hf[i] < -tol * (1.0 + std::abs(d.h[i]))) {
            r.trivially_infeasible = true;
            r.infeasibility = std::max(r.infeasibility, -hf[i]);
        }
    }

    r.A.resize(static_cast<Eigen::Index>(r.eq_rows.size()), nf);
    r.b.resize(r.A.rows());
    for (Eigen::Index i = 0; i < r.A.rows(); ++i) {
        r.A.row(i) = Af.row(r.eq_rows[static_cast<std::size_t>(i)]);
        r.b[i] = bf[r.eq_rows[static_cast<std::size_t>(i)]];
    }

    Eigen::Index nbound = 0;
    for (auto j : r.free_vars)
        nbound += std::isfinite(d.lo[j]) + std::isfinite(d.hi[j]);
    const auto ng = static_cast<Eigen::Index>(r.ineq_rows.size());
    r.G = Eigen::MatrixXd::Zero(ng + nbound, nf);
    r.h.resize(ng + nbound);
    r.relaxable.assign(static_cast<std::size_t>(ng + nbound), false);
    for (Eigen::Index i = 0; i < ng; ++i) {
        r.G.row(i) = Gf.row(r.ineq_rows[static_cast<std::size_t>(i)]);
        r.h[i] = hf[r.ineq_rows[static_cast<std::size_t>(i)]];
        r.relaxable[static_cast<std::size_t>(i)] = true;
    }
    Eigen::Index row = ng;
    for (Eigen::Index c = 0; c < nf; ++c) {
        const auto j = r.free_vars[static_cast<std::size_t>(c)];
        if (std::isfinite(d.hi[j])) {
            r.G(row, c) = 1.0;
            r.h[row++] = d.hi[j];
        }
        if (std::isfinite(d.lo[j])) {
            r.G(row, c) = -1.0;
            r.h[row++] = -d.lo[j];
        }
    }
    return r;
}

struct Core
{
    Eigen::VectorXd x, y, z, s;
    int iterations = 0;
    bool converged = false;
    double rp = 0, rd = 0, mu = 0;
};

/// Max-norm KKT error of a reduced-space point, each part scaled like the
/// convergence test.
inline double kkt_error(const Eigen::MatrixXd& P, const Eigen::VectorXd& q, const Eigen::MatrixXd& A,
                        const Eigen::VectorXd& b, const Eigen::MatrixXd& G, const Eigen::VectorXd& h,
                        const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& z)
{
    auto mx = [](const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; };
    const Eigen::VectorXd slack = G * x - h;
    double e = mx(P * x + q + A.transpose() * y + G.transpose() * z) / (1.0 + mx(q));
    e = std::max(e, mx(A * x - b) / (1.0 + mx(b)));
    if (slack.size()) {
        e = std::max(e, std::max(slack.maxCoeff(), 0.0) / (1.0 + mx(h)));
        e = std::max(e, std::max(-z.minCoeff(), 0.0));
        e = std::max(e, mx(z.cwiseProduct(slack)) / (1.0 + mx(h)));
    }
    return e;
}

/// Solves the equality system given by the rows with z > s and keeps the
/// result when it improves the KKT error.
inline void polish(const Eigen::MatrixXd& P, const Eigen::VectorXd& q, const Eigen::MatrixXd& A,
                   const Eigen::VectorXd& b, const Eigen::MatrixXd& G, const Eigen::VectorXd& h,
                   Eigen::VectorXd& x, Eigen::VectorXd& y, Eigen::VectorXd& z, const Eigen::VectorXd& s)
{
    const Eigen::Index n = q.size(), me = A.rows(), m = G.rows();
    std::vector<Eigen::Index> act;
    for (Eigen::Index i = 0; i < m; ++i)
        if (z[i] > s[i])
            act.push_back(i);
    const auto na = static_cast<Eigen::Index>(act.size());
    const Eigen::Index nk = n + me + na;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nk, nk);
    Eigen::VectorXd rhs(nk);
    K.topLeftCorner(n, n) = P;
    K.block(0, n, n, me) = A.transpose();
    K.block(n, 0, me, n) = A;
    rhs << -q, b, Eigen::VectorXd::Zero(na);
    for (Eigen::Index a = 0; a < na; ++a) {
        K.block(0, n + me + a, n, 1) = G.row(act[static_cast<std::size_t>(a)]).transpose();
        K.block(n + me + a, 0, 1, n) = G.row(act[static_cast<std::size_t>(a)]);
        rhs[n + me + a] = h[act[static_cast<std::size_t>(a)]];
    }
    // Minimum-norm correction from the interior point, so directions the
    // active set leaves undetermined stay where the IPM put them.
    Eigen::VectorXd cur(nk);
    cur.head(n) = x;
    cur.segment(n, me) = y;
    for (Eigen::Index a = 0; a < na; ++a)
        cur[n + me + a] = z[act[static_cast<std::size_t>(a)]];
    const Eigen::VectorXd sol = cur + K.completeOrthogonalDecomposition().solve(rhs - K * cur);
    if (!sol.allFinite())
        return;
    Eigen::VectorXd zp = Eigen::VectorXd::Zero(m);
    for (Eigen::Index a = 0; a < na; ++a)
        zp[act[static_cast<std::size_t>(a)]] = sol[n + me + a];
    const Eigen::VectorXd xp = sol.head(n), yp = sol.segment(n, me);
    if (kkt_error(P, q, A, b, G, h, xp, yp, zp) < kkt_error(P, q, A, b, G, h, x, y, z)) {
        x = xp;
        y = yp;
        z = zp;
    }
}

inline double step_to_boundary(const Eigen::VectorXd& v, const Eigen::VectorXd& dv)
{
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (dv[i] < 0)
            alpha = std::min(alpha, -v[i] / dv[i]);
    return alpha;
}

/// Mehrotra predictor-corrector on min 1/2 x'Px + q'x, Ax = b, Gx <= h.
inline Core solve_core(const Eigen::MatrixXd& P, const Eigen::VectorXd& q, const Eigen::MatrixXd& A,
                       const Eigen::VectorXd& b, const Eigen::MatrixXd& G, const Eigen::VectorXd& h,
                       const Settings& st)
{
    const Eigen::Index n = q.size(), me = A.rows(), m = G.rows();
    const double reg = st.reg;
    Core c;

    const Eigen::Index nk = n + me;
    Eigen::MatrixXd K(nk, nk);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu;

    auto factor = [&](const Eigen::VectorXd& w) {
        K.setZero();
        K.topLeftCorner(n, n) = P + G.transpose() * w.asDiagonal() * G;
        K.topLeftCorner(n, n).diagonal().array() += reg;
        K.topRightCorner(n, me) = A.transpose();
        K.bottomLeftCorner(me, n) = A;
        K.bottomRightCorner(me, me).diagonal().setConstant(-reg);
        lu.compute(K);
    };
    // Solves the unregularized system with two refinement sweeps.
    auto solve = [&](const Eigen::VectorXd& w, const Eigen::VectorXd& r1, const Eigen::VectorXd& r2,
                     Eigen::VectorXd& dx, Eigen::VectorXd& dy) {
        Eigen::VectorXd rhs(nk);
        rhs << r1, r2;
        Eigen::VectorXd sol = lu.solve(rhs);
        for (int it = 0; it < 2; ++it) {
            const Eigen::VectorXd sx = sol.head(n), sy = sol.tail(me);
            Eigen::VectorXd res(nk);
            res.head(n) = r1 - (P * sx + G.transpose() * (w.asDiagonal() * (G * sx)) + A.transpose() * sy);
            res.tail(me) = r2 - A * sx;
            sol += lu.solve(res);
        }
        dx = sol.head(n);
        dy = sol.tail(me);
    };

    // Initial point from a least-squares solve with unit scaling.
    Eigen::VectorXd w = Eigen::VectorXd::Ones(m);
    factor(w);
    Eigen::VectorXd x0, y0;
    solve(w, -q + G.transpose() * h, b, x0, y0);
    c.x = x0;
    c.y = Eigen::VectorXd::Zero(me);
    c.s = h - G * c.x;
    if (m > 0) {
        const double smin = c.s.minCoeff();
        if (smin < 1.0)
            c.s.array() += 1.0 - smin;
    }
    c.z = Eigen::VectorXd::Ones(m);

    const double bnorm = 1.0 + (me ? b.cwiseAbs().maxCoeff() : 0.0);
    const double hnorm = 1.0 + (m ? h.cwiseAbs().maxCoeff() : 0.0);
    const double qnorm = 1.0 + (n ? q.cwiseAbs().maxCoeff() : 0.0);

    Eigen::VectorXd dx, dy, dz, ds, dxa, dya, dza, dsa;
    for (c.iterations = 0; c.iterations < st.max_iter; ++c.iterations) {
        const Eigen::VectorXd r_d = P * c.x + q + A.transpose() * c.y + G.transpose() * c.z;
        const Eigen::VectorXd r_p = A * c.x - b;
        const Eigen::VectorXd r_g = G * c.x + c.s - h;
        c.mu = m ? c.s.dot(c.z) / static_cast<double>(m) : 0.0;
        c.rp = std::max(me ? r_p.cwiseAbs().maxCoeff() / bnorm : 0.0, m ? r_g.cwiseAbs().maxCoeff() / hnorm : 0.0);
        c.rd = n ? r_d.cwiseAbs().maxCoeff() / qnorm : 0.0;
        if (c.rp <= st.tol && c.rd <= st.tol && c.mu <= st.tol) {
            c.converged = true;
            break;
        }
        if (!c.x.allFinite() || !c.z.allFinite())
            break;

        w = c.z.cwiseQuotient(c.s);
        factor(w);

        auto direction = [&](const Eigen::VectorXd& r_c, Eigen::VectorXd& ddx, Eigen::VectorXd& ddy,
                             Eigen::VectorXd& ddz, Eigen::VectorXd& dds) {
            const Eigen::VectorXd t = w.cwiseProduct(r_g) - r_c.cwiseQuotient(c.s);
            solve(w, -r_d - G.transpose() * t, -r_p, ddx, ddy);
            ddz = w.cwiseProduct(G * ddx) + t;
            dds = -r_g - G * ddx;
        };

        const Eigen::VectorXd sz = c.s.cwiseProduct(c.z);
        direction(sz, dxa, dya, dza, dsa);
        const double alpha_aff = std::min(step_to_boundary(c.s, dsa), step_to_boundary(c.z, dza));
        double sigma = 0.0;
        if (m > 0) {
            const double mu_aff = (c.s + alpha_aff * dsa).dot(c.z + alpha_aff * dza) / static_cast<double>(m);
            sigma = std::pow(mu_aff / c.mu, 3);
        }
        const Eigen::VectorXd r_c = sz + dsa.cwiseProduct(dza) - Eigen::VectorXd::Constant(m, sigma * c.mu);
        direction(r_c, dx, dy, dz, ds);
        const double alpha = std::min(1.0, 0.99 * std::min(step_to_boundary(c.s, ds), step_to_boundary(c.z, dz)));
        c.x += alpha * dx;
        c.y += alpha * dy;
        c.z += alpha * dz;
        c.s += alpha * ds;
    }
    return c;
}

} // namespace detail

inline Result solve(const Data& d, const Settings& st = {})
{
    const Eigen::Index n = d.num_vars();
    require_dim(d.lo.size() == n && d.hi.size() == n, "qp::solve: bound length mismatch");
    require_dim(d.A.cols() == n || d.A.rows() == 0, "qp::solve: A has wrong column count");
    require_dim(d.G.cols() == n || d.G.rows() == 0, "qp::solve: G has wrong column count");
    for (Eigen::Index j = 0; j < n; ++j)
        if (d.lo[j] > d.hi[j])
            return Result{Status::Infeasible, {}, {}, {}, 0, 0, 0, 0, d.lo[j] - d.hi[j]};

    Data dd = d;
    if (dd.A.rows() == 0)
        dd.A.resize(0, n);
    if (dd.G.rows() == 0)
        dd.G.resize(0, n);
    if (dd.P.rows() == 0)
        dd.P = Eigen::MatrixXd::Zero(n, n);

    const detail::Reduced r = detail::reduce(dd);
    Result res;
    res.x = r.x_fixed_full;
    res.y = Eigen::VectorXd::Zero(dd.A.rows());
    res.z = Eigen::VectorXd::Zero(dd.G.rows());
    if (r.trivially_infeasible) {
        res.status = Status::Infeasible;
        res.infeasibility = r.infeasibility;
        return res;
    }

    detail::Core c = detail::solve_core(r.P, r.q, r.A, r.b, r.G, r.h, st);
    if (c.converged && st.polish)
        detail::polish(r.P, r.q, r.A, r.b, r.G, r.h, c.x, c.y, c.z, c.s);
    res.iterations = c.iterations;
    res.primal_residual = c.rp;
    res.dual_residual = c.rd;
    res.mu = c.mu;
    for (std::size_t k = 0; k < r.free_vars.size(); ++k)
        res.x[r.free_vars[k]] = c.x[static_cast<Eigen::Index>(k)];
    for (std::size_t k = 0; k < r.eq_rows.size(); ++k)
        res.y[r.eq_rows[k]] = c.y[static_cast<Eigen::Index>(k)];
    for (std::size_t k = 0; k < r.ineq_rows.size(); ++k)
        res.z[r.ineq_rows[k]] = std::max(c.z[static_cast<Eigen::Index>(k)], 0.0);
    if (c.converged) {
        for (Eigen::Index j = 0; j < n; ++j)
            res.x[j] = std::min(std::max(res.x[j], dd.lo[j]), dd.hi[j]);
        res.status = Status::Solved;
        return res;
    }
    res.status = Status::IterationLimit;
    if (!st.phase_one)
        return res;

    // Elastic phase I: min 1'(e+ + e-) + t, Ax - e+ + e- = b, Gx - t <= h, bounds hard.
    const Eigen::Index nf = r.q.size(), me = r.A.rows(), m = r.G.rows();
    const Eigen::Index np = nf + 2 * me + 1;
    Eigen::MatrixXd P1 = Eigen::MatrixXd::Zero(np, np);
    Eigen::VectorXd q1 = Eigen::VectorXd::Zero(np);
    q1.tail(2 * me + 1).setOnes();
    Eigen::MatrixXd A1 = Eigen::MatrixXd::Zero(me, np);
    A1.leftCols(nf) = r.A;
    A1.block(0, nf, me, me) = -Eigen::MatrixXd::Identity(me, me);
    A1.block(0, nf + me, me, me) = Eigen::MatrixXd::Identity(me, me);
    Eigen::MatrixXd G1 = Eigen::MatrixXd::Zero(m + 2 * me + 1, np);
    Eigen::VectorXd h1 = Eigen::VectorXd::Zero(m + 2 * me + 1);
    G1.topLeftCorner(m, nf) = r.G;
    h1.head(m) = r.h;
    for (Eigen::Index i = 0; i < m; ++i)
        if (r.relaxable[static_cast<std::size_t>(i)])
            G1(i, np - 1) = -1.0;
    for (Eigen::Index k = 0; k < 2 * me + 1; ++k)
        G1(m + k, nf + k) = -1.0;
    Settings st1 = st;
    st1.tol = std::max(st.tol, 1e-9);
    const detail::Core c1 = detail::solve_core(P1, q1, A1, r.b, G1, h1, st1);
    if (c1.converged) {
        const double v = q1.dot(c1.x);
        if (v > st.feas_tol) {
            res.status = Status::Infeasible;
            res.infeasibility = v;
        }
    }
    return res;
}

} // namespace mtsed::qp
