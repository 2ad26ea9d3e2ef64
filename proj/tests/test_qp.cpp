#include <gtest/gtest.h>

#include <random>

#include "mtsed/qp.hpp"

using namespace mtsed;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

qp::Data empty(Eigen::Index n)
{
    qp::Data d;
    d.P = Eigen::MatrixXd::Zero(n, n);
    d.q = Eigen::VectorXd::Zero(n);
    d.A.resize(0, n);
    d.b.resize(0);
    d.G.resize(0, n);
    d.h.resize(0);
    d.lo = Eigen::VectorXd::Constant(n, -inf);
    d.hi = Eigen::VectorXd::Constant(n, inf);
    return d;
}

} // namespace

TEST(Qp, ScalarWithActiveUpperBound)
{
    auto d = empty(1);
    d.P(0, 0) = 1.0;
    d.q[0] = -2.0;
    d.lo[0] = 0.0;
    d.hi[0] = 1.0;
    const auto r = qp::solve(d);
    ASSERT_EQ(r.status, qp::Status::Solved);
    EXPECT_NEAR(r.x[0], 1.0, 1e-9);
}

TEST(Qp, EqualityConstrainedLeastNorm)
{
    // min 1/2|x|^2 s.t. x1 + x2 = 1: x = (1/2, 1/2), x + A'y = 0 gives y = -1/2.
    auto d = empty(2);
    d.P.setIdentity();
    d.A = Eigen::RowVector2d(1, 1);
    d.b = Eigen::VectorXd::Ones(1);
    const auto r = qp::solve(d);
    ASSERT_EQ(r.status, qp::Status::Solved);
    EXPECT_NEAR(r.x[0], 0.5, 1e-9);
    EXPECT_NEAR(r.x[1], 0.5, 1e-9);
    EXPECT_NEAR(r.y[0], -0.5, 1e-9);
}

TEST(Qp, ActiveInequalityMultiplier)
{
    // min 1/2|x|^2 s.t. x1 + x2 <= -1: x = (-1/2, -1/2), z = 1/2.
    auto d = empty(2);
    d.P.setIdentity();
    d.G = Eigen::RowVector2d(1, 1);
    d.h = Eigen::VectorXd::Constant(1, -1.0);
    const auto r = qp::solve(d);
    ASSERT_EQ(r.status, qp::Status::Solved);
    EXPECT_NEAR(r.x[0], -0.5, 1e-9);
    EXPECT_NEAR(r.z[0], 0.5, 1e-9);
}

TEST(Qp, TextbookLinearProgram)
{
    // max x1 + x2 s.t. x1 + 2x2 <= 4, 3x1 + x2 <= 6, x >= 0: vertex (1.6, 1.2).
    auto d = empty(2);
    d.q << -1, -1;
    d.G.resize(2, 2);
    d.G << 1, 2, 3, 1;
    d.h = Eigen::Vector2d(4, 6);
    d.lo.setZero();
    const auto r = qp::solve(d);
    ASSERT_EQ(r.status, qp::Status::Solved);
    EXPECT_NEAR(r.x[0], 1.6, 1e-9);
    EXPECT_NEAR(r.x[1], 1.2, 1e-9);
    // Duals from -q = G'z: z = (0.4, 0.2).
    EXPECT_NEAR(r.z[0], 0.4, 1e-9);
    EXPECT_NEAR(r.z[1], 0.2, 1e-9);
}

TEST(Qp, FixedVariablesAreEliminated)
{
    auto d = empty(3);
    d.P.setIdentity();
    d.q << -1, -1, -1;
    d.lo << 0.25, -inf, 2.0;
    d.hi << 0.25, inf, 2.0;
    d.A = Eigen::RowVector3d(1, 1, 1);
    d.b = Eigen::VectorXd::Constant(1, 3.0);
    const auto r = qp::solve(d);
    ASSERT_EQ(r.status, qp::Status::Solved);
    EXPECT_EQ(r.x[0], 0.25);
    EXPECT_EQ(r.x[2], 2.0);
    EXPECT_NEAR(r.x[1], 0.75, 1e-9);
}

TEST(Qp, InfeasibleIsReportedAsSuch)
{
    auto d = empty(2);
    d.P.setIdentity();
    d.A = Eigen::RowVector2d(1, 1);
    d.b = Eigen::VectorXd::Constant(1, 3.0);
    d.lo.setZero();
    d.hi.setOnes();
    const auto r = qp::solve(d);
    EXPECT_EQ(r.status, qp::Status::Infeasible);
    EXPECT_GT(r.infeasibility, 0.5);
}

TEST(Qp, IterationLimitIsDistinctFromInfeasible)
{
    auto d = empty(2);
    d.P.setIdentity();
    d.A = Eigen::RowVector2d(1, 1);
    d.b = Eigen::VectorXd::Constant(1, 1.5);
    d.lo.setZero();
    d.hi.setOnes();
    qp::Settings st;
    st.max_iter = 1;
    const auto r = qp::solve(d, st);
    EXPECT_EQ(r.status, qp::Status::IterationLimit);
}

TEST(Qp, InvertedBoundsAndBadShapes)
{
    auto d = empty(1);
    d.lo[0] = 1.0;
    d.hi[0] = 0.0;
    EXPECT_EQ(qp::solve(d).status, qp::Status::Infeasible);
    auto e = empty(2);
    e.lo.resize(1);
    EXPECT_THROW(qp::solve(e), DimensionError);
}

// Random strictly feasible convex QPs: the returned point must satisfy the
// KKT system Px + q + A'y + G'z + bound terms = 0 with complementarity.
TEST(Qp, RandomInstancesSatisfyKkt)
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> N(0.0, 1.0);
    for (int t = 0; t < 60; ++t) {
        const int n = 3 + t % 6, me = t % 3, mi = 1 + t % 4;
        Eigen::MatrixXd M(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                M(i, j) = N(rng);
        auto d = empty(n);
        d.P = M.transpose() * M * (t % 5 == 0 ? 0.0 : 1.0); // some pure LPs
        for (int i = 0; i < n; ++i)
            d.q[i] = N(rng);
        Eigen::VectorXd x0(n);
        for (int i = 0; i < n; ++i)
            x0[i] = N(rng);
        d.lo = x0.array() - 1.0;
        d.hi = x0.array() + 1.0;
        d.A.resize(me, n);
        d.G.resize(mi, n);
        for (int i = 0; i < me; ++i)
            for (int j = 0; j < n; ++j)
                d.A(i, j) = N(rng);
        for (int i = 0; i < mi; ++i)
            for (int j = 0; j < n; ++j)
                d.G(i, j) = N(rng);
        d.b = d.A * x0;
        d.h = d.G * x0 + Eigen::VectorXd::Constant(mi, 0.2);

        const auto r = qp::solve(d);
        ASSERT_EQ(r.status, qp::Status::Solved) << "instance " << t;
        const Eigen::VectorXd& x = r.x;
        if (me > 0) {
            EXPECT_LE((d.A * x - d.b).cwiseAbs().maxCoeff(), 1e-8);
        }
        EXPECT_LE((d.G * x - d.h).maxCoeff(), 1e-8);
        EXPECT_GE(r.z.minCoeff(), 0.0);
        EXPECT_LE((r.z.array() * (d.G * x - d.h).array()).abs().maxCoeff(), 1e-8);
        // Remaining gradient must be a bound multiplier: nonzero only at an
        // active bound and with the right sign.
        const Eigen::VectorXd g = d.P * x + d.q + d.A.transpose() * r.y + d.G.transpose() * r.z;
        for (int j = 0; j < n; ++j) {
            if (x[j] > d.lo[j] + 1e-7 && x[j] < d.hi[j] - 1e-7)
                EXPECT_NEAR(g[j], 0.0, 1e-7) << t << "," << j;
            else if (x[j] <= d.lo[j] + 1e-7)
                EXPECT_GE(g[j], -1e-7);
            else
                EXPECT_LE(g[j], 1e-7);
        }
    }
}
