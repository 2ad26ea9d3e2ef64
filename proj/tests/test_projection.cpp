#include <gtest/gtest.h>

#include "support.hpp"

using namespace mtsed;
namespace T = mtsed::testing;

TEST(ProjectBox, Examples)
{
    const Box unit = Box::uniform(2, 0.0, 1.0);
    const Eigen::Vector2d inside(0.25, 0.75);
    EXPECT_EQ(project_box(inside, unit), Eigen::VectorXd(inside));
    EXPECT_EQ(project_box(Eigen::Vector2d(2, -3), unit), Eigen::VectorXd(Eigen::Vector2d(1, 0)));
    const Box single = Box::uniform(1, 0.5, 0.5);
    EXPECT_EQ(project_box(Eigen::VectorXd::Constant(1, 0.5), single)[0], 0.5);
    EXPECT_EQ(project_box(Eigen::VectorXd::Constant(1, -7.0), single)[0], 0.5);
}

TEST(ProjectBox, BoundaryTiesAndUnboundedCoordinates)
{
    const double inf = std::numeric_limits<double>::infinity();
    const Box b(Eigen::Vector3d(0, -inf, 1), Eigen::Vector3d(1, inf, 1));
    const Eigen::VectorXd p = project_box(Eigen::Vector3d(1.0, -1e300, 3.0), b);
    EXPECT_EQ(p[0], 1.0);
    EXPECT_EQ(p[1], -1e300);
    EXPECT_EQ(p[2], 1.0);
}

TEST(ProjectBox, Errors)
{
    EXPECT_THROW(project_box(Eigen::Vector3d::Zero(), Box::uniform(2, 0, 1)), DimensionError);
    EXPECT_THROW(Box(Eigen::Vector2d(0, 1), Eigen::Vector2d(1, 0)), std::invalid_argument);
    EXPECT_THROW(Box(Eigen::Vector2d(0, 1), Eigen::Vector3d(1, 2, 3)), DimensionError);
}

TEST(ProjectBox, IdempotentAndNonexpansive)
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> N(0.0, 2.0);
    for (int s = 0; s < 2000; ++s) {
        const Box b = T::random_box(rng, 5);
        Eigen::VectorXd x(5), y(5);
        for (int i = 0; i < 5; ++i) {
            x[i] = N(rng);
            y[i] = N(rng);
        }
        const Eigen::VectorXd px = project_box(x, b), py = project_box(y, b);
        EXPECT_TRUE(b.contains(px));
        EXPECT_EQ(project_box(px, b), px);
        EXPECT_LE((px - py).norm(), (x - y).norm() + 1e-12);
    }
}

TEST(ProjectNonneg, Examples)
{
    EXPECT_EQ(project_nonneg(Eigen::Vector3d(-1, 2, 0)), Eigen::VectorXd(Eigen::Vector3d(0, 2, 0)));

    // Forward direction of the complementarity characterization.
    const Eigen::Vector2d xi(1, 0), eta(0, -2);
    EXPECT_EQ(project_nonneg(xi + eta), Eigen::VectorXd(xi));
    EXPECT_EQ(xi.dot(eta), 0.0);

    // And a pair where it fails because xi'eta != 0.
    const Eigen::Vector2d xi2(1, 1);
    EXPECT_NE(project_nonneg(xi2 + eta), Eigen::VectorXd(xi2));
    EXPECT_EQ(xi2.dot(eta), -2.0);
}

TEST(ProjectionLemmas, ComplementarityEquivalence)
{
    std::mt19937_64 rng(101);
    const auto fc = T::fuzz_lemma1(rng, 10000);
    EXPECT_EQ(fc.failures, 0);
}

TEST(ProjectionLemmas, VariationalInequality)
{
    std::mt19937_64 rng(102);
    const auto fc = T::fuzz_lemma4(rng, 10000);
    EXPECT_EQ(fc.failures, 0);
}

TEST(ProjectionLemmas, EnvelopeBoundAndGradient)
{
    std::mt19937_64 rng(103);
    const auto fc = T::fuzz_lemma3(rng, 10000);
    EXPECT_EQ(fc.failures, 0);
    EXPECT_GT(fc.samples - fc.skipped, 9000);
}
