#pragma once

#include <algorithm>
#include <Eigen/Core>

#include "mtsed/error.hpp"

namespace mtsed {

/// Cartesian product of closed intervals. lo == hi encodes a singleton,
/// infinite entries an unbounded coordinate.
struct Box
{
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;

    Box() = default;
    Box(Eigen::VectorXd lo_, Eigen::VectorXd hi_) : lo(std::move(lo_)), hi(std::move(hi_))
    {
        require_dim(lo.size() == hi.size(), "Box: lo/hi length mismatch");
        if ((hi.array() < lo.array()).any())
            throw std::invalid_argument("Box: hi < lo");
    }

    static Box uniform(Eigen::Index n, double lo, double hi)
    {
        return Box(Eigen::VectorXd::Constant(n, lo), Eigen::VectorXd::Constant(n, hi));
    }

    Eigen::Index size() const { return lo.size(); }

    bool contains(const Eigen::Ref<const Eigen::VectorXd>& x, double tol = 0.0) const
    {
        return x.size() == size() && (x.array() >= lo.array() - tol).all() &&
               (x.array() <= hi.array() + tol).all();
    }
};

inline double clamp_scalar(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

/// Elementwise clamp into `out`. `out` may alias `x`.
template <typename Out>
void project_box_into(const Eigen::Ref<const Eigen::VectorXd>& x, const Box& box, Out&& out)
{
    require_dim(x.size() == box.size(), "project_box: dimension mismatch");
    for (Eigen::Index k = 0; k < x.size(); ++k)
        out[k] = clamp_scalar(x[k], box.lo[k], box.hi[k]);
}

inline Eigen::VectorXd project_box(const Eigen::Ref<const Eigen::VectorXd>& x, const Box& box)
{
    Eigen::VectorXd out(x.size());
    project_box_into(x, box, out);
    return out;
}

inline Eigen::VectorXd project_nonneg(const Eigen::Ref<const Eigen::VectorXd>& x)
{
    return x.cwiseMax(0.0);
}

} // namespace mtsed
