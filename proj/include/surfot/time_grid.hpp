#pragma once

#include "surfot/errors.hpp"

#include <Eigen/Core>

namespace surfot {

/// Uniform partition of [0, 1] into `intervals` steps; nodes t_j = j * tau.
class TimeGrid {
public:
    explicit TimeGrid(int intervals) : intervals_(intervals)
    {
        if (intervals < 2) throw GridTooSmall("time grid needs at least 2 intervals");
    }

    int intervals() const { return intervals_; }
    int node_count() const { return intervals_ + 1; }
    double step() const { return 1.0 / intervals_; }
    double node(int j) const { return j == intervals_ ? 1.0 : static_cast<double>(j) / intervals_; }

    Eigen::VectorXd nodes() const
    {
        Eigen::VectorXd t(node_count());
        for (int j = 0; j < node_count(); ++j) t[j] = node(j);
        return t;
    }

    /// Composite trapezoidal weights (tau/2, tau, ..., tau, tau/2).
    Eigen::VectorXd trapezoid_weights() const
    {
        Eigen::VectorXd w = Eigen::VectorXd::Constant(node_count(), step());
        w[0] *= 0.5;
        w[intervals_] *= 0.5;
        return w;
    }

private:
    int intervals_;
};

} // namespace surfot
