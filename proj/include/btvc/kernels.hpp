#pragma once

#include <Eigen/Core>

#include <variant>
#include <vector>

namespace btvc {

/// Knot locations on the 1-based time axis of a series of length T.
class KnotGrid {
public:
    KnotGrid(std::vector<int> knot_times, int series_length);

    const std::vector<int>& times() const { return times_; }
    int knots() const { return static_cast<int>(times_.size()); }
    int series_length() const { return length_; }

private:
    std::vector<int> times_;
    int length_;
};

struct KnotCount {
    int count;
};
struct KnotDistance {
    int distance;
};
using KnotSpacing = std::variant<KnotCount, KnotDistance>;

enum class KnotAnchor { end, start };

/**
 * Evenly spaced knots on {1..T}.
 *
 * Distance spacing steps by d from the anchor (the last knot sits at T when
 * anchored at the end). Count spacing rounds J equally spaced quantile
 * positions of {1..T}; a single knot sits at the anchor.
 */
KnotGrid build_grid(int series_length, KnotSpacing spacing, KnotAnchor anchor = KnotAnchor::end);

struct LevelKernel {};
struct GaussianKernel {
    double rho;
};
using KernelKind = std::variant<LevelKernel, GaussianKernel>;

/// Piecewise-linear weights between the two bracketing knots; constant
/// extrapolation onto the boundary knot outside [t_1, t_J]. Valid for t >= 1,
/// including forecast times past the series end.
Eigen::VectorXd level_kernel(double t, const KnotGrid& grid);

/// exp(-(t - t_j)^2 / (2 rho^2)), unnormalized.
double gaussian_kernel_value(double t, double knot_time, double rho);

/// Gaussian weights normalized across knots. Computed relative to the nearest
/// knot so rows far from every knot do not underflow.
Eigen::VectorXd gaussian_kernel(double t, const KnotGrid& grid, double rho);

/// T x J row-stochastic weight matrix.
class KernelMatrix {
public:
    KernelMatrix(Eigen::MatrixXd weights, KnotGrid grid) : weights_(std::move(weights)), grid_(std::move(grid)) {}

    const Eigen::MatrixXd& weights() const { return weights_; }
    const KnotGrid& grid() const { return grid_; }
    Eigen::Index rows() const { return weights_.rows(); }
    Eigen::Index knots() const { return weights_.cols(); }

private:
    Eigen::MatrixXd weights_;
    KnotGrid grid_;
};

/// Rows for times first_time .. first_time + rows - 1. The default covers the
/// grid's own series; forecasts pass first_time = T + 1.
KernelMatrix kernel_matrix(const KnotGrid& grid, const KernelKind& kind, int first_time = 1, int rows = -1);

}  // namespace btvc
