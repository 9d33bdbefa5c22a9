#include "btvc/kernels.hpp"

#include "btvc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace btvc {

KnotGrid::KnotGrid(std::vector<int> knot_times, int series_length)
    : times_(std::move(knot_times)), length_(series_length) {
    if (length_ < 1) throw ValidationError("series length must be >= 1");
    if (times_.empty()) throw ValidationError("knot grid needs at least one knot");
    for (std::size_t j = 0; j < times_.size(); ++j) {
        if (times_[j] < 1 || times_[j] > length_) {
            throw ValidationError("knot time " + std::to_string(times_[j]) + " outside [1, " +
                                  std::to_string(length_) + "]");
        }
        if (j > 0 && times_[j] <= times_[j - 1]) throw ValidationError("knot times must be strictly increasing");
    }
}

KnotGrid build_grid(int series_length, KnotSpacing spacing, KnotAnchor anchor) {
    if (series_length < 1) throw ValidationError("series length must be >= 1");
    std::vector<int> times;
    if (const auto* c = std::get_if<KnotCount>(&spacing)) {
        const int J = c->count;
        if (J < 1) throw ValidationError("knot count must be >= 1");
        if (J > series_length) {
            throw ValidationError("knot count " + std::to_string(J) + " exceeds series length " +
                                  std::to_string(series_length));
        }
        if (J == 1) {
            times.push_back(anchor == KnotAnchor::end ? series_length : 1);
        } else {
            for (int i = 0; i < J; ++i) {
                const double pos = 1.0 + static_cast<double>(series_length - 1) * i / (J - 1);
                times.push_back(static_cast<int>(std::lround(pos)));
            }
        }
    } else {
        const int d = std::get<KnotDistance>(spacing).distance;
        if (d < 1) throw ValidationError("knot distance must be >= 1");
        if (d > series_length) {
            throw ValidationError("knot distance " + std::to_string(d) + " exceeds series length " +
                                  std::to_string(series_length));
        }
        if (anchor == KnotAnchor::end) {
            for (int t = series_length; t >= 1; t -= d) times.push_back(t);
            std::reverse(times.begin(), times.end());
        } else {
            for (int t = 1; t <= series_length; t += d) times.push_back(t);
        }
    }
    return KnotGrid(std::move(times), series_length);
}

Eigen::VectorXd level_kernel(double t, const KnotGrid& grid) {
    if (!(t >= 1.0)) throw ValidationError("kernel time must be >= 1");
    const auto& knots = grid.times();
    const auto J = static_cast<Eigen::Index>(knots.size());
    Eigen::VectorXd w = Eigen::VectorXd::Zero(J);
    if (t <= knots.front()) {
        w[0] = 1.0;
        return w;
    }
    if (t >= knots.back()) {
        w[J - 1] = 1.0;
        return w;
    }
    // First knot strictly greater than t; the bracket is [i, i + 1].
    const auto upper = std::upper_bound(knots.begin(), knots.end(), t,
                                        [](double v, int k) { return v < static_cast<double>(k); });
    const auto i = static_cast<Eigen::Index>(upper - knots.begin()) - 1;
    const double width = knots[i + 1] - knots[i];
    w[i] = 1.0 - (t - knots[i]) / width;
    w[i + 1] = 1.0 - (knots[i + 1] - t) / width;
    // The two weights sum to 1 analytically; renormalize away rounding.
    w /= w.sum();
    return w;
}

double gaussian_kernel_value(double t, double knot_time, double rho) {
    const double z = (t - knot_time) / rho;
    return std::exp(-0.5 * z * z);
}

Eigen::VectorXd gaussian_kernel(double t, const KnotGrid& grid, double rho) {
    if (!(rho > 0.0)) throw ValidationError("gaussian kernel scale rho must be positive");
    const auto& knots = grid.times();
    const auto J = static_cast<Eigen::Index>(knots.size());
    Eigen::VectorXd log_k(J);
    for (Eigen::Index j = 0; j < J; ++j) {
        const double z = (t - knots[j]) / rho;
        log_k[j] = -0.5 * z * z;
    }
    Eigen::VectorXd w = (log_k.array() - log_k.maxCoeff()).exp().matrix();
    w /= w.sum();
    return w;
}

KernelMatrix kernel_matrix(const KnotGrid& grid, const KernelKind& kind, int first_time, int rows) {
    if (rows < 0) rows = grid.series_length() - first_time + 1;
    if (first_time < 1 || rows < 0) throw ValidationError("kernel matrix row range invalid");
    Eigen::MatrixXd weights(rows, grid.knots());
    for (int r = 0; r < rows; ++r) {
        const double t = first_time + r;
        if (std::holds_alternative<LevelKernel>(kind)) {
            weights.row(r) = level_kernel(t, grid).transpose();
        } else {
            weights.row(r) = gaussian_kernel(t, grid, std::get<GaussianKernel>(kind).rho).transpose();
        }
    }
    return KernelMatrix(std::move(weights), grid);
}

}  // namespace btvc
