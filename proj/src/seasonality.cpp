#include "btvc/seasonality.hpp"

#include "btvc/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace btvc {

void FourierSpec::validate() const {
    if (!(period > 1.0)) throw ValidationError("seasonal period must exceed 1");
    if (order < 1) throw ValidationError("fourier order must be >= 1");
    if (!(2.0 * order < period)) {
        throw ValidationError("fourier order " + std::to_string(order) + " aliases at period " +
                              std::to_string(period) + " (need 2*order < period)");
    }
}

int fourier_columns(const std::vector<FourierSpec>& specs) {
    int cols = 0;
    for (const auto& s : specs) cols += 2 * s.order;
    return cols;
}

SeasonalDesign fourier_design(int rows, const std::vector<FourierSpec>& specs, int first_time) {
    if (specs.empty()) throw ValidationError("fourier design needs at least one spec");
    if (rows < 0) throw ValidationError("negative row count");
    for (const auto& s : specs) s.validate();

    Eigen::MatrixXd m(rows, fourier_columns(specs));
    Eigen::Index col = 0;
    for (const auto& s : specs) {
        for (int k = 1; k <= s.order; ++k) {
            for (int r = 0; r < rows; ++r) {
                const double t = first_time + r;
                const double angle = 2.0 * k * std::numbers::pi * t / s.period;
                m(r, col) = std::cos(angle);
                m(r, col + 1) = std::sin(angle);
            }
            col += 2;
        }
    }
    return SeasonalDesign{std::move(m), specs};
}

}  // namespace btvc
