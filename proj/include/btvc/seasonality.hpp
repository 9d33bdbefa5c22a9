#pragma once

#include <Eigen/Core>

#include <vector>

namespace btvc {

/// Fourier basis for one seasonal period (in time steps).
struct FourierSpec {
    double period = 7.0;
    int order = 3;

    void validate() const;
};

struct SeasonalDesign {
    Eigen::MatrixXd matrix;
    std::vector<FourierSpec> specs;
};

/// Number of design columns: 2 * order summed over specs.
int fourier_columns(const std::vector<FourierSpec>& specs);

/**
 * Columns cos(2 k pi t / S), sin(2 k pi t / S) for t = first_time ..
 * first_time + rows - 1, ordered by spec, then k, cos before sin.
 *
 * t is the 1-based integer time index. Forecast rows pass first_time = T + 1
 * so the phase continues across the training boundary.
 */
SeasonalDesign fourier_design(int rows, const std::vector<FourierSpec>& specs, int first_time = 1);

}  // namespace btvc
