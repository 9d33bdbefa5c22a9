#pragma once

#include "btvc/timeframe.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace btvc {

/// Zeroes one channel's spend on an inclusive 1-based window with the given probability per step.
struct SparsitySchedule {
    int channel = 0;
    int start = 1;
    int end = 1;
    double zero_probability = 1.0;
};

/**
 * Additive random-walk simulation: y_t = trend_t + sum_p beta_{t,p} x_{t,p} + eps_t.
 *
 * The trend and every coefficient are Gaussian random walks; coefficient
 * walks reflect at zero unless `reflect` is off. Covariates are i.i.d.
 * normal, clipped at zero so they stay valid spend values.
 */
struct SimConfig {
    int T = 300;
    int P = 3;
    double trend_init = 0.0;
    double trend_step_sd = 0.02;
    double coef_step_sd = 0.03;
    /// One starting value per channel; empty means 0.5 for every channel.
    std::vector<double> coef_init;
    double covariate_mean = 3.0;
    double covariate_sd = 1.0;
    double noise_sd = 0.3;
    bool reflect = true;
    std::uint64_t seed = 0;
    std::optional<SparsitySchedule> sparsity;
    std::string start_date = "2020-01-01";

    void validate() const;
};

struct SimDataset {
    TimeSeriesFrame frame;
    Eigen::VectorXd true_trend;
    Eigen::MatrixXd true_coefficients;  // T x P
    Eigen::VectorXd noise;
};

SimDataset simulate_rw(const SimConfig& config);
/// simulate_rw plus the sparsity schedule; requires config.sparsity.
SimDataset simulate_sparse(const SimConfig& config);

/**
 * Multiplicative simulation in the log-log form:
 * ln y_t = trend_t + seasonal_t + sum_p beta_{t,p} ln(1 + x_{t,p}) + eps_t.
 *
 * Spend is lognormal; coefficients are reflected random walks; the seasonal
 * term is a fixed weekly Fourier pattern with random phase.
 */
struct MultiplicativeSimConfig {
    int T = 400;
    int P = 2;
    double trend_init = 5.0;
    double trend_step_sd = 0.01;
    double coef_init = 0.15;
    double coef_step_sd = 0.005;
    double spend_log_mean = 2.0;
    double spend_log_sd = 0.5;
    double seasonal_period = 7.0;
    double seasonal_amplitude = 0.2;
    double noise_sd = 0.05;
    std::uint64_t seed = 0;
    std::string start_date = "2020-01-01";

    void validate() const;
};

struct MultiplicativeSimDataset {
    TimeSeriesFrame frame;
    Eigen::VectorXd true_trend;
    Eigen::VectorXd true_seasonality;
    Eigen::MatrixXd true_coefficients;
};

MultiplicativeSimDataset simulate_multiplicative(const MultiplicativeSimConfig& config);

/// date,trend,beta_<name>... one row per time step.
void write_truth_csv(std::ostream& out, const TimeSeriesFrame& frame, const Eigen::VectorXd& trend,
                     const Eigen::MatrixXd& coefficients);

}  // namespace btvc
