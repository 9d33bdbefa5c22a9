#pragma once

#include "btvc/timeframe.hpp"

#include <Eigen/Core>

#include <functional>
#include <iosfwd>
#include <vector>

namespace btvc {

/// Mean over the horizon of 2|F - A| / (|F| + |A|); terms with F = A = 0 count as 0.
double smape(const Eigen::VectorXd& forecast, const Eigen::VectorXd& actual);

/// Mean quantile loss max(tau * e, (tau - 1) * e) with e = actual - quantile.
double pinball(const Eigen::VectorXd& actual, const Eigen::VectorXd& quantile_forecast, double tau);

/// Per-channel mean squared error over time.
Eigen::VectorXd coef_mse(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth);

struct BacktestPlan {
    int horizon = 28;
    int splits = 6;
    int min_train = 28;
    /// Distance between consecutive test windows; 0 means the horizon.
    int stride = 0;

    int effective_stride() const { return stride > 0 ? stride : horizon; }
};

/// 1-based inclusive boundaries of one expanding-window split.
struct SplitBounds {
    int train_end;   // training rows are 1..train_end
    int test_first;  // = train_end + 1
    int test_last;   // = train_end + horizon
};

/// Split k (1-based) tests on the h rows ending at T - (splits - k) * stride
/// and trains on every row before them.
std::vector<SplitBounds> split_boundaries(int series_length, const BacktestPlan& plan);

struct MetricReport {
    std::vector<double> per_split;
    double mean = 0.0;
    /// Sample standard deviation (n - 1 denominator); 0 for a single split.
    double sd = 0.0;

    static MetricReport from_values(std::vector<double> values);
};

/// Produces an h-step forecast from a training frame and the known future regressors.
using Forecaster =
    std::function<Eigen::VectorXd(const TimeSeriesFrame& train, const Eigen::MatrixXd& future_regressors, int split)>;

struct BacktestResult {
    std::vector<SplitBounds> splits;
    std::vector<Eigen::VectorXd> forecasts;
    MetricReport smape;
};

BacktestResult backtest(const TimeSeriesFrame& frame, const Forecaster& forecaster, const BacktestPlan& plan);

/// Repeats the last `period` observations of the training response.
Eigen::VectorXd seasonal_naive_forecast(const Eigen::VectorXd& history, int period, int horizon);

void write_report_csv(std::ostream& out, const BacktestResult& result);
void print_report_table(std::ostream& out, const BacktestResult& result);

}  // namespace btvc
