#include "btvc/evaluation.hpp"

#include "btvc/errors.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>

namespace btvc {

double smape(const Eigen::VectorXd& forecast, const Eigen::VectorXd& actual) {
    if (forecast.size() != actual.size()) throw ValidationError("smape: length mismatch");
    if (forecast.size() == 0) throw ValidationError("smape: empty horizon");
    double total = 0.0;
    for (Eigen::Index t = 0; t < forecast.size(); ++t) {
        const double denom = std::abs(forecast[t]) + std::abs(actual[t]);
        if (denom > 0.0) total += 2.0 * std::abs(forecast[t] - actual[t]) / denom;
    }
    return total / static_cast<double>(forecast.size());
}

double pinball(const Eigen::VectorXd& actual, const Eigen::VectorXd& quantile_forecast, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("pinball: tau must lie in (0, 1)");
    if (actual.size() != quantile_forecast.size()) throw ValidationError("pinball: length mismatch");
    if (actual.size() == 0) throw ValidationError("pinball: empty input");
    double total = 0.0;
    for (Eigen::Index t = 0; t < actual.size(); ++t) {
        const double e = actual[t] - quantile_forecast[t];
        total += std::max(tau * e, (tau - 1.0) * e);
    }
    return total / static_cast<double>(actual.size());
}

Eigen::VectorXd coef_mse(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth) {
    if (estimated.rows() != truth.rows() || estimated.cols() != truth.cols()) {
        throw ValidationError("coef_mse: shape mismatch");
    }
    if (truth.rows() == 0) throw ValidationError("coef_mse: empty input");
    return (estimated - truth).array().square().colwise().mean().transpose();
}

std::vector<SplitBounds> split_boundaries(int series_length, const BacktestPlan& plan) {
    if (plan.horizon < 1 || plan.splits < 1 || plan.min_train < 1 || plan.stride < 0) {
        throw ValidationError("backtest plan needs horizon, splits and min_train >= 1");
    }
    const int stride = plan.effective_stride();
    const int first_train = series_length - (plan.splits - 1) * stride - plan.horizon;
    if (first_train < plan.min_train) {
        throw ValidationError("backtest plan infeasible: first split trains on " + std::to_string(first_train) +
                              " rows, min_train is " + std::to_string(plan.min_train));
    }
    std::vector<SplitBounds> out;
    for (int k = 1; k <= plan.splits; ++k) {
        const int test_last = series_length - (plan.splits - k) * stride;
        const int train_end = test_last - plan.horizon;
        out.push_back({train_end, train_end + 1, test_last});
    }
    return out;
}

MetricReport MetricReport::from_values(std::vector<double> values) {
    MetricReport r;
    r.per_split = std::move(values);
    const auto n = static_cast<double>(r.per_split.size());
    if (r.per_split.empty()) return r;
    r.mean = std::accumulate(r.per_split.begin(), r.per_split.end(), 0.0) / n;
    if (r.per_split.size() > 1) {
        double ss = 0.0;
        for (double v : r.per_split) ss += (v - r.mean) * (v - r.mean);
        r.sd = std::sqrt(ss / (n - 1.0));
    }
    return r;
}

BacktestResult backtest(const TimeSeriesFrame& frame, const Forecaster& forecaster, const BacktestPlan& plan) {
    BacktestResult result;
    result.splits = split_boundaries(static_cast<int>(frame.rows()), plan);
    std::vector<double> scores;
    for (std::size_t k = 0; k < result.splits.size(); ++k) {
        const auto& s = result.splits[k];
        const TimeSeriesFrame train = frame.slice(0, s.train_end);
        const Eigen::MatrixXd future = frame.regressors().middleRows(s.test_first - 1, plan.horizon);
        Eigen::VectorXd forecast = forecaster(train, future, static_cast<int>(k));
        if (forecast.size() != plan.horizon) throw ValidationError("forecaster returned the wrong horizon");
        scores.push_back(smape(forecast, frame.response().segment(s.test_first - 1, plan.horizon)));
        result.forecasts.push_back(std::move(forecast));
    }
    result.smape = MetricReport::from_values(std::move(scores));
    return result;
}

Eigen::VectorXd seasonal_naive_forecast(const Eigen::VectorXd& history, int period, int horizon) {
    if (period < 1 || history.size() < period) throw ValidationError("seasonal naive needs one full period of history");
    Eigen::VectorXd out(horizon);
    const auto base = history.size() - period;
    for (int h = 0; h < horizon; ++h) out[h] = history[base + h % period];
    return out;
}

void write_report_csv(std::ostream& out, const BacktestResult& result) {
    out << "split,train_end,test_first,test_last,smape\n";
    for (std::size_t k = 0; k < result.splits.size(); ++k) {
        const auto& s = result.splits[k];
        out << k + 1 << ',' << s.train_end << ',' << s.test_first << ',' << s.test_last << ','
            << format_double(result.smape.per_split[k]) << '\n';
    }
    out << "mean,,,," << format_double(result.smape.mean) << '\n';
    out << "sd,,,," << format_double(result.smape.sd) << '\n';
}

void print_report_table(std::ostream& out, const BacktestResult& result) {
    char line[128];
    out << "split  train_end  test_window      smape\n";
    for (std::size_t k = 0; k < result.splits.size(); ++k) {
        const auto& s = result.splits[k];
        std::snprintf(line, sizeof line, "%5zu  %9d  %5d..%-7d  %8.5f\n", k + 1, s.train_end, s.test_first,
                      s.test_last, result.smape.per_split[k]);
        out << line;
    }
    std::snprintf(line, sizeof line, "mean %.5f  sd %.5f\n", result.smape.mean, result.smape.sd);
    out << line;
}

}  // namespace btvc
