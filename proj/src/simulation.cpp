#include "btvc/simulation.hpp"

#include "btvc/errors.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <string>

namespace btvc {

namespace {

std::vector<Date> calendar(const std::string& start, int T) {
    const Date first = parse_date(start);
    std::vector<Date> ts;
    ts.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) ts.push_back(first + std::chrono::days{t});
    return ts;
}

std::vector<std::string> channel_names(int P) {
    std::vector<std::string> names;
    for (int p = 0; p < P; ++p) names.push_back("x" + std::to_string(p + 1));
    return names;
}

}  // namespace

void SimConfig::validate() const {
    if (T < 2) throw ValidationError("simulation needs T >= 2");
    if (P < 0) throw ValidationError("simulation needs P >= 0");
    if (trend_step_sd < 0 || coef_step_sd < 0 || covariate_sd < 0 || noise_sd < 0) {
        throw ValidationError("simulation standard deviations must be >= 0");
    }
    if (!coef_init.empty() && static_cast<int>(coef_init.size()) != P) {
        throw ValidationError("coef_init needs one value per channel");
    }
    if (sparsity) {
        const auto& s = *sparsity;
        if (s.channel < 0 || s.channel >= P) throw ValidationError("sparsity channel out of range");
        if (s.start < 1 || s.end < s.start || s.end > T) throw ValidationError("sparsity window out of range");
        if (!(s.zero_probability >= 0.0 && s.zero_probability <= 1.0)) {
            throw ValidationError("sparsity probability must lie in [0, 1]");
        }
    }
}

SimDataset simulate_rw(const SimConfig& config) {
    config.validate();
    const int T = config.T;
    const int P = config.P;
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal;

    Eigen::VectorXd trend(T);
    Eigen::MatrixXd beta(T, P);
    Eigen::MatrixXd x(T, P);
    Eigen::VectorXd noise(T);
    Eigen::VectorXd y(T);

    trend[0] = config.trend_init;
    for (int t = 1; t < T; ++t) trend[t] = trend[t - 1] + config.trend_step_sd * normal(rng);
    for (int p = 0; p < P; ++p) {
        beta(0, p) = config.coef_init.empty() ? 0.5 : config.coef_init[static_cast<std::size_t>(p)];
        for (int t = 1; t < T; ++t) {
            double next = beta(t - 1, p) + config.coef_step_sd * normal(rng);
            if (config.reflect) next = std::abs(next);
            beta(t, p) = next;
        }
    }
    for (int t = 0; t < T; ++t) {
        for (int p = 0; p < P; ++p) {
            x(t, p) = std::max(0.0, config.covariate_mean + config.covariate_sd * normal(rng));
        }
        noise[t] = config.noise_sd * normal(rng);
    }

    if (config.sparsity) {
        // Separate stream so a zero-probability schedule leaves the draws above untouched.
        const auto& s = *config.sparsity;
        std::mt19937_64 mask_rng(config.seed ^ 0x5A17E5EEDULL);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (int t = s.start; t <= s.end; ++t) {
            if (unif(mask_rng) < s.zero_probability) x(t - 1, s.channel) = 0.0;
        }
    }

    for (int t = 0; t < T; ++t) y[t] = trend[t] + beta.row(t).dot(x.row(t)) + noise[t];

    TimeSeriesFrame frame(calendar(config.start_date, T), y, x, channel_names(P));
    return SimDataset{std::move(frame), std::move(trend), std::move(beta), std::move(noise)};
}

SimDataset simulate_sparse(const SimConfig& config) {
    if (!config.sparsity) throw ValidationError("simulate_sparse requires a sparsity schedule");
    return simulate_rw(config);
}

void MultiplicativeSimConfig::validate() const {
    if (T < 2) throw ValidationError("simulation needs T >= 2");
    if (P < 0) throw ValidationError("simulation needs P >= 0");
    if (trend_step_sd < 0 || coef_step_sd < 0 || spend_log_sd < 0 || noise_sd < 0 || seasonal_amplitude < 0) {
        throw ValidationError("simulation scales must be >= 0");
    }
    if (!(seasonal_period > 1.0)) throw ValidationError("seasonal period must exceed 1");
}

MultiplicativeSimDataset simulate_multiplicative(const MultiplicativeSimConfig& config) {
    config.validate();
    const int T = config.T;
    const int P = config.P;
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);

    Eigen::VectorXd trend(T), seasonal(T), log_y(T);
    Eigen::MatrixXd beta(T, P), x(T, P);

    trend[0] = config.trend_init;
    for (int t = 1; t < T; ++t) trend[t] = trend[t - 1] + config.trend_step_sd * normal(rng);
    for (int p = 0; p < P; ++p) {
        beta(0, p) = config.coef_init;
        for (int t = 1; t < T; ++t) beta(t, p) = std::abs(beta(t - 1, p) + config.coef_step_sd * normal(rng));
    }
    const double phase1 = phase_dist(rng);
    const double phase2 = phase_dist(rng);
    for (int t = 0; t < T; ++t) {
        const double angle = 2.0 * std::numbers::pi * (t + 1) / config.seasonal_period;
        seasonal[t] = config.seasonal_amplitude * (std::sin(angle + phase1) + 0.5 * std::sin(2.0 * angle + phase2));
        for (int p = 0; p < P; ++p) x(t, p) = std::exp(config.spend_log_mean + config.spend_log_sd * normal(rng));
        double reg = 0.0;
        for (int p = 0; p < P; ++p) reg += beta(t, p) * std::log1p(x(t, p));
        log_y[t] = trend[t] + seasonal[t] + reg + config.noise_sd * normal(rng);
    }
    TimeSeriesFrame frame(calendar(config.start_date, T), log_y.array().exp().matrix(), x, channel_names(P));
    return MultiplicativeSimDataset{std::move(frame), std::move(trend), std::move(seasonal), std::move(beta)};
}

void write_truth_csv(std::ostream& out, const TimeSeriesFrame& frame, const Eigen::VectorXd& trend,
                     const Eigen::MatrixXd& coefficients) {
    out << "date,trend";
    for (const auto& name : frame.regressor_names()) out << ",beta_" << name;
    out << '\n';
    for (Eigen::Index t = 0; t < frame.rows(); ++t) {
        out << format_date(frame.timestamps()[t]) << ',' << format_double(trend[t]);
        for (Eigen::Index p = 0; p < coefficients.cols(); ++p) out << ',' << format_double(coefficients(t, p));
        out << '\n';
    }
}

}  // namespace btvc
