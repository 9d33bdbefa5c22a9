#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <string>
#include <vector>

namespace btvc {

class TimeSeriesFrame;

/// A lift-test result for one channel over an inclusive 1-based time window.
struct PriorWindow {
    std::string channel;
    int start = 1;
    int end = 1;
    double mean = 0.0;
    double sd = 1.0;
};

/**
 * Gaussian pseudo-observations on kernel-weighted coefficients.
 *
 * Each window contributes (1/n) * sum_{t in window} log N(beta_{t,c} | mean, sd^2)
 * where n is the window length and beta = K_reg * b_reg.
 */
class CalibrationPrior {
public:
    struct Term {
        Eigen::Index channel;
        int start;  // 1-based inclusive
        int end;    // 1-based inclusive
        double mean;
        double sd;
    };

    CalibrationPrior() = default;
    explicit CalibrationPrior(std::vector<Term> terms) : terms_(std::move(terms)) {}

    bool empty() const { return terms_.empty(); }
    const std::vector<Term>& terms() const { return terms_; }

    /// coefficients is the T x P matrix beta.
    double log_density(const Eigen::MatrixXd& coefficients) const;

    /// Adds d(log_density)/d(beta) into grad_coefficients (T x P).
    void add_gradient(const Eigen::MatrixXd& coefficients, Eigen::MatrixXd& grad_coefficients) const;

private:
    std::vector<Term> terms_;
};

/// Validates windows against the channel list and series length.
CalibrationPrior apply_prior_windows(const std::vector<PriorWindow>& windows,
                                     const std::vector<std::string>& channels, int series_length);

/// Reads channel,start_date,end_date,mean,sd and resolves the dates against
/// the frame's calendar.
std::vector<PriorWindow> read_prior_windows(std::istream& in, const TimeSeriesFrame& frame);

}  // namespace btvc
