#include "btvc/calibration.hpp"

#include "btvc/errors.hpp"
#include "btvc/timeframe.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <sstream>

namespace btvc {

double CalibrationPrior::log_density(const Eigen::MatrixXd& coefficients) const {
    double total = 0.0;
    for (const auto& w : terms_) {
        const double n = w.end - w.start + 1;
        const double log_norm = -std::log(w.sd) - 0.5 * std::log(2.0 * std::numbers::pi);
        double sum = 0.0;
        for (int t = w.start; t <= w.end; ++t) {
            const double z = (coefficients(t - 1, w.channel) - w.mean) / w.sd;
            sum += log_norm - 0.5 * z * z;
        }
        total += sum / n;
    }
    return total;
}

void CalibrationPrior::add_gradient(const Eigen::MatrixXd& coefficients, Eigen::MatrixXd& grad) const {
    for (const auto& w : terms_) {
        const double n = w.end - w.start + 1;
        const double inv_var = 1.0 / (w.sd * w.sd);
        for (int t = w.start; t <= w.end; ++t) {
            grad(t - 1, w.channel) -= (coefficients(t - 1, w.channel) - w.mean) * inv_var / n;
        }
    }
}

CalibrationPrior apply_prior_windows(const std::vector<PriorWindow>& windows,
                                     const std::vector<std::string>& channels, int series_length) {
    std::vector<CalibrationPrior::Term> terms;
    for (const auto& w : windows) {
        auto it = std::find(channels.begin(), channels.end(), w.channel);
        if (it == channels.end()) throw ValidationError("prior window: unknown channel '" + w.channel + "'");
        if (w.start < 1 || w.end < w.start || w.end > series_length) {
            throw ValidationError("prior window on '" + w.channel + "' [" + std::to_string(w.start) + ", " +
                                  std::to_string(w.end) + "] outside [1, " + std::to_string(series_length) + "]");
        }
        if (!(w.sd > 0.0) || !std::isfinite(w.sd)) throw ValidationError("prior window sd must be positive");
        if (!(w.mean >= 0.0) || !std::isfinite(w.mean)) throw ValidationError("prior window mean must be >= 0");
        const auto channel = static_cast<Eigen::Index>(it - channels.begin());
        for (const auto& other : terms) {
            if (other.channel == channel && w.start <= other.end && other.start <= w.end) {
                throw ValidationError("prior windows overlap on channel '" + w.channel + "'");
            }
        }
        terms.push_back({channel, w.start, w.end, w.mean, w.sd});
    }
    return CalibrationPrior(std::move(terms));
}

std::vector<PriorWindow> read_prior_windows(std::istream& in, const TimeSeriesFrame& frame) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("prior windows file is empty");
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
            while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
            out.push_back(cell);
        }
        return out;
    };
    const auto header = split(line);
    const std::vector<std::string> expected{"channel", "start_date", "end_date", "mean", "sd"};
    if (header != expected) {
        throw ValidationError("prior windows header must be channel,start_date,end_date,mean,sd");
    }

    const auto& ts = frame.timestamps();
    auto resolve = [&](const std::string& text, std::size_t row) {
        const Date d = parse_date(text);
        auto it = std::lower_bound(ts.begin(), ts.end(), d);
        if (it == ts.end() || *it != d) {
            throw ValidationError("prior window row " + std::to_string(row) + ": date " + text +
                                  " not in the series calendar");
        }
        return static_cast<int>(it - ts.begin()) + 1;
    };

    std::vector<PriorWindow> windows;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
        ++row;
        const auto cells = split(line);
        if (cells.size() != 5) throw ValidationError("prior window row " + std::to_string(row) + ": need 5 cells");
        PriorWindow w;
        w.channel = cells[0];
        w.start = resolve(cells[1], row);
        w.end = resolve(cells[2], row);
        try {
            w.mean = std::stod(cells[3]);
            w.sd = std::stod(cells[4]);
        } catch (const std::exception&) {
            throw ValidationError("prior window row " + std::to_string(row) + ": unparsable mean/sd");
        }
        windows.push_back(std::move(w));
    }
    return windows;
}

}  // namespace btvc
