#pragma once

#include <Eigen/Core>

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace btvc {

using Date = std::chrono::sys_days;

/// Parses a strict ISO-8601 calendar date (YYYY-MM-DD).
Date parse_date(std::string_view text);
std::string format_date(Date d);

/// Column mapping from a CSV header to the frame fields.
struct CsvSchema {
    std::string date_column = "date";
    std::string response_column = "y";
    /// Empty means every column other than date and response, in file order.
    std::vector<std::string> regressor_columns;
};

/**
 * Observed series on a uniform calendar grid.
 *
 * Rows are sorted by date with a constant step of step_days. Regressors are
 * spend-like and therefore nonnegative. Instances are validated on
 * construction and immutable afterwards.
 */
class TimeSeriesFrame {
public:
    TimeSeriesFrame(std::vector<Date> timestamps, Eigen::VectorXd response,
                    Eigen::MatrixXd regressors, std::vector<std::string> regressor_names);

    Eigen::Index rows() const { return response_.size(); }
    Eigen::Index channels() const { return regressors_.cols(); }
    int step_days() const { return step_days_; }

    const std::vector<Date>& timestamps() const { return timestamps_; }
    const Eigen::VectorXd& response() const { return response_; }
    const Eigen::MatrixXd& regressors() const { return regressors_; }
    const std::vector<std::string>& regressor_names() const { return names_; }

    /// Index of a regressor by name, or -1.
    Eigen::Index channel_index(std::string_view name) const;

    /// Rows [first, first + count) as a new frame.
    TimeSeriesFrame slice(Eigen::Index first, Eigen::Index count) const;

private:
    std::vector<Date> timestamps_;
    Eigen::VectorXd response_;
    Eigen::MatrixXd regressors_;
    std::vector<std::string> names_;
    int step_days_ = 1;
};

/// Reads a frame; errors carry the 1-based data row index.
TimeSeriesFrame read_csv(std::istream& in, const CsvSchema& schema);
TimeSeriesFrame ingest_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Writes date,response,regressors... using shortest round-trip number formatting.
void write_csv(std::ostream& out, const TimeSeriesFrame& frame, const CsvSchema& schema = {});

/// Regressor-only table (future spend for forecasting): date column plus named regressors.
struct RegressorTable {
    std::vector<Date> timestamps;
    Eigen::MatrixXd values;
};
RegressorTable read_regressor_csv(std::istream& in, const std::string& date_column,
                                  const std::vector<std::string>& columns);

enum class ZeroPolicy { shift1, floor };

struct LogTransform {
    ZeroPolicy policy = ZeroPolicy::shift1;
    double floor_epsilon = 1e-6;

    /// ln(x + 1) under shift1, ln(max(x, eps)) under floor.
    Eigen::MatrixXd regressors(const Eigen::MatrixXd& x) const;
};

struct LogFrame {
    Eigen::VectorXd log_response;
    Eigen::MatrixXd log_regressors;
};

LogFrame to_log_frame(const TimeSeriesFrame& frame, const LogTransform& transform = {});

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace btvc
