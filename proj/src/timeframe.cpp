#include "btvc/timeframe.hpp"

#include "btvc/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace btvc {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        auto comma = line.find(',', start);
        cells.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

double parse_real(std::string_view cell, std::size_t row, std::string_view column) {
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (cell.empty() || ec != std::errc{} || ptr != last || !std::isfinite(value)) {
        throw ValidationError("row " + std::to_string(row) + ": column '" + std::string(column) +
                              "': unparsable number '" + std::string(cell) + "'");
    }
    return value;
}

struct Header {
    std::vector<std::string> names;

    std::size_t require(const std::string& name) const {
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw ValidationError("missing column '" + name + "'");
        return static_cast<std::size_t>(it - names.begin());
    }
};

Header read_header(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty CSV: header row required");
    Header h;
    for (auto cell : split_line(line)) h.names.emplace_back(cell);
    return h;
}

}  // namespace

Date parse_date(std::string_view text) {
    text = trim(text);
    auto bad = [&] { return ValidationError("invalid ISO-8601 date '" + std::string(text) + "'"); };
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
    auto field = [&](std::size_t pos, std::size_t len) {
        int v = 0;
        auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, v);
        if (ec != std::errc{} || ptr != text.data() + pos + len) throw bad();
        return v;
    };
    std::chrono::year_month_day ymd{std::chrono::year{field(0, 4)},
                                    std::chrono::month{static_cast<unsigned>(field(5, 2))},
                                    std::chrono::day{static_cast<unsigned>(field(8, 2))}};
    if (!ymd.ok()) throw bad();
    return Date{ymd};
}

std::string format_date(Date d) {
    std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

TimeSeriesFrame::TimeSeriesFrame(std::vector<Date> timestamps, Eigen::VectorXd response,
                                 Eigen::MatrixXd regressors,
                                 std::vector<std::string> regressor_names)
    : timestamps_(std::move(timestamps)),
      response_(std::move(response)),
      regressors_(std::move(regressors)),
      names_(std::move(regressor_names)) {
    const auto T = static_cast<Eigen::Index>(timestamps_.size());
    if (T == 0) throw ValidationError("frame has no rows");
    if (response_.size() != T || regressors_.rows() != T) {
        throw ValidationError("response and regressors must have one row per timestamp");
    }
    if (static_cast<Eigen::Index>(names_.size()) != regressors_.cols()) {
        throw ValidationError("regressor name count does not match regressor columns");
    }
    if (T > 1) step_days_ = static_cast<int>((timestamps_[1] - timestamps_[0]).count());
    for (Eigen::Index t = 1; t < T; ++t) {
        const auto step = (timestamps_[t] - timestamps_[t - 1]).count();
        if (step <= 0) {
            throw ValidationError("row " + std::to_string(t + 1) + ": timestamps not strictly increasing");
        }
        if (step != step_days_) {
            throw ValidationError("row " + std::to_string(t + 1) + ": gap in timestamps (step " +
                                  std::to_string(step) + " != " + std::to_string(step_days_) + ")");
        }
    }
    for (Eigen::Index t = 0; t < T; ++t) {
        if (!std::isfinite(response_[t])) {
            throw ValidationError("row " + std::to_string(t + 1) + ": non-finite response");
        }
        for (Eigen::Index p = 0; p < regressors_.cols(); ++p) {
            const double x = regressors_(t, p);
            if (!std::isfinite(x) || x < 0.0) {
                throw ValidationError("row " + std::to_string(t + 1) + ": regressor '" + names_[p] +
                                      "' must be finite and nonnegative");
            }
        }
    }
}

Eigen::Index TimeSeriesFrame::channel_index(std::string_view name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    return it == names_.end() ? -1 : static_cast<Eigen::Index>(it - names_.begin());
}

TimeSeriesFrame TimeSeriesFrame::slice(Eigen::Index first, Eigen::Index count) const {
    if (first < 0 || count < 1 || first + count > rows()) throw ValidationError("slice out of range");
    std::vector<Date> ts(timestamps_.begin() + first, timestamps_.begin() + first + count);
    return TimeSeriesFrame(std::move(ts), response_.segment(first, count),
                           regressors_.middleRows(first, count), names_);
}

TimeSeriesFrame read_csv(std::istream& in, const CsvSchema& schema) {
    const Header header = read_header(in);
    const auto date_col = header.require(schema.date_column);
    const auto resp_col = header.require(schema.response_column);
    std::vector<std::string> reg_names = schema.regressor_columns;
    if (reg_names.empty()) {
        for (std::size_t c = 0; c < header.names.size(); ++c) {
            if (c != date_col && c != resp_col) reg_names.push_back(header.names[c]);
        }
    }
    std::vector<std::size_t> reg_cols;
    for (const auto& name : reg_names) reg_cols.push_back(header.require(name));

    struct Row {
        Date date;
        double y;
        std::vector<double> x;
        std::size_t line;
    };
    std::vector<Row> rows;
    std::string line;
    std::size_t row_index = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row_index;
        auto cells = split_line(line);
        if (cells.size() != header.names.size()) {
            throw ValidationError("row " + std::to_string(row_index) + ": expected " +
                                  std::to_string(header.names.size()) + " cells, got " +
                                  std::to_string(cells.size()));
        }
        Row r;
        r.line = row_index;
        try {
            r.date = parse_date(cells[date_col]);
        } catch (const ValidationError& e) {
            throw ValidationError("row " + std::to_string(row_index) + ": " + e.what());
        }
        r.y = parse_real(cells[resp_col], row_index, schema.response_column);
        for (std::size_t k = 0; k < reg_cols.size(); ++k) {
            r.x.push_back(parse_real(cells[reg_cols[k]], row_index, reg_names[k]));
        }
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw ValidationError("CSV has no data rows");

    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].date == rows[i - 1].date) {
            throw ValidationError("row " + std::to_string(rows[i].line) + ": duplicate date " +
                                  format_date(rows[i].date));
        }
    }
    if (rows.size() > 2) {
        const auto step = rows[1].date - rows[0].date;
        for (std::size_t i = 2; i < rows.size(); ++i) {
            if (rows[i].date - rows[i - 1].date != step) {
                throw ValidationError("row " + std::to_string(rows[i].line) + ": gapped date " +
                                      format_date(rows[i].date));
            }
        }
    }

    const auto T = static_cast<Eigen::Index>(rows.size());
    const auto P = static_cast<Eigen::Index>(reg_cols.size());
    std::vector<Date> ts;
    Eigen::VectorXd y(T);
    Eigen::MatrixXd x(T, P);
    for (Eigen::Index t = 0; t < T; ++t) {
        ts.push_back(rows[t].date);
        y[t] = rows[t].y;
        for (Eigen::Index p = 0; p < P; ++p) x(t, p) = rows[t].x[p];
    }
    return TimeSeriesFrame(std::move(ts), std::move(y), std::move(x), std::move(reg_names));
}

TimeSeriesFrame ingest_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path.string() + "'");
    return read_csv(in, schema);
}

void write_csv(std::ostream& out, const TimeSeriesFrame& frame, const CsvSchema& schema) {
    out << schema.date_column << ',' << schema.response_column;
    for (const auto& name : frame.regressor_names()) out << ',' << name;
    out << '\n';
    for (Eigen::Index t = 0; t < frame.rows(); ++t) {
        out << format_date(frame.timestamps()[t]) << ',' << format_double(frame.response()[t]);
        for (Eigen::Index p = 0; p < frame.channels(); ++p) {
            out << ',' << format_double(frame.regressors()(t, p));
        }
        out << '\n';
    }
}

RegressorTable read_regressor_csv(std::istream& in, const std::string& date_column,
                                  const std::vector<std::string>& columns) {
    const Header header = read_header(in);
    const auto date_col = header.require(date_column);
    std::vector<std::size_t> cols;
    for (const auto& name : columns) cols.push_back(header.require(name));

    RegressorTable table;
    std::vector<std::vector<double>> values;
    std::string line;
    std::size_t row_index = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row_index;
        auto cells = split_line(line);
        if (cells.size() != header.names.size()) {
            throw ValidationError("row " + std::to_string(row_index) + ": wrong cell count");
        }
        table.timestamps.push_back(parse_date(cells[date_col]));
        auto& row = values.emplace_back();
        for (std::size_t k = 0; k < cols.size(); ++k) {
            const double x = parse_real(cells[cols[k]], row_index, columns[k]);
            if (x < 0.0) {
                throw ValidationError("row " + std::to_string(row_index) + ": regressor '" +
                                      columns[k] + "' must be nonnegative");
            }
            row.push_back(x);
        }
    }
    table.values.resize(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t r = 0; r < values.size(); ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) table.values(r, c) = values[r][c];
    }
    return table;
}

Eigen::MatrixXd LogTransform::regressors(const Eigen::MatrixXd& x) const {
    if (policy == ZeroPolicy::floor) {
        if (!(floor_epsilon > 0.0)) throw ValidationError("floor epsilon must be positive");
        return x.array().max(floor_epsilon).log().matrix();
    }
    return x.array().log1p().matrix();
}

LogFrame to_log_frame(const TimeSeriesFrame& frame, const LogTransform& transform) {
    const auto& y = frame.response();
    for (Eigen::Index t = 0; t < y.size(); ++t) {
        if (!(y[t] > 0.0)) {
            throw ValidationError("row " + std::to_string(t + 1) +
                                  ": response must be strictly positive for the log transform");
        }
    }
    return LogFrame{y.array().log().matrix(), transform.regressors(frame.regressors())};
}

}  // namespace btvc
