#include "btvc/errors.hpp"
#include "btvc/timeframe.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <numbers>
#include <random>
#include <sstream>

using namespace btvc;

namespace {

TimeSeriesFrame parse(const std::string& text, const CsvSchema& schema = {}) {
    std::istringstream in(text);
    return read_csv(in, schema);
}

std::string error_of(const std::string& text, const CsvSchema& schema = {}) {
    try {
        parse(text, schema);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("dates parse strictly and format back") {
    CHECK(format_date(parse_date("2021-03-07")) == "2021-03-07");
    CHECK(format_date(parse_date("2020-02-29")) == "2020-02-29");
    CHECK_THROWS_AS(parse_date("2021-02-29"), ValidationError);
    CHECK_THROWS_AS(parse_date("2021-3-07"), ValidationError);
    CHECK_THROWS_AS(parse_date("07/03/2021"), ValidationError);
    CHECK_THROWS_AS(parse_date("2021-03-07x"), ValidationError);
    CHECK((parse_date("2021-03-01") - parse_date("2021-02-28")).count() == 1);
}

TEST_CASE("three-row csv gives T=3, P=1") {
    const auto f = parse("date,y,ch1\n2021-01-01,1.5,0\n2021-01-02,2,3.25\n2021-01-03,4,1\n");
    CHECK(f.rows() == 3);
    CHECK(f.channels() == 1);
    CHECK(f.regressor_names() == std::vector<std::string>{"ch1"});
    CHECK(f.response()[1] == 2.0);
    CHECK(f.regressors()(1, 0) == 3.25);
    CHECK(f.step_days() == 1);
}

TEST_CASE("duplicate date is reported with its row") {
    const auto msg = error_of("date,y,ch1\n2021-01-01,1,0\n2021-01-02,2,0\n2021-01-02,3,0\n");
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("duplicate") != std::string::npos);
}

TEST_CASE("gapped dates are rejected") {
    const auto msg = error_of("date,y\n2021-01-01,1\n2021-01-02,2\n2021-01-04,3\n");
    CHECK(msg.find("row 3") != std::string::npos);
}

TEST_CASE("shuffled rows with a constant step come back sorted") {
    const auto f = parse("date,y,a\n2021-01-15,3,0\n2021-01-01,1,0\n2021-01-08,2,0\n");
    CHECK(f.step_days() == 7);
    CHECK(format_date(f.timestamps()[0]) == "2021-01-01");
    CHECK(f.response()[0] == 1.0);
    CHECK(f.response()[2] == 3.0);
}

TEST_CASE("missing columns and bad cells name the problem") {
    CHECK(error_of("date,sales\n2021-01-01,1\n").find("'y'") != std::string::npos);
    CsvSchema schema;
    schema.regressor_columns = {"tv"};
    CHECK(error_of("date,y,radio\n2021-01-01,1,2\n", schema).find("'tv'") != std::string::npos);
    const auto bad = error_of("date,y,a\n2021-01-01,1,0\n2021-01-02,abc,0\n");
    CHECK(bad.find("row 2") != std::string::npos);
    CHECK(error_of("date,y,a\n2021-01-01,1,\n").find("row 1") != std::string::npos);
    CHECK(error_of("date,y,a\n2021-01-01,1,-2\n").find("nonnegative") != std::string::npos);
    CHECK(error_of("date,y,a\n2021-01-01,1,1e999\n") != "");
}

TEST_CASE("schema mapping selects and orders regressors") {
    CsvSchema schema;
    schema.date_column = "day";
    schema.response_column = "orders";
    schema.regressor_columns = {"tv", "search"};
    const auto f = parse("search,day,orders,tv,other\n1,2021-01-01,5,2,9\n3,2021-01-02,6,4,9\n", schema);
    CHECK(f.regressor_names() == std::vector<std::string>{"tv", "search"});
    CHECK(f.regressors()(1, 0) == 4.0);
    CHECK(f.regressors()(1, 1) == 3.0);
}

TEST_CASE("write then read round-trips values bit-exactly") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> unif(0.0, 1e4);
    const int T = 50;
    std::vector<Date> ts;
    Eigen::VectorXd y(T);
    Eigen::MatrixXd x(T, 2);
    for (int t = 0; t < T; ++t) {
        ts.push_back(parse_date("2020-12-25") + std::chrono::days{t});
        y[t] = unif(rng) / 7.0;
        x(t, 0) = unif(rng) * 1e-9;
        x(t, 1) = std::nextafter(unif(rng), 0.0);
    }
    const TimeSeriesFrame f(ts, y, x, {"a", "b"});
    std::stringstream buffer;
    write_csv(buffer, f);
    const TimeSeriesFrame g = read_csv(buffer, {});
    CHECK(g.timestamps() == f.timestamps());
    CHECK((g.response().array() == f.response().array()).all());
    CHECK((g.regressors().array() == f.regressors().array()).all());
}

TEST_CASE("format_double round-trips random doubles") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 2000; ++i) {
        double v;
        const std::uint64_t bits = rng();
        std::memcpy(&v, &bits, sizeof v);
        if (!std::isfinite(v)) continue;
        CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
    }
}

TEST_CASE("frame constructor rejects invalid inputs") {
    const std::vector<Date> ts{parse_date("2021-01-01"), parse_date("2021-01-02")};
    CHECK_THROWS_AS(TimeSeriesFrame(ts, Eigen::Vector2d(1, 2), Eigen::MatrixXd(3, 1), {"a"}), ValidationError);
    CHECK_THROWS_AS(TimeSeriesFrame(ts, Eigen::Vector2d(1, NAN), Eigen::MatrixXd::Zero(2, 0), {}), ValidationError);
    CHECK_THROWS_AS(TimeSeriesFrame(ts, Eigen::Vector2d(1, 2), Eigen::MatrixXd::Zero(2, 1), {}), ValidationError);
    CHECK_THROWS_AS(TimeSeriesFrame({ts[1], ts[0]}, Eigen::Vector2d(1, 2), Eigen::MatrixXd::Zero(2, 0), {}),
                    ValidationError);
}

TEST_CASE("slice keeps calendar and values") {
    const auto f = parse("date,y,a\n2021-01-01,1,0\n2021-01-02,2,1\n2021-01-03,3,2\n2021-01-04,4,3\n");
    const auto s = f.slice(1, 2);
    CHECK(s.rows() == 2);
    CHECK(format_date(s.timestamps()[0]) == "2021-01-02");
    CHECK(s.response()[1] == 3.0);
    CHECK(s.regressors()(1, 0) == 2.0);
    CHECK_THROWS_AS(f.slice(3, 2), ValidationError);
}

TEST_CASE("log transform identities") {
    const double e = std::numbers::e;
    const std::vector<Date> ts{parse_date("2021-01-01"), parse_date("2021-01-02")};
    Eigen::MatrixXd x(2, 1);
    x << 0.0, e - 1.0;
    const TimeSeriesFrame f(ts, Eigen::Vector2d(1.0, e), x, {"a"});
    const LogFrame lf = to_log_frame(f);
    CHECK(lf.log_response[0] == 0.0);
    CHECK(lf.log_response[1] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(lf.log_regressors(0, 0) == 0.0);
    CHECK(lf.log_regressors(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK((lf.log_response.array().exp() - f.response().array()).abs().maxCoeff() <= 1e-12 * e);

    LogTransform floor{ZeroPolicy::floor, 1.0};
    Eigen::MatrixXd xe(1, 1);
    xe << e;
    CHECK(floor.regressors(xe)(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 1);
    CHECK(LogTransform{ZeroPolicy::floor, 1e-6}.regressors(zero)(0, 0) == doctest::Approx(std::log(1e-6)));
    CHECK_THROWS_AS(LogTransform({ZeroPolicy::floor, 0.0}).regressors(xe), ValidationError);
}

TEST_CASE("nonpositive response is reported with its index") {
    const std::vector<Date> ts{parse_date("2021-01-01"), parse_date("2021-01-02"), parse_date("2021-01-03")};
    const TimeSeriesFrame f(ts, Eigen::Vector3d(1.0, 2.0, 0.0), Eigen::MatrixXd::Zero(3, 0), {});
    try {
        to_log_frame(f);
        FAIL("expected an error");
    } catch (const ValidationError& err) {
        CHECK(std::string(err.what()).find("3") != std::string::npos);
    }
}

TEST_CASE("future regressor table reads named columns") {
    std::istringstream in("date,b,a\n2021-02-01,1,2\n2021-02-02,3,4\n");
    const RegressorTable t = read_regressor_csv(in, "date", {"a", "b"});
    CHECK(t.values.rows() == 2);
    CHECK(t.values(1, 0) == 4.0);
    CHECK(t.values(1, 1) == 3.0);
    std::istringstream missing("date,b\n2021-02-01,1\n");
    CHECK_THROWS_AS(read_regressor_csv(missing, "date", {"a"}), ValidationError);
}
