#include "btvc/errors.hpp"
#include "btvc/pipeline.hpp"
#include "btvc/simulation.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace btvc;

namespace {

RunConfig quick_config(std::uint64_t seed) {
    RunConfig c;
    c.seed = seed;
    c.map.max_iterations = 1500;
    c.map.restarts = 1;
    c.svi.iterations = 400;
    return c;
}

MultiplicativeSimDataset multiplicative_data(std::uint64_t seed, int T = 160) {
    MultiplicativeSimConfig sim;
    sim.T = T;
    sim.seed = seed;
    return simulate_multiplicative(sim);
}

nlohmann::json reload(const FittedModel& fitted) {
    return nlohmann::json::parse(fit_document(fitted).dump(2));
}

}  // namespace

TEST_CASE("config text round-trips losslessly") {
    RunConfig c;
    c.set("data.regressor_columns", "tv,radio");
    c.set("model.link", "identity");
    c.set("knots.level", "count:9");
    c.set("knots.seasonal", "none");
    c.set("knots.anchor", "start");
    c.set("kernel.rho", "0.30000000000000004");
    c.set("seasonality", "7:2,365.25:4");
    c.set("prior.noise_df", "5");
    c.set("prior.sigma_reg", "0.123456789012345");
    c.set("prior.laplace_smoothing", "1e-9");
    c.set("inference.mode", "svi");
    c.set("inference.svi_iterations", "1234");
    c.set("run.seed", "18446744073709551615");
    c.set("run.output_dir", "some dir/x");
    const std::string text = c.to_text();
    const RunConfig back = RunConfig::from_text(text);
    CHECK(back.to_text() == text);
    CHECK(back.to_map() == c.to_map());
    CHECK(back.rho == 0.30000000000000004);
    CHECK(back.seed == 18446744073709551615ull);
    CHECK(back.output_dir == "some dir/x");
    CHECK(*back.hyper.noise_df == 5.0);

    const RunConfig d;
    CHECK(RunConfig::from_text(d.to_text()).to_text() == d.to_text());
    CHECK(d.to_map().size() == config_keys().size());
    for (const auto& key : config_keys()) CHECK(d.to_map().count(key) == 1);
}

TEST_CASE("config errors and precedence") {
    RunConfig c;
    CHECK_THROWS_WITH_AS(c.set("prior.bogus", "1"), doctest::Contains("prior.bogus"), ValidationError);
    CHECK_THROWS_AS(c.set("kernel.rho", "abc"), ValidationError);
    CHECK_THROWS_AS(c.set("inference.mode", "mcmc"), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_text("nonsense line\n"), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_text("what.ever = 3\n"), ValidationError);

    // Absent keys keep defaults; comments and blank lines are ignored.
    const RunConfig file = RunConfig::from_text("# comment\n\nprior.sigma_lev = 0.4\nrun.seed = 9\n");
    CHECK(file.hyper.sigma_lev == 0.4);
    CHECK(file.seed == 9);
    CHECK(file.hyper.sigma_reg == RunConfig{}.hyper.sigma_reg);

    const auto path = std::filesystem::temp_directory_path() / "btvc_test_config.txt";
    std::ofstream(path) << "prior.sigma_lev = 0.4\nrun.seed = 9\n";
    RunConfig layered = load_config(path.string());
    layered.set("run.seed", "11");
    CHECK(layered.seed == 11);
    CHECK(layered.hyper.sigma_lev == 0.4);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_config(path.string()), ValidationError);
}

TEST_CASE("derived seeds") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(42, i));
    CHECK(seen.size() == 1000u);
    CHECK(derive_seed(42, 3) == derive_seed(42, 3));
    CHECK(derive_seed(42, 3) != derive_seed(43, 3));
    const RunConfig c = quick_config(5);
    CHECK(split_config(c, 2).seed == derive_seed(5, 102));
    CHECK(split_config(c, 2).hyper.sigma_lev == c.hyper.sigma_lev);
}

TEST_CASE("fnv1a reference values") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("decomposition adds up to the fitted log response") {
    const auto data = multiplicative_data(1);
    const FittedModel fitted = fit_frame(data.frame, quick_config(2));
    const Decomposition dec = decompose_fit(fitted);
    CHECK((dec.trend + dec.seasonality + dec.regression - dec.fitted()).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((dec.per_channel.rowwise().sum() - dec.regression).cwiseAbs().maxCoeff() <= 1e-10);

    std::ostringstream csv;
    write_decomposition_csv(csv, dec, data.frame.timestamps(), data.frame.regressor_names());
    std::istringstream in(csv.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "date,trend,seasonality,regression,fitted,contrib_x1,contrib_x2,beta_x1,beta_x2");
    int rows = 0;
    while (std::getline(in, line)) {
        std::vector<double> cells;
        std::stringstream ss(line.substr(line.find(',') + 1));
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(std::strtod(cell.c_str(), nullptr));
        CHECK(std::abs(cells[0] + cells[1] + cells[2] - cells[3]) <= 1e-10);
        ++rows;
    }
    CHECK(rows == 160);
}

TEST_CASE("fit documents reproduce forecasts bit-exactly") {
    const auto data = multiplicative_data(3, 188);
    const TimeSeriesFrame train = data.frame.slice(0, 160);
    const Eigen::MatrixXd future = data.frame.regressors().bottomRows(28);
    for (const char* mode : {"map", "svi"}) {
        RunConfig c = quick_config(4);
        c.set("inference.mode", mode);
        const FittedModel fitted = fit_frame(train, c);
        const FittedModel loaded = load_fit_document(reload(fitted));
        const Eigen::VectorXd a = forecast(fitted, future);
        const Eigen::VectorXd b = forecast(loaded, future);
        CHECK((a.array() == b.array()).all());
        CHECK(a.size() == 28);
        CHECK((loaded.fit.theta.array() == fitted.fit.theta.array()).all());
        CHECK(loaded.fit.trace == fitted.fit.trace);
        CHECK(loaded.config.to_text() == fitted.config.to_text());
        CHECK(loaded.first_date == train.timestamps().front());
        CHECK(loaded.setup.rows == 160);
        CHECK(fit_document(loaded).dump() == fit_document(fitted).dump());

        const Decomposition da = decompose_fit(fitted);
        const Decomposition db = decompose_frame(loaded, train);
        CHECK((da.fitted().array() == db.fitted().array()).all());

        if (std::string(mode) == "svi") {
            const std::vector<double> levels{0.1, 0.5, 0.9};
            const Eigen::MatrixXd qa = forecast_quantiles(fitted, future, levels, 200, 6);
            const Eigen::MatrixXd qb = forecast_quantiles(loaded, future, levels, 200, 6);
            CHECK((qa.array() == qb.array()).all());
            CHECK((qa.col(0).array() <= qa.col(1).array()).all());
            CHECK((qa.col(1).array() <= qa.col(2).array()).all());
        } else {
            CHECK_THROWS_AS(forecast_quantiles(fitted, future, {0.5}, 10, 1), ValidationError);
        }
    }
    CHECK_THROWS_AS(load_fit_document(nlohmann::json::parse(R"({"format": "other"})")), ValidationError);
    CHECK_THROWS_AS(load_fit_document(nlohmann::json::parse("[1, 2]")), ValidationError);
}

TEST_CASE("fit is deterministic under a fixed seed") {
    const auto data = multiplicative_data(5);
    RunConfig c = quick_config(6);
    c.set("inference.mode", "svi");
    CHECK(fit_document(fit_frame(data.frame, c)).dump() == fit_document(fit_frame(data.frame, c)).dump());
}

TEST_CASE("a saved split fit reproduces the backtest forecast") {
    const auto data = multiplicative_data(7, 200);
    const RunConfig c = quick_config(8);
    const BacktestPlan plan{28, 3, 60, 0};
    const BacktestResult bt = backtest(data.frame, btvc_forecaster(c), plan);
    const int k = 1;
    const SplitBounds& s = bt.splits[k];
    const FittedModel fitted = fit_frame(data.frame.slice(0, s.train_end), split_config(c, k));
    const FittedModel loaded = load_fit_document(reload(fitted));
    const Eigen::VectorXd f = forecast(loaded, data.frame.regressors().middleRows(s.test_first - 1, 28));
    CHECK((f.array() == bt.forecasts[k].array()).all());
}

TEST_CASE("prior windows outside a backtest training prefix are dropped") {
    const auto data = multiplicative_data(9, 200);
    const RunConfig c = quick_config(10);
    const std::vector<PriorWindow> windows{{"x1", 20, 40, 0.15, 0.05}, {"x2", 165, 185, 0.15, 0.05}};
    const BacktestPlan plan{28, 1, 60, 0};
    const BacktestResult bt = backtest(data.frame, btvc_forecaster(c, windows), plan);
    const FittedModel fitted =
        fit_frame(data.frame.slice(0, 172), split_config(c, 0), {windows.front()});
    CHECK((forecast(fitted, data.frame.regressors().bottomRows(28)).array() == bt.forecasts[0].array()).all());
}
