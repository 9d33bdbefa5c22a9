// btvc command-line tool: simulate, fit, predict, decompose, backtest.

#include "btvc/calibration.hpp"
#include "btvc/errors.hpp"
#include "btvc/evaluation.hpp"
#include "btvc/pipeline.hpp"
#include "btvc/simulation.hpp"
#include "btvc/timeframe.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace btvc;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Common {
    std::string data;
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c, bool needs_data) {
    auto* data = cmd->add_option("--data", c.data, "Input CSV");
    if (needs_data) data->required();
    cmd->add_option("--config", c.config, "Config file (key = value lines)");
    cmd->add_option("--out", c.out, "Output directory");
    cmd->add_option("--seed", c.seed, "Root seed");
    cmd->add_option("--set", c.overrides, "Config override key=value (repeatable)");
}

RunConfig resolve_config(const Common& c) {
    RunConfig config = c.config.empty() ? RunConfig{} : load_config(c.config);
    for (const auto& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
        config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed) config.seed = *c.seed;
    if (!c.out.empty()) config.output_dir = c.out;
    return config;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    out << text;
}

TimeSeriesFrame load_frame(const std::string& path, const CsvSchema& schema) {
    std::istringstream in(read_file(path));
    return read_csv(in, schema);
}

std::vector<PriorWindow> load_windows(const RunConfig& config, const TimeSeriesFrame& frame) {
    if (config.prior_windows_path.empty()) return {};
    std::istringstream in(read_file(config.prior_windows_path));
    return read_prior_windows(in, frame);
}

std::vector<Date> calendar(Date first, int step_days, int rows) {
    std::vector<Date> out;
    for (int t = 0; t < rows; ++t) out.push_back(first + std::chrono::days{static_cast<long>(t) * step_days});
    return out;
}

nlohmann::json input_entry(const std::string& path) {
    return {{"path", path}, {"fnv1a", fnv1a_hex(read_file(path))}};
}

nlohmann::json manifest(const std::string& command, const RunConfig& config, nlohmann::json inputs,
                        nlohmann::json outputs) {
    return {{"tool", "btvc"},
            {"version", kVersion},
            {"command", command},
            {"seed", config.seed},
            {"config", config.to_map()},
            {"inputs", std::move(inputs)},
            {"outputs", std::move(outputs)},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)}};
}

std::string decomposition_text(const Decomposition& dec, const std::vector<Date>& dates,
                               const std::vector<std::string>& channels) {
    std::ostringstream out;
    write_decomposition_csv(out, dec, dates, channels);
    return out.str();
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string kind = "rw";
    std::string out = "sim";
    std::uint64_t seed = 0;
    int T = 0;
    int P = -1;
    double noise_sd = -1.0;
    int sparse_channel = 1;
    int sparse_start = 101;
    int sparse_end = 200;
    double sparse_probability = 1.0;
    std::string start_date = "2020-01-01";
};

int cmd_simulate(const SimulateArgs& a) {
    std::ostringstream data, truth;
    if (a.kind == "multiplicative") {
        MultiplicativeSimConfig c;
        c.seed = a.seed;
        c.start_date = a.start_date;
        if (a.T > 0) c.T = a.T;
        if (a.P >= 0) c.P = a.P;
        if (a.noise_sd >= 0) c.noise_sd = a.noise_sd;
        const auto sim = simulate_multiplicative(c);
        write_csv(data, sim.frame);
        write_truth_csv(truth, sim.frame, sim.true_trend, sim.true_coefficients);
    } else if (a.kind == "rw" || a.kind == "sparse") {
        SimConfig c;
        c.seed = a.seed;
        c.start_date = a.start_date;
        if (a.T > 0) c.T = a.T;
        if (a.P >= 0) c.P = a.P;
        if (a.noise_sd >= 0) c.noise_sd = a.noise_sd;
        if (a.kind == "sparse") {
            c.sparsity = SparsitySchedule{a.sparse_channel - 1, a.sparse_start, a.sparse_end, a.sparse_probability};
        }
        const auto sim = a.kind == "sparse" ? simulate_sparse(c) : simulate_rw(c);
        write_csv(data, sim.frame);
        write_truth_csv(truth, sim.frame, sim.true_trend, sim.true_coefficients);
    } else {
        throw ValidationError("unknown simulation kind '" + a.kind + "' (rw, sparse, multiplicative)");
    }
    write_file(fs::path(a.out) / "data.csv", data.str());
    write_file(fs::path(a.out) / "truth.csv", truth.str());
    return 0;
}

int cmd_fit(const Common& c) {
    const RunConfig config = resolve_config(c);
    const TimeSeriesFrame frame = load_frame(c.data, config.schema);
    const auto windows = load_windows(config, frame);
    const FittedModel fitted = fit_frame(frame, config, windows);

    const fs::path dir(config.output_dir);
    const std::string doc = fit_document(fitted).dump(2) + "\n";
    const std::string dec =
        decomposition_text(decompose_fit(fitted), frame.timestamps(), fitted.setup.channels);
    write_file(dir / "fit.json", doc);
    write_file(dir / "decomposition.csv", dec);

    nlohmann::json inputs{{"data", input_entry(c.data)}};
    if (!config.prior_windows_path.empty()) inputs["prior_windows"] = input_entry(config.prior_windows_path);
    const nlohmann::json outputs{{"fit.json", fnv1a_hex(doc)}, {"decomposition.csv", fnv1a_hex(dec)}};
    write_file(dir / "manifest.json", manifest("fit", config, inputs, outputs).dump(2) + "\n");
    std::cout << "fit: termination=" << to_string(fitted.fit.termination) << " iterations=" << fitted.fit.trace.size()
              << " out=" << dir.string() << "\n";
    return 0;
}

struct PredictArgs {
    std::string fit;
    std::string future;
    std::string out = "out";
    int horizon = -1;
    std::vector<double> quantiles;
    int draws = 0;
    std::optional<std::uint64_t> seed;
};

int cmd_predict(const PredictArgs& a) {
    const FittedModel fitted = load_fit_document(nlohmann::json::parse(read_file(a.fit)));
    if (!a.quantiles.empty() && !fitted.fit.variational) {
        throw ValidationError("quantiles need an SVI fit; refit with --set inference.mode=svi");
    }
    for (double q : a.quantiles) {
        if (!(q > 0.0 && q < 1.0)) throw ValidationError("quantile levels must lie in (0, 1)");
    }
    if (a.horizon < 0) throw ValidationError("--horizon must be >= 0");

    const auto P = static_cast<Eigen::Index>(fitted.setup.channels.size());
    Eigen::MatrixXd future(0, P);
    const Date next = fitted.first_date + std::chrono::days{static_cast<long>(fitted.setup.rows) * fitted.step_days};
    const std::vector<Date> dates = calendar(next, fitted.step_days, a.horizon);
    if (a.horizon > 0) {
        if (a.future.empty()) throw ValidationError("--future is required when --horizon > 0");
        std::istringstream in(read_file(a.future));
        const RegressorTable table = read_regressor_csv(in, fitted.config.schema.date_column, fitted.setup.channels);
        if (table.values.rows() < a.horizon) {
            throw ValidationError("horizon " + std::to_string(a.horizon) + " exceeds the " +
                                  std::to_string(table.values.rows()) + " future regressor rows supplied");
        }
        for (int t = 0; t < a.horizon; ++t) {
            if (table.timestamps[static_cast<std::size_t>(t)] != dates[static_cast<std::size_t>(t)]) {
                throw ValidationError("future row " + std::to_string(t + 1) + ": expected date " +
                                      format_date(dates[static_cast<std::size_t>(t)]));
            }
        }
        future = table.values.topRows(a.horizon);
    }

    const Eigen::VectorXd point = forecast(fitted, future);
    Eigen::MatrixXd q;
    if (!a.quantiles.empty()) {
        const int draws = a.draws > 0 ? a.draws : fitted.config.draws;
        q = forecast_quantiles(fitted, future, a.quantiles, draws, a.seed.value_or(fitted.config.seed));
    }
    std::ostringstream out;
    out << "date,forecast";
    for (double level : a.quantiles) out << ",q" << format_double(level);
    out << '\n';
    for (int t = 0; t < a.horizon; ++t) {
        out << format_date(dates[static_cast<std::size_t>(t)]) << ',' << format_double(point[t]);
        for (Eigen::Index k = 0; k < q.cols(); ++k) out << ',' << format_double(q(t, k));
        out << '\n';
    }
    write_file(fs::path(a.out) / "forecast.csv", out.str());
    return 0;
}

int cmd_decompose(const std::string& fit_path, const std::string& data, const std::string& out) {
    const FittedModel fitted = load_fit_document(nlohmann::json::parse(read_file(fit_path)));
    CsvSchema schema = fitted.config.schema;
    schema.regressor_columns = fitted.setup.channels;
    const TimeSeriesFrame frame = load_frame(data, schema);
    const Decomposition dec = decompose_frame(fitted, frame);
    write_file(fs::path(out) / "decomposition.csv", decomposition_text(dec, frame.timestamps(), fitted.setup.channels));
    return 0;
}

struct BacktestArgs {
    BacktestPlan plan;
    std::string model = "btvc";
    int period = 7;
};

int cmd_backtest(const Common& c, const BacktestArgs& a) {
    const RunConfig config = resolve_config(c);
    const TimeSeriesFrame frame = load_frame(c.data, config.schema);
    Forecaster forecaster;
    if (a.model == "btvc") {
        forecaster = btvc_forecaster(config, load_windows(config, frame));
    } else if (a.model == "seasonal_naive") {
        const int period = a.period;
        forecaster = [period](const TimeSeriesFrame& train, const Eigen::MatrixXd& future, int) {
            return seasonal_naive_forecast(train.response(), period, static_cast<int>(future.rows()));
        };
    } else {
        throw ValidationError("unknown backtest model '" + a.model + "' (btvc, seasonal_naive)");
    }
    const BacktestResult result = backtest(frame, forecaster, a.plan);

    const fs::path dir(config.output_dir);
    std::ostringstream report, forecasts;
    write_report_csv(report, result);
    forecasts << "split,date,actual,forecast\n";
    for (std::size_t k = 0; k < result.splits.size(); ++k) {
        const auto& s = result.splits[k];
        for (int t = s.test_first; t <= s.test_last; ++t) {
            forecasts << k + 1 << ',' << format_date(frame.timestamps()[static_cast<std::size_t>(t - 1)]) << ','
                      << format_double(frame.response()[t - 1]) << ','
                      << format_double(result.forecasts[k][t - s.test_first]) << '\n';
        }
    }
    write_file(dir / "backtest.csv", report.str());
    write_file(dir / "forecasts.csv", forecasts.str());
    const nlohmann::json plan{{"horizon", a.plan.horizon},
                              {"splits", a.plan.splits},
                              {"min_train", a.plan.min_train},
                              {"stride", a.plan.effective_stride()},
                              {"model", a.model}};
    auto m = manifest("backtest", config, {{"data", input_entry(c.data)}},
                      {{"backtest.csv", fnv1a_hex(report.str())}, {"forecasts.csv", fnv1a_hex(forecasts.str())}});
    m["plan"] = plan;
    write_file(dir / "manifest.json", m.dump(2) + "\n");
    print_report_table(std::cout, result);
    return 0;
}

void report_error(const char* kind, const std::string& message) {
    std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian time-varying coefficient regression for time series"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Write a simulated dataset and its ground truth");
    simulate->add_option("--kind", sim.kind, "rw | sparse | multiplicative")->capture_default_str();
    simulate->add_option("--out", sim.out, "Output directory")->capture_default_str();
    simulate->add_option("--seed", sim.seed, "Seed")->capture_default_str();
    simulate->add_option("--T", sim.T, "Series length (default 300, multiplicative 400)");
    simulate->add_option("--P", sim.P, "Channel count (default 3, multiplicative 2)");
    simulate->add_option("--noise-sd", sim.noise_sd, "Observation noise sd");
    simulate->add_option("--sparse-channel", sim.sparse_channel, "1-based channel to zero (sparse)")->capture_default_str();
    simulate->add_option("--sparse-start", sim.sparse_start, "First zeroed step (sparse)")->capture_default_str();
    simulate->add_option("--sparse-end", sim.sparse_end, "Last zeroed step (sparse)")->capture_default_str();
    simulate->add_option("--sparse-probability", sim.sparse_probability, "Zeroing probability (sparse)")
        ->capture_default_str();
    simulate->add_option("--start-date", sim.start_date, "First date")->capture_default_str();

    Common fit_common;
    auto* fit = app.add_subcommand("fit", "Fit the model and write fit.json, decomposition.csv, manifest.json");
    add_common(fit, fit_common, true);

    PredictArgs pred;
    auto* predict = app.add_subcommand("predict", "Forecast from a saved fit");
    predict->add_option("--fit", pred.fit, "fit.json from the fit command")->required();
    predict->add_option("--future", pred.future, "CSV with date and future regressor columns");
    predict->add_option("--horizon,-H", pred.horizon, "Forecast horizon")->required();
    predict->add_option("--quantiles", pred.quantiles, "Quantile levels (SVI fits only)")->delimiter(',');
    predict->add_option("--draws", pred.draws, "Posterior draws for quantiles (default from the fit config)");
    predict->add_option("--out", pred.out, "Output directory")->capture_default_str();
    predict->add_option("--seed", pred.seed, "Seed for predictive draws");

    std::string dec_fit, dec_data, dec_out = "out";
    auto* decompose = app.add_subcommand("decompose", "Decompose the training rows of a saved fit");
    decompose->add_option("--fit", dec_fit, "fit.json from the fit command")->required();
    decompose->add_option("--data", dec_data, "Training CSV")->required();
    decompose->add_option("--out", dec_out, "Output directory")->capture_default_str();

    Common bt_common;
    BacktestArgs bt;
    auto* back = app.add_subcommand("backtest", "Expanding-window backtest with SMAPE per split");
    add_common(back, bt_common, true);
    back->add_option("--horizon", bt.plan.horizon, "Test horizon")->capture_default_str();
    back->add_option("--splits", bt.plan.splits, "Number of splits")->capture_default_str();
    back->add_option("--min-train", bt.plan.min_train, "Minimum training rows")->capture_default_str();
    back->add_option("--stride", bt.plan.stride, "Distance between test windows (0 = horizon)")->capture_default_str();
    back->add_option("--model", bt.model, "btvc | seasonal_naive")->capture_default_str();
    back->add_option("--period", bt.period, "Seasonal naive period")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        report_error("validation", e.what());
        return 1;
    }

    try {
        if (*simulate) return cmd_simulate(sim);
        if (*fit) return cmd_fit(fit_common);
        if (*predict) return cmd_predict(pred);
        if (*decompose) return cmd_decompose(dec_fit, dec_data, dec_out);
        if (*back) return cmd_backtest(bt_common, bt);
    } catch (const NumericalError& e) {
        report_error("numerical", e.what());
        return 2;
    } catch (const ValidationError& e) {
        report_error("validation", e.what());
        return 1;
    } catch (const nlohmann::json::exception& e) {
        report_error("validation", e.what());
        return 1;
    } catch (const std::exception& e) {
        report_error("validation", e.what());
        return 1;
    }
    return 1;
}
