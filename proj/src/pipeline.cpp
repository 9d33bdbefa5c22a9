#include "btvc/pipeline.hpp"

#include "btvc/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

namespace btvc {

namespace {

constexpr const char* kFitFormat = "btvc-fit-v1";

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ValidationError("config '" + key + "': expected a number, got '" + v + "'");
    }
    return out;
}

long long parse_int(const std::string& key, const std::string& v) {
    long long out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ValidationError("config '" + key + "': expected an integer, got '" + v + "'");
    }
    return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ValidationError("config '" + key + "': expected a nonnegative integer, got '" + v + "'");
    }
    return out;
}

std::string knots_text(const ComponentKnots& k) {
    if (!k.enabled) return "none";
    if (const auto* c = std::get_if<KnotCount>(&k.spacing)) return "count:" + std::to_string(c->count);
    return "distance:" + std::to_string(std::get<KnotDistance>(k.spacing).distance);
}

ComponentKnots parse_knots(const std::string& key, const std::string& v) {
    if (v == "none") return ComponentKnots{false, KnotDistance{1}};
    const auto colon = v.find(':');
    if (colon == std::string::npos) throw ValidationError("config '" + key + "': expected distance:<d>, count:<J> or none");
    const std::string kind = v.substr(0, colon);
    const int n = static_cast<int>(parse_int(key, v.substr(colon + 1)));
    if (kind == "distance") return ComponentKnots{true, KnotDistance{n}};
    if (kind == "count") return ComponentKnots{true, KnotCount{n}};
    throw ValidationError("config '" + key + "': unknown spacing '" + kind + "'");
}

std::string seasonality_text(const std::vector<FourierSpec>& specs) {
    if (specs.empty()) return "none";
    std::string out;
    for (const auto& s : specs) {
        if (!out.empty()) out += ',';
        out += format_double(s.period) + ":" + std::to_string(s.order);
    }
    return out;
}

std::vector<FourierSpec> parse_seasonality(const std::string& key, const std::string& v) {
    std::vector<FourierSpec> out;
    if (v == "none") return out;
    for (const auto& item : split(v, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ValidationError("config '" + key + "': expected period:order");
        FourierSpec spec{parse_double(key, item.substr(0, colon)),
                         static_cast<int>(parse_int(key, item.substr(colon + 1)))};
        spec.validate();
        out.push_back(spec);
    }
    return out;
}

std::string optional_text(const std::optional<double>& v) { return v ? format_double(*v) : "0"; }

std::optional<double> parse_optional(const std::string& key, const std::string& v) {
    const double d = parse_double(key, v);
    if (d < 0.0) throw ValidationError("config '" + key + "' must be >= 0 (0 disables)");
    return d > 0.0 ? std::optional<double>(d) : std::nullopt;
}

struct Field {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <class T>
Field real_field(std::string key, T RunConfig::*member) {
    return {key, [member](const RunConfig& c) { return format_double(c.*member); },
            [member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = parse_double(k, v); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back({"data.date_column", [](const RunConfig& c) { return c.schema.date_column; },
                     [](RunConfig& c, const std::string&, const std::string& v) { c.schema.date_column = v; }});
        f.push_back({"data.response_column", [](const RunConfig& c) { return c.schema.response_column; },
                     [](RunConfig& c, const std::string&, const std::string& v) { c.schema.response_column = v; }});
        f.push_back({"data.regressor_columns",
                     [](const RunConfig& c) {
                         std::string out;
                         for (const auto& n : c.schema.regressor_columns) out += (out.empty() ? "" : ",") + n;
                         return out;
                     },
                     [](RunConfig& c, const std::string&, const std::string& v) {
                         c.schema.regressor_columns = split(v, ',');
                     }});
        f.push_back({"model.link", [](const RunConfig& c) { return std::string(c.link == Link::log ? "log" : "identity"); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                         if (v == "log") c.link = Link::log;
                         else if (v == "identity") c.link = Link::identity;
                         else throw ValidationError("config '" + k + "': expected log or identity");
                     }});
        f.push_back({"model.zero_policy",
                     [](const RunConfig& c) {
                         return std::string(c.transform.policy == ZeroPolicy::shift1 ? "shift1" : "floor");
                     },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                         if (v == "shift1") c.transform.policy = ZeroPolicy::shift1;
                         else if (v == "floor") c.transform.policy = ZeroPolicy::floor;
                         else throw ValidationError("config '" + k + "': expected shift1 or floor");
                     }});
        f.push_back({"model.floor_epsilon", [](const RunConfig& c) { return format_double(c.transform.floor_epsilon); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                         c.transform.floor_epsilon = parse_double(k, v);
                     }});
        f.push_back({"knots.anchor",
                     [](const RunConfig& c) { return std::string(c.anchor == KnotAnchor::end ? "end" : "start"); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                         if (v == "end") c.anchor = KnotAnchor::end;
                         else if (v == "start") c.anchor = KnotAnchor::start;
                         else throw ValidationError("config '" + k + "': expected end or start");
                     }});
        f.push_back({"knots.level", [](const RunConfig& c) { return knots_text(c.level_knots); },
                     [](RunConfig& c, const std::string& k, const std::string& v) { c.level_knots = parse_knots(k, v); }});
        f.push_back({"knots.seasonal", [](const RunConfig& c) { return knots_text(c.seasonal_knots); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                         c.seasonal_knots = parse_knots(k, v);
                     }});
        f.push_back({"knots.regression", [](const RunConfig& c) { return knots_text(c.regression_knots); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                         c.regression_knots = parse_knots(k, v);
                     }});
        f.push_back(real_field("kernel.rho", &RunConfig::rho));
        f.push_back({"seasonality", [](const RunConfig& c) { return seasonality_text(c.seasonality); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                         c.seasonality = parse_seasonality(k, v);
                     }});
        auto hyper = [&f](const std::string& key, double HyperParams::*member) {
            f.push_back({key, [member](const RunConfig& c) { return format_double(c.hyper.*member); },
                         [member](RunConfig& c, const std::string& k, const std::string& v) {
                             c.hyper.*member = parse_double(k, v);
                         }});
        };
        hyper("prior.sigma_lev", &HyperParams::sigma_lev);
        hyper("prior.sigma_seas", &HyperParams::sigma_seas);
        hyper("prior.mu_pool", &HyperParams::mu_pool);
        hyper("prior.sigma_pool", &HyperParams::sigma_pool);
        hyper("prior.sigma_reg", &HyperParams::sigma_reg);
        f.push_back(real_field("prior.init_scale_lev", &RunConfig::init_scale_lev));
        f.push_back({"prior.noise_df", [](const RunConfig& c) { return optional_text(c.hyper.noise_df); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                         c.hyper.noise_df = parse_optional(k, v);
                     }});
        f.push_back({"prior.laplace_smoothing", [](const RunConfig& c) { return optional_text(c.laplace_smoothing); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                         c.laplace_smoothing = parse_optional(k, v);
                     }});
        f.push_back({"inference.mode",
                     [](const RunConfig& c) { return std::string(c.mode == InferenceMode::map ? "map" : "svi"); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                         if (v == "map") c.mode = InferenceMode::map;
                         else if (v == "svi") c.mode = InferenceMode::svi;
                         else throw ValidationError("config '" + k + "': expected map or svi");
                     }});
        auto map_real = [&f](const std::string& key, double MapConfig::*member) {
            f.push_back({key, [member](const RunConfig& c) { return format_double(c.map.*member); },
                         [member](RunConfig& c, const std::string& k, const std::string& v) {
                             c.map.*member = parse_double(k, v);
                         }});
        };
        auto map_int = [&f](const std::string& key, int MapConfig::*member) {
            f.push_back({key, [member](const RunConfig& c) { return std::to_string(c.map.*member); },
                         [member](RunConfig& c, const std::string& k, const std::string& v) {
                             c.map.*member = static_cast<int>(parse_int(k, v));
                         }});
        };
        map_real("inference.map_step_size", &MapConfig::step_size);
        map_int("inference.map_max_iterations", &MapConfig::max_iterations);
        map_real("inference.map_tolerance", &MapConfig::tolerance);
        map_int("inference.map_window", &MapConfig::window);
        map_int("inference.map_restarts", &MapConfig::restarts);
        map_real("inference.map_restart_jitter", &MapConfig::restart_jitter);
        map_int("inference.map_polish_iterations", &MapConfig::polish_iterations);
        auto svi_real = [&f](const std::string& key, double SviConfig::*member) {
            f.push_back({key, [member](const RunConfig& c) { return format_double(c.svi.*member); },
                         [member](RunConfig& c, const std::string& k, const std::string& v) {
                             c.svi.*member = parse_double(k, v);
                         }});
        };
        auto svi_int = [&f](const std::string& key, int SviConfig::*member) {
            f.push_back({key, [member](const RunConfig& c) { return std::to_string(c.svi.*member); },
                         [member](RunConfig& c, const std::string& k, const std::string& v) {
                             c.svi.*member = static_cast<int>(parse_int(k, v));
                         }});
        };
        svi_int("inference.svi_iterations", &SviConfig::iterations);
        svi_int("inference.svi_samples", &SviConfig::samples);
        svi_real("inference.svi_step_size", &SviConfig::step_size);
        svi_real("inference.svi_init_log_sd", &SviConfig::init_log_sd);
        svi_real("inference.svi_average_fraction", &SviConfig::average_fraction);
        f.push_back({"inference.draws", [](const RunConfig& c) { return std::to_string(c.draws); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                         c.draws = static_cast<int>(parse_int(k, v));
                     }});
        f.push_back({"calibration.prior_windows", [](const RunConfig& c) { return c.prior_windows_path; },
                     [](RunConfig& c, const std::string&, const std::string& v) { c.prior_windows_path = v; }});
        f.push_back({"run.seed", [](const RunConfig& c) { return std::to_string(c.seed); },
                     [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_uint(k, v); }});
        f.push_back({"run.output_dir", [](const RunConfig& c) { return c.output_dir; },
                     [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }});
        return f;
    }();
    return table;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vector(const nlohmann::json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector_json(m.row(r).transpose()));
    return nlohmann::json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Eigen::MatrixXd json_matrix(const nlohmann::json& j) {
    Eigen::MatrixXd m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
    for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r) = json_vector(j.at("data").at(r)).transpose();
    return m;
}

std::optional<KnotGrid> make_grid(const ComponentKnots& k, int rows, KnotAnchor anchor) {
    if (!k.enabled) return std::nullopt;
    return build_grid(rows, k.spacing, anchor);
}

double default_rho(const KnotGrid& grid) {
    const auto& t = grid.times();
    if (t.size() < 2) return 0.5 * grid.series_length();
    return 0.5 * static_cast<double>(t.back() - t.front()) / static_cast<double>(t.size() - 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& f : fields()) k.push_back(f.key);
        return k;
    }();
    return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (f.key == key) {
            f.set(*this, key, value);
            return;
        }
    }
    throw ValidationError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> RunConfig::to_map() const {
    std::map<std::string, std::string> out;
    for (const auto& f : fields()) out[f.key] = f.get(*this);
    return out;
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
    return out;
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig config;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return config;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return RunConfig::from_text(ss.str());
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
    std::uint64_t x = root + 0x9E3779B97F4A7C15ULL * (index + 1);
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// ---------------------------------------------------------------------------
// Setup and fitting

Eigen::VectorXd ModelSetup::model_response(const TimeSeriesFrame& frame) const {
    if (link == Link::log) return to_log_frame(frame, transform).log_response;
    return frame.response();
}

Eigen::MatrixXd ModelSetup::model_regressors(const Eigen::MatrixXd& raw) const {
    if (link == Link::log) return transform.regressors(raw);
    return raw;
}

ModelSetup make_setup(const TimeSeriesFrame& frame, const RunConfig& config) {
    ModelSetup s;
    s.rows = static_cast<int>(frame.rows());
    s.link = config.link;
    s.transform = config.transform;
    s.channels = frame.regressor_names();
    s.structure.level_grid = make_grid(config.level_knots, s.rows, config.anchor);
    if (!config.seasonality.empty()) {
        if (!config.seasonal_knots.enabled) throw ValidationError("seasonality needs knots.seasonal");
        s.structure.fourier = config.seasonality;
        s.structure.seasonal_grid = make_grid(config.seasonal_knots, s.rows, config.anchor);
    }
    if (frame.channels() > 0) {
        if (!config.regression_knots.enabled) throw ValidationError("regressors need knots.regression");
        s.structure.regression_grid = make_grid(config.regression_knots, s.rows, config.anchor);
        s.structure.rho = config.rho > 0.0 ? config.rho : default_rho(*s.structure.regression_grid);
    }
    s.hyper = config.hyper;
    if (config.init_scale_lev > 0.0) {
        s.hyper.init_scale_lev = config.init_scale_lev;
    } else {
        const Eigen::VectorXd y = s.model_response(frame);
        const double mean = y.mean();
        const double sd = y.size() > 1 ? std::sqrt((y.array() - mean).square().sum() / (y.size() - 1)) : 0.0;
        s.hyper.init_scale_lev = sd > 0.0 ? 10.0 * sd : 1.0;
    }
    s.hyper.validate();
    return s;
}

FittedModel fit_frame(const TimeSeriesFrame& frame, const RunConfig& config, const std::vector<PriorWindow>& windows) {
    FittedModel out;
    out.config = config;
    out.setup = make_setup(frame, config);
    out.windows = windows;
    out.first_date = frame.timestamps().front();
    out.step_days = frame.step_days();

    ModelDesign design = out.setup.structure.design(out.setup.model_regressors(frame.regressors()));
    PriorOptions options;
    options.laplace_smoothing = config.laplace_smoothing;
    CalibrationPrior calibration = apply_prior_windows(windows, out.setup.channels, out.setup.rows);
    out.model = std::make_unique<Model>(std::move(design), out.setup.model_response(frame), out.setup.hyper, options,
                                        std::move(calibration));
    out.layout = std::make_unique<ParameterLayout>(*out.model);

    MapConfig map = config.map;
    map.seed = config.seed;
    if (config.mode == InferenceMode::svi) {
        SviConfig svi = config.svi;
        svi.seed = derive_seed(config.seed, 1);
        out.fit = fit_svi(*out.model, *out.layout, map, svi);
    } else {
        out.fit = fit_map(*out.model, *out.layout, map);
    }
    out.fit.seed = config.seed;
    return out;
}

Eigen::VectorXd forecast(const FittedModel& fitted, const Eigen::MatrixXd& future_regressors) {
    if (future_regressors.cols() != static_cast<Eigen::Index>(fitted.setup.channels.size())) {
        throw ValidationError("future regressors have the wrong number of columns");
    }
    if (future_regressors.rows() == 0) return Eigen::VectorXd(0);
    const ModelDesign design =
        fitted.setup.structure.design(fitted.setup.model_regressors(future_regressors), fitted.setup.rows + 1);
    return predict(fitted.layout->to_params(fitted.fit.point()), design, fitted.setup.link);
}

Eigen::MatrixXd forecast_quantiles(const FittedModel& fitted, const Eigen::MatrixXd& future_regressors,
                                   const std::vector<double>& levels, int draws, std::uint64_t seed) {
    if (!fitted.fit.variational) {
        throw ValidationError("quantile forecasts need an SVI fit (set inference.mode = svi)");
    }
    const auto h = future_regressors.rows();
    Eigen::MatrixXd out(h, static_cast<Eigen::Index>(levels.size()));
    if (h == 0) return out;
    const ModelDesign design =
        fitted.setup.structure.design(fitted.setup.model_regressors(future_regressors), fitted.setup.rows + 1);
    const PosteriorDraws post = draw_posterior(fitted.fit, *fitted.layout, design, draws, seed);
    std::mt19937_64 rng(derive_seed(seed, 2));
    std::normal_distribution<double> normal;
    const auto& df = fitted.setup.hyper.noise_df;
    std::vector<Eigen::MatrixXd> paths;
    paths.reserve(post.draws.size());
    for (const auto& p : post.draws) {
        Eigen::VectorXd mean = decompose(p, design).fitted();
        for (Eigen::Index t = 0; t < h; ++t) {
            double eps = 0.0;
            if (df) {
                std::student_t_distribution<double> student(*df);
                eps = student(rng);
            } else {
                eps = normal(rng);
            }
            mean[t] += p.sigma_obs * eps;
        }
        if (fitted.setup.link == Link::log) mean = mean.array().exp().matrix();
        paths.emplace_back(mean);
    }
    for (std::size_t q = 0; q < levels.size(); ++q) out.col(static_cast<Eigen::Index>(q)) = quantile_curve(paths, levels[q]);
    return out;
}

Decomposition decompose_fit(const FittedModel& fitted) {
    if (!fitted.model) throw ValidationError("fit has no training data attached; use decompose_frame");
    return decompose(fitted.layout->to_params(fitted.fit.point()), fitted.model->design());
}

Decomposition decompose_frame(const FittedModel& fitted, const TimeSeriesFrame& frame) {
    if (frame.rows() != fitted.setup.rows) {
        throw ValidationError("decompose needs the " + std::to_string(fitted.setup.rows) + " training rows, got " +
                              std::to_string(frame.rows()));
    }
    if (frame.timestamps().front() != fitted.first_date) {
        throw ValidationError("data does not start at the fit's first training date " + format_date(fitted.first_date));
    }
    const ModelDesign design = fitted.setup.structure.design(fitted.setup.model_regressors(frame.regressors()));
    return decompose(fitted.layout->to_params(fitted.fit.point()), design);
}

RunConfig split_config(const RunConfig& config, int split) {
    RunConfig out = config;
    out.seed = derive_seed(config.seed, static_cast<std::uint64_t>(split) + 100);
    return out;
}

Forecaster btvc_forecaster(const RunConfig& config, const std::vector<PriorWindow>& windows) {
    return [config, windows](const TimeSeriesFrame& train, const Eigen::MatrixXd& future, int split) {
        std::vector<PriorWindow> inside;
        for (const auto& w : windows) {
            if (w.end <= train.rows()) inside.push_back(w);
        }
        const FittedModel fitted = fit_frame(train, split_config(config, split), inside);
        return forecast(fitted, future);
    };
}

// ---------------------------------------------------------------------------
// Fit document

nlohmann::json fit_document(const FittedModel& fitted) {
    const auto& s = fitted.setup;
    const auto& fit = fitted.fit;
    nlohmann::json doc;
    doc["format"] = kFitFormat;
    doc["config"] = fitted.config.to_map();
    doc["seed"] = fit.seed;
    doc["training"] = {{"first_date", format_date(fitted.first_date)},
                       {"step_days", fitted.step_days},
                       {"rows", s.rows},
                       {"regressor_names", s.channels}};
    nlohmann::json structure;
    auto grid_json = [](const std::optional<KnotGrid>& g) {
        return g ? nlohmann::json(g->times()) : nlohmann::json(nullptr);
    };
    structure["level_knots"] = grid_json(s.structure.level_grid);
    structure["seasonal_knots"] = grid_json(s.structure.seasonal_grid);
    structure["regression_knots"] = grid_json(s.structure.regression_grid);
    structure["rho"] = s.structure.rho;
    structure["init_scale_lev"] = s.hyper.init_scale_lev;
    nlohmann::json fourier = nlohmann::json::array();
    for (const auto& f : s.structure.fourier) fourier.push_back({{"period", f.period}, {"order", f.order}});
    structure["fourier"] = fourier;
    doc["structure"] = structure;

    nlohmann::json windows = nlohmann::json::array();
    for (const auto& w : fitted.windows) {
        windows.push_back({{"channel", w.channel}, {"start", w.start}, {"end", w.end}, {"mean", w.mean}, {"sd", w.sd}});
    }
    doc["prior_windows"] = windows;

    doc["packing"] = fitted.layout->names();
    doc["theta"] = vector_json(fit.theta);
    doc["termination"] = to_string(fit.termination);
    doc["variational"] = fit.variational ? nlohmann::json{{"mean", vector_json(fit.variational->mean)},
                                                          {"log_sd", vector_json(fit.variational->log_sd)}}
                                         : nlohmann::json(nullptr);
    const auto& p = fit.map_params;
    doc["map_params"] = {{"b_lev", vector_json(p.b_lev)},
                         {"b_seas", matrix_json(p.b_seas)},
                         {"b_reg", matrix_json(p.b_reg)},
                         {"mu_reg", vector_json(p.mu_reg)},
                         {"sigma_obs", p.sigma_obs}};
    doc["trace"] = fit.trace;
    doc["elbo_trace"] = fit.elbo_trace;
    return doc;
}

FittedModel load_fit_document(const nlohmann::json& doc) {
    try {
        if (doc.at("format").get<std::string>() != kFitFormat) throw ValidationError("unsupported fit document format");
        FittedModel out;
        for (const auto& [key, value] : doc.at("config").items()) out.config.set(key, value.get<std::string>());
        const auto& training = doc.at("training");
        out.first_date = parse_date(training.at("first_date").get<std::string>());
        out.step_days = training.at("step_days").get<int>();

        auto& s = out.setup;
        s.rows = training.at("rows").get<int>();
        s.channels = training.at("regressor_names").get<std::vector<std::string>>();
        s.link = out.config.link;
        s.transform = out.config.transform;
        s.hyper = out.config.hyper;
        const auto& structure = doc.at("structure");
        s.hyper.init_scale_lev = structure.at("init_scale_lev").get<double>();
        auto grid = [&](const char* key) -> std::optional<KnotGrid> {
            const auto& g = structure.at(key);
            if (g.is_null()) return std::nullopt;
            return KnotGrid(g.get<std::vector<int>>(), s.rows);
        };
        s.structure.level_grid = grid("level_knots");
        s.structure.seasonal_grid = grid("seasonal_knots");
        s.structure.regression_grid = grid("regression_knots");
        s.structure.rho = structure.at("rho").get<double>();
        for (const auto& f : structure.at("fourier")) {
            s.structure.fourier.push_back(FourierSpec{f.at("period").get<double>(), f.at("order").get<int>()});
        }
        for (const auto& w : doc.at("prior_windows")) {
            out.windows.push_back(PriorWindow{w.at("channel").get<std::string>(), w.at("start").get<int>(),
                                              w.at("end").get<int>(), w.at("mean").get<double>(),
                                              w.at("sd").get<double>()});
        }

        // A zero-row design is enough to recover block shapes for the layout.
        const ModelDesign shape_design = s.structure.design(Eigen::MatrixXd(1, static_cast<Eigen::Index>(s.channels.size())), 1);
        ParameterSet fixed;
        fixed.mu_reg = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.channels.size()));
        out.layout = std::make_unique<ParameterLayout>(shape_design, ParameterLayout::Options{}, fixed);
        if (doc.at("packing").get<std::vector<std::string>>() != out.layout->names()) {
            throw ValidationError("fit document packing order does not match its structure");
        }

        auto& fit = out.fit;
        fit.theta = json_vector(doc.at("theta"));
        if (fit.theta.size() != out.layout->size()) throw ValidationError("theta length does not match the packing");
        const auto& mp = doc.at("map_params");
        fit.map_params.b_lev = json_vector(mp.at("b_lev"));
        fit.map_params.b_seas = json_matrix(mp.at("b_seas"));
        fit.map_params.b_reg = json_matrix(mp.at("b_reg"));
        fit.map_params.mu_reg = json_vector(mp.at("mu_reg"));
        fit.map_params.sigma_obs = mp.at("sigma_obs").get<double>();
        fit.seed = doc.at("seed").get<std::uint64_t>();
        fit.termination = doc.at("termination").get<std::string>() == "converged" ? Termination::converged
                                                                                   : Termination::iteration_cap;
        if (!doc.at("variational").is_null()) {
            fit.variational = VariationalParams{json_vector(doc.at("variational").at("mean")),
                                                json_vector(doc.at("variational").at("log_sd"))};
        }
        fit.trace = doc.at("trace").get<std::vector<double>>();
        fit.elbo_trace = doc.at("elbo_trace").get<std::vector<double>>();
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed fit document: ") + e.what());
    }
}

void write_decomposition_csv(std::ostream& out, const Decomposition& dec, const std::vector<Date>& dates,
                             const std::vector<std::string>& channels) {
    out << "date,trend,seasonality,regression,fitted";
    for (const auto& c : channels) out << ",contrib_" << c;
    for (const auto& c : channels) out << ",beta_" << c;
    out << '\n';
    const Eigen::VectorXd fitted = dec.fitted();
    for (Eigen::Index t = 0; t < dec.trend.size(); ++t) {
        out << format_date(dates[static_cast<std::size_t>(t)]) << ',' << format_double(dec.trend[t]) << ','
            << format_double(dec.seasonality[t]) << ',' << format_double(dec.regression[t]) << ','
            << format_double(fitted[t]);
        for (Eigen::Index p = 0; p < dec.per_channel.cols(); ++p) out << ',' << format_double(dec.per_channel(t, p));
        for (Eigen::Index p = 0; p < dec.coefficients.cols(); ++p) out << ',' << format_double(dec.coefficients(t, p));
        out << '\n';
    }
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace btvc
