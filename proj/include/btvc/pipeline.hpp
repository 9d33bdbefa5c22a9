#pragma once

#include "btvc/calibration.hpp"
#include "btvc/evaluation.hpp"
#include "btvc/inference.hpp"
#include "btvc/kernels.hpp"
#include "btvc/model.hpp"
#include "btvc/seasonality.hpp"
#include "btvc/timeframe.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace btvc {

/// Knot spacing for one component; `enabled == false` drops the component.
struct ComponentKnots {
    bool enabled = true;
    KnotSpacing spacing = KnotDistance{30};
};

enum class InferenceMode { map, svi };

/**
 * Every setting of a run. The text form is a flat `key = value` document;
 * see `config_keys()` for the key list. Every field has a default.
 */
struct RunConfig {
    CsvSchema schema;
    Link link = Link::log;
    LogTransform transform;

    KnotAnchor anchor = KnotAnchor::end;
    ComponentKnots level_knots{true, KnotDistance{14}};
    ComponentKnots seasonal_knots{true, KnotDistance{56}};
    ComponentKnots regression_knots{true, KnotDistance{20}};
    /// 0 means half the regression knot spacing.
    double rho = 0.0;
    /// Empty disables seasonality.
    std::vector<FourierSpec> seasonality{FourierSpec{7.0, 3}};

    HyperParams hyper;
    /// 0 means 10 * sd(model-scale response).
    double init_scale_lev = 0.0;
    std::optional<double> laplace_smoothing;

    InferenceMode mode = InferenceMode::map;
    MapConfig map;
    SviConfig svi;
    int draws = 200;

    std::string prior_windows_path;
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    std::string to_text() const;
    static RunConfig from_text(const std::string& text);
    /// Applies one `key=value` override; throws ValidationError on unknown keys.
    void set(const std::string& key, const std::string& value);
    std::map<std::string, std::string> to_map() const;
};

/// Documented key list in the order `to_text` writes it.
const std::vector<std::string>& config_keys();

RunConfig load_config(const std::string& path);

/// Per-split or per-replication seed derived from a root seed.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

/// Grids, resolved scales and transforms for one training frame.
struct ModelSetup {
    ModelStructure structure;
    HyperParams hyper;
    Link link = Link::log;
    LogTransform transform;
    std::vector<std::string> channels;
    int rows = 0;

    /// Response and regressors on the model scale.
    Eigen::VectorXd model_response(const TimeSeriesFrame& frame) const;
    Eigen::MatrixXd model_regressors(const Eigen::MatrixXd& raw) const;
};

ModelSetup make_setup(const TimeSeriesFrame& frame, const RunConfig& config);

/// A fitted model together with everything needed to reuse it later.
struct FittedModel {
    RunConfig config;
    ModelSetup setup;
    /// Null after load_fit_document: the document carries no training data.
    std::unique_ptr<Model> model;
    std::unique_ptr<ParameterLayout> layout;
    FitResult fit;
    std::vector<PriorWindow> windows;
    Date first_date;
    int step_days = 1;
};

/// Fits on the frame with the config's inference mode and prior windows.
FittedModel fit_frame(const TimeSeriesFrame& frame, const RunConfig& config,
                      const std::vector<PriorWindow>& windows = {});

/// Point forecast for h rows of future raw regressors.
Eigen::VectorXd forecast(const FittedModel& fitted, const Eigen::MatrixXd& future_regressors);

/// Quantiles (one column per level) of the posterior predictive, observation noise included.
Eigen::MatrixXd forecast_quantiles(const FittedModel& fitted, const Eigen::MatrixXd& future_regressors,
                                   const std::vector<double>& levels, int draws, std::uint64_t seed);

/// Decomposition of the training rows at the fit's point parameters.
Decomposition decompose_fit(const FittedModel& fitted);
/// Same, for a frame holding the training rows (used after loading a fit document).
Decomposition decompose_frame(const FittedModel& fitted, const TimeSeriesFrame& frame);

/// The fit document: config snapshot, seed, packing order, theta, variational
/// parameters, traces, grids and training calendar.
nlohmann::json fit_document(const FittedModel& fitted);
/// Rebuilds a fitted model (without the training data) from a fit document.
FittedModel load_fit_document(const nlohmann::json& doc);

/// Config used for backtest split `split` (0-based): same settings, seed derived from the root.
RunConfig split_config(const RunConfig& config, int split);

/// Backtest forecaster that fits each training prefix with split_config and forecasts its test rows.
Forecaster btvc_forecaster(const RunConfig& config, const std::vector<PriorWindow>& windows = {});

/// date,trend,seasonality,regression,fitted,contrib_<name>...,beta_<name>...
void write_decomposition_csv(std::ostream& out, const Decomposition& dec, const std::vector<Date>& dates,
                             const std::vector<std::string>& channels);

/// 64-bit FNV-1a of a byte string, as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace btvc
