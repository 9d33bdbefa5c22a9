#pragma once

#include "btvc/calibration.hpp"
#include "btvc/kernels.hpp"
#include "btvc/seasonality.hpp"

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace btvc {

/// How the response and regressors relate on the original scale.
/// log: multiplicative model fitted on ln y with transformed regressors.
/// identity: additive model on the raw values.
enum class Link { log, identity };

struct HyperParams {
    double sigma_lev = 0.1;
    double sigma_seas = 0.05;
    double mu_pool = 0.0;
    double sigma_pool = 1.0;
    double sigma_reg = 0.5;
    /// Scale of the mean-zero Laplace prior on the first trend and seasonality knots.
    double init_scale_lev = 1.0;
    /// Student-t degrees of freedom; empty means Gaussian noise.
    std::optional<double> noise_df;

    void validate() const;
};

/// Latent knots, pooled channel means and the observation noise scale.
/// Absent components have zero-sized blocks.
struct ParameterSet {
    Eigen::VectorXd b_lev;   // J_lev
    Eigen::MatrixXd b_seas;  // J_seas x F
    Eigen::MatrixXd b_reg;   // J_reg x P
    Eigen::VectorXd mu_reg;  // P
    double sigma_obs = 1.0;
};

struct Decomposition {
    Eigen::VectorXd trend;
    Eigen::VectorXd seasonality;
    Eigen::VectorXd regression;
    Eigen::MatrixXd per_channel;   // T x P
    Eigen::MatrixXd coefficients;  // T x P

    Eigen::VectorXd fitted() const { return trend + seasonality + regression; }
};

/// Design inputs for one block of rows: kernel matrices plus covariates.
struct ModelDesign {
    std::optional<KernelMatrix> level;
    std::optional<KernelMatrix> seasonal;
    Eigen::MatrixXd seasonal_covariates;  // T x F
    std::optional<KernelMatrix> regression;
    Eigen::MatrixXd regressors;  // T x P, already on the model scale

    Eigen::Index rows() const { return regressors.rows(); }
    Eigen::Index level_knots() const { return level ? level->knots() : 0; }
    Eigen::Index seasonal_knots() const { return seasonal ? seasonal->knots() : 0; }
    Eigen::Index regression_knots() const { return regression ? regression->knots() : 0; }
    Eigen::Index channels() const { return regressors.cols(); }
    Eigen::Index seasonal_features() const { return seasonal_covariates.cols(); }

    /// Throws ValidationError if any block disagrees on the row count.
    void validate() const;
    /// Throws ValidationError unless params has matching block shapes.
    void check_params(const ParameterSet& params) const;
};

/// Grids and kernel choices that define a model independent of the rows it
/// is evaluated on, so the same structure produces training and forecast designs.
struct ModelStructure {
    std::optional<KnotGrid> level_grid;
    std::optional<KnotGrid> seasonal_grid;
    std::vector<FourierSpec> fourier;
    std::optional<KnotGrid> regression_grid;
    double rho = 1.0;

    /// Design for rows first_time .. first_time + regressors.rows() - 1.
    ModelDesign design(const Eigen::MatrixXd& regressors, int first_time = 1) const;
};

/// B = K * b. Entries inherit nonnegativity from the knots.
Eigen::MatrixXd coefficients(const ParameterSet& params, const KernelMatrix& regression_kernel);

Decomposition decompose(const ParameterSet& params, const ModelDesign& design);

/// Point forecast on the original scale: exp of the component sum under the
/// log link, the sum itself under the identity link.
Eigen::VectorXd predict(const ParameterSet& params, const ModelDesign& design, Link link);

/// Number of coefficient entries above 1 (the elasticity bound is reported, not enforced).
Eigen::Index count_coefficients_above_one(const Eigen::MatrixXd& coefficients);

/// Test hook: Gaussian prior around a fixed mean instead of the folded-normal hierarchy.
enum class RegressionPrior { folded_normal, gaussian_fixed_mean };

struct PriorOptions {
    RegressionPrior regression = RegressionPrior::folded_normal;
    /// When set, |x| in the Laplace terms becomes sqrt(x^2 + delta).
    std::optional<double> laplace_smoothing;
};

/// Breakdown of the log posterior, used for diagnostics.
struct DensityTerms {
    double level = 0.0;
    double seasonal = 0.0;
    double pool = 0.0;
    double regression = 0.0;
    double calibration = 0.0;
    double likelihood = 0.0;

    double prior() const { return level + seasonal + pool + regression + calibration; }
    double total() const { return prior() + likelihood; }
};

/// Folded-normal log density on x >= 0.
double folded_normal_log_density(double x, double mu, double sigma);
double laplace_log_density(double x, double location, double scale);
double student_t_log_density(double x, double location, double scale, double df);

/**
 * Joint log posterior (up to the evidence) of the time-varying coefficient model.
 *
 * Priors: Laplace random walks over adjacent trend and seasonality knots with
 * mean-zero Laplace first knots; folded-normal hierarchy mu_pool -> mu_reg ->
 * b_reg; optional calibration pseudo-observations on beta. Likelihood:
 * Gaussian or Student-t residuals of the response on the model scale.
 * Densities carry their full normalizing constants.
 */
class Model {
public:
    Model(ModelDesign design, Eigen::VectorXd response, HyperParams hp, PriorOptions options = {},
          CalibrationPrior calibration = {});

    const ModelDesign& design() const { return design_; }
    const Eigen::VectorXd& response() const { return response_; }
    const HyperParams& hyper() const { return hp_; }
    const PriorOptions& options() const { return options_; }
    const CalibrationPrior& calibration() const { return calibration_; }

    DensityTerms terms(const ParameterSet& params) const;
    double log_prior(const ParameterSet& params) const { return terms(params).prior(); }
    double log_likelihood(const ParameterSet& params) const;
    double log_posterior(const ParameterSet& params) const { return terms(params).total(); }

    /// Returns the log posterior and writes its gradient with respect to every
    /// block of params (sigma_obs included) into grad.
    double log_posterior_gradient(const ParameterSet& params, ParameterSet& grad) const;

private:
    double laplace_chain(const Eigen::Ref<const Eigen::VectorXd>& knots, double scale,
                         Eigen::Ref<Eigen::VectorXd> grad, bool with_grad) const;
    double abs_value(double x) const;
    double abs_derivative(double x) const;

    ModelDesign design_;
    Eigen::VectorXd response_;
    HyperParams hp_;
    PriorOptions options_;
    CalibrationPrior calibration_;
};

}  // namespace btvc
