#pragma once

#include "btvc/model.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace btvc {

double softplus(double u);
double softplus_inverse(double x);
/// ln(sigmoid(u)), the log-Jacobian of softplus.
double log_sigmoid(double u);

/// Unconstrained blocks, one-to-one with the flat parameter vector.
struct UnconstrainedParams {
    Eigen::VectorXd b_lev;
    Eigen::MatrixXd b_seas;
    Eigen::MatrixXd u_reg;  // softplus^-1(b_reg), or b_reg itself without the positivity transform
    Eigen::VectorXd u_mu;   // softplus^-1(mu_reg); empty when mu_reg is fixed
    std::optional<double> log_sigma;  // empty when sigma_obs is fixed
};

/**
 * Packing of the unconstrained parameter vector theta.
 *
 * Order: b_lev (J_lev), b_seas (J_seas x F, column-major), u_reg (J_reg x P,
 * column-major), u_mu (P), ln sigma_obs (1). The last two blocks are present
 * only when those parameters are free; fixed values come from `fixed`.
 */
class ParameterLayout {
public:
    struct Options {
        bool positive_regression = true;
        bool free_mu = true;
        bool free_sigma = true;
    };

    ParameterLayout(const ModelDesign& design, Options options, ParameterSet fixed);
    /// Layout matching a model's prior options; fixed values default to mu_reg = 0, sigma_obs = 1.
    explicit ParameterLayout(const Model& model);

    Eigen::Index size() const { return size_; }
    const Options& options() const { return options_; }
    const ParameterSet& fixed() const { return fixed_; }

    /// Exact copies between the flat vector and its blocks.
    Eigen::VectorXd pack(const UnconstrainedParams& u) const;
    UnconstrainedParams unpack(const Eigen::VectorXd& theta) const;

    ParameterSet constrain(const UnconstrainedParams& u) const;
    UnconstrainedParams unconstrain(const ParameterSet& params) const;

    ParameterSet to_params(const Eigen::VectorXd& theta) const { return constrain(unpack(theta)); }
    Eigen::VectorXd from_params(const ParameterSet& params) const { return pack(unconstrain(params)); }

    /// Chain rule from a constrained-space gradient to d/d(theta).
    Eigen::VectorXd pullback(const Eigen::VectorXd& theta, const ParameterSet& grad) const;

    /// Sum of log-Jacobian terms of the transform; adds its gradient into grad when given.
    double log_jacobian(const Eigen::VectorXd& theta, Eigen::VectorXd* grad = nullptr) const;

    /// Human-readable coordinate names in packing order.
    std::vector<std::string> names() const;

    /// Index ranges [first, first + count) of knots joined by Laplace adjacency
    /// (the trend chain and each seasonal column).
    struct Chain {
        Eigen::Index first;
        Eigen::Index count;
    };
    std::vector<Chain> laplace_chains() const;

    Eigen::Index level_knots() const { return j_lev_; }
    Eigen::Index seasonal_knots() const { return j_seas_; }
    Eigen::Index seasonal_features() const { return f_; }
    Eigen::Index regression_knots() const { return j_reg_; }
    Eigen::Index channels() const { return p_; }

private:
    Eigen::Index j_lev_, j_seas_, f_, j_reg_, p_;
    Options options_;
    ParameterSet fixed_;
    Eigen::Index size_;
};

/// Log density over theta returning the value and writing the gradient.
using LogDensity = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// log_posterior(to_params(theta)), plus the softplus log-Jacobian when requested.
LogDensity make_objective(const Model& model, const ParameterLayout& layout, bool include_jacobian);

enum class Termination { converged, iteration_cap };
const char* to_string(Termination t);

struct MapConfig {
    double step_size = 0.01;
    int max_iterations = 10000;
    /// Relative change of the best objective over `window` iterations.
    double tolerance = 1e-8;
    int window = 50;
    int restarts = 3;
    double restart_jitter = 0.1;
    /// Quasi-Newton refinement after the first-order phase; 0 disables it.
    int polish_iterations = 500;
    std::uint64_t seed = 0;
};

struct OptimizationResult {
    Eigen::VectorXd theta;
    double value = 0.0;
    /// Best objective seen so far, one entry per iteration across all restarts.
    std::vector<double> trace;
    Termination termination = Termination::iteration_cap;
    int iterations = 0;
};

/// Adam ascent with random restarts followed by an L-BFGS polish.
OptimizationResult maximize(const LogDensity& objective, const Eigen::VectorXd& init, const MapConfig& config);

struct SviConfig {
    int iterations = 5000;
    int samples = 1;
    double step_size = 0.01;
    double init_log_sd = -3.0;
    /// Final parameters average the iterates over this trailing fraction.
    double average_fraction = 0.5;
    std::uint64_t seed = 0;
};

struct VariationalParams {
    Eigen::VectorXd mean;
    Eigen::VectorXd log_sd;
};

struct SviResult {
    VariationalParams q;
    /// Single-draw ELBO estimate per iteration.
    std::vector<double> trace;
};

double gaussian_entropy(const Eigen::VectorXd& log_sd);

/// One reparameterized ELBO estimate at fixed standard-normal draws (one
/// column per draw); writes gradients w.r.t. mean and log_sd.
double elbo_estimate(const LogDensity& log_density, const VariationalParams& q, const Eigen::MatrixXd& draws,
                     Eigen::VectorXd* grad_mean = nullptr, Eigen::VectorXd* grad_log_sd = nullptr);

/// Mean-field Gaussian ELBO ascent by reparameterized stochastic gradients.
SviResult maximize_elbo(const LogDensity& log_density, const Eigen::VectorXd& init_mean, const SviConfig& config);

struct FitResult {
    Eigen::VectorXd theta;  // MAP point in the unconstrained space
    ParameterSet map_params;
    std::optional<VariationalParams> variational;
    std::vector<double> trace;
    std::vector<double> elbo_trace;
    Termination termination = Termination::iteration_cap;
    std::uint64_t seed = 0;

    /// Parameters used for point summaries: the variational mean when present.
    Eigen::VectorXd point() const { return variational ? variational->mean : theta; }
};

/// Deterministic starting point: trend knots at local response means, seasonal
/// knots at zero, b_reg = mu_reg = 0.1, sigma_obs at the trend-only residual sd.
ParameterSet initial_parameters(const Model& model);

FitResult fit_map(const Model& model, const ParameterLayout& layout, const MapConfig& config);
/// Runs MAP first, then SVI started from the MAP point.
FitResult fit_svi(const Model& model, const ParameterLayout& layout, const MapConfig& map_config,
                  const SviConfig& svi_config);

struct PosteriorDraws {
    std::vector<ParameterSet> draws;
    std::vector<Eigen::MatrixXd> coefficients;  // one T x P matrix per draw
};

PosteriorDraws draw_posterior(const FitResult& fit, const ParameterLayout& layout, const ModelDesign& design,
                              int count, std::uint64_t seed);

/// Pointwise empirical quantile (linear interpolation between order statistics).
Eigen::MatrixXd quantile_curve(const std::vector<Eigen::MatrixXd>& draws, double level);

struct GradientReport {
    double max_relative_error = 0.0;
    int points = 0;
    int coordinates_checked = 0;
    /// Coordinates skipped because a Laplace kink sat within the difference step.
    int flagged = 0;
    bool passed = false;
};

struct GradientCheckConfig {
    int points = 20;
    double step = 1e-5;
    double tolerance = 1e-4;
    double jitter = 0.1;
    /// Move knots off kinks instead of flagging them.
    bool perturb_kinks = true;
    std::uint64_t seed = 0;
};

/// Compares the analytic gradient with central differences (step scaled by
/// max(1, |theta_i|)) at jittered points around theta0. Relative error is
/// |analytic - numeric| / max(1, |analytic|, |numeric|).
GradientReport check_gradient(const LogDensity& objective, const Eigen::VectorXd& theta0,
                              const GradientCheckConfig& config, const std::vector<ParameterLayout::Chain>& chains = {});

}  // namespace btvc
