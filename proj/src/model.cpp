#include "btvc/model.hpp"

#include "btvc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace btvc {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

std::string shape_string(Eigen::Index r, Eigen::Index c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

void require_shape(const char* name, Eigen::Index rows, Eigen::Index cols, Eigen::Index want_rows,
                   Eigen::Index want_cols) {
    if (rows != want_rows || cols != want_cols) {
        throw ValidationError(std::string(name) + " has shape " + shape_string(rows, cols) + ", expected " +
                              shape_string(want_rows, want_cols));
    }
}

struct FoldedNormalTerm {
    double value;
    double d_x;
    double d_mu;
};

FoldedNormalTerm folded_normal(double x, double mu, double sigma) {
    const double a = (x - mu) / sigma;
    const double c = (x + mu) / sigma;
    const double la = -0.5 * a * a;
    const double lc = -0.5 * c * c;
    const double m = std::max(la, lc);
    const double ea = std::exp(la - m);
    const double ec = std::exp(lc - m);
    const double s = ea + ec;
    const double wa = ea / s;
    const double wc = ec / s;
    return {m + std::log(s) - kHalfLog2Pi - std::log(sigma), (-wa * a - wc * c) / sigma, (wa * a - wc * c) / sigma};
}

}  // namespace

void HyperParams::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(name) + " must be positive");
    };
    positive(sigma_lev, "sigma_lev");
    positive(sigma_seas, "sigma_seas");
    positive(sigma_pool, "sigma_pool");
    positive(sigma_reg, "sigma_reg");
    positive(init_scale_lev, "init_scale_lev");
    if (!(mu_pool >= 0.0) || !std::isfinite(mu_pool)) throw ValidationError("mu_pool must be >= 0");
    if (noise_df) positive(*noise_df, "noise_df");
}

void ModelDesign::validate() const {
    const auto T = rows();
    if (level && level->rows() != T) throw ValidationError("level kernel rows do not match regressors");
    if (regression && regression->rows() != T) throw ValidationError("regression kernel rows do not match regressors");
    if (!regression && channels() > 0) throw ValidationError("regressors supplied without a regression kernel");
    if (seasonal_features() > 0) {
        if (!seasonal) throw ValidationError("seasonal covariates supplied without a seasonal kernel");
        if (seasonal->rows() != T || seasonal_covariates.rows() != T) {
            throw ValidationError("seasonal design rows do not match regressors");
        }
    }
}

void ModelDesign::check_params(const ParameterSet& p) const {
    require_shape("b_lev", p.b_lev.size(), 1, level_knots(), 1);
    require_shape("b_seas", p.b_seas.rows(), p.b_seas.cols(), seasonal_features() > 0 ? seasonal_knots() : 0,
                  seasonal_features());
    require_shape("b_reg", p.b_reg.rows(), p.b_reg.cols(), channels() > 0 ? regression_knots() : 0, channels());
    require_shape("mu_reg", p.mu_reg.size(), 1, channels(), 1);
}

ModelDesign ModelStructure::design(const Eigen::MatrixXd& regressors, int first_time) const {
    const auto rows = static_cast<int>(regressors.rows());
    ModelDesign d;
    d.regressors = regressors;
    if (level_grid) d.level = kernel_matrix(*level_grid, LevelKernel{}, first_time, rows);
    if (!fourier.empty()) {
        if (!seasonal_grid) throw ValidationError("fourier specs require a seasonal knot grid");
        d.seasonal = kernel_matrix(*seasonal_grid, LevelKernel{}, first_time, rows);
        d.seasonal_covariates = fourier_design(rows, fourier, first_time).matrix;
    } else {
        d.seasonal_covariates.resize(rows, 0);
    }
    if (regressors.cols() > 0) {
        if (!regression_grid) throw ValidationError("regressors require a regression knot grid");
        d.regression = kernel_matrix(*regression_grid, GaussianKernel{rho}, first_time, rows);
    }
    d.validate();
    return d;
}

Eigen::MatrixXd coefficients(const ParameterSet& params, const KernelMatrix& regression_kernel) {
    if (params.b_reg.rows() != regression_kernel.knots()) {
        throw ValidationError("b_reg has " + std::to_string(params.b_reg.rows()) + " knots, kernel has " +
                              std::to_string(regression_kernel.knots()));
    }
    return regression_kernel.weights() * params.b_reg;
}

Decomposition decompose(const ParameterSet& params, const ModelDesign& design) {
    design.check_params(params);
    const auto T = design.rows();
    const auto P = design.channels();
    Decomposition out;
    out.trend = design.level ? Eigen::VectorXd(design.level->weights() * params.b_lev) : Eigen::VectorXd::Zero(T);
    if (design.seasonal_features() > 0) {
        const Eigen::MatrixXd seas_coef = design.seasonal->weights() * params.b_seas;
        out.seasonality = design.seasonal_covariates.cwiseProduct(seas_coef).rowwise().sum();
    } else {
        out.seasonality = Eigen::VectorXd::Zero(T);
    }
    if (P > 0) {
        out.coefficients = coefficients(params, *design.regression);
        out.per_channel = design.regressors.cwiseProduct(out.coefficients);
        out.regression = out.per_channel.rowwise().sum();
    } else {
        out.coefficients.resize(T, 0);
        out.per_channel.resize(T, 0);
        out.regression = Eigen::VectorXd::Zero(T);
    }
    return out;
}

Eigen::VectorXd predict(const ParameterSet& params, const ModelDesign& design, Link link) {
    const Eigen::VectorXd mean = decompose(params, design).fitted();
    if (link == Link::log) return mean.array().exp().matrix();
    return mean;
}

Eigen::Index count_coefficients_above_one(const Eigen::MatrixXd& coefficients) {
    return (coefficients.array() > 1.0).count();
}

double folded_normal_log_density(double x, double mu, double sigma) {
    if (x < 0.0) return -std::numeric_limits<double>::infinity();
    return folded_normal(x, mu, sigma).value;
}

double laplace_log_density(double x, double location, double scale) {
    return -std::log(2.0 * scale) - std::abs(x - location) / scale;
}

double student_t_log_density(double x, double location, double scale, double df) {
    const double z = (x - location) / scale;
    return std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) - 0.5 * std::log(df * std::numbers::pi) -
           std::log(scale) - 0.5 * (df + 1.0) * std::log1p(z * z / df);
}

Model::Model(ModelDesign design, Eigen::VectorXd response, HyperParams hp, PriorOptions options,
             CalibrationPrior calibration)
    : design_(std::move(design)),
      response_(std::move(response)),
      hp_(hp),
      options_(options),
      calibration_(std::move(calibration)) {
    design_.validate();
    hp_.validate();
    if (response_.size() != design_.rows()) throw ValidationError("response length does not match design rows");
    if (options_.laplace_smoothing && !(*options_.laplace_smoothing > 0.0)) {
        throw ValidationError("laplace smoothing delta must be positive");
    }
    for (const auto& w : calibration_.terms()) {
        if (w.channel >= design_.channels() || w.end > design_.rows()) {
            throw ValidationError("calibration window does not fit the design");
        }
    }
}

double Model::abs_value(double x) const {
    if (options_.laplace_smoothing) return std::sqrt(x * x + *options_.laplace_smoothing);
    return std::abs(x);
}

double Model::abs_derivative(double x) const {
    if (options_.laplace_smoothing) return x / std::sqrt(x * x + *options_.laplace_smoothing);
    return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
}

double Model::laplace_chain(const Eigen::Ref<const Eigen::VectorXd>& knots, double scale,
                            Eigen::Ref<Eigen::VectorXd> grad, bool with_grad) const {
    double total = 0.0;
    const auto J = knots.size();
    for (Eigen::Index j = 0; j < J; ++j) {
        const double location = j == 0 ? 0.0 : knots[j - 1];
        const double s = j == 0 ? hp_.init_scale_lev : scale;
        const double diff = knots[j] - location;
        total += -std::log(2.0 * s) - abs_value(diff) / s;
        if (with_grad) {
            const double d = abs_derivative(diff) / s;
            grad[j] -= d;
            if (j > 0) grad[j - 1] += d;
        }
    }
    return total;
}

DensityTerms Model::terms(const ParameterSet& params) const {
    design_.check_params(params);
    DensityTerms out;
    Eigen::VectorXd scratch = Eigen::VectorXd::Zero(std::max<Eigen::Index>(
        {params.b_lev.size(), params.b_seas.rows(), Eigen::Index{1}}));
    out.level = laplace_chain(params.b_lev, hp_.sigma_lev, scratch, false);
    for (Eigen::Index f = 0; f < params.b_seas.cols(); ++f) {
        out.seasonal += laplace_chain(params.b_seas.col(f), hp_.sigma_seas, scratch, false);
    }
    const auto P = design_.channels();
    if (options_.regression == RegressionPrior::folded_normal) {
        for (Eigen::Index p = 0; p < P; ++p) {
            if (!(params.mu_reg[p] >= 0.0)) {
                throw ValidationError("mu_reg[" + std::to_string(p) + "] outside the folded-normal support");
            }
            out.pool += folded_normal(params.mu_reg[p], hp_.mu_pool, hp_.sigma_pool).value;
            for (Eigen::Index j = 0; j < params.b_reg.rows(); ++j) {
                if (!(params.b_reg(j, p) >= 0.0)) {
                    throw ValidationError("b_reg(" + std::to_string(j) + ", " + std::to_string(p) +
                                          ") outside the folded-normal support");
                }
                out.regression += folded_normal(params.b_reg(j, p), params.mu_reg[p], hp_.sigma_reg).value;
            }
        }
    } else {
        for (Eigen::Index p = 0; p < P; ++p) {
            for (Eigen::Index j = 0; j < params.b_reg.rows(); ++j) {
                const double z = (params.b_reg(j, p) - params.mu_reg[p]) / hp_.sigma_reg;
                out.regression += -kHalfLog2Pi - std::log(hp_.sigma_reg) - 0.5 * z * z;
            }
        }
    }
    if (!calibration_.empty()) {
        out.calibration = calibration_.log_density(coefficients(params, *design_.regression));
    }
    out.likelihood = log_likelihood(params);
    return out;
}

double Model::log_likelihood(const ParameterSet& params) const {
    if (!(params.sigma_obs > 0.0)) throw ValidationError("sigma_obs must be positive");
    const Eigen::VectorXd fitted = decompose(params, design_).fitted();
    const double s = params.sigma_obs;
    double total = 0.0;
    for (Eigen::Index t = 0; t < response_.size(); ++t) {
        if (hp_.noise_df) {
            total += student_t_log_density(response_[t], fitted[t], s, *hp_.noise_df);
        } else {
            const double z = (response_[t] - fitted[t]) / s;
            total += -kHalfLog2Pi - std::log(s) - 0.5 * z * z;
        }
    }
    return total;
}

double Model::log_posterior_gradient(const ParameterSet& params, ParameterSet& grad) const {
    const DensityTerms dens = terms(params);
    const auto T = design_.rows();
    const auto P = design_.channels();
    const double s = params.sigma_obs;

    grad.b_lev = Eigen::VectorXd::Zero(params.b_lev.size());
    grad.b_seas = Eigen::MatrixXd::Zero(params.b_seas.rows(), params.b_seas.cols());
    grad.b_reg = Eigen::MatrixXd::Zero(params.b_reg.rows(), params.b_reg.cols());
    grad.mu_reg = Eigen::VectorXd::Zero(params.mu_reg.size());
    grad.sigma_obs = 0.0;

    // Likelihood: d/d(fitted) and d/d(sigma).
    const Decomposition dec = decompose(params, design_);
    const Eigen::VectorXd fitted = dec.fitted();
    Eigen::VectorXd d_fit(T);
    for (Eigen::Index t = 0; t < T; ++t) {
        const double z = (response_[t] - fitted[t]) / s;
        if (hp_.noise_df) {
            const double nu = *hp_.noise_df;
            const double denom = nu + z * z;
            d_fit[t] = (nu + 1.0) * z / (s * denom);
            grad.sigma_obs += -1.0 / s + (nu + 1.0) * z * z / (s * denom);
        } else {
            d_fit[t] = z / s;
            grad.sigma_obs += -1.0 / s + z * z / s;
        }
    }
    if (design_.level) grad.b_lev = design_.level->weights().transpose() * d_fit;
    if (design_.seasonal_features() > 0) {
        const Eigen::MatrixXd d_seas_coef = design_.seasonal_covariates.array().colwise() * d_fit.array();
        grad.b_seas = design_.seasonal->weights().transpose() * d_seas_coef;
    }
    if (P > 0) {
        Eigen::MatrixXd d_coef = design_.regressors.array().colwise() * d_fit.array();
        if (!calibration_.empty()) calibration_.add_gradient(dec.coefficients, d_coef);
        grad.b_reg = design_.regression->weights().transpose() * d_coef;
    }

    // Priors.
    laplace_chain(params.b_lev, hp_.sigma_lev, grad.b_lev, true);
    for (Eigen::Index f = 0; f < params.b_seas.cols(); ++f) {
        Eigen::VectorXd g = grad.b_seas.col(f);
        laplace_chain(params.b_seas.col(f), hp_.sigma_seas, g, true);
        grad.b_seas.col(f) = g;
    }
    for (Eigen::Index p = 0; p < P; ++p) {
        if (options_.regression == RegressionPrior::folded_normal) {
            grad.mu_reg[p] += folded_normal(params.mu_reg[p], hp_.mu_pool, hp_.sigma_pool).d_x;
            for (Eigen::Index j = 0; j < params.b_reg.rows(); ++j) {
                const auto term = folded_normal(params.b_reg(j, p), params.mu_reg[p], hp_.sigma_reg);
                grad.b_reg(j, p) += term.d_x;
                grad.mu_reg[p] += term.d_mu;
            }
        } else {
            const double inv_var = 1.0 / (hp_.sigma_reg * hp_.sigma_reg);
            for (Eigen::Index j = 0; j < params.b_reg.rows(); ++j) {
                const double diff = params.b_reg(j, p) - params.mu_reg[p];
                grad.b_reg(j, p) -= diff * inv_var;
                grad.mu_reg[p] += diff * inv_var;
            }
        }
    }
    return dens.total();
}

}  // namespace btvc
