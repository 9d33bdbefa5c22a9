#include "btvc/inference.hpp"

#include "btvc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <random>
#include <string>

namespace btvc {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

Eigen::VectorXd standard_normal(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> normal;
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
    return v;
}

double sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

void require_finite(double value, const char* stage, int iteration) {
    if (!std::isfinite(value)) {
        throw NumericalError(std::string(stage) + ": objective became non-finite at iteration " +
                             std::to_string(iteration));
    }
}

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    int t = 0;

    explicit AdamState(Eigen::Index n) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}

    /// Ascent step direction for gradient g.
    Eigen::VectorXd step(const Eigen::VectorXd& g, double lr) {
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        ++t;
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g.cwiseAbs2();
        const double c1 = 1.0 - std::pow(beta1, t);
        const double c2 = 1.0 - std::pow(beta2, t);
        return lr * ((m / c1).array() / ((v / c2).array().sqrt() + eps)).matrix();
    }
};

/// Limited-memory BFGS on -objective with a backtracking Armijo search.
/// Only ever accepts improving steps.
void lbfgs_polish(const LogDensity& objective, Eigen::VectorXd& theta, double& value, int max_iterations,
                  std::vector<double>& trace) {
    constexpr int memory = 10;
    const auto n = theta.size();
    Eigen::VectorXd grad(n);
    value = objective(theta, grad);
    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;
    for (int it = 0; it < max_iterations; ++it) {
        // Two-loop recursion on the descent problem: g = -grad.
        Eigen::VectorXd q = -grad;
        std::vector<double> alpha(s_hist.size());
        for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha[i] * y_hist[i];
        }
        if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha[i] - beta) * s_hist[i];
        }
        Eigen::VectorXd direction = -q;  // ascent direction
        double slope = direction.dot(grad);
        if (!(slope > 0.0)) {
            direction = grad;
            slope = grad.squaredNorm();
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }
        if (slope < 1e-24) break;

        double step = s_hist.empty() ? std::min(1.0, 1.0 / std::sqrt(slope)) : 1.0;
        Eigen::VectorXd candidate(n), cand_grad(n);
        double cand_value = value;
        bool accepted = false;
        for (int ls = 0; ls < 50; ++ls) {
            candidate = theta + step * direction;
            cand_value = objective(candidate, cand_grad);
            if (std::isfinite(cand_value) && cand_value >= value + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted || !(cand_value > value)) break;

        Eigen::VectorXd s = candidate - theta;
        Eigen::VectorXd y = grad - cand_grad;  // gradient change of the minimized function
        const double sy = s.dot(y);
        const double gain = cand_value - value;
        theta = candidate;
        grad = cand_grad;
        value = cand_value;
        trace.push_back(std::max(trace.empty() ? value : trace.back(), value));
        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        if (gain <= 1e-15 * std::max(1.0, std::abs(value))) break;
    }
}

}  // namespace

double softplus(double u) {
    if (u > 0.0) return u + std::log1p(std::exp(-u));
    return std::log1p(std::exp(u));
}

double softplus_inverse(double x) {
    if (!(x > 0.0)) throw ValidationError("softplus inverse needs a positive argument");
    if (x > 20.0) return x + std::log1p(-std::exp(-x));
    return std::log(std::expm1(x));
}

double log_sigmoid(double u) { return -softplus(-u); }

// ---------------------------------------------------------------------------
// ParameterLayout

ParameterLayout::ParameterLayout(const ModelDesign& design, Options options, ParameterSet fixed)
    : j_lev_(design.level_knots()),
      j_seas_(design.seasonal_features() > 0 ? design.seasonal_knots() : 0),
      f_(design.seasonal_features()),
      j_reg_(design.channels() > 0 ? design.regression_knots() : 0),
      p_(design.channels()),
      options_(options),
      fixed_(std::move(fixed)) {
    if (!options_.free_mu && fixed_.mu_reg.size() != p_) {
        throw ValidationError("fixed mu_reg must have one entry per channel");
    }
    if (!options_.free_sigma && !(fixed_.sigma_obs > 0.0)) throw ValidationError("fixed sigma_obs must be positive");
    size_ = j_lev_ + j_seas_ * f_ + j_reg_ * p_ + (options_.free_mu ? p_ : 0) + (options_.free_sigma ? 1 : 0);
}

ParameterLayout::ParameterLayout(const Model& model)
    : ParameterLayout(model.design(),
                      Options{model.options().regression == RegressionPrior::folded_normal,
                              model.options().regression == RegressionPrior::folded_normal, true},
                      ParameterSet{{}, {}, {}, Eigen::VectorXd::Zero(model.design().channels()), 1.0}) {}

Eigen::VectorXd ParameterLayout::pack(const UnconstrainedParams& u) const {
    Eigen::VectorXd theta(size_);
    Eigen::Index k = 0;
    auto put = [&](const auto& block) {
        for (Eigen::Index i = 0; i < block.size(); ++i) theta[k++] = block.data()[i];
    };
    if (u.b_lev.size() != j_lev_ || u.b_seas.size() != j_seas_ * f_ || u.u_reg.size() != j_reg_ * p_) {
        throw ValidationError("unconstrained blocks do not match the layout");
    }
    put(u.b_lev);
    put(u.b_seas);
    put(u.u_reg);
    if (options_.free_mu) {
        if (u.u_mu.size() != p_) throw ValidationError("u_mu size does not match the layout");
        put(u.u_mu);
    }
    if (options_.free_sigma) {
        if (!u.log_sigma) throw ValidationError("log sigma missing");
        theta[k++] = *u.log_sigma;
    }
    return theta;
}

UnconstrainedParams ParameterLayout::unpack(const Eigen::VectorXd& theta) const {
    if (theta.size() != size_) {
        throw ValidationError("theta has " + std::to_string(theta.size()) + " entries, layout needs " +
                              std::to_string(size_));
    }
    UnconstrainedParams u;
    Eigen::Index k = 0;
    u.b_lev = theta.segment(k, j_lev_);
    k += j_lev_;
    u.b_seas = Eigen::Map<const Eigen::MatrixXd>(theta.data() + k, j_seas_, f_);
    k += j_seas_ * f_;
    u.u_reg = Eigen::Map<const Eigen::MatrixXd>(theta.data() + k, j_reg_, p_);
    k += j_reg_ * p_;
    if (options_.free_mu) {
        u.u_mu = theta.segment(k, p_);
        k += p_;
    }
    if (options_.free_sigma) u.log_sigma = theta[k];
    return u;
}

ParameterSet ParameterLayout::constrain(const UnconstrainedParams& u) const {
    ParameterSet p;
    p.b_lev = u.b_lev;
    p.b_seas = u.b_seas;
    p.b_reg = options_.positive_regression ? Eigen::MatrixXd(u.u_reg.unaryExpr(&softplus)) : u.u_reg;
    p.mu_reg = options_.free_mu ? Eigen::VectorXd(u.u_mu.unaryExpr(&softplus)) : fixed_.mu_reg;
    p.sigma_obs = options_.free_sigma ? std::exp(*u.log_sigma) : fixed_.sigma_obs;
    return p;
}

UnconstrainedParams ParameterLayout::unconstrain(const ParameterSet& p) const {
    UnconstrainedParams u;
    u.b_lev = p.b_lev;
    u.b_seas = p.b_seas;
    u.u_reg = options_.positive_regression ? Eigen::MatrixXd(p.b_reg.unaryExpr(&softplus_inverse)) : p.b_reg;
    if (options_.free_mu) u.u_mu = p.mu_reg.unaryExpr(&softplus_inverse);
    if (options_.free_sigma) {
        if (!(p.sigma_obs > 0.0)) throw ValidationError("sigma_obs must be positive");
        u.log_sigma = std::log(p.sigma_obs);
    }
    return u;
}

Eigen::VectorXd ParameterLayout::pullback(const Eigen::VectorXd& theta, const ParameterSet& grad) const {
    const UnconstrainedParams u = unpack(theta);
    UnconstrainedParams g;
    g.b_lev = grad.b_lev;
    g.b_seas = grad.b_seas;
    g.u_reg = options_.positive_regression ? Eigen::MatrixXd(grad.b_reg.cwiseProduct(u.u_reg.unaryExpr(&sigmoid)))
                                           : grad.b_reg;
    if (options_.free_mu) g.u_mu = grad.mu_reg.cwiseProduct(u.u_mu.unaryExpr(&sigmoid));
    if (options_.free_sigma) g.log_sigma = grad.sigma_obs * std::exp(*u.log_sigma);
    return pack(g);
}

double ParameterLayout::log_jacobian(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const {
    double total = 0.0;
    Eigen::Index k = j_lev_ + j_seas_ * f_;
    auto softplus_block = [&](Eigen::Index count) {
        for (Eigen::Index i = 0; i < count; ++i, ++k) {
            total += log_sigmoid(theta[k]);
            if (grad) (*grad)[k] += 1.0 - sigmoid(theta[k]);
        }
    };
    if (options_.positive_regression) {
        softplus_block(j_reg_ * p_);
    } else {
        k += j_reg_ * p_;
    }
    if (options_.free_mu) softplus_block(p_);
    if (options_.free_sigma) {
        total += theta[k];
        if (grad) (*grad)[k] += 1.0;
    }
    return total;
}

std::vector<std::string> ParameterLayout::names() const {
    std::vector<std::string> out;
    for (Eigen::Index j = 0; j < j_lev_; ++j) out.push_back("b_lev[" + std::to_string(j) + "]");
    for (Eigen::Index f = 0; f < f_; ++f) {
        for (Eigen::Index j = 0; j < j_seas_; ++j) {
            out.push_back("b_seas[" + std::to_string(j) + "," + std::to_string(f) + "]");
        }
    }
    const char* reg = options_.positive_regression ? "u_reg" : "b_reg";
    for (Eigen::Index p = 0; p < p_; ++p) {
        for (Eigen::Index j = 0; j < j_reg_; ++j) {
            out.push_back(std::string(reg) + "[" + std::to_string(j) + "," + std::to_string(p) + "]");
        }
    }
    if (options_.free_mu) {
        for (Eigen::Index p = 0; p < p_; ++p) out.push_back("u_mu[" + std::to_string(p) + "]");
    }
    if (options_.free_sigma) out.emplace_back("log_sigma_obs");
    return out;
}

std::vector<ParameterLayout::Chain> ParameterLayout::laplace_chains() const {
    std::vector<Chain> chains;
    if (j_lev_ > 0) chains.push_back({0, j_lev_});
    for (Eigen::Index f = 0; f < f_; ++f) chains.push_back({j_lev_ + f * j_seas_, j_seas_});
    return chains;
}

LogDensity make_objective(const Model& model, const ParameterLayout& layout, bool include_jacobian) {
    return [&model, &layout, include_jacobian](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
        const ParameterSet params = layout.to_params(theta);
        if (!(params.sigma_obs > 0.0) || !std::isfinite(params.sigma_obs)) {
            grad = Eigen::VectorXd::Zero(theta.size());
            return -std::numeric_limits<double>::infinity();
        }
        ParameterSet g;
        double value = model.log_posterior_gradient(params, g);
        grad = layout.pullback(theta, g);
        if (include_jacobian) value += layout.log_jacobian(theta, &grad);
        return value;
    };
}

const char* to_string(Termination t) { return t == Termination::converged ? "converged" : "iteration_cap"; }

// ---------------------------------------------------------------------------
// MAP

OptimizationResult maximize(const LogDensity& objective, const Eigen::VectorXd& init, const MapConfig& config) {
    if (config.restarts < 1 || config.max_iterations < 1 || !(config.step_size > 0.0)) {
        throw ValidationError("optimizer needs restarts >= 1, iterations >= 1 and a positive step size");
    }
    const auto n = init.size();
    OptimizationResult best;
    best.value = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd grad(n);
    const double initial_value = objective(init, grad);
    require_finite(initial_value, "MAP initialization", 0);

    std::vector<double> trace{initial_value};
    double running_best = initial_value;
    for (int restart = 0; restart < config.restarts; ++restart) {
        Eigen::VectorXd theta = init;
        if (restart > 0) {
            std::mt19937_64 rng(splitmix64(config.seed ^ splitmix64(static_cast<std::uint64_t>(restart))));
            theta += config.restart_jitter * standard_normal(rng, n);
        }
        AdamState adam(n);
        double value = objective(theta, grad);
        require_finite(value, "MAP restart", 0);
        Eigen::VectorXd restart_best_theta = theta;
        double restart_best = value;
        std::vector<double> history{restart_best};
        Termination termination = Termination::iteration_cap;
        int it = 0;
        for (; it < config.max_iterations; ++it) {
            theta += adam.step(grad, config.step_size);
            value = objective(theta, grad);
            require_finite(value, "MAP ascent", it + 1);
            if (value > restart_best) {
                restart_best = value;
                restart_best_theta = theta;
            }
            history.push_back(restart_best);
            running_best = std::max(running_best, restart_best);
            trace.push_back(running_best);
            const auto h = static_cast<int>(history.size());
            if (h > config.window &&
                std::abs(history[h - 1] - history[h - 1 - config.window]) <=
                    config.tolerance * std::max(1.0, std::abs(history[h - 1]))) {
                termination = Termination::converged;
                ++it;
                break;
            }
        }
        if (restart_best > best.value) {
            best.value = restart_best;
            best.theta = restart_best_theta;
            best.termination = termination;
        }
        best.iterations += it;
    }

    if (config.polish_iterations > 0) {
        std::vector<double> polish_trace;
        double value = best.value;
        lbfgs_polish(objective, best.theta, value, config.polish_iterations, polish_trace);
        for (double v : polish_trace) {
            running_best = std::max(running_best, v);
            trace.push_back(running_best);
        }
        best.value = value;
        best.iterations += static_cast<int>(polish_trace.size());
    }
    best.trace = std::move(trace);
    return best;
}

// ---------------------------------------------------------------------------
// SVI

double gaussian_entropy(const Eigen::VectorXd& log_sd) {
    return log_sd.sum() + 0.5 * static_cast<double>(log_sd.size()) * (1.0 + std::log(2.0 * std::numbers::pi));
}

double elbo_estimate(const LogDensity& log_density, const VariationalParams& q, const Eigen::MatrixXd& draws,
                     Eigen::VectorXd* grad_mean, Eigen::VectorXd* grad_log_sd) {
    const auto n = q.mean.size();
    const auto samples = draws.cols();
    const Eigen::VectorXd sd = q.log_sd.array().exp().matrix();
    if (grad_mean) *grad_mean = Eigen::VectorXd::Zero(n);
    if (grad_log_sd) *grad_log_sd = Eigen::VectorXd::Zero(n);
    double expected = 0.0;
    Eigen::VectorXd g(n);
    for (Eigen::Index s = 0; s < samples; ++s) {
        const Eigen::VectorXd theta = q.mean + sd.cwiseProduct(draws.col(s));
        expected += log_density(theta, g);
        if (grad_mean) *grad_mean += g;
        if (grad_log_sd) *grad_log_sd += g.cwiseProduct(draws.col(s)).cwiseProduct(sd);
    }
    const double inv = 1.0 / static_cast<double>(samples);
    if (grad_mean) *grad_mean *= inv;
    if (grad_log_sd) {
        *grad_log_sd *= inv;
        grad_log_sd->array() += 1.0;
    }
    return expected * inv + gaussian_entropy(q.log_sd);
}

SviResult maximize_elbo(const LogDensity& log_density, const Eigen::VectorXd& init_mean, const SviConfig& config) {
    if (config.iterations < 1 || config.samples < 1 || !(config.step_size > 0.0)) {
        throw ValidationError("SVI needs iterations >= 1, samples >= 1 and a positive step size");
    }
    const auto n = init_mean.size();
    VariationalParams q{init_mean, Eigen::VectorXd::Constant(n, config.init_log_sd)};
    AdamState adam_mean(n), adam_sd(n);
    std::mt19937_64 rng(splitmix64(config.seed));
    std::normal_distribution<double> normal;

    const int average_from =
        config.iterations - std::max(1, static_cast<int>(std::lround(config.average_fraction * config.iterations)));
    VariationalParams avg{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
    int averaged = 0;

    SviResult result;
    result.trace.reserve(config.iterations);
    Eigen::MatrixXd draws(n, config.samples);
    Eigen::VectorXd g_mean, g_sd;
    for (int it = 0; it < config.iterations; ++it) {
        for (Eigen::Index s = 0; s < config.samples; ++s) {
            for (Eigen::Index i = 0; i < n; ++i) draws(i, s) = normal(rng);
        }
        const double elbo = elbo_estimate(log_density, q, draws, &g_mean, &g_sd);
        if (!std::isfinite(elbo)) {
            throw NumericalError("SVI: ELBO became non-finite at iteration " + std::to_string(it));
        }
        result.trace.push_back(elbo);
        q.mean += adam_mean.step(g_mean, config.step_size);
        q.log_sd += adam_sd.step(g_sd, config.step_size);
        if (it >= average_from) {
            avg.mean += q.mean;
            avg.log_sd += q.log_sd;
            ++averaged;
        }
    }
    result.q = VariationalParams{avg.mean / averaged, avg.log_sd / averaged};
    return result;
}

// ---------------------------------------------------------------------------
// Model-level fitting

ParameterSet initial_parameters(const Model& model) {
    const ModelDesign& d = model.design();
    const Eigen::VectorXd& y = model.response();
    const auto T = d.rows();
    const auto P = d.channels();
    constexpr double reg_init = 0.1;

    ParameterSet p;
    p.b_reg = Eigen::MatrixXd::Constant(P > 0 ? d.regression_knots() : 0, P, reg_init);
    p.mu_reg = Eigen::VectorXd::Constant(P, reg_init);
    p.b_seas = Eigen::MatrixXd::Zero(d.seasonal_features() > 0 ? d.seasonal_knots() : 0, d.seasonal_features());

    Eigen::VectorXd partial = y;
    if (P > 0) partial -= reg_init * d.regressors.rowwise().sum();
    if (d.level) {
        const auto& knots = d.level->grid().times();
        const auto J = static_cast<Eigen::Index>(knots.size());
        p.b_lev.resize(J);
        for (Eigen::Index j = 0; j < J; ++j) {
            const double lo = j == 0 ? 1.0 : 0.5 * (knots[j - 1] + knots[j]);
            const double hi = j + 1 == J ? static_cast<double>(T) : 0.5 * (knots[j] + knots[j + 1]);
            double sum = 0.0;
            int count = 0;
            for (Eigen::Index t = 0; t < T; ++t) {
                const double time = static_cast<double>(t + 1);
                if (time >= lo && time <= hi) {
                    sum += partial[t];
                    ++count;
                }
            }
            p.b_lev[j] = count > 0 ? sum / count : partial.mean();
        }
    }
    ParameterSet no_reg = p;
    no_reg.b_reg.setZero();
    const Eigen::VectorXd resid = partial - decompose(no_reg, d).fitted();
    const double sd = std::sqrt((resid.array() - resid.mean()).square().sum() / std::max<Eigen::Index>(1, T - 1));
    p.sigma_obs = std::isfinite(sd) ? std::max(sd, 1e-3) : 1.0;
    return p;
}

namespace {

std::string describe_nonfinite(const DensityTerms& t) {
    std::string out;
    auto check = [&](double v, const char* name) {
        if (!std::isfinite(v)) out += (out.empty() ? "" : ", ") + std::string(name);
    };
    check(t.level, "level prior");
    check(t.seasonal, "seasonal prior");
    check(t.pool, "pooled mean prior");
    check(t.regression, "regression prior");
    check(t.calibration, "calibration prior");
    check(t.likelihood, "likelihood");
    return out;
}

}  // namespace

FitResult fit_map(const Model& model, const ParameterLayout& layout, const MapConfig& config) {
    ParameterSet start = initial_parameters(model);
    if (!layout.options().free_mu) start.mu_reg = layout.fixed().mu_reg;
    if (!layout.options().free_sigma) start.sigma_obs = layout.fixed().sigma_obs;
    const Eigen::VectorXd theta0 = layout.from_params(start);
    const DensityTerms terms = model.terms(layout.to_params(theta0));
    if (!std::isfinite(terms.total())) {
        throw NumericalError("non-finite objective at initialization: " + describe_nonfinite(terms));
    }
    const LogDensity objective = make_objective(model, layout, false);
    OptimizationResult opt = maximize(objective, theta0, config);

    FitResult fit;
    fit.theta = std::move(opt.theta);
    fit.map_params = layout.to_params(fit.theta);
    fit.trace = std::move(opt.trace);
    fit.termination = opt.termination;
    fit.seed = config.seed;
    return fit;
}

FitResult fit_svi(const Model& model, const ParameterLayout& layout, const MapConfig& map_config,
                  const SviConfig& svi_config) {
    FitResult fit = fit_map(model, layout, map_config);
    const LogDensity objective = make_objective(model, layout, true);
    SviResult svi = maximize_elbo(objective, fit.theta, svi_config);
    fit.variational = std::move(svi.q);
    fit.elbo_trace = std::move(svi.trace);
    return fit;
}

PosteriorDraws draw_posterior(const FitResult& fit, const ParameterLayout& layout, const ModelDesign& design,
                              int count, std::uint64_t seed) {
    if (!fit.variational) throw ValidationError("posterior draws need an SVI fit (this fit is MAP-only)");
    if (count < 1) throw ValidationError("draw count must be >= 1");
    const auto& q = *fit.variational;
    const Eigen::VectorXd sd = q.log_sd.array().exp().matrix();
    std::mt19937_64 rng(splitmix64(seed));
    PosteriorDraws out;
    out.draws.reserve(count);
    out.coefficients.reserve(count);
    for (int s = 0; s < count; ++s) {
        const Eigen::VectorXd theta = q.mean + sd.cwiseProduct(standard_normal(rng, q.mean.size()));
        ParameterSet p = layout.to_params(theta);
        if (design.channels() > 0) {
            out.coefficients.push_back(coefficients(p, *design.regression));
        } else {
            out.coefficients.emplace_back(design.rows(), 0);
        }
        out.draws.push_back(std::move(p));
    }
    return out;
}

Eigen::MatrixXd quantile_curve(const std::vector<Eigen::MatrixXd>& draws, double level) {
    if (draws.empty()) throw ValidationError("quantile of an empty draw set");
    if (!(level >= 0.0 && level <= 1.0)) throw ValidationError("quantile level must lie in [0, 1]");
    const auto rows = draws.front().rows();
    const auto cols = draws.front().cols();
    Eigen::MatrixXd out(rows, cols);
    std::vector<double> values(draws.size());
    const double pos = level * static_cast<double>(draws.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, draws.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            for (std::size_t s = 0; s < draws.size(); ++s) values[s] = draws[s](r, c);
            std::sort(values.begin(), values.end());
            out(r, c) = values[lo] + frac * (values[hi] - values[lo]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gradient check

GradientReport check_gradient(const LogDensity& objective, const Eigen::VectorXd& theta0,
                              const GradientCheckConfig& config, const std::vector<ParameterLayout::Chain>& chains) {
    const auto n = theta0.size();
    std::mt19937_64 rng(splitmix64(config.seed));
    GradientReport report;
    Eigen::VectorXd grad(n), scratch(n);
    for (int point = 0; point < config.points; ++point) {
        Eigen::VectorXd theta = theta0 + config.jitter * standard_normal(rng, n);
        // A kink sits where a knot equals its predecessor (or zero for the first knot).
        const double margin = std::max(1e-6, 10.0 * config.step * std::max(1.0, theta.cwiseAbs().maxCoeff()));
        std::vector<bool> skip(static_cast<std::size_t>(n), false);
        for (const auto& chain : chains) {
            for (Eigen::Index j = 0; j < chain.count; ++j) {
                const Eigen::Index i = chain.first + j;
                const double prev = j == 0 ? 0.0 : theta[i - 1];
                if (std::abs(theta[i] - prev) >= margin) continue;
                if (config.perturb_kinks) {
                    // The next iteration rechecks the following knot against the moved one.
                    theta[i] = prev + (theta[i] >= prev ? 1.0 : -1.0) * 10.0 * margin;
                } else {
                    skip[static_cast<std::size_t>(i)] = true;
                    if (j > 0) skip[static_cast<std::size_t>(i - 1)] = true;
                }
            }
        }
        objective(theta, grad);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (skip[static_cast<std::size_t>(i)]) {
                ++report.flagged;
                continue;
            }
            const double h = config.step * std::max(1.0, std::abs(theta[i]));
            Eigen::VectorXd plus = theta, minus = theta;
            plus[i] += h;
            minus[i] -= h;
            const double numeric = (objective(plus, scratch) - objective(minus, scratch)) / (2.0 * h);
            const double err =
                std::abs(grad[i] - numeric) / std::max({1.0, std::abs(grad[i]), std::abs(numeric)});
            report.max_relative_error = std::max(report.max_relative_error, err);
            ++report.coordinates_checked;
        }
        ++report.points;
    }
    report.passed = report.max_relative_error <= config.tolerance;
    return report;
}

}  // namespace btvc
