#include "btvc/calibration.hpp"
#include "btvc/errors.hpp"
#include "btvc/inference.hpp"
#include "btvc/kernels.hpp"
#include "btvc/pipeline.hpp"
#include "btvc/simulation.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace btvc;

namespace {

const std::vector<std::string> kChannels{"a", "b", "c"};

double normal_log_pdf(double x, double m, double s) {
    return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(s) - 0.5 * ((x - m) / s) * ((x - m) / s);
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXd m(r, c);
    for (auto& v : m.reshaped()) v = unif(rng);
    return m;
}

ModelStructure additive_structure(int T) {
    ModelStructure s;
    s.level_grid = build_grid(T, KnotDistance{14});
    s.regression_grid = build_grid(T, KnotDistance{20});
    s.rho = 10.0;
    return s;
}

double mean_width(const PosteriorDraws& post, Eigen::Index channel, const std::vector<std::pair<int, int>>& spans) {
    const Eigen::MatrixXd lo = quantile_curve(post.coefficients, 0.025);
    const Eigen::MatrixXd hi = quantile_curve(post.coefficients, 0.975);
    double total = 0.0;
    int n = 0;
    for (const auto& [a, b] : spans) {
        for (int t = a; t <= b; ++t, ++n) total += hi(t - 1, channel) - lo(t - 1, channel);
    }
    return total / n;
}

}  // namespace

TEST_CASE("window validation") {
    CHECK(apply_prior_windows({}, kChannels, 50).empty());
    const CalibrationPrior ok = apply_prior_windows({{"b", 1, 50, 0.3, 0.1}, {"b", 51, 60, 0.2, 0.1}}, kChannels, 60);
    REQUIRE(ok.terms().size() == 2u);
    CHECK(ok.terms()[0].channel == 1);
    CHECK(ok.terms()[1].start == 51);

    CHECK_THROWS_WITH_AS(apply_prior_windows({{"zz", 1, 5, 0.3, 0.1}}, kChannels, 50), doctest::Contains("zz"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(apply_prior_windows({{"a", 1, 10, 0.3, 0.1}, {"a", 10, 20, 0.3, 0.1}}, kChannels, 50),
                         doctest::Contains("overlap"), ValidationError);
    // Same span on different channels is fine.
    CHECK_NOTHROW(apply_prior_windows({{"a", 1, 10, 0.3, 0.1}, {"c", 1, 10, 0.3, 0.1}}, kChannels, 50));
    CHECK_THROWS_AS(apply_prior_windows({{"a", 0, 10, 0.3, 0.1}}, kChannels, 50), ValidationError);
    CHECK_THROWS_AS(apply_prior_windows({{"a", 40, 51, 0.3, 0.1}}, kChannels, 50), ValidationError);
    CHECK_THROWS_AS(apply_prior_windows({{"a", 12, 10, 0.3, 0.1}}, kChannels, 50), ValidationError);
    CHECK_THROWS_AS(apply_prior_windows({{"a", 1, 10, 0.3, 0.0}}, kChannels, 50), ValidationError);
    CHECK_THROWS_AS(apply_prior_windows({{"a", 1, 10, -0.1, 0.1}}, kChannels, 50), ValidationError);
}

TEST_CASE("log density is the length-weighted normal sum") {
    const Eigen::MatrixXd beta = random_matrix(40, 3, 1);
    const std::vector<PriorWindow> windows{{"a", 3, 12, 0.4, 0.2}, {"c", 20, 40, 0.7, 0.05}, {"a", 30, 30, 0.1, 1.0}};
    const CalibrationPrior prior = apply_prior_windows(windows, kChannels, 40);
    double want = 0.0;
    for (const auto& w : windows) {
        const auto c = std::find(kChannels.begin(), kChannels.end(), w.channel) - kChannels.begin();
        double s = 0.0;
        for (int t = w.start; t <= w.end; ++t) s += normal_log_pdf(beta(t - 1, c), w.mean, w.sd);
        want += s / (w.end - w.start + 1);
    }
    CHECK(prior.log_density(beta) == doctest::Approx(want).epsilon(1e-13));
    CHECK(CalibrationPrior{}.log_density(beta) == 0.0);

    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(40, 3);
    prior.add_gradient(beta, grad);
    const double h = 1e-6;
    for (Eigen::Index c = 0; c < 3; ++c) {
        for (Eigen::Index t = 0; t < 40; ++t) {
            Eigen::MatrixXd up = beta, down = beta;
            up(t, c) += h;
            down(t, c) -= h;
            const double fd = (prior.log_density(up) - prior.log_density(down)) / (2 * h);
            CHECK(grad(t, c) == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
        }
    }
}

TEST_CASE("windows only touch the named channel") {
    const CalibrationPrior prior = apply_prior_windows({{"b", 5, 25, 0.3, 0.1}}, kChannels, 30);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal;
    for (int rep = 0; rep < 50; ++rep) {
        const Eigen::MatrixXd beta = random_matrix(30, 3, 100 + rep);
        Eigen::MatrixXd other = beta;
        for (Eigen::Index t = 0; t < 30; ++t) {
            other(t, 0) += normal(rng);
            other(t, 2) += normal(rng);
        }
        CHECK(prior.log_density(other) == prior.log_density(beta));
        Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(30, 3);
        prior.add_gradient(beta, grad);
        CHECK(grad.col(0).isZero(0.0));
        CHECK(grad.col(2).isZero(0.0));
        CHECK(grad.col(1).head(4).isZero(0.0));
        CHECK(grad.col(1).tail(5).isZero(0.0));
    }
}

TEST_CASE("model term uses kernel-weighted coefficients") {
    const int T = 60;
    const ModelStructure s = additive_structure(T);
    const ModelDesign d = s.design(random_matrix(T, 3, 3));
    const std::vector<PriorWindow> windows{{"b", 10, 40, 0.5, 0.1}};
    const Model m(d, Eigen::VectorXd::Ones(T), HyperParams{}, PriorOptions{},
                  apply_prior_windows(windows, kChannels, T));
    const Model plain(d, Eigen::VectorXd::Ones(T), HyperParams{});
    const ParameterLayout layout(m);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal;
    Eigen::VectorXd theta(layout.size());
    for (auto& v : theta) v = normal(rng);
    const ParameterSet p = layout.to_params(theta);
    const Eigen::MatrixXd beta = d.regression->weights() * p.b_reg;
    double want = 0.0;
    for (int t = 10; t <= 40; ++t) want += normal_log_pdf(beta(t - 1, 1), 0.5, 0.1);
    want /= 31.0;
    CHECK(m.terms(p).calibration == doctest::Approx(want).epsilon(1e-12));
    CHECK(m.terms(p).total() - plain.terms(p).total() == doctest::Approx(want).epsilon(1e-10));

    GradientCheckConfig gc;
    gc.seed = 5;
    CHECK(check_gradient(make_objective(m, layout, false), theta, gc, layout.laplace_chains()).passed);
}

TEST_CASE("empty window list leaves the fit bit-identical") {
    SimConfig sim;
    sim.T = 150;
    sim.seed = 6;
    const SimDataset data = simulate_rw(sim);
    const ModelStructure s = additive_structure(150);
    const ModelDesign d = s.design(data.frame.regressors());
    const Model plain(d, data.frame.response(), HyperParams{});
    const Model empty(d, data.frame.response(), HyperParams{}, PriorOptions{},
                      apply_prior_windows({}, data.frame.regressor_names(), 150));
    MapConfig mc;
    mc.seed = 7;
    SviConfig sc;
    sc.iterations = 300;
    sc.seed = 8;
    const FitResult a = fit_svi(plain, ParameterLayout(plain), mc, sc);
    const FitResult b = fit_svi(empty, ParameterLayout(empty), mc, sc);
    CHECK(a.trace == b.trace);
    CHECK(a.elbo_trace == b.elbo_trace);
    CHECK((a.theta.array() == b.theta.array()).all());
    CHECK((a.variational->mean.array() == b.variational->mean.array()).all());
    CHECK((a.variational->log_sd.array() == b.variational->log_sd.array()).all());
}

TEST_CASE("a dominant prior pins the coefficient") {
    SimConfig sim;
    sim.T = 120;
    sim.seed = 9;
    const SimDataset data = simulate_rw(sim);
    ModelStructure s;
    s.level_grid = build_grid(120, KnotDistance{14});
    s.regression_grid = KnotGrid({60}, 120);
    s.rho = 10.0;
    const double target = 0.8, sd = 1e-3;
    const Model m(s.design(data.frame.regressors()), data.frame.response(), HyperParams{}, PriorOptions{},
                  apply_prior_windows({{"x2", 1, 120, target, sd}}, data.frame.regressor_names(), 120));
    const FitResult fit = fit_map(m, ParameterLayout(m), MapConfig{});
    const Eigen::MatrixXd beta = m.design().regression->weights() * fit.map_params.b_reg;
    CHECK((beta.col(1).array() - target).abs().maxCoeff() <= 2 * sd);
}

TEST_CASE("prior window files resolve dates against the calendar") {
    std::stringstream csv;
    csv << "date,y,a,b\n";
    for (int d = 1; d <= 20; ++d) csv << "2024-03-" << (d < 10 ? "0" : "") << d << ",1,1,1\n";
    const TimeSeriesFrame frame = read_csv(csv, CsvSchema{});

    std::stringstream good("channel,start_date,end_date,mean,sd\nb,2024-03-05,2024-03-09,0.25,0.05\n\na,2024-03-01,2024-03-01,1,2\n");
    const auto windows = read_prior_windows(good, frame);
    REQUIRE(windows.size() == 2u);
    CHECK(windows[0].channel == "b");
    CHECK(windows[0].start == 5);
    CHECK(windows[0].end == 9);
    CHECK(windows[0].mean == 0.25);
    CHECK(windows[0].sd == 0.05);
    CHECK(windows[1].start == 1);
    CHECK(windows[1].end == 1);

    std::stringstream outside("channel,start_date,end_date,mean,sd\nb,2024-03-05,2024-04-09,0.25,0.05\n");
    CHECK_THROWS_WITH_AS(read_prior_windows(outside, frame), doctest::Contains("2024-04-09"), ValidationError);
    std::stringstream header("chan,start,end,mean,sd\n");
    CHECK_THROWS_AS(read_prior_windows(header, frame), ValidationError);
    std::stringstream cells("channel,start_date,end_date,mean,sd\nb,2024-03-05,2024-03-09,x,0.05\n");
    CHECK_THROWS_AS(read_prior_windows(cells, frame), ValidationError);
}

TEST_CASE("two windows on one channel narrow its intervals") {
    for (std::uint64_t seed : {31u, 32u, 33u}) {
        SimConfig sim;
        sim.seed = seed;
        const SimDataset data = simulate_rw(sim);
        const std::vector<std::pair<int, int>> spans{{61, 90}, {181, 210}};
        std::vector<PriorWindow> windows;
        for (const auto& [a, b] : spans) {
            const double mean = data.true_coefficients.col(1).segment(a - 1, b - a + 1).mean();
            windows.push_back({"x2", a, b, mean, 0.02});
        }
        const ModelDesign d = additive_structure(300).design(data.frame.regressors());
        const Model plain(d, data.frame.response(), HyperParams{});
        const Model calibrated(d, data.frame.response(), HyperParams{}, PriorOptions{},
                               apply_prior_windows(windows, data.frame.regressor_names(), 300));
        MapConfig mc;
        mc.seed = seed;
        SviConfig sc;
        sc.iterations = 3000;
        sc.seed = seed;
        const ParameterLayout lp(plain), lc(calibrated);
        const PosteriorDraws a = draw_posterior(fit_svi(plain, lp, mc, sc), lp, d, 400, seed);
        const PosteriorDraws b = draw_posterior(fit_svi(calibrated, lc, mc, sc), lc, d, 400, seed);
        CHECK(mean_width(b, 1, spans) < mean_width(a, 1, spans));
    }
}
