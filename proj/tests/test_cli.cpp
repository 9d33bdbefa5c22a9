#include "btvc/pipeline.hpp"
#include "btvc/timeframe.hpp"

#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace btvc;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

class Workspace {
public:
    Workspace() : root_(fs::temp_directory_path() / ("btvc_cli_" + std::to_string(::getpid()))) {
        fs::remove_all(root_);
        fs::create_directories(root_);
    }
    ~Workspace() { fs::remove_all(root_); }

    fs::path path(const std::string& name) const { return root_ / name; }

    Run run(const std::string& args) const {
        const std::string cmd = std::string(BTVC_CLI) + " " + args + " >" + path("stdout").string() + " 2>" +
                                path("stderr").string();
        const int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(path("stdout")), slurp(path("stderr"))};
    }

    /// Multiplicative data split into a training CSV and a future-regressor CSV.
    void make_data(int T, int train_rows) const {
        REQUIRE(run("simulate --kind multiplicative --T " + std::to_string(T) + " --seed 3 --out " +
                    path("sim").string()).code == 0);
        const TimeSeriesFrame frame = ingest_csv(path("sim/data.csv"), CsvSchema{});
        std::ofstream train(path("train.csv"));
        write_csv(train, frame.slice(0, train_rows));
        std::ofstream future(path("future.csv"));
        future << "date,x1,x2\n";
        for (Eigen::Index t = train_rows; t < frame.rows(); ++t) {
            future << format_date(frame.timestamps()[t]) << ',' << format_double(frame.regressors()(t, 0)) << ','
                   << format_double(frame.regressors()(t, 1)) << '\n';
        }
    }

private:
    fs::path root_;
};

const std::string kFast = " --set inference.map_restarts=1 --set inference.svi_iterations=500";

}  // namespace

TEST_CASE("simulate writes data and truth with the default length") {
    Workspace ws;
    const Run r = ws.run("simulate --seed 1 --out " + ws.path("sim").string());
    REQUIRE(r.code == 0);
    const auto data = lines(slurp(ws.path("sim/data.csv")));
    const auto truth = lines(slurp(ws.path("sim/truth.csv")));
    CHECK(data.size() == 301u);
    CHECK(truth.size() == 301u);
    CHECK(data[0] == "date,y,x1,x2,x3");
    CHECK(truth[0] == "date,trend,beta_x1,beta_x2,beta_x3");
    CHECK(ws.run("simulate --seed 1 --out " + ws.path("sim2").string()).code == 0);
    CHECK(slurp(ws.path("sim/data.csv")) == slurp(ws.path("sim2/data.csv")));
}

TEST_CASE("fit, predict and decompose") {
    Workspace ws;
    ws.make_data(188, 160);
    const std::string data = ws.path("train.csv").string();
    const std::string before = slurp(data);

    Run r = ws.run("fit --data " + data + " --seed 4 --out " + ws.path("a").string() + kFast);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    for (const char* name : {"fit.json", "manifest.json"}) CHECK_NOTHROW((void)nlohmann::json::parse(slurp(ws.path("a") / name)));
    const auto dec = lines(slurp(ws.path("a/decomposition.csv")));
    CHECK(dec.size() == 161u);
    const auto manifest = nlohmann::json::parse(slurp(ws.path("a/manifest.json")));
    CHECK(manifest["seed"] == 4);
    CHECK(manifest["inputs"]["data"]["fnv1a"] == fnv1a_hex(before));
    CHECK(slurp(data) == before);

    // Same seed, same output directory: byte-identical fit documents.
    const std::string first = slurp(ws.path("a/fit.json"));
    REQUIRE(ws.run("fit --data " + data + " --seed 4 --out " + ws.path("a").string() + kFast).code == 0);
    CHECK(slurp(ws.path("a/fit.json")) == first);

    const std::string fit = ws.path("a/fit.json").string();
    const std::string future = ws.path("future.csv").string();
    r = ws.run("predict --fit " + fit + " --future " + future + " -H 28 --out " + ws.path("p").string());
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto fc = lines(slurp(ws.path("p/forecast.csv")));
    CHECK(fc.size() == 29u);
    CHECK(fc[0] == "date,forecast");

    r = ws.run("predict --fit " + fit + " --future " + future + " -H 0 --out " + ws.path("p0").string());
    REQUIRE(r.code == 0);
    CHECK(slurp(ws.path("p0/forecast.csv")) == "date,forecast\n");

    r = ws.run("predict --fit " + fit + " --future " + future + " -H 40 --out " + ws.path("p1").string());
    CHECK(r.code == 1);

    r = ws.run("predict --fit " + fit + " --future " + future + " -H 5 --quantiles 0.1,0.9 --out " +
               ws.path("p2").string());
    CHECK(r.code == 1);
    const auto err = nlohmann::json::parse(r.err);
    CHECK(err["error"] == "validation");
    CHECK(err["message"].get<std::string>().find("svi") != std::string::npos);

    r = ws.run("decompose --fit " + fit + " --data " + data + " --out " + ws.path("d").string());
    REQUIRE(r.code == 0);
    CHECK(slurp(ws.path("d/decomposition.csv")) == slurp(ws.path("a/decomposition.csv")));

    // SVI fits can produce quantiles.
    r = ws.run("fit --data " + data + " --seed 4 --set inference.mode=svi --out " + ws.path("s").string() + kFast);
    REQUIRE(r.code == 0);
    r = ws.run("predict --fit " + ws.path("s/fit.json").string() + " --future " + future +
               " -H 5 --quantiles 0.1,0.9 --draws 100 --out " + ws.path("q").string());
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(lines(slurp(ws.path("q/forecast.csv")))[0] == "date,forecast,q0.1,q0.9");
}

TEST_CASE("validation errors exit 1 with a single-line message") {
    Workspace ws;
    ws.make_data(60, 60);
    Run r = ws.run("fit --data " + ws.path("train.csv").string() + " --set data.response_column=sales --out " +
                   ws.path("x").string());
    CHECK(r.code == 1);
    CHECK(lines(r.err).size() == 1u);
    CHECK(r.err.find("sales") != std::string::npos);
    CHECK(nlohmann::json::parse(r.err)["error"] == "validation");

    r = ws.run("fit --data " + ws.path("missing.csv").string() + " --out " + ws.path("x").string());
    CHECK(r.code == 1);
    r = ws.run("fit --data " + ws.path("train.csv").string() + " --set prior.nothing=1 --out " +
               ws.path("x").string());
    CHECK(r.code == 1);
    CHECK(r.err.find("prior.nothing") != std::string::npos);
}

TEST_CASE("config file and flag precedence") {
    Workspace ws;
    ws.make_data(80, 80);
    std::ofstream(ws.path("run.cfg")) << "run.seed = 21\nprior.sigma_lev = 0.2\ninference.map_restarts = 1\n";
    const Run r = ws.run("fit --data " + ws.path("train.csv").string() + " --config " + ws.path("run.cfg").string() +
                         " --set prior.sigma_lev=0.3 --out " + ws.path("c").string());
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto doc = nlohmann::json::parse(slurp(ws.path("c/fit.json")));
    CHECK(doc["config"]["run.seed"] == "21");
    CHECK(doc["config"]["prior.sigma_lev"] == "0.3");
    CHECK(doc["config"]["prior.sigma_pool"] == RunConfig{}.to_map().at("prior.sigma_pool"));
    const Run r2 = ws.run("fit --data " + ws.path("train.csv").string() + " --config " + ws.path("run.cfg").string() +
                          " --seed 22 --out " + ws.path("c2").string());
    REQUIRE(r2.code == 0);
    CHECK(nlohmann::json::parse(slurp(ws.path("c2/fit.json")))["config"]["run.seed"] == "22");
}

TEST_CASE("predict reproduces the backtest forecast of a split") {
    Workspace ws;
    ws.make_data(200, 200);
    const std::string data = ws.path("train.csv").string();
    Run r = ws.run("backtest --data " + data + " --seed 5 --horizon 28 --splits 2 --out " + ws.path("bt").string() +
                   kFast);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("mean") != std::string::npos);

    // Split 1 trains on the first 144 rows.
    const TimeSeriesFrame frame = ingest_csv(data, CsvSchema{});
    {
        std::ofstream train(ws.path("split.csv"));
        write_csv(train, frame.slice(0, 144));
        std::ofstream future(ws.path("split_future.csv"));
        future << "date,x1,x2\n";
        for (Eigen::Index t = 144; t < 172; ++t) {
            future << format_date(frame.timestamps()[t]) << ',' << format_double(frame.regressors()(t, 0)) << ','
                   << format_double(frame.regressors()(t, 1)) << '\n';
        }
    }
    r = ws.run("fit --data " + ws.path("split.csv").string() + " --seed " + std::to_string(derive_seed(5, 100)) +
               " --out " + ws.path("f").string() + kFast);
    REQUIRE(r.code == 0);
    r = ws.run("predict --fit " + ws.path("f/fit.json").string() + " --future " + ws.path("split_future.csv").string() +
               " -H 28 --out " + ws.path("f").string());
    REQUIRE(r.code == 0);

    const auto predicted = lines(slurp(ws.path("f/forecast.csv")));
    std::vector<std::string> backtested;
    for (const auto& line : lines(slurp(ws.path("bt/forecasts.csv")))) {
        if (line.rfind("1,", 0) == 0) {
            const auto a = line.find(',');
            const auto b = line.find(',', a + 1);
            const auto c = line.find(',', b + 1);
            backtested.push_back(line.substr(a + 1, b - a - 1) + "," + line.substr(c + 1));
        }
    }
    REQUIRE(backtested.size() == 28u);
    CHECK(std::vector<std::string>(predicted.begin() + 1, predicted.end()) == backtested);

    r = ws.run("backtest --data " + data + " --model seasonal_naive --out " + ws.path("sn").string());
    REQUIRE(r.code == 0);
    const auto manifest = nlohmann::json::parse(slurp(ws.path("sn/manifest.json")));
    CHECK(manifest["plan"]["horizon"] == 28);
    CHECK(manifest["plan"]["splits"] == 6);
}
