#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "arrayem/harness.hpp"
#include "arrayem/model_io.hpp"
#include "support.hpp"

using namespace arrayem;
namespace fs = std::filesystem;

namespace {

std::string scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "arrayem_unit_harness";
    fs::create_directories(dir);
    return (dir / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

ExperimentConfig small_example1() {
    Config c;
    c.set("design", "example1");
    c.set("shape", "3x2x2");
    c.set("sample_sizes", "10,20");
    c.set("missing", "0.3,0.1");
    c.set("replications", "2");
    c.set("seed", "9");
    return ExperimentConfig::from_config(c);
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("quartiles") {
    const BoxSummary five = box_summary({5, 3, 1, 4, 2});
    CHECK(five.count == 5);
    CHECK(five.min == 1);
    CHECK(five.q1 == 2);
    CHECK(five.median == 3);
    CHECK(five.q3 == 4);
    CHECK(five.max == 5);

    const BoxSummary one = box_summary({0.25});
    CHECK(one.min == 0.25);
    CHECK(one.q1 == 0.25);
    CHECK(one.median == 0.25);
    CHECK(one.q3 == 0.25);
    CHECK(one.max == 0.25);

    CHECK(box_summary({1.0, std::nan(""), 3.0}).median == 2.0);
    CHECK_THROWS_AS((void)box_summary({std::nan("")}), InvalidArgument);
    CHECK(quantile({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));

    // sorted-list oracle
    std::mt19937_64 rng(501);
    std::uniform_int_distribution<int> len(1, 40);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> v(static_cast<std::size_t>(len(rng)));
        for (auto& x : v) x = std::normal_distribution<double>()(rng);
        std::vector<double> s = v;
        std::sort(s.begin(), s.end());
        for (double p : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            const double h = p * static_cast<double>(s.size() - 1);
            const auto lo = static_cast<std::size_t>(h);
            const std::size_t hi = std::min(lo + 1, s.size() - 1);
            const double expected = s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
            CHECK(quantile(v, p) == doctest::Approx(expected).epsilon(1e-14));
        }
    }
}

TEST_CASE("pearson correlation") {
    CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
    CHECK(pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(std::isnan(pearson({1}, {1})));
    CHECK(std::isnan(pearson({1, 1, 1}, {1, 2, 3})));
    CHECK_THROWS_AS((void)pearson({1, 2}, {1}), InvalidArgument);
}

TEST_CASE("stream generators") {
    auto a = stream_rng(1, 2, 3);
    auto b = stream_rng(1, 2, 3);
    auto c = stream_rng(1, 3, 3);
    auto d = stream_rng(1, 2, 4);
    const auto va = a();
    CHECK(va == b());
    CHECK(va != c());
    CHECK(va != d());
    auto e = stream_rng(std::uint64_t{1} << 40, 2, 3);
    CHECK(va != e());
}

TEST_CASE("cell deletion") {
    std::mt19937_64 rng(503);
    const MultiwayArray x = oracle::random_array(Shape{6, 4, 2}, rng);
    const Eigen::VectorXd u = standard_uniform(x.size(), rng);
    CHECK(delete_cells(x, u, 0.0).mask.count_observed() == x.size());
    const PartialArray p4 = delete_cells(x, u, 0.4);
    const PartialArray p2 = delete_cells(x, u, 0.2);
    for (Index c = 0; c < x.size(); ++c) {
        if (!p4.mask.observed(c)) continue;
        CHECK(p2.mask.observed(c));
        CHECK(p4.values[c] == x[c]);
    }
}

TEST_CASE("simulated missingness stays within the binomial band") {
    Config c;
    c.set("design", "example1");
    c.set("sample_sizes", "20");
    const ExperimentConfig ec = ExperimentConfig::from_config(c);
    const SimulatedReplication sim = simulate_replication(ec, 0, 20, 0);
    REQUIRE(sim.complete.size() == 20);
    Index observed = 0;
    for (std::size_t l = 0; l < 20; ++l) observed += delete_cells(sim.complete[l], sim.uniforms[l], 0.4).mask.count_observed();
    const double n = 20.0 * 48.0;
    const double sd = std::sqrt(n * 0.4 * 0.6);
    CHECK(std::abs(static_cast<double>(observed) - 0.6 * n) <= 3.0 * sd);

    // arrays are nested across sample sizes
    const SimulatedReplication small = simulate_replication(ec, 0, 5, 0);
    for (std::size_t l = 0; l < 5; ++l) CHECK(small.complete[l] == sim.complete[l]);
}

TEST_CASE("experiment config") {
    Config c;
    c.set("design", "example4");
    const ExperimentConfig e4 = ExperimentConfig::from_config(c);
    CHECK(e4.p1_values == std::vector<Index>{50, 100, 200});
    CHECK(e4.missing == std::vector<double>{0.6, 0.4, 0.2, 0.1});
    CHECK(e4.full_shape(50) == std::vector<Index>{50, 6, 2});

    c.set("missing", "1.0");
    CHECK_THROWS_AS((void)ExperimentConfig::from_config(c), ConfigError);
    c.set("missing", "0.2");
    c.set("replications", "0");
    CHECK_THROWS_AS((void)ExperimentConfig::from_config(c), ConfigError);
    Config d;
    d.set("design", "nope");
    CHECK_THROWS_AS((void)ExperimentConfig::from_config(d), ConfigError);
}

TEST_CASE("experiments are deterministic and thread-count independent") {
    ExperimentConfig ec = small_example1();
    const auto a = run_experiment(ec);
    ec.threads = 2;
    const auto b = run_experiment(ec);
    REQUIRE(a.size() == 2 * 2 * 2);
    REQUIRE(a.size() == b.size());
    const std::string pa = scratch("a.csv");
    const std::string pb = scratch("b.csv");
    write_metrics(pa, a);
    write_metrics(pb, b);
    CHECK(slurp(pa) == slurp(pb));
    for (const auto& r : a) {
        CHECK(r.error.empty());
        CHECK(r.correlation >= -1.0);
        CHECK(r.correlation <= 1.0);
        CHECK(r.mse >= 0.0);
    }
    CHECK(std::is_sorted(a.begin(), a.end(), [](const MetricsRecord& x, const MetricsRecord& y) {
        return std::tie(x.p1, x.n, x.missing, x.replication) < std::tie(y.p1, y.n, y.missing, y.replication);
    }));
}

TEST_CASE("metrics tables round-trip and summarize") {
    const auto records = run_experiment(small_example1());
    const std::string path = scratch("m.csv");
    write_metrics(path, records);
    const auto back = read_metrics(path);
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].correlation == records[i].correlation);
        CHECK(back[i].mse == records[i].mse);
        CHECK(back[i].missing == records[i].missing);
    }
    const auto rows = summarize(back);
    CHECK(rows.size() == 2 * 2 * 2);
    for (const auto& r : rows) CHECK(r.box.count == 2);
    write_summary(scratch("s.csv"), rows);
    write_boxplot_svg(scratch("c.svg"), rows, "correlation");
    CHECK(slurp(scratch("c.svg")).rfind("<svg", 0) == 0);
}

TEST_CASE("model dispatch") {
    std::mt19937_64 rng(505);
    const ArrayNormalModel truth = oracle::random_model(Shape{5, 3}, rng);
    PartialSample s;
    for (const auto& x : sample(truth, rng, 6)) s.push_back(PartialArray::complete(x));
    ModelSpec flip;
    flip.kernels.resize(2);
    const FitOutcome a = fit_model(s, flip);
    CHECK_FALSE(a.avspmm.has_value());
    ModelSpec known = flip;
    known.kernels[0] = Eigen::MatrixXd::Identity(5, 5);
    const FitOutcome b = fit_model(s, known);
    CHECK(b.avspmm.has_value());
    known.kernels[0] = Eigen::MatrixXd::Identity(4, 4);
    CHECK_THROWS_AS((void)fit_model(s, known), InvalidArgument);
}

TEST_CASE("fit settings from config") {
    ModelSpec spec;
    Config c;
    c.set("max_iterations", "7");
    c.set("estep", "mean");
    c.set("route", "precision");
    c.set("lambda_grid", "50");
    apply_fit_settings(c, spec);
    CHECK(spec.avspmm.max_iterations == 7);
    CHECK(spec.flip_flop.estep == EStep::ConditionalMean);
    CHECK(spec.avspmm.route == ConditioningRoute::Precision);
    CHECK(spec.avspmm.search.grid_points == 50);
    c.set("estep", "guess");
    CHECK_THROWS_AS(apply_fit_settings(c, spec), ConfigError);
}

TEST_CASE("cross-validation") {
    std::mt19937_64 rng(507);
    const ArrayNormalModel truth = oracle::random_model(Shape{4, 3}, rng);
    PartialSample s;
    for (const auto& x : sample(truth, rng, 15)) s.push_back(PartialArray::complete(x));
    // truly missing cells carry absurd placeholders; scoring them would wreck the correlation
    for (std::size_t l = 0; l < s.size(); l += 3) {
        s[l].mask.set(2, false);
        s[l].values[2] = 1e9;
    }
    ModelSpec spec;
    spec.kernels.resize(2);
    CvConfig cv;
    cv.holdout = {0.2};
    cv.replications = 3;
    cv.trait_dim = 1;
    const auto a = run_cv(s, spec, cv);
    const auto b = run_cv(s, spec, cv);
    REQUIRE(a.size() == 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].correlation == b[i].correlation);
        CHECK(a[i].slice_correlations.size() == 3);
        CHECK(std::abs(a[i].correlation) <= 1.0);
        CHECK(a[i].correlation > 0.0);
    }
    cv.holdout = {0.0};
    CHECK_THROWS_AS((void)run_cv(s, spec, cv), ConfigError);
}

TEST_CASE("parallel_for rethrows the first failure") {
    std::vector<int> hits(20, 0);
    parallel_for(20, 3, [&](int i) { hits[static_cast<std::size_t>(i)] = 1; });
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    CHECK_THROWS_AS(parallel_for(5, 2, [](int i) {
                        if (i == 3) throw InvalidArgument("boom");
                    }),
                    InvalidArgument);
}

TEST_CASE("fit directories round-trip the implied model") {
    std::mt19937_64 rng(509);
    const ArrayNormalModel truth = oracle::random_model(Shape{3, 2}, rng);
    PartialSample s;
    for (const auto& x : sample(truth, rng, 8)) s.push_back(PartialArray::complete(x));
    s[0].mask.set(1, false);
    const LongTable table = default_labels(s);
    ModelSpec spec;
    spec.kernels.resize(2);
    const FitOutcome fit = fit_model(table.sample, spec);
    const std::string dir = scratch("fit");
    write_fit(dir, table, fit);
    const ArrayNormalModel back = read_fit_model(dir, table);
    CHECK(back.mean == fit.implied.mean);
    CHECK((vec_parameters(back).covariance - vec_parameters(fit.implied).covariance).norm() == 0.0);
    const std::string imputed = scratch("imputed.csv");
    CHECK(write_imputed(imputed, table, back) == 1);
}

}  // TEST_SUITE
