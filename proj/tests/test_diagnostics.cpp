#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "test_util.hpp"
#include "w2vbert/diagnostics.hpp"

using namespace w2v;
using namespace w2v::testutil;
using Catch::Approx;

namespace {
std::vector<MetricsRow> trajectory(int n, double mlm_acc, double l_d, double perplexity) {
    std::vector<MetricsRow> rows((size_t)n);
    for (int i = 0; i < n; ++i) {
        rows[(size_t)i].step = i + 1;
        rows[(size_t)i].mlm_acc = mlm_acc;
        rows[(size_t)i].l_d = l_d;
        rows[(size_t)i].codebook_perplexity = perplexity;
    }
    return rows;
}
} // namespace

TEST_CASE("collapse detector: sustained high accuracy + concentrated codes") {
    const int v = 64;
    const double dmax = 63.0 / 64.0;
    CHECK(detect_collapse(trajectory(100, 0.999, 0.95 * dmax, 1.2), v).collapsed);
    // healthy run: spread codebook
    CHECK_FALSE(detect_collapse(trajectory(100, 0.999, 0.1 * dmax, 50.0), v).collapsed);
    // high diversity loss but mediocre accuracy is not the collapse signature
    CHECK_FALSE(detect_collapse(trajectory(100, 0.7, 0.95 * dmax, 1.0), v).collapsed);

    // a single bad step inside the final-10% window breaks "sustained"
    auto rows = trajectory(100, 0.999, 0.95 * dmax, 1.2);
    rows[95].l_d = 0.2;
    CHECK_FALSE(detect_collapse(rows, v).collapsed);
    // ...but a dip before the window does not matter
    auto rows2 = trajectory(100, 0.999, 0.95 * dmax, 1.2);
    rows2[50].l_d = 0.0;
    rows2[50].mlm_acc = 0.0;
    CHECK(detect_collapse(rows2, v).collapsed);

    CHECK(detect_collapse(rows2, v).window_start_step == 91);
    CHECK_THROWS_AS(detect_collapse({}, v), TensorError);
}

TEST_CASE("a synthetic collapse trajectory mimicking the diagnostic figure") {
    // accuracy ramps to 1, diversity ramps to its ceiling, perplexity to 1
    const int v = 64;
    std::vector<MetricsRow> rows;
    for (int i = 1; i <= 200; ++i) {
        MetricsRow r;
        r.step = i;
        double t = i / 200.0;
        r.mlm_acc = t < 0.5 ? 2 * t : 1.0;
        r.l_d = (63.0 / 64.0) * std::min(1.0, 1.6 * t);
        r.codebook_perplexity = 64.0 - 63.0 * std::min(1.0, 1.6 * t);
        rows.push_back(r);
    }
    CollapseVerdict verdict = detect_collapse(rows, v);
    CHECK(verdict.collapsed);
    CHECK(verdict.final_perplexity == Approx(1.0));
    CHECK(verdict.final_mlm_accuracy == Approx(1.0));
}

TEST_CASE("config_diff_keys isolates single-knob changes") {
    TrainConfig a = tiny_train_config();
    TrainConfig b = a;
    CHECK(config_diff_keys(a, b).empty());
    b.weights.beta = 0.0;
    CHECK(config_diff_keys(a, b) == std::vector<std::string>{"beta"});
    b.model.bypass_contrastive = true;
    auto diff = config_diff_keys(a, b);
    CHECK(diff.size() == 2);
}

TEST_CASE("SVG plot writer emits polylines for every series") {
    std::string dir = fresh_dir("w2v_svg");
    detail::write_svg_plot(dir + "/plot.svg", "test",
                           {{"a", {{0, 0}, {1, 1}, {2, 0.5}}}, {"b", {{0, 1}, {2, 2}}}});
    std::ifstream in(dir + "/plot.svg");
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content.find("<svg") != std::string::npos);
    CHECK(std::count(content.begin(), content.end(), '\n') > 4);
    CHECK(content.find("polyline") != std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_CASE("layer ablation validates its splits up front") {
    TrainConfig cfg = tiny_train_config();
    auto corpus = tiny_corpus(cfg);
    CHECK_THROWS_AS(run_layer_ablation(4, {0}, cfg, corpus, fresh_dir("w2v_abl_bad")), TensorError);
    CHECK_THROWS_AS(run_layer_ablation(4, {5}, cfg, corpus, fresh_dir("w2v_abl_bad")), TensorError);
}

TEST_CASE("tiny end-to-end collapse experiment writes its artifacts") {
    TrainConfig cfg = tiny_train_config();
    cfg.total_steps = 3;
    cfg.log_every = 1;
    cfg.checkpoint_every = 0;
    auto corpus = tiny_corpus(cfg);
    std::string dir = fresh_dir("w2v_diag_smoke");
    ExperimentReport report = run_collapse_experiment(cfg, {cfg.weights.alpha}, 3, corpus, dir, true);
    REQUIRE(report.variants.size() == 3); // beta=0, layer removal, control
    CHECK(report.variants[0].cfg.weights.beta == 0.0);
    CHECK(report.variants[1].cfg.model.bypass_contrastive);
    CHECK(report.variants[2].cfg.weights.beta == 1.0);
    CHECK(std::filesystem::exists(dir + "/report.txt"));
    for (const auto& v : report.variants) {
        CHECK(std::filesystem::exists(dir + "/metrics_" + v.name + ".csv"));
        CHECK((int64_t)v.metrics.size() == 3);
    }
    CHECK(std::filesystem::exists(dir + "/mlm_accuracy.svg"));
    CHECK(std::filesystem::exists(dir + "/diversity_loss.svg"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("tiny layer ablation is bitwise reproducible") {
    TrainConfig cfg = tiny_train_config();
    cfg.total_steps = 2;
    cfg.log_every = 1;
    cfg.checkpoint_every = 0;
    cfg.probe_steps = 10;
    auto corpus = tiny_corpus(cfg);
    std::string d1 = fresh_dir("w2v_abl_1");
    std::string d2 = fresh_dir("w2v_abl_2");
    ExperimentReport r1 = run_layer_ablation(2, {1, 2}, cfg, corpus, d1);
    ExperimentReport r2 = run_layer_ablation(2, {1, 2}, cfg, corpus, d2);
    REQUIRE(r1.variants.size() == 2);
    for (size_t i = 0; i < r1.variants.size(); ++i) {
        CHECK(r1.variants[i].probe_accuracy == r2.variants[i].probe_accuracy);
        CHECK(r1.variants[i].baseline_accuracy == r2.variants[i].baseline_accuracy);
        for (size_t j = 0; j < r1.variants[i].metrics.size(); ++j)
            CHECK(r1.variants[i].metrics[j].l_p == r2.variants[i].metrics[j].l_p);
    }
    CHECK(file_bytes(d1 + "/probe.csv") == file_bytes(d2 + "/probe.csv"));
    CHECK(std::filesystem::exists(d1 + "/report.txt"));
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
}
