#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "w2vbert/config.hpp"
#include "w2vbert/probe.hpp"
#include "w2vbert/trainer.hpp"

namespace w2v {

struct CollapseVerdict {
    bool collapsed = false;
    double final_perplexity = 0;
    double final_mlm_accuracy = 0;
    double final_diversity = 0;
    int window_start_step = 0; // first step of the evaluated tail window
};

// Collapse rule: over the final 10% of logged steps, MLM accuracy >= 0.99 and
// diversity loss >= 0.9 * (V-1)/V, sustained across the whole window.
inline CollapseVerdict detect_collapse(const std::vector<MetricsRow>& trajectory, int codebook_size) {
    if (trajectory.empty()) tensor_fail("detect_collapse", "empty trajectory");
    const size_t window = std::max<size_t>(1, trajectory.size() / 10);
    const size_t start = trajectory.size() - window;
    const double dmax = (double)(codebook_size - 1) / codebook_size;
    bool collapsed = true;
    for (size_t i = start; i < trajectory.size(); ++i) {
        if (trajectory[i].mlm_acc < 0.99 || trajectory[i].l_d < 0.9 * dmax) {
            collapsed = false;
            break;
        }
    }
    CollapseVerdict verdict;
    verdict.collapsed = collapsed;
    verdict.final_perplexity = trajectory.back().codebook_perplexity;
    verdict.final_mlm_accuracy = trajectory.back().mlm_acc;
    verdict.final_diversity = trajectory.back().l_d;
    verdict.window_start_step = (int)trajectory[start].step;
    return verdict;
}

struct ExperimentVariant {
    std::string name;
    TrainConfig cfg;
    std::vector<MetricsRow> metrics;
    CollapseVerdict verdict;
    double probe_accuracy = -1;    // layer ablation only
    double baseline_accuracy = -1; // layer ablation only
};

struct ExperimentReport {
    std::string experiment;
    std::vector<ExperimentVariant> variants;
};

namespace detail {

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path);
    out << MetricsRow::csv_header() << "\n";
    for (const auto& r : rows) out << r.to_csv() << "\n";
}

// Minimal SVG line plot: one polyline per named series.
inline void write_svg_plot(const std::string& path, const std::string& title,
                           const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& series) {
    const double w = 640, h = 400, ml = 60, mb = 40, mt = 30, mr = 20;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& [name, pts] : series)
        for (auto [x, y] : pts) {
            xmin = std::min(xmin, x); xmax = std::max(xmax, x);
            ymin = std::min(ymin, y); ymax = std::max(ymax, y);
        }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto sy = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mb - mt); };
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
    std::ofstream out(path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
        << "</text>\n";
    out << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
        << "' stroke='black'/>\n";
    out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
        << "' stroke='black'/>\n";
    int ci = 0;
    double ly = mt + 10;
    for (const auto& [name, pts] : series) {
        const char* color = colors[ci % 6];
        out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (auto [x, y] : pts) out << sx(x) << "," << sy(y) << " ";
        out << "'/>\n";
        out << "<text x='" << w - mr - 150 << "' y='" << ly << "' font-size='12' fill='" << color
            << "'>" << name << "</text>\n";
        ly += 16;
        ++ci;
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "<text x='%g' y='%g' font-size='10'>%.3g</text><text x='%g' y='%g' font-size='10'>%.3g</text>",
                  ml - 40.0, h - mb, ymin, ml - 40.0, mt + 10.0, ymax);
    out << buf << "\n</svg>\n";
}

inline std::string config_digest(const TrainConfig& cfg) {
    KeyValueMap kv = cfg.to_kv();
    uint64_t h = 0;
    for (auto& [k, v] : kv)
        for (char c : k + "=" + v) h = splitmix64(h ^ (uint64_t)(unsigned char)c);
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

} // namespace detail

inline std::vector<std::string> config_diff_keys(const TrainConfig& a, const TrainConfig& b) {
    KeyValueMap ka = a.to_kv(), kb = b.to_kv();
    std::vector<std::string> diff;
    for (const auto& [k, v] : ka)
        if (kb.at(k) != v) diff.push_back(k);
    return diff;
}

// Run one training variant in its own subdirectory and collect its metrics.
inline ExperimentVariant run_variant(const std::string& name, const TrainConfig& cfg,
                                     const std::vector<TrainUtterance>& corpus,
                                     const std::string& out_dir) {
    std::filesystem::create_directories(out_dir + "/" + name);
    ExperimentVariant variant;
    variant.name = name;
    variant.cfg = cfg;
    Trainer trainer(cfg);
    PretrainResult res = run_pretraining(cfg, corpus, out_dir + "/" + name, trainer);
    variant.metrics = res.metrics;
    variant.verdict = detect_collapse(res.metrics, cfg.model.quantizer.entries_per_group);
    return variant;
}

// The paper's no-contrastive analysis: beta = 0 per alpha (identification
// term dropped, diversity retained), one layer-removal variant, and a
// full-model control that differs from the beta = 0 run in beta only.
inline ExperimentReport run_collapse_experiment(const TrainConfig& base_cfg,
                                                const std::vector<double>& alpha_values,
                                                int64_t steps,
                                                const std::vector<TrainUtterance>& corpus,
                                                const std::string& out_dir, bool plots = false) {
    ExperimentReport report;
    report.experiment = "collapse";
    std::filesystem::create_directories(out_dir);

    TrainConfig cfg = base_cfg;
    cfg.total_steps = steps;

    for (double alpha : alpha_values) {
        TrainConfig variant_cfg = cfg;
        variant_cfg.weights.beta = 0.0;
        variant_cfg.weights.alpha = alpha;
        std::ostringstream name;
        name << "no_contrastive_alpha" << alpha;
        report.variants.push_back(run_variant(name.str(), variant_cfg, corpus, out_dir));
    }
    {
        TrainConfig removal_cfg = cfg;
        removal_cfg.weights.beta = 0.0;
        removal_cfg.weights.alpha = alpha_values.empty() ? 0.5 : alpha_values[0];
        removal_cfg.model.bypass_contrastive = true;
        report.variants.push_back(run_variant("layer_removal", removal_cfg, corpus, out_dir));
    }
    {
        TrainConfig control_cfg = cfg; // full model, paper-default weights
        report.variants.push_back(run_variant("full_model_control", control_cfg, corpus, out_dir));
    }

    // the beta = 0 run sharing the control's alpha must differ from the
    // control in beta alone
    const ExperimentVariant& control = report.variants.back();
    for (const auto& v : report.variants) {
        if (v.cfg.weights.beta != 0.0 || v.cfg.model.bypass_contrastive) continue;
        if (v.cfg.weights.alpha != control.cfg.weights.alpha) continue;
        auto diff = config_diff_keys(v.cfg, control.cfg);
        if (diff.size() != 1 || diff[0] != "beta")
            tensor_fail("run_collapse_experiment", "variant '" + v.name +
                                                       "' is not a one-key (beta) diff from the control");
    }

    // report files
    std::ofstream rep(out_dir + "/report.txt");
    rep << "collapse experiment  (config digest " << detail::config_digest(cfg) << ")\n";
    rep << "codebook size V = " << cfg.model.quantizer.entries_per_group << ", steps = " << steps
        << "\n\n";
    char line[256];
    std::snprintf(line, sizeof(line), "%-28s %-10s %-12s %-10s %-12s\n", "variant", "collapsed",
                  "mlm_acc", "l_d", "perplexity");
    rep << line;
    for (const auto& v : report.variants) {
        detail::write_metrics_csv(out_dir + "/metrics_" + v.name + ".csv", v.metrics);
        std::snprintf(line, sizeof(line), "%-28s %-10s %-12.4f %-10.4f %-12.2f\n", v.name.c_str(),
                      v.verdict.collapsed ? "yes" : "no", v.verdict.final_mlm_accuracy,
                      v.verdict.final_diversity, v.verdict.final_perplexity);
        rep << line;
    }
    if (plots) {
        auto series_of = [&](auto getter) {
            std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> all;
            for (const auto& v : report.variants) {
                std::vector<std::pair<double, double>> pts;
                for (const auto& r : v.metrics) pts.push_back({(double)r.step, getter(r)});
                all.push_back({v.name, std::move(pts)});
            }
            return all;
        };
        detail::write_svg_plot(out_dir + "/mlm_loss.svg", "MLM training loss",
                               series_of([](const MetricsRow& r) { return r.l_m; }));
        detail::write_svg_plot(out_dir + "/mlm_accuracy.svg", "MLM training accuracy",
                               series_of([](const MetricsRow& r) { return r.mlm_acc; }));
        detail::write_svg_plot(out_dir + "/diversity_loss.svg", "Training diversity loss",
                               series_of([](const MetricsRow& r) { return r.l_d; }));
    }
    return report;
}

// Layer-split ablation: n contrastive blocks, total - n masked blocks,
// identical pretraining per variant, probe accuracy per split.
inline ExperimentReport run_layer_ablation(int total_layers, const std::vector<int>& splits,
                                           const TrainConfig& base_cfg,
                                           const std::vector<TrainUtterance>& probe_corpus,
                                           const std::string& out_dir) {
    for (int n : splits)
        if (n < 1 || n > total_layers)
            tensor_fail("run_layer_ablation", "invalid split n=" + std::to_string(n) +
                                                  " for total " + std::to_string(total_layers));
    ExperimentReport report;
    report.experiment = "layer_ablation";
    std::filesystem::create_directories(out_dir);

    for (int n : splits) {
        TrainConfig cfg = base_cfg;
        cfg.model.n_contrastive_layers = n;
        cfg.model.n_masked_layers = total_layers - n;
        std::ostringstream name;
        name << "C" << n;
        std::filesystem::create_directories(out_dir + "/" + name.str());
        ExperimentVariant variant;
        variant.name = name.str();
        variant.cfg = cfg;
        Trainer trainer(cfg);
        PretrainResult res = run_pretraining(cfg, probe_corpus, out_dir + "/" + name.str(), trainer);
        variant.metrics = res.metrics;
        variant.verdict = detect_collapse(res.metrics, cfg.model.quantizer.entries_per_group);
        ProbeResult probe = train_probe(trainer.model(), probe_corpus, cfg.seed, base_cfg.probe_steps,
                                        base_cfg.probe_lr);
        variant.probe_accuracy = probe.frame_accuracy;
        variant.baseline_accuracy = probe.baseline_accuracy;
        report.variants.push_back(std::move(variant));
        detail::write_metrics_csv(out_dir + "/metrics_" + name.str() + ".csv",
                                  report.variants.back().metrics);
    }

    std::ofstream rep(out_dir + "/report.txt");
    rep << "layer-split ablation, total layers = " << total_layers << "\n\n";
    char line[160];
    std::snprintf(line, sizeof(line), "%-8s %-12s %-12s %-18s %-18s\n", "variant", "contrastive",
                  "masked", "probe_accuracy", "baseline_accuracy");
    rep << line;
    std::ofstream probe_csv(out_dir + "/probe.csv");
    probe_csv << "variant,n_contrastive,n_masked,probe_accuracy,baseline_accuracy\n";
    for (const auto& v : report.variants) {
        std::snprintf(line, sizeof(line), "%-8s %-12d %-12d %-18.4f %-18.4f\n", v.name.c_str(),
                      v.cfg.model.n_contrastive_layers, v.cfg.model.n_masked_layers,
                      v.probe_accuracy, v.baseline_accuracy);
        rep << line;
        probe_csv << v.name << "," << v.cfg.model.n_contrastive_layers << ","
                  << v.cfg.model.n_masked_layers << "," << v.probe_accuracy << ","
                  << v.baseline_accuracy << "\n";
    }
    return report;
}

} // namespace w2v
