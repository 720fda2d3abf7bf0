// Command-line front end: corpus generation, pretraining, diagnostics,
// ablation, probing, gradient checking, featurization.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "w2vbert/audio.hpp"
#include "w2vbert/config.hpp"
#include "w2vbert/diagnostics.hpp"
#include "w2vbert/gradcheck_suite.hpp"
#include "w2vbert/probe.hpp"
#include "w2vbert/trainer.hpp"

namespace fs = std::filesystem;
using namespace w2v;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
    int64_t seed = -1; // -1 = take from config
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool need_out) {
    cmd->add_option("--config", opts.config_path, "key = value config file");
    cmd->add_option("--set", opts.sets, "override a config key, e.g. --set total_steps=100")
        ->take_all();
    auto* out = cmd->add_option("--out", opts.out_dir, "output directory");
    if (need_out) out->required();
    cmd->add_option("--seed", opts.seed, "override the config seed");
}

TrainConfig resolve_config(const CommonOpts& opts, KeyValueMap* overrides_out = nullptr) {
    KeyValueMap overrides;
    if (!opts.config_path.empty()) overrides = load_config_file(opts.config_path);
    for (const std::string& s : opts.sets) {
        size_t eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        overrides[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
    }
    if (opts.seed >= 0) overrides["seed"] = std::to_string(opts.seed);
    if (overrides_out) *overrides_out = overrides;
    return TrainConfig::from_kv(overrides);
}

void write_resolved(const std::string& out_dir, const TrainConfig& cfg) {
    fs::create_directories(out_dir);
    write_kv_file(out_dir + "/resolved_config.txt", cfg.to_kv());
}

std::vector<TrainUtterance> load_or_generate_corpus(const TrainConfig& cfg,
                                                    const std::string& data_dir) {
    if (!data_dir.empty()) {
        std::vector<TrainUtterance> corpus;
        for (const auto& entry : read_manifest(data_dir + "/manifest.tsv")) {
            SyntheticUtterance utt;
            utt.waveform = load_wav(entry.wav_path);
            utt.utterance_id = entry.utterance_id;
            if (!entry.label_path.empty()) utt.frame_labels = read_labels(entry.label_path);
            corpus.push_back(make_train_utterance(utt));
        }
        if (corpus.empty()) throw AudioError("manifest holds no utterances: " + data_dir);
        return corpus;
    }
    auto synth = generate_synthetic_corpus(cfg.corpus_n_utts, cfg.corpus_min_duration_s,
                                           cfg.corpus_max_duration_s, cfg.corpus_n_states, cfg.seed,
                                           cfg.corpus_snr_db);
    return featurize_corpus(synth);
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(trim(tok)));
    return out;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(trim(tok)));
    return out;
}

int cmd_datagen(const CommonOpts& opts) {
    TrainConfig cfg = resolve_config(opts);
    write_resolved(opts.out_dir, cfg);
    auto corpus = generate_synthetic_corpus(cfg.corpus_n_utts, cfg.corpus_min_duration_s,
                                            cfg.corpus_max_duration_s, cfg.corpus_n_states, cfg.seed,
                                           cfg.corpus_snr_db);
    write_corpus(opts.out_dir, corpus);
    std::cout << "wrote " << corpus.size() << " utterances to " << opts.out_dir << "\n";
    return 0;
}

int cmd_featurize(const std::string& wav_path, const std::string& out_path, int n_mels) {
    Waveform wav = load_wav(wav_path);
    LogMelSpectrogram mel = compute_logmel(wav, n_mels);
    std::ofstream out(out_path);
    if (!out) throw AudioError("cannot write " + out_path);
    for (int t = 0; t < mel.n_frames; ++t) {
        for (int m = 0; m < mel.n_mels; ++m) out << (m ? "," : "") << mel.at(t, m);
        out << "\n";
    }
    std::cout << wav_path << ": " << mel.n_frames << " frames x " << mel.n_mels << " mels -> "
              << out_path << "\n";
    return 0;
}

int cmd_pretrain(const CommonOpts& opts, const std::string& data_dir, const std::string& resume) {
    TrainConfig cfg = resolve_config(opts);
    write_resolved(opts.out_dir, cfg);
    auto corpus = load_or_generate_corpus(cfg, data_dir);
    Trainer trainer(cfg);
    PretrainResult res = run_pretraining(cfg, corpus, opts.out_dir, trainer, resume);
    const MetricsRow& last = res.metrics.back();
    std::cout << "finished at step " << last.step << ": l_p=" << last.l_p
              << " mlm_acc=" << last.mlm_acc << " perplexity=" << last.codebook_perplexity << "\n"
              << "checkpoint: " << res.final_checkpoint << "\n";
    return 0;
}

int cmd_gradcheck() {
    std::printf("%-20s %-12s\n", "primitive", "max_rel_err");
    bool ok = true;
    for (const auto& c : run_primitive_gradchecks()) {
        std::printf("%-20s %-12.3g%s\n", c.name.c_str(), c.max_rel_err,
                    c.max_rel_err < 1e-4 ? "" : "  FAIL");
        ok = ok && c.max_rel_err < 1e-4;
    }
    double e2e = end_to_end_gradcheck();
    std::printf("%-20s %-12.3g%s\n", "end_to_end", e2e, e2e < 1e-3 ? "" : "  FAIL");
    ok = ok && e2e < 1e-3;
    std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED") << "\n";
    if (!ok) throw TensorError("gradient check failed");
    return 0;
}

int cmd_diagnose(const CommonOpts& opts, const std::string& data_dir, const std::string& alphas,
                 int64_t steps, bool plots) {
    TrainConfig cfg = resolve_config(opts);
    write_resolved(opts.out_dir, cfg);
    auto corpus = load_or_generate_corpus(cfg, data_dir);
    ExperimentReport report = run_collapse_experiment(cfg, parse_double_list(alphas),
                                                      steps > 0 ? steps : cfg.total_steps, corpus,
                                                      opts.out_dir, plots);
    for (const auto& v : report.variants)
        std::cout << v.name << ": collapsed=" << (v.verdict.collapsed ? "yes" : "no")
                  << " mlm_acc=" << v.verdict.final_mlm_accuracy
                  << " l_d=" << v.verdict.final_diversity
                  << " perplexity=" << v.verdict.final_perplexity << "\n";
    std::cout << "report: " << opts.out_dir << "/report.txt\n";
    return 0;
}

int cmd_ablate(const CommonOpts& opts, const std::string& data_dir, const std::string& splits,
               int layers) {
    TrainConfig cfg = resolve_config(opts);
    write_resolved(opts.out_dir, cfg);
    auto corpus = load_or_generate_corpus(cfg, data_dir);
    ExperimentReport report =
        run_layer_ablation(layers, parse_int_list(splits), cfg, corpus, opts.out_dir);
    for (const auto& v : report.variants)
        std::cout << v.name << ": probe=" << v.probe_accuracy
                  << " baseline=" << v.baseline_accuracy << "\n";
    std::cout << "report: " << opts.out_dir << "/report.txt\n";
    return 0;
}

int cmd_probe(const CommonOpts& opts, const std::string& data_dir, const std::string& ckpt) {
    TrainConfig cfg = resolve_config(opts);
    auto corpus = load_or_generate_corpus(cfg, data_dir);
    Trainer trainer(cfg);
    if (!ckpt.empty()) trainer.load_checkpoint(ckpt);
    ProbeResult res =
        train_probe(trainer.model(), corpus, cfg.seed, cfg.probe_steps, cfg.probe_lr);
    std::cout << "probe accuracy: " << res.frame_accuracy
              << " (random-encoder baseline: " << res.baseline_accuracy << ", " << res.n_states
              << " states, " << res.n_eval_frames << " eval frames)\n";
    if (!opts.out_dir.empty()) {
        write_resolved(opts.out_dir, cfg);
        std::ofstream out(opts.out_dir + "/probe.txt");
        out << "probe_accuracy " << res.frame_accuracy << "\nbaseline_accuracy "
            << res.baseline_accuracy << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"w2v-BERT style self-supervised speech pretraining, desk scale"};
    app.require_subcommand(1);

    CommonOpts datagen_opts, pretrain_opts, diagnose_opts, ablate_opts, probe_opts;
    std::string data_dir, resume, wav_path, feat_out, alphas = "0.1", splits = "1,2,3";
    int n_mels = 80, layers = 4;
    int64_t diag_steps = 0;
    bool plots = false;

    auto* datagen = app.add_subcommand("datagen", "write a synthetic labeled corpus");
    add_common(datagen, datagen_opts, true);

    auto* featurize = app.add_subcommand("featurize", "log-mel features of one wav, as CSV");
    featurize->add_option("--wav", wav_path, "input wav file")->required();
    featurize->add_option("--out", feat_out, "output CSV path")->required();
    featurize->add_option("--n-mels", n_mels, "mel channels");

    auto* pretrain = app.add_subcommand("pretrain", "run self-supervised pretraining");
    add_common(pretrain, pretrain_opts, true);
    pretrain->add_option("--data", data_dir, "corpus directory holding manifest.tsv");
    pretrain->add_option("--resume", resume, "checkpoint to resume from");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");

    auto* diagnose = app.add_subcommand("diagnose", "codebook-collapse experiment");
    add_common(diagnose, diagnose_opts, true);
    diagnose->add_option("--data", data_dir, "corpus directory holding manifest.tsv");
    diagnose->add_option("--alpha", alphas, "comma-separated diversity weights");
    diagnose->add_option("--steps", diag_steps, "steps per variant (default: total_steps)");
    diagnose->add_flag("--plots", plots, "also write SVG plots");

    auto* ablate = app.add_subcommand("ablate", "contrastive/masked layer-split ablation");
    add_common(ablate, ablate_opts, true);
    ablate->add_option("--data", data_dir, "corpus directory holding manifest.tsv");
    ablate->add_option("--splits", splits, "comma-separated contrastive layer counts");
    ablate->add_option("--layers", layers, "total conformer layers");

    auto* probe = app.add_subcommand("probe", "linear frame-classification probe");
    add_common(probe, probe_opts, false);
    probe->add_option("--data", data_dir, "corpus directory holding manifest.tsv");
    probe->add_option("--checkpoint", resume, "pretrained checkpoint (omit for random init)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (datagen->parsed()) return cmd_datagen(datagen_opts);
        if (featurize->parsed()) return cmd_featurize(wav_path, feat_out, n_mels);
        if (pretrain->parsed()) return cmd_pretrain(pretrain_opts, data_dir, resume);
        if (gradcheck->parsed()) return cmd_gradcheck();
        if (diagnose->parsed()) return cmd_diagnose(diagnose_opts, data_dir, alphas, diag_steps, plots);
        if (ablate->parsed()) return cmd_ablate(ablate_opts, data_dir, splits, layers);
        if (probe->parsed()) return cmd_probe(probe_opts, data_dir, resume);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
