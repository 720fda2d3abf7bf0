#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "w2vbert/losses.hpp"
#include "w2vbert/masking.hpp"
#include "w2vbert/model.hpp"
#include "w2vbert/optimizer.hpp"

namespace w2v {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

using KeyValueMap = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// Flat `key = value` text, one per line, `#` comments.
inline KeyValueMap parse_config_text(std::istream& in) {
    KeyValueMap kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value, got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        kv[key] = val;
    }
    return kv;
}

inline KeyValueMap load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_config_text(in);
}

// Everything a pretraining run needs, plus corpus/probe settings so one file
// drives a whole experiment.
struct TrainConfig {
    ModelConfig model;
    MaskConfig mask;
    ContrastiveLossConfig contrastive;
    LossWeights weights;
    LrSchedule schedule;
    int batch_size = 8;
    int64_t total_steps = 2000;
    uint64_t seed = 1;
    int log_every = 10;
    int checkpoint_every = 500;
    // synthetic corpus
    int corpus_n_utts = 8;
    int corpus_n_states = 4;
    double corpus_min_duration_s = 0.9;
    double corpus_max_duration_s = 1.1;
    double corpus_snr_db = 20.0;
    // linear probe
    int probe_steps = 300;
    double probe_lr = 0.05;

    static KeyValueMap default_kv() { return TrainConfig{}.to_kv(); }

    KeyValueMap to_kv() const {
        const TrainConfig& d = *this;
        KeyValueMap kv;
        auto put = [&](const std::string& k, auto v) {
            std::ostringstream os;
            os << v;
            kv[k] = os.str();
        };
        put("model_dim", d.model.model_dim);
        put("n_heads", d.model.n_heads);
        put("conv_kernel", d.model.conv_kernel);
        put("n_contrastive_layers", d.model.n_contrastive_layers);
        put("n_masked_layers", d.model.n_masked_layers);
        put("ffn_expansion", d.model.ffn_expansion);
        put("encoder_channels", d.model.encoder_channels);
        put("n_mels", d.model.n_mels);
        put("dropout", d.model.dropout);
        put("bypass_contrastive", d.model.bypass_contrastive ? 1 : 0);
        put("codebook_groups", d.model.quantizer.groups);
        put("codebook_size", d.model.quantizer.entries_per_group);
        put("code_dim", d.model.quantizer.code_dim);
        put("gumbel_temp_start", d.model.quantizer.gumbel_temp_start);
        put("gumbel_temp_min", d.model.quantizer.gumbel_temp_min);
        put("gumbel_temp_decay", d.model.quantizer.gumbel_temp_decay);
        put("mask_start_prob", d.mask.start_prob);
        put("mask_span_len", d.mask.span_len);
        put("mask_replacement_std", d.mask.replacement_std);
        put("n_distractors", d.contrastive.n_distractors);
        put("contrastive_temperature", d.contrastive.temperature);
        put("alpha", d.weights.alpha);
        put("beta", d.weights.beta);
        put("gamma", d.weights.gamma);
        put("peak_lr", d.schedule.peak_lr);
        put("warmup_steps", d.schedule.warmup_steps);
        put("batch_size", d.batch_size);
        put("total_steps", d.total_steps);
        put("seed", d.seed);
        put("log_every", d.log_every);
        put("checkpoint_every", d.checkpoint_every);
        put("corpus_n_utts", d.corpus_n_utts);
        put("corpus_n_states", d.corpus_n_states);
        put("corpus_min_duration_s", d.corpus_min_duration_s);
        put("corpus_max_duration_s", d.corpus_max_duration_s);
        put("corpus_snr_db", d.corpus_snr_db);
        put("probe_steps", d.probe_steps);
        put("probe_lr", d.probe_lr);
        return kv;
    }

    static TrainConfig from_kv(const KeyValueMap& overrides) {
        KeyValueMap kv = default_kv();
        for (const auto& [k, v] : overrides) {
            if (!kv.count(k)) throw ConfigError("unknown config key: " + k);
            kv[k] = v;
        }
        TrainConfig c;
        auto geti = [&](const std::string& k) { return std::stoi(kv[k]); };
        auto getl = [&](const std::string& k) { return (int64_t)std::stoll(kv[k]); };
        auto getu = [&](const std::string& k) { return (uint64_t)std::stoull(kv[k]); };
        auto getd = [&](const std::string& k) { return std::stod(kv[k]); };
        c.model.model_dim = geti("model_dim");
        c.model.n_heads = geti("n_heads");
        c.model.conv_kernel = geti("conv_kernel");
        c.model.n_contrastive_layers = geti("n_contrastive_layers");
        c.model.n_masked_layers = geti("n_masked_layers");
        c.model.ffn_expansion = geti("ffn_expansion");
        c.model.encoder_channels = geti("encoder_channels");
        c.model.n_mels = geti("n_mels");
        c.model.dropout = getd("dropout");
        c.model.bypass_contrastive = geti("bypass_contrastive") != 0;
        c.model.quantizer.groups = geti("codebook_groups");
        c.model.quantizer.entries_per_group = geti("codebook_size");
        c.model.quantizer.code_dim = geti("code_dim");
        c.model.quantizer.gumbel_temp_start = getd("gumbel_temp_start");
        c.model.quantizer.gumbel_temp_min = getd("gumbel_temp_min");
        c.model.quantizer.gumbel_temp_decay = getd("gumbel_temp_decay");
        c.mask.start_prob = getd("mask_start_prob");
        c.mask.span_len = geti("mask_span_len");
        c.mask.replacement_std = getd("mask_replacement_std");
        c.contrastive.n_distractors = geti("n_distractors");
        c.contrastive.temperature = getd("contrastive_temperature");
        c.weights.alpha = getd("alpha");
        c.weights.beta = getd("beta");
        c.weights.gamma = getd("gamma");
        c.schedule.peak_lr = getd("peak_lr");
        c.schedule.warmup_steps = geti("warmup_steps");
        c.batch_size = geti("batch_size");
        c.total_steps = getl("total_steps");
        c.seed = getu("seed");
        c.log_every = geti("log_every");
        c.checkpoint_every = geti("checkpoint_every");
        c.corpus_n_utts = geti("corpus_n_utts");
        c.corpus_n_states = geti("corpus_n_states");
        c.corpus_min_duration_s = getd("corpus_min_duration_s");
        c.corpus_max_duration_s = getd("corpus_max_duration_s");
        c.corpus_snr_db = getd("corpus_snr_db");
        c.probe_steps = geti("probe_steps");
        c.probe_lr = getd("probe_lr");
        if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (c.total_steps < 1) throw ConfigError("total_steps must be >= 1");
        c.model.validate();
        return c;
    }

    // merged key=value view (for resolved_config.txt)
    KeyValueMap resolved_kv(const KeyValueMap& overrides) const {
        KeyValueMap kv = default_kv();
        for (const auto& [k, v] : overrides) kv[k] = v;
        return kv;
    }
};

inline void write_kv_file(const std::string& path, const KeyValueMap& kv) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
}

} // namespace w2v
