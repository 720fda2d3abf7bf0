#pragma once

// Shared fixtures for the training-level tests: a deliberately small model
// and corpus so whole training runs stay fast.

#include <filesystem>
#include <string>
#include <vector>

#include "w2vbert/config.hpp"
#include "w2vbert/trainer.hpp"

namespace w2v::testutil {

inline TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.model.model_dim = 8;
    cfg.model.n_heads = 2;
    cfg.model.n_contrastive_layers = 1;
    cfg.model.n_masked_layers = 1;
    cfg.model.encoder_channels = 2;
    cfg.model.quantizer.entries_per_group = 8;
    cfg.model.quantizer.code_dim = 8;
    cfg.mask.start_prob = 0.2;
    cfg.mask.span_len = 3;
    cfg.contrastive.n_distractors = 3;
    cfg.batch_size = 2;
    cfg.total_steps = 4;
    cfg.log_every = 1;
    cfg.checkpoint_every = 2;
    cfg.corpus_n_utts = 2;
    cfg.corpus_n_states = 3;
    cfg.corpus_min_duration_s = 0.4;
    cfg.corpus_max_duration_s = 0.5;
    cfg.schedule.warmup_steps = 10;
    cfg.seed = 11;
    return cfg;
}

inline std::vector<TrainUtterance> tiny_corpus(const TrainConfig& cfg) {
    return featurize_corpus(generate_synthetic_corpus(cfg.corpus_n_utts, cfg.corpus_min_duration_s,
                                                      cfg.corpus_max_duration_s, cfg.corpus_n_states,
                                                      cfg.seed, cfg.corpus_snr_db));
}

inline std::string fresh_dir(const std::string& name) {
    std::string dir = (std::filesystem::temp_directory_path() / name).string();
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::vector<unsigned char> file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                      std::istreambuf_iterator<char>());
}

} // namespace w2v::testutil
