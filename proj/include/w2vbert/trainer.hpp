#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "w2vbert/audio.hpp"
#include "w2vbert/checkpoint.hpp"
#include "w2vbert/config.hpp"
#include "w2vbert/losses.hpp"
#include "w2vbert/model.hpp"
#include "w2vbert/optimizer.hpp"
#include "w2vbert/quantizer.hpp"

namespace w2v {

struct TrainUtterance {
    Tensor<float> features; // T x n_mels (possibly padded past valid_len)
    int valid_len = 0;      // frames that carry real content
    std::vector<int> labels; // per-frame state IDs (empty when unlabeled)
    std::string id;
};

inline TrainUtterance make_train_utterance(const SyntheticUtterance& utt) {
    LogMelSpectrogram mel = compute_logmel(utt.waveform);
    TrainUtterance tu;
    tu.features = Tensor<float>(Shape{mel.n_frames, mel.n_mels}, std::vector<float>(mel.data));
    tu.valid_len = mel.n_frames;
    tu.labels = utt.frame_labels;
    tu.id = utt.utterance_id;
    return tu;
}

inline std::vector<TrainUtterance> featurize_corpus(const std::vector<SyntheticUtterance>& corpus) {
    std::vector<TrainUtterance> out;
    out.reserve(corpus.size());
    for (const auto& u : corpus) out.push_back(make_train_utterance(u));
    return out;
}

struct MetricsRow {
    int64_t step = 0;
    double l_w = 0, l_d = 0, l_c = 0, l_m = 0, l_p = 0;
    double mlm_acc = 0, codebook_perplexity = 0, lr = 0, wall_time_s = 0;

    static const char* csv_header() {
        return "step,l_w,l_d,l_c,l_m,l_p,mlm_acc,codebook_perplexity,lr,wall_time_s";
    }
    std::string to_csv() const {
        char buf[512];
        std::snprintf(buf, sizeof(buf),
                      "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.6g",
                      (long long)step, l_w, l_d, l_c, l_m, l_p, mlm_acc, codebook_perplexity, lr,
                      wall_time_s);
        return buf;
    }
};

class Trainer {
  public:
    Trainer(TrainConfig cfg)
        : cfg_(std::move(cfg)), model_(cfg_.model, cfg_.seed) {}

    const TrainConfig& config() const { return cfg_; }
    W2vBertModel<float>& model() { return model_; }
    const W2vBertModel<float>& model() const { return model_; }
    int64_t step() const { return step_; }
    double gumbel_temp() const { return gumbel_temp_at(cfg_.model.quantizer, step_); }

    // One joint-optimization step over a batch of utterances.
    // lr_override: negative = schedule; zero = compute losses but skip the update.
    LossBreakdown<float> pretrain_step(const std::vector<const TrainUtterance*>& batch,
                                       double lr_override = -1.0) {
        if (batch.empty()) throw TensorError("pretrain_step: empty batch");
        const double temp = gumbel_temp();
        const int groups = cfg_.model.quantizer.groups;
        const int entries = cfg_.model.quantizer.entries_per_group;

        Tensor<float> lw_sum = Tensor<float>::scalar(0.0f);
        int lw_utts = 0;
        Tensor<float> ce_weighted = Tensor<float>::scalar(0.0f);
        int total_masked = 0;
        double correct_weighted = 0.0;
        std::vector<Tensor<float>> prob_sums((size_t)groups);
        int64_t total_frames = 0;

        for (size_t bi = 0; bi < batch.size(); ++bi) {
            const TrainUtterance& utt = *batch[bi];
            uint64_t utt_seed = mix_keys({cfg_.seed, (uint64_t)step_, (uint64_t)bi, 0x55545452ULL});
            Tensor<float> feats = utt.features;
            if (utt.valid_len < feats.dim(0)) feats = slice_rows(feats, 0, utt.valid_len);

            ForwardOutput<float> out = model_.forward(feats, cfg_.mask, true, temp, utt_seed);
            const int tp = out.context_contrastive.dim(0);

            // batch-mean code distribution (soft, no temperature)
            for (int g = 0; g < groups; ++g) {
                Tensor<float> col = sum_axis(out.quantization.code_probs[(size_t)g], 0);
                prob_sums[(size_t)g] =
                    prob_sums[(size_t)g].size() == 0 ? col : add(prob_sums[(size_t)g], col);
            }
            total_frames += tp;

            // an utterance whose mask stayed empty after one re-sample
            // contributes nothing to either loss this step
            if (out.mask.n_masked() == 0) continue;

            auto [lw, contributing] = contrastive_loss_w(
                out.context_contrastive, out.quantization.quantized, out.mask, cfg_.contrastive,
                mix_keys({utt_seed, 0x44495354ULL}));
            if (contributing > 0) {
                lw_sum = add(lw_sum, lw);
                ++lw_utts;
            }

            auto [ce, acc] = mlm_loss(out.mlm_logits, out.quantization.token_ids, out.mask, groups);
            int n_masked = out.mask.n_masked();
            ce_weighted = add(ce_weighted, scale(ce, (float)n_masked));
            correct_weighted += acc * n_masked;
            total_masked += n_masked;
        }

        if (total_masked == 0) throw TensorError("pretrain_step: MLM undefined: no masked positions in batch");
        if (lw_utts == 0) throw TensorError("pretrain_step: no contrastive signal in batch");

        Tensor<float> l_w = scale(lw_sum, 1.0f / (float)lw_utts);
        std::vector<Tensor<float>> mean_probs;
        for (int g = 0; g < groups; ++g)
            mean_probs.push_back(scale(prob_sums[(size_t)g], 1.0f / (float)total_frames));
        Tensor<float> l_d = diversity_loss(mean_probs);
        Tensor<float> l_m = scale(ce_weighted, 1.0f / (float)total_masked);
        Tensor<float> l_c = contrastive_total(l_w, l_d, cfg_.weights.alpha);
        Tensor<float> l_p = pretrain_loss(l_w, l_d, l_m, cfg_.weights);

        LossBreakdown<float> parts;
        parts.l_w = l_w.item();
        parts.l_d = l_d.item();
        parts.l_c = l_c.item();
        parts.l_m = l_m.item();
        parts.l_p = l_p.item();
        parts.mlm_accuracy = correct_weighted / total_masked;
        parts.masked_count = total_masked;
        (void)entries;
        last_perplexity_ = codebook_perplexity(mean_probs);

        double lr = lr_override >= 0 ? lr_override : lr_at(cfg_.schedule, step_ + 1);
        model_.params().clear_grads();
        backward(l_p);
        if (lr > 0) adam_step(model_.params().all(), adam_, lr);
        model_.params().clear_grads();
        last_lr_ = lr_override >= 0 ? lr_override : lr_at(cfg_.schedule, step_ + 1);
        step_ += 1;
        return parts;
    }

    double last_perplexity() const { return last_perplexity_; }
    double last_lr() const { return last_lr_; }

    // ------------------------------------------------------------------
    // checkpointing
    // ------------------------------------------------------------------

    void save_checkpoint(const std::string& path) const {
        std::vector<CheckpointEntry> entries;
        for (const auto& [name, p] : model_.params().all())
            entries.push_back(entry_from_tensor("param/" + name, p));
        for (const auto& [name, m] : adam_.m) {
            Tensor<float> t(Shape{(int)m.size()}, std::vector<float>(m));
            entries.push_back(entry_from_tensor("adam.m/" + name, t));
        }
        for (const auto& [name, v] : adam_.v) {
            Tensor<float> t(Shape{(int)v.size()}, std::vector<float>(v));
            entries.push_back(entry_from_tensor("adam.v/" + name, t));
        }
        entries.push_back(entry_from_i64("__step", step_));
        entries.push_back(entry_from_i64("__adam_t", adam_.step));
        entries.push_back(entry_from_i64("__seed", (int64_t)cfg_.seed));
        entries.push_back(entry_from_f64("__gumbel_temp", gumbel_temp()));
        write_checkpoint(path, entries);
    }

    void load_checkpoint(const std::string& path) {
        auto entries = read_checkpoint(path);
        auto& params = model_.params().all();
        size_t n_params_loaded = 0;
        for (const auto& e : entries) {
            if (e.name.rfind("param/", 0) == 0) {
                std::string name = e.name.substr(6);
                auto it = params.find(name);
                if (it == params.end())
                    throw CheckpointError("checkpoint tensor '" + name + "' not present in model");
                load_entry_into_tensor(e, it->second);
                ++n_params_loaded;
            } else if (e.name.rfind("adam.m/", 0) == 0) {
                adam_.m[e.name.substr(7)] = entry_floats(e);
            } else if (e.name.rfind("adam.v/", 0) == 0) {
                adam_.v[e.name.substr(7)] = entry_floats(e);
            } else if (e.name == "__step") {
                step_ = entry_to_i64(e);
            } else if (e.name == "__adam_t") {
                adam_.step = entry_to_i64(e);
            } else if (e.name == "__seed") {
                if ((uint64_t)entry_to_i64(e) != cfg_.seed)
                    throw CheckpointError("checkpoint seed does not match config seed");
            } else if (e.name == "__gumbel_temp") {
                // derived from step; nothing to restore
            } else {
                throw CheckpointError("unknown checkpoint entry '" + e.name + "'");
            }
        }
        if (n_params_loaded != params.size())
            throw CheckpointError("checkpoint holds " + std::to_string(n_params_loaded) +
                                  " parameters, model expects " + std::to_string(params.size()));
    }

  private:
    static std::vector<float> entry_floats(const CheckpointEntry& e) {
        if (e.dtype != DType::F32)
            throw CheckpointError("entry '" + e.name + "' expected f32 payload");
        std::vector<float> v(e.payload.size() / 4);
        std::memcpy(v.data(), e.payload.data(), e.payload.size());
        return v;
    }

    TrainConfig cfg_;
    W2vBertModel<float> model_;
    AdamState<float> adam_;
    int64_t step_ = 0;
    double last_perplexity_ = 0;
    double last_lr_ = 0;
};

// ---------------------------------------------------------------------------
// full pretraining run
// ---------------------------------------------------------------------------

// Deterministic epoch iterator: shuffle order is a pure function of
// (seed, epoch), so a resumed run sees exactly the batches of an
// uninterrupted one.
inline std::vector<const TrainUtterance*> batch_for_step(const std::vector<TrainUtterance>& corpus,
                                                         int batch_size, uint64_t seed, int64_t step) {
    const int n = (int)corpus.size();
    const int steps_per_epoch = (n + batch_size - 1) / batch_size;
    const int64_t epoch = step / steps_per_epoch;
    const int pos = (int)(step % steps_per_epoch);
    std::vector<int> order((size_t)n);
    for (int i = 0; i < n; ++i) order[(size_t)i] = i;
    Rng rng{seed, (uint64_t)epoch, 0x45504f43ULL};
    rng.shuffle(order);
    std::vector<const TrainUtterance*> batch;
    for (int i = pos * batch_size; i < std::min(n, (pos + 1) * batch_size); ++i)
        batch.push_back(&corpus[(size_t)order[(size_t)i]]);
    return batch;
}

struct PretrainResult {
    std::vector<MetricsRow> metrics;
    std::string final_checkpoint;
};

inline PretrainResult run_pretraining(const TrainConfig& cfg, const std::vector<TrainUtterance>& corpus,
                                      const std::string& out_dir, Trainer& trainer,
                                      const std::string& resume_from = "") {
    if (corpus.empty()) throw TensorError("run_pretraining: empty corpus");
    bool resumed = false;
    if (!resume_from.empty()) {
        trainer.load_checkpoint(resume_from);
        resumed = true;
    }

    std::string metrics_path = out_dir + "/metrics.csv";
    std::ofstream metrics(metrics_path, resumed ? std::ios::app : std::ios::trunc);
    if (!metrics) throw TensorError("run_pretraining: cannot write " + metrics_path);
    if (!resumed) metrics << MetricsRow::csv_header() << "\n";

    PretrainResult result;
    auto t0 = std::chrono::steady_clock::now();
    while (trainer.step() < cfg.total_steps) {
        auto batch = batch_for_step(corpus, cfg.batch_size, cfg.seed, trainer.step());
        LossBreakdown<float> parts = trainer.pretrain_step(batch);
        int64_t step = trainer.step(); // 1-based after the update
        if (step % cfg.log_every == 0 || step == cfg.total_steps) {
            MetricsRow row;
            row.step = step;
            row.l_w = parts.l_w;
            row.l_d = parts.l_d;
            row.l_c = parts.l_c;
            row.l_m = parts.l_m;
            row.l_p = parts.l_p;
            row.mlm_acc = parts.mlm_accuracy;
            row.codebook_perplexity = trainer.last_perplexity();
            row.lr = trainer.last_lr();
            row.wall_time_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            metrics << row.to_csv() << "\n";
            metrics.flush();
            result.metrics.push_back(row);
        }
        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step < cfg.total_steps) {
            char name[64];
            std::snprintf(name, sizeof(name), "/checkpoint_step%06lld.w2vb", (long long)step);
            trainer.save_checkpoint(out_dir + name);
        }
    }
    result.final_checkpoint = out_dir + "/checkpoint_final.w2vb";
    trainer.save_checkpoint(result.final_checkpoint);
    return result;
}

} // namespace w2v
