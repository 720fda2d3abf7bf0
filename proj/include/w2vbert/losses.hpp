#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "w2vbert/masking.hpp"
#include "w2vbert/rng.hpp"
#include "w2vbert/tensor.hpp"

namespace w2v {

struct ContrastiveLossConfig {
    int n_distractors = 10; // paper-scale convention is 100
    double temperature = 0.1;
};

struct LossWeights {
    double alpha = 0.1; // diversity weight inside L_c
    double beta = 1.0;  // contrastive weight in L_p (scales L_w; diversity stays active)
    double gamma = 1.0; // masked-prediction weight in L_p
};

template <typename T>
struct LossBreakdown {
    double l_w = 0, l_d = 0, l_c = 0, l_m = 0, l_p = 0;
    double mlm_accuracy = 0;
    int masked_count = 0;
};

// Contrastive identification loss for one utterance. For each masked step t,
// the context vector must pick its own quantized vector against K distractors
// drawn uniformly from other masked steps (with replacement only when the
// pool is smaller than K). Steps with no other masked step to draw from
// contribute zero. Returns (loss tensor, number of contributing steps).
template <typename T>
std::pair<Tensor<T>, int> contrastive_loss_w(const Tensor<T>& context, const Tensor<T>& quantized,
                                             const MaskSpec& mask, const ContrastiveLossConfig& cfg,
                                             uint64_t seed) {
    if (context.dim(0) != quantized.dim(0))
        tensor_fail("contrastive_loss_w", "context/quantized length mismatch");
    std::vector<int> masked = mask.masked_indices();
    if ((int)masked.size() < 2) return {Tensor<T>::scalar(T(0)), 0};

    Tensor<T> total = Tensor<T>::scalar(T(0));
    int contributing = 0;
    for (size_t mi = 0; mi < masked.size(); ++mi) {
        const int t = masked[mi];
        // candidate rows: positive first, then K distractors from other masked steps
        std::vector<int> pool;
        for (int other : masked)
            if (other != t) pool.push_back(other);
        Rng rng{seed, 0x434f4e54ULL, (uint64_t)t};
        std::vector<int> cand{t};
        if ((int)pool.size() >= cfg.n_distractors) {
            // uniform without replacement (partial Fisher-Yates)
            for (int k = 0; k < cfg.n_distractors; ++k) {
                size_t j = k + rng.uniform_int(pool.size() - (size_t)k);
                std::swap(pool[(size_t)k], pool[j]);
                cand.push_back(pool[(size_t)k]);
            }
        } else {
            for (int k = 0; k < cfg.n_distractors; ++k)
                cand.push_back(pool[rng.uniform_int(pool.size())]);
        }
        Tensor<T> q_cand = gather_rows(quantized, cand);
        Tensor<T> c_rep = gather_rows(context, std::vector<int>(cand.size(), t));
        Tensor<T> sims = cosine_rows(q_cand, c_rep);
        Tensor<T> logits = reshape(scale(sims, (T)(1.0 / cfg.temperature)), Shape{1, (int)cand.size()});
        Tensor<T> logp = log_softmax_rows(logits);
        total = add(total, reshape(neg(pick(logp, {0})), Shape{}));
        ++contributing;
    }
    return {scale(total, T(1) / (T)contributing), contributing};
}

// L_c = L_w + alpha * L_d
template <typename T>
Tensor<T> contrastive_total(const Tensor<T>& l_w, const Tensor<T>& l_d, double alpha) {
    return add(l_w, scale(l_d, (T)alpha));
}

// Mean cross-entropy over masked positions; accuracy over the same set.
template <typename T>
std::pair<Tensor<T>, double> mlm_loss(const Tensor<T>& mlm_logits, const std::vector<int>& token_ids,
                                      const MaskSpec& mask, int groups = 1) {
    if (mlm_logits.dim(0) != (int)token_ids.size() || mlm_logits.dim(0) != (int)mask.masked.size())
        tensor_fail("mlm_loss", "logits/ids/mask length mismatch");
    std::vector<int> masked = mask.masked_indices();
    if (masked.empty()) tensor_fail("mlm_loss", "MLM undefined: no masked positions");
    const int vocab = mlm_logits.dim(1) / groups;

    Tensor<T> rows = gather_rows(mlm_logits, masked);
    Tensor<T> total = Tensor<T>::scalar(T(0));
    int correct = 0;
    for (int g = 0; g < groups; ++g) {
        Tensor<T> glogits = groups == 1 ? rows : slice_cols(rows, g * vocab, (g + 1) * vocab);
        std::vector<int> targets(masked.size());
        int64_t scale_g = 1;
        for (int gg = 0; gg < g; ++gg) scale_g *= vocab;
        for (size_t i = 0; i < masked.size(); ++i)
            targets[i] = (int)((token_ids[(size_t)masked[(size_t)i]] / scale_g) % vocab);
        Tensor<T> logp = log_softmax_rows(glogits);
        total = add(total, neg(mean_all(pick(logp, targets))));
        for (size_t i = 0; i < masked.size(); ++i) {
            int best = 0;
            for (int j = 1; j < vocab; ++j)
                if (glogits.at((int)i, j) > glogits.at((int)i, best)) best = j;
            if (best == targets[i]) ++correct;
        }
    }
    double accuracy = (double)correct / ((double)masked.size() * groups);
    return {scale(total, T(1) / (T)groups), accuracy};
}

// L_p = beta * L_w + alpha * L_d + gamma * L_m.  With the paper defaults
// (beta = gamma = 1) this is exactly L_c + L_m; beta = 0 drops only the
// identification term, keeping the diversity pressure that the collapse
// experiments sweep over alpha.
template <typename T>
Tensor<T> pretrain_loss(const Tensor<T>& l_w, const Tensor<T>& l_d, const Tensor<T>& l_m,
                        const LossWeights& w) {
    Tensor<T> total = scale(l_w, (T)w.beta);
    total = add(total, scale(l_d, (T)w.alpha));
    return add(total, scale(l_m, (T)w.gamma));
}

} // namespace w2v
