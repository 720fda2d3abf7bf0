#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "w2vbert/params.hpp"
#include "w2vbert/rng.hpp"
#include "w2vbert/tensor.hpp"

namespace w2v {

struct QuantizerConfig {
    int groups = 1;
    int entries_per_group = 64; // paper scale 1024
    int code_dim = 32;          // total quantized-vector dimension
    double gumbel_temp_start = 2.0;
    double gumbel_temp_min = 0.5;
    double gumbel_temp_decay = 0.9999; // multiplicative per step
};

inline double gumbel_temp_at(const QuantizerConfig& cfg, int64_t step) {
    return std::max(cfg.gumbel_temp_min, cfg.gumbel_temp_start * std::pow(cfg.gumbel_temp_decay, (double)step));
}

enum class QuantizeMode {
    Train,    // Gumbel noise, hard selection, straight-through gradient
    Eval,     // no noise, hard argmax selection
    SoftPath, // Gumbel noise (frozen by seed), soft selection — gradcheck hook
};

template <typename T>
struct Codebook {
    int groups = 1;
    int entries = 64;
    int group_dim = 32; // code dim per group
    Tensor<T> proj_w, proj_b; // latent_dim -> groups * entries logits
    std::vector<Tensor<T>> codes; // per group, entries x group_dim
    Tensor<T> out_w, out_b; // groups * group_dim -> code_dim

    static Codebook build(ParamStore<T>& params, int latent_dim, const QuantizerConfig& cfg) {
        if (cfg.code_dim % cfg.groups != 0)
            tensor_fail("Codebook", "code_dim must be divisible by groups");
        Codebook cb;
        cb.groups = cfg.groups;
        cb.entries = cfg.entries_per_group;
        cb.group_dim = cfg.code_dim / cfg.groups;
        cb.proj_w = params.get_matrix("quantizer.proj.w", latent_dim, cfg.groups * cfg.entries_per_group);
        cb.proj_b = params.get_vector("quantizer.proj.b", cfg.groups * cfg.entries_per_group, T(0));
        for (int g = 0; g < cfg.groups; ++g)
            cb.codes.push_back(params.get_matrix("quantizer.codes." + std::to_string(g),
                                                 cfg.entries_per_group, cb.group_dim));
        cb.out_w = params.get_matrix("quantizer.out.w", cfg.groups * cb.group_dim, cfg.code_dim);
        cb.out_b = params.get_vector("quantizer.out.b", cfg.code_dim, T(0));
        return cb;
    }
};

template <typename T>
struct QuantizationResult {
    Tensor<T> quantized;                  // T x code_dim
    std::vector<int> token_ids;           // combined per-group IDs, sum_g id_g * V^g
    std::vector<Tensor<T>> soft_probs;    // per group, T x V at temperature
    std::vector<Tensor<T>> code_probs;    // per group, T x V softmax of raw logits (diversity path)
};

template <typename T>
QuantizationResult<T> quantize(const Tensor<T>& latents, const Codebook<T>& book, QuantizeMode mode,
                               double temp, uint64_t seed) {
    if (temp <= 0) tensor_fail("quantize", "temperature must be positive, got " + std::to_string(temp));
    const int t = latents.dim(0);
    const int v = book.entries;

    Tensor<T> logits = linear(latents, book.proj_w, book.proj_b);

    QuantizationResult<T> result;
    result.token_ids.assign((size_t)t, 0);
    std::vector<Tensor<T>> group_vecs;
    int64_t id_scale = 1;
    for (int g = 0; g < book.groups; ++g) {
        Tensor<T> gl = slice_cols(logits, g * v, (g + 1) * v);
        result.code_probs.push_back(softmax_rows(gl));

        Tensor<T> noisy = gl;
        if (mode != QuantizeMode::Eval) {
            Rng rng{seed, 0x47554d42ULL, (uint64_t)g};
            std::vector<T> noise((size_t)t * v);
            for (auto& n : noise) n = (T)rng.gumbel();
            noisy = add(gl, Tensor<T>(Shape{t, v}, std::move(noise)));
        }
        Tensor<T> soft = softmax_rows(scale(noisy, (T)(1.0 / temp)));
        result.soft_probs.push_back(soft);

        // hard one-hot of the (noisy) logits
        std::vector<T> hard((size_t)t * v, T(0));
        for (int i = 0; i < t; ++i) {
            int best = 0;
            for (int j = 1; j < v; ++j)
                if (noisy.at(i, j) > noisy.at(i, best)) best = j;
            hard[(size_t)(i * v + best)] = T(1);
            result.token_ids[(size_t)i] += (int)(best * id_scale);
        }
        Tensor<T> hard_t(Shape{t, v}, std::move(hard));

        Tensor<T> sel;
        switch (mode) {
            case QuantizeMode::Eval: sel = hard_t; break;
            case QuantizeMode::SoftPath: sel = soft; break;
            case QuantizeMode::Train: sel = add(sub(hard_t, detach(soft)), soft); break;
        }
        group_vecs.push_back(matmul(sel, book.codes[(size_t)g]));
        id_scale *= v;
    }
    Tensor<T> joined = book.groups == 1 ? group_vecs[0] : concat(group_vecs, 1);
    result.quantized = linear(joined, book.out_w, book.out_b);
    return result;
}

template <typename T>
QuantizationResult<T> quantize_eval(const Tensor<T>& latents, const Codebook<T>& book) {
    return quantize(latents, book, QuantizeMode::Eval, 1.0, 0);
}

// ---------------------------------------------------------------------------
// diversity loss and perplexity
// ---------------------------------------------------------------------------

template <typename T>
void check_prob_vector(const Tensor<T>& p, const std::string& op) {
    T sum = 0;
    for (T v : p.values()) sum += v;
    if (std::fabs((double)sum - 1.0) > 1e-4)
        tensor_fail(op, "probabilities sum to " + std::to_string((double)sum) + ", expected 1");
}

// natural-log entropy of a probability vector, differentiable
template <typename T>
Tensor<T> entropy(const Tensor<T>& p) {
    Tensor<T> logp = log_t(add_scalar(p, (T)1e-12));
    return neg(sum_all(mul(p, logp)));
}

// L_d = (1/G) * sum_g (V - exp(H(p_g))) / V ; in [0, (V-1)/V]
template <typename T>
Tensor<T> diversity_loss(const std::vector<Tensor<T>>& mean_probs) {
    if (mean_probs.empty()) tensor_fail("diversity_loss", "no groups");
    const int groups = (int)mean_probs.size();
    Tensor<T> total = Tensor<T>::scalar(T(0));
    for (const auto& p : mean_probs) {
        check_prob_vector(p, "diversity_loss");
        const T v = (T)p.size();
        Tensor<T> eff = exp_t(entropy(p));
        total = add(total, scale(add_scalar(neg(eff), v), T(1) / v));
    }
    return scale(total, T(1) / (T)groups);
}

// geometric mean over groups of exp(H(p_g)); in [1, V]
template <typename T>
double codebook_perplexity(const std::vector<Tensor<T>>& mean_probs) {
    if (mean_probs.empty()) tensor_fail("codebook_perplexity", "no groups");
    double log_sum = 0.0;
    for (const auto& p : mean_probs) {
        check_prob_vector(p, "codebook_perplexity");
        double h = 0.0;
        for (T v : p.values())
            if (v > 0) h -= (double)v * std::log((double)v);
        log_sum += h;
    }
    return std::exp(log_sum / (double)mean_probs.size());
}

} // namespace w2v
