#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "w2vbert/rng.hpp"
#include "w2vbert/tensor.hpp"

namespace w2v {

struct MaskConfig {
    double start_prob = 0.065;
    int span_len = 10;
    double replacement_std = 0.1;
};

struct MaskSpec {
    std::vector<bool> masked;
    std::vector<int> span_starts; // sorted

    int n_masked() const {
        int n = 0;
        for (bool b : masked) n += b;
        return n;
    }
    std::vector<int> masked_indices() const {
        std::vector<int> idx;
        for (int i = 0; i < (int)masked.size(); ++i)
            if (masked[(size_t)i]) idx.push_back(i);
        return idx;
    }
};

// Each frame is independently a span start with probability start_prob; the
// mask is the union of [s, s + span_len) truncated at T. Spans may overlap.
inline MaskSpec sample_mask(int n_frames, const MaskConfig& cfg, uint64_t seed) {
    if (n_frames < 1) throw TensorError("sample_mask: T must be >= 1");
    Rng rng{seed, 0x4d41534bULL};
    MaskSpec spec;
    spec.masked.assign((size_t)n_frames, false);
    for (int t = 0; t < n_frames; ++t)
        if (rng.uniform() < cfg.start_prob) spec.span_starts.push_back(t);
    for (int s : spec.span_starts)
        for (int i = s; i < std::min(s + cfg.span_len, n_frames); ++i) spec.masked[(size_t)i] = true;
    return spec;
}

// Replace masked frames with i.i.d. Gaussian(0, replacement_std^2) vectors;
// unmasked frames pass through bitwise unchanged.
template <typename T>
Tensor<T> apply_mask(const Tensor<T>& latents, const MaskSpec& mask, const MaskConfig& cfg,
                     uint64_t seed) {
    if (latents.rank() != 2 || (int)mask.masked.size() != latents.dim(0))
        throw TensorError("apply_mask: mask length " + std::to_string(mask.masked.size()) +
                          " does not match latents " + shape_str(latents.shape()));
    const int t = latents.dim(0), d = latents.dim(1);
    std::vector<int> keep_rows, mask_rows;
    for (int i = 0; i < t; ++i) (mask.masked[(size_t)i] ? mask_rows : keep_rows).push_back(i);
    if (mask_rows.empty()) return latents;

    Rng rng{seed, 0x5245504cULL};
    std::vector<T> repl(mask_rows.size() * (size_t)d);
    for (auto& v : repl) v = (T)(cfg.replacement_std * rng.normal());
    Tensor<T> replacement(Shape{(int)mask_rows.size(), d}, std::move(repl));

    // Scatter via concat of gathered row blocks in original order. Simpler:
    // build a permutation gather over [kept rows; replacement rows].
    Tensor<T> stacked = concat<T>({latents, replacement}, 0);
    std::vector<int> order((size_t)t);
    for (int i = 0; i < t; ++i) order[(size_t)i] = i;
    for (size_t r = 0; r < mask_rows.size(); ++r) order[(size_t)mask_rows[r]] = t + (int)r;
    return gather_rows(stacked, order);
}

} // namespace w2v
