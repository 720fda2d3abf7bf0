#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "w2vbert/model.hpp"
#include "w2vbert/optimizer.hpp"
#include "w2vbert/trainer.hpp"

namespace w2v {

struct ProbeResult {
    double frame_accuracy = 0;    // held-out, pretrained encoder
    double baseline_accuracy = 0; // held-out, random-init encoder
    int n_train_frames = 0;
    int n_eval_frames = 0;
    int n_states = 0;
};

// Majority vote over each group of 4 input frames; ties break toward the
// smallest label ID.
inline std::vector<int> downsample_labels(const std::vector<int>& labels) {
    const int tp = encoder_output_length((int)labels.size());
    std::vector<int> out((size_t)tp);
    for (int i = 0; i < tp; ++i) {
        std::map<int, int> counts;
        for (int j = 4 * i; j < std::min(4 * (i + 1), (int)labels.size()); ++j) ++counts[labels[(size_t)j]];
        int best = -1, best_count = -1;
        for (auto [label, count] : counts)
            if (count > best_count) { best = label; best_count = count; }
        out[(size_t)i] = best;
    }
    return out;
}

namespace detail {

// Final context vectors of a frozen encoder, eval mode, no masking.
inline Tensor<float> frozen_context(const W2vBertModel<float>& model, const TrainUtterance& utt) {
    Tensor<float> feats = utt.features;
    if (utt.valid_len < feats.dim(0)) feats = slice_rows(feats, 0, utt.valid_len);
    MaskConfig no_mask;
    ForwardOutput<float> out = model.forward(feats, no_mask, false, 1.0, 0);
    return detach(out.context_final);
}

struct ProbeData {
    Tensor<float> x; // frames x d
    std::vector<int> y;
};

inline ProbeData collect(const W2vBertModel<float>& model,
                         const std::vector<const TrainUtterance*>& utts) {
    std::vector<Tensor<float>> xs;
    ProbeData data;
    for (const auto* utt : utts) {
        Tensor<float> ctx = frozen_context(model, *utt);
        std::vector<int> labels = downsample_labels(
            std::vector<int>(utt->labels.begin(), utt->labels.begin() + utt->valid_len));
        if ((int)labels.size() != ctx.dim(0))
            tensor_fail("probe", "label/context length mismatch for " + utt->id);
        xs.push_back(ctx);
        data.y.insert(data.y.end(), labels.begin(), labels.end());
    }
    data.x = xs.size() == 1 ? xs[0] : concat(xs, 0);
    return data;
}

// Single linear layer + softmax trained with Adam on frozen features.
inline double train_and_eval_linear(const ProbeData& train, const ProbeData& eval_data, int n_states,
                                    int steps, double lr, uint64_t seed) {
    const int d = train.x.dim(1);
    ParamStore<float> params(seed);
    Tensor<float> w = params.get_matrix("probe.w", d, n_states);
    Tensor<float> b = params.get_vector("probe.b", n_states, 0.0f);
    AdamState<float> adam;
    for (int s = 0; s < steps; ++s) {
        Tensor<float> logp = log_softmax_rows(linear(train.x, w, b));
        Tensor<float> loss = neg(mean_all(pick(logp, train.y)));
        params.clear_grads();
        backward(loss);
        adam_step(params.all(), adam, lr);
    }
    params.clear_grads();
    Tensor<float> logits = linear(eval_data.x, w, b);
    int correct = 0;
    for (int i = 0; i < logits.dim(0); ++i) {
        int best = 0;
        for (int j = 1; j < n_states; ++j)
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        if (best == eval_data.y[(size_t)i]) ++correct;
    }
    return (double)correct / logits.dim(0);
}

} // namespace detail

// Frozen-encoder linear frame classification, with a random-init encoder run
// under the identical protocol as the baseline.
inline ProbeResult train_probe(const W2vBertModel<float>& encoder,
                               const std::vector<TrainUtterance>& corpus, uint64_t split_seed,
                               int steps = 300, double lr = 0.05) {
    int n_states = 0;
    for (const auto& u : corpus) {
        if (u.labels.empty()) tensor_fail("train_probe", "utterance " + u.id + " has no labels");
        for (int l : u.labels) n_states = std::max(n_states, l + 1);
    }

    // low-label protocol: a quarter of the utterances carry labels for probe
    // training, the rest are held out for evaluation
    std::vector<int> order((size_t)corpus.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = (int)i;
    Rng rng{split_seed, 0x50524f42ULL};
    rng.shuffle(order);
    size_t n_train = std::max<size_t>(1, corpus.size() / 4);
    if (corpus.size() - n_train < 1)
        tensor_fail("train_probe", "need at least 2 utterances to split");
    std::vector<const TrainUtterance*> train_utts, eval_utts;
    for (size_t i = 0; i < order.size(); ++i)
        (i < n_train ? train_utts : eval_utts).push_back(&corpus[(size_t)order[i]]);

    detail::ProbeData train = detail::collect(encoder, train_utts);
    detail::ProbeData eval_data = detail::collect(encoder, eval_utts);

    ProbeResult result;
    result.n_states = n_states;
    result.n_train_frames = train.x.dim(0);
    result.n_eval_frames = eval_data.x.dim(0);
    result.frame_accuracy =
        detail::train_and_eval_linear(train, eval_data, n_states, steps, lr, split_seed);

    W2vBertModel<float> random_encoder(encoder.config(), mix_keys({split_seed, 0x52414e44ULL}));
    detail::ProbeData btrain = detail::collect(random_encoder, train_utts);
    detail::ProbeData beval = detail::collect(random_encoder, eval_utts);
    result.baseline_accuracy =
        detail::train_and_eval_linear(btrain, beval, n_states, steps, lr, split_seed);
    return result;
}

// Accuracy of an already-trained linear probe on the given utterances.
inline double eval_probe(const Tensor<float>& w, const Tensor<float>& b,
                         const W2vBertModel<float>& encoder,
                         const std::vector<const TrainUtterance*>& utts) {
    if (utts.empty()) tensor_fail("eval_probe", "empty utterance list");
    detail::ProbeData data = detail::collect(encoder, utts);
    Tensor<float> logits = linear(data.x, w, b);
    const int n_states = logits.dim(1);
    int correct = 0;
    for (int i = 0; i < logits.dim(0); ++i) {
        int best = 0;
        for (int j = 1; j < n_states; ++j)
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        if (best == data.y[(size_t)i]) ++correct;
    }
    return (double)correct / logits.dim(0);
}

} // namespace w2v
