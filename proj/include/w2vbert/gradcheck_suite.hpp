#pragma once

#include <string>
#include <utility>
#include <vector>

#include "w2vbert/gradcheck.hpp"
#include "w2vbert/losses.hpp"
#include "w2vbert/masking.hpp"
#include "w2vbert/model.hpp"
#include "w2vbert/quantizer.hpp"
#include "w2vbert/rng.hpp"
#include "w2vbert/tensor.hpp"

namespace w2v {

using D = Tensor<double>;

struct GradCheckCase {
    std::string name;
    double max_rel_err;
};

namespace detail {

inline D rand_mat(int r, int c, Rng& rng) {
    std::vector<double> d((size_t)r * c);
    for (auto& v : d) v = rng.normal();
    return D(Shape{r, c}, std::move(d));
}

// squared-sum head so every output coordinate carries gradient
inline D head(const D& y) {
    return y.rank() == 0 ? mul(y, y) : mean_all(mul(y, y));
}

} // namespace detail

// Finite-difference verification of every differentiable primitive at
// `points_per_case` random points.
inline std::vector<GradCheckCase> run_primitive_gradchecks(int points_per_case = 5) {
    std::vector<GradCheckCase> results;
    auto run = [&](const std::string& name,
                   const std::function<double(Rng&)>& one_point) {
        double worst = 0;
        for (int p = 0; p < points_per_case; ++p) {
            Rng rng{0xC0FFEEULL, (uint64_t)p, mix_keys({(uint64_t)name.size(), (uint64_t)name[0],
                                                        (uint64_t)name.back()})};
            worst = std::max(worst, one_point(rng));
        }
        results.push_back({name, worst});
    };
    using detail::head;
    using detail::rand_mat;

    run("add", [](Rng& rng) {
        D a = rand_mat(3, 4, rng), b = rand_mat(3, 4, rng);
        return finite_diff_check([&] { return head(add(a, b)); }, {a, b});
    });
    run("sub", [](Rng& rng) {
        D a = rand_mat(3, 4, rng), b = rand_mat(3, 4, rng);
        return finite_diff_check([&] { return head(sub(a, b)); }, {a, b});
    });
    run("mul", [](Rng& rng) {
        D a = rand_mat(3, 4, rng), b = rand_mat(3, 4, rng);
        return finite_diff_check([&] { return head(mul(a, b)); }, {a, b});
    });
    run("scalar_mul", [](Rng& rng) {
        D a = rand_mat(3, 4, rng);
        return finite_diff_check([&] { return head(scale(a, 1.7)); }, {a});
    });
    run("matmul", [](Rng& rng) {
        D a = rand_mat(3, 5, rng), b = rand_mat(5, 2, rng);
        return finite_diff_check([&] { return head(matmul(a, b)); }, {a, b});
    });
    run("transpose", [](Rng& rng) {
        D a = rand_mat(3, 4, rng);
        return finite_diff_check([&] { return head(matmul(transpose(a), a)); }, {a});
    });
    run("reshape", [](Rng& rng) {
        D a = rand_mat(3, 4, rng);
        return finite_diff_check([&] { return head(reshape(a, Shape{2, 6})); }, {a});
    });
    run("concat", [](Rng& rng) {
        D a = rand_mat(3, 4, rng), b = rand_mat(2, 4, rng), c = rand_mat(3, 2, rng);
        return finite_diff_check(
            [&] { return add(head(concat<double>({a, b}, 0)), head(concat<double>({a, c}, 1))); },
            {a, b, c});
    });
    run("gather_rows", [](Rng& rng) {
        D a = rand_mat(5, 3, rng);
        return finite_diff_check([&] { return head(gather_rows(a, {0, 2, 2, 4})); }, {a});
    });
    run("slice", [](Rng& rng) {
        D a = rand_mat(5, 6, rng);
        return finite_diff_check(
            [&] { return add(head(slice_rows(a, 1, 4)), head(slice_cols(a, 2, 5))); }, {a});
    });
    run("pick", [](Rng& rng) {
        D a = rand_mat(4, 5, rng);
        return finite_diff_check([&] { return head(pick(a, {1, 0, 4, 2})); }, {a});
    });
    run("sum_axis", [](Rng& rng) {
        D a = rand_mat(3, 4, rng);
        return finite_diff_check([&] { return add(head(sum_axis(a, 0)), head(mean_axis(a, 1))); },
                                 {a});
    });
    run("exp", [](Rng& rng) {
        D a = rand_mat(3, 4, rng);
        return finite_diff_check([&] { return head(exp_t(a)); }, {a});
    });
    run("log", [](Rng& rng) {
        D a = rand_mat(3, 4, rng);
        return finite_diff_check([&] { return head(log_t(add_scalar(mul(a, a), 0.5))); }, {a});
    });
    run("sigmoid", [](Rng& rng) {
        D a = rand_mat(3, 4, rng);
        return finite_diff_check([&] { return head(sigmoid(a)); }, {a});
    });
    run("swish", [](Rng& rng) {
        D a = rand_mat(3, 4, rng);
        return finite_diff_check([&] { return head(swish(a)); }, {a});
    });
    run("glu", [](Rng& rng) {
        D a = rand_mat(3, 8, rng);
        return finite_diff_check([&] { return head(glu(a)); }, {a});
    });
    run("softmax", [](Rng& rng) {
        D a = rand_mat(3, 6, rng);
        return finite_diff_check([&] { return head(softmax_rows(a)); }, {a});
    });
    run("log_softmax", [](Rng& rng) {
        D a = rand_mat(3, 6, rng);
        return finite_diff_check([&] { return head(log_softmax_rows(a)); }, {a});
    });
    run("layer_norm", [](Rng& rng) {
        D a = rand_mat(4, 8, rng), g = rand_mat(1, 8, rng), b = rand_mat(1, 8, rng);
        D gv = reshape(g, Shape{8}), bv = reshape(b, Shape{8});
        return finite_diff_check([&] { return head(layer_norm(a, gv, bv)); }, {a, gv, bv});
    });
    run("conv2d", [](Rng& rng) {
        D x = rand_mat(6, 8, rng);
        D w = rand_mat(2 * 1 * 3, 3, rng); // (Cout=2, Cin=1, 3, 3)
        D b = rand_mat(1, 2, rng);
        D x3 = reshape(x, Shape{1, 6, 8});
        D w4 = reshape(w, Shape{2, 1, 3, 3});
        D bv = reshape(b, Shape{2});
        return finite_diff_check([&] { return head(conv2d(x3, w4, bv, 2, 2)); }, {x3, w4, bv});
    });
    run("depthwise_conv1d", [](Rng& rng) {
        D x = rand_mat(7, 4, rng), w = rand_mat(3, 4, rng), b = rand_mat(1, 4, rng);
        D bv = reshape(b, Shape{4});
        return finite_diff_check([&] { return head(depthwise_conv1d(x, w, bv)); }, {x, w, bv});
    });
    run("dropout", [](Rng& rng) {
        D a = rand_mat(6, 6, rng);
        return finite_diff_check([&] { return head(dropout(a, 0.3, 42)); }, {a});
    });
    run("cosine_similarity", [](Rng& rng) {
        D a = rand_mat(4, 6, rng), b = rand_mat(4, 6, rng);
        return finite_diff_check([&] { return head(cosine_rows(a, b)); }, {a, b});
    });
    run("add_bias", [](Rng& rng) {
        D a = rand_mat(3, 5, rng), b = rand_mat(1, 5, rng);
        D bv = reshape(b, Shape{5});
        return finite_diff_check([&] { return head(add_bias(a, bv)); }, {a, bv});
    });
    return results;
}

inline ModelConfig micro_model_config() {
    ModelConfig cfg;
    cfg.model_dim = 8;
    cfg.n_heads = 2;
    cfg.n_contrastive_layers = 1;
    cfg.n_masked_layers = 1;
    cfg.encoder_channels = 2;
    cfg.quantizer.entries_per_group = 8;
    cfg.quantizer.code_dim = 8;
    return cfg;
}

// Full pretraining loss on a micro model, Gumbel noise frozen by seed, soft
// quantization path (the straight-through estimator's gradient equals the
// soft path's, so the soft forward is the differentiable surface to check).
inline double end_to_end_gradcheck(int input_frames = 16) {
    ModelConfig cfg = micro_model_config();
    W2vBertModel<double> model(cfg, 7);

    Rng rng{0xE2EULL};
    D features = detail::rand_mat(input_frames, cfg.n_mels, rng);
    MaskConfig mask_cfg;
    mask_cfg.start_prob = 0.3;
    mask_cfg.span_len = 2;
    ContrastiveLossConfig closs;
    closs.n_distractors = 3;
    LossWeights weights;

    auto loss_fn = [&]() -> D {
        ForwardOutput<double> out =
            model.forward(features, mask_cfg, true, 1.0, 99, QuantizeMode::SoftPath);
        auto [l_w, contributing] =
            contrastive_loss_w(out.context_contrastive, out.quantization.quantized, out.mask, closs, 123);
        D mean_probs = scale(sum_axis(out.quantization.code_probs[0], 0),
                             1.0 / out.quantization.code_probs[0].dim(0));
        D l_d = diversity_loss<double>({mean_probs});
        auto [l_m, acc] = mlm_loss(out.mlm_logits, out.quantization.token_ids, out.mask);
        return pretrain_loss(l_w, l_d, l_m, weights);
    };

    std::vector<D> points;
    for (auto& [name, p] : model.params().all()) points.push_back(p);
    return finite_diff_check(loss_fn, points, 1e-5);
}

} // namespace w2v
