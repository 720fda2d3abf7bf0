#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "w2vbert/masking.hpp"
#include "w2vbert/params.hpp"
#include "w2vbert/quantizer.hpp"
#include "w2vbert/tensor.hpp"

namespace w2v {

struct ModelConfig {
    int n_mels = 80;
    int model_dim = 32;
    int n_heads = 4;
    int conv_kernel = 5;          // depthwise kernel inside conformer blocks
    int n_contrastive_layers = 2; // N
    int n_masked_layers = 2;      // M (0 = head applied directly to c_t)
    int ffn_expansion = 4;
    int encoder_channels = 8; // feature-encoder conv channels
    double dropout = 0.0;
    bool bypass_contrastive = false; // layer-removal collapse variant
    QuantizerConfig quantizer;

    void validate() const {
        if (model_dim % n_heads != 0)
            tensor_fail("ModelConfig", "model_dim " + std::to_string(model_dim) +
                                           " not divisible by n_heads " + std::to_string(n_heads));
        if (conv_kernel % 2 == 0) tensor_fail("ModelConfig", "conv_kernel must be odd");
        if (n_contrastive_layers < 0 || n_masked_layers < 0)
            tensor_fail("ModelConfig", "layer counts must be non-negative");
    }

    int mlm_vocab() const { return quantizer.groups * quantizer.entries_per_group; }
};

inline int encoder_output_length(int t) { return ((t + 1) / 2 + 1) / 2; }

template <typename T>
struct ForwardOutput {
    Tensor<T> context_contrastive; // c_t, T' x d
    Tensor<T> context_final;       // T' x d
    Tensor<T> mlm_logits;          // T' x (G*V)
    QuantizationResult<T> quantization;
    MaskSpec mask;
};

// Sinusoidal absolute position encoding, T x d.
template <typename T>
Tensor<T> sinusoidal_positions(int t, int d) {
    std::vector<T> pe((size_t)t * d);
    for (int pos = 0; pos < t; ++pos)
        for (int i = 0; i < d; ++i) {
            double angle = pos / std::pow(10000.0, 2.0 * (i / 2) / (double)d);
            pe[(size_t)(pos * d + i)] = (T)(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    return Tensor<T>(Shape{t, d}, std::move(pe));
}

template <typename T>
class W2vBertModel {
  public:
    W2vBertModel(ModelConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)), params_(init_seed) {
        cfg_.validate();
        build();
    }

    const ModelConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }
    const Codebook<T>& codebook() const { return codebook_; }

    // Two strided 2-D convolutions (stride (2,2) each, 4x time reduction),
    // frequency axis flattened into a linear projection to model_dim.
    Tensor<T> feature_encoder_forward(const Tensor<T>& features) const {
        if (features.rank() != 2 || features.dim(1) != cfg_.n_mels)
            tensor_fail("feature_encoder", "expected (T," + std::to_string(cfg_.n_mels) + "), got " +
                                               shape_str(features.shape()));
        const int t = features.dim(0);
        if (t < 4) tensor_fail("feature_encoder", "need T >= 4 for the 4x reduction, got " + std::to_string(t));
        Tensor<T> x = reshape(features, Shape{1, t, cfg_.n_mels});
        x = swish(conv2d(x, enc_.conv1_w, enc_.conv1_b, 2, 2));
        x = swish(conv2d(x, enc_.conv2_w, enc_.conv2_b, 2, 2));
        // (C, T', F') -> (T', C*F')
        const int c = x.dim(0), tp = x.dim(1), fp = x.dim(2);
        Tensor<T> flat = reshape(x, Shape{c, tp * fp});
        flat = transpose(flat);                       // (T'*F', C)
        flat = reshape(flat, Shape{tp, fp * c});      // rows are (f, c) pairs per frame
        return linear(flat, enc_.flatten_w, enc_.flatten_b);
    }

    Tensor<T> conformer_block_forward(const Tensor<T>& x, int block_index, bool train_mode,
                                      uint64_t seed) const {
        const auto& b = blocks_[(size_t)block_index];
        const int t = x.dim(0);
        const int heads = cfg_.n_heads;
        const int hd = cfg_.model_dim / heads;

        auto maybe_dropout = [&](Tensor<T> y, uint64_t tag) {
            if (train_mode && cfg_.dropout > 0.0)
                return w2v::dropout(y, (T)cfg_.dropout, mix_keys({seed, (uint64_t)block_index, tag}));
            return y;
        };

        // half-step macaron FFN #1
        Tensor<T> h = add(x, scale(maybe_dropout(ffn(b.ffn1, x), 1), T(0.5)));

        // multi-headed self-attention with absolute sinusoidal positions
        {
            Tensor<T> ln = layer_norm(add(h, sinusoidal_positions<T>(t, cfg_.model_dim)),
                                      b.attn_ln_g, b.attn_ln_b);
            Tensor<T> q = linear(ln, b.wq, b.bq);
            Tensor<T> k = linear(ln, b.wk, b.bk);
            Tensor<T> v = linear(ln, b.wv, b.bv);
            std::vector<Tensor<T>> head_out;
            for (int hh = 0; hh < heads; ++hh) {
                Tensor<T> qh = slice_cols(q, hh * hd, (hh + 1) * hd);
                Tensor<T> kh = slice_cols(k, hh * hd, (hh + 1) * hd);
                Tensor<T> vh = slice_cols(v, hh * hd, (hh + 1) * hd);
                Tensor<T> scores = scale(matmul(qh, transpose(kh)), (T)(1.0 / std::sqrt((double)hd)));
                head_out.push_back(matmul(softmax_rows(scores), vh));
            }
            Tensor<T> ctx = heads == 1 ? head_out[0] : concat(head_out, 1);
            h = add(h, maybe_dropout(linear(ctx, b.wo, b.bo), 2));
        }

        // convolution sub-block: pointwise -> GLU -> depthwise -> norm -> swish -> pointwise
        {
            Tensor<T> ln = layer_norm(h, b.conv_ln_g, b.conv_ln_b);
            Tensor<T> y = glu(linear(ln, b.conv_pw1_w, b.conv_pw1_b));
            y = depthwise_conv1d(y, b.conv_dw_w, b.conv_dw_b);
            y = layer_norm(y, b.conv_norm_g, b.conv_norm_b);
            y = swish(y);
            y = linear(y, b.conv_pw2_w, b.conv_pw2_b);
            h = add(h, maybe_dropout(y, 3));
        }

        // half-step macaron FFN #2, then final layer norm
        h = add(h, scale(maybe_dropout(ffn(b.ffn2, h), 4), T(0.5)));
        return layer_norm(h, b.final_ln_g, b.final_ln_b);
    }

    // linear projection + N conformer blocks over (already masked) latents
    Tensor<T> contrastive_module_forward(const Tensor<T>& masked_latents, bool train_mode,
                                         uint64_t seed) const {
        Tensor<T> x = linear(masked_latents, cont_proj_w_, cont_proj_b_);
        if (cfg_.bypass_contrastive) return x;
        for (int i = 0; i < cfg_.n_contrastive_layers; ++i)
            x = conformer_block_forward(x, i, train_mode, seed);
        return x;
    }

    // M conformer blocks then the token-ID head
    std::pair<Tensor<T>, Tensor<T>> masked_prediction_forward(const Tensor<T>& context,
                                                              bool train_mode, uint64_t seed) const {
        Tensor<T> x = context;
        for (int i = 0; i < cfg_.n_masked_layers; ++i)
            x = conformer_block_forward(x, cfg_.n_contrastive_layers + i, train_mode, seed);
        Tensor<T> logits = linear(x, mlm_head_w_, mlm_head_b_);
        return {x, logits};
    }

    // Full pretraining forward for one utterance. The quantizer consumes the
    // unmasked latents; the contrastive module consumes the masked ones.
    ForwardOutput<T> forward(const Tensor<T>& features, const MaskConfig& mask_cfg, bool train_mode,
                             double gumbel_temp, uint64_t seed,
                             QuantizeMode quantize_mode_override = QuantizeMode::Train) const {
        ForwardOutput<T> out;
        Tensor<T> latents = feature_encoder_forward(features);
        const int tp = latents.dim(0);

        QuantizeMode qmode = train_mode ? quantize_mode_override : QuantizeMode::Eval;
        out.quantization = quantize(latents, codebook_, qmode, gumbel_temp, mix_keys({seed, 11}));

        if (train_mode) {
            out.mask = sample_mask(tp, mask_cfg, mix_keys({seed, 12}));
            // re-sample once if the draw selected nothing
            if (out.mask.n_masked() == 0) out.mask = sample_mask(tp, mask_cfg, mix_keys({seed + 1, 12}));
        } else {
            out.mask.masked.assign((size_t)tp, false);
        }
        Tensor<T> masked = apply_mask(latents, out.mask, mask_cfg, mix_keys({seed, 13}));

        out.context_contrastive = contrastive_module_forward(masked, train_mode, mix_keys({seed, 14}));
        auto [final_ctx, logits] =
            masked_prediction_forward(out.context_contrastive, train_mode, mix_keys({seed, 15}));
        out.context_final = final_ctx;
        out.mlm_logits = logits;
        return out;
    }

    // Analytic parameter count for the current config; guards architecture drift.
    int64_t expected_param_count() const {
        const int d = cfg_.model_dim;
        const int c = cfg_.encoder_channels;
        const int fd = cfg_.ffn_expansion * d;
        const int v = cfg_.quantizer.entries_per_group;
        const int g = cfg_.quantizer.groups;
        const int cd = cfg_.quantizer.code_dim;
        const int gd = cd / g;
        const int f2 = ((cfg_.n_mels + 1) / 2 + 1) / 2;
        int64_t enc = (int64_t)c * 1 * 3 * 3 + c            // conv1
                      + (int64_t)c * c * 3 * 3 + c          // conv2
                      + (int64_t)f2 * c * d + d;            // flatten projection
        int64_t per_block = 2 * ((int64_t)2 * d            // ffn LN
                                 + (int64_t)d * fd + fd    // ffn in
                                 + (int64_t)fd * d + d)    // ffn out
                            + 2 * d                        // attn LN
                            + 4 * ((int64_t)d * d + d)     // q,k,v,o
                            + 2 * d                        // conv LN
                            + (int64_t)d * 2 * d + 2 * d   // conv pw1
                            + (int64_t)cfg_.conv_kernel * d + d // depthwise
                            + 2 * d                        // conv norm
                            + (int64_t)d * d + d           // conv pw2
                            + 2 * d;                       // final LN
        int64_t blocks = (int64_t)(cfg_.n_contrastive_layers + cfg_.n_masked_layers) * per_block;
        int64_t cont_proj = (int64_t)d * d + d;
        int64_t quant = (int64_t)d * g * v + g * v         // logit projection
                        + (int64_t)g * v * gd              // codes
                        + (int64_t)g * gd * cd + cd;       // output projection
        int64_t head = (int64_t)d * g * v + g * v;
        return enc + blocks + cont_proj + quant + head;
    }

  private:
    struct FfnParams {
        Tensor<T> ln_g, ln_b, w1, b1, w2, b2;
    };
    struct BlockParams {
        FfnParams ffn1, ffn2;
        Tensor<T> attn_ln_g, attn_ln_b, wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor<T> conv_ln_g, conv_ln_b, conv_pw1_w, conv_pw1_b, conv_dw_w, conv_dw_b;
        Tensor<T> conv_norm_g, conv_norm_b, conv_pw2_w, conv_pw2_b;
        Tensor<T> final_ln_g, final_ln_b;
    };
    struct EncoderParams {
        Tensor<T> conv1_w, conv1_b, conv2_w, conv2_b, flatten_w, flatten_b;
    };

    Tensor<T> ffn(const FfnParams& f, const Tensor<T>& x) const {
        Tensor<T> y = layer_norm(x, f.ln_g, f.ln_b);
        y = swish(linear(y, f.w1, f.b1));
        return linear(y, f.w2, f.b2);
    }

    FfnParams build_ffn(const std::string& prefix) {
        const int d = cfg_.model_dim, fd = cfg_.ffn_expansion * cfg_.model_dim;
        FfnParams f;
        f.ln_g = params_.get_vector(prefix + ".ln.g", d, T(1));
        f.ln_b = params_.get_vector(prefix + ".ln.b", d, T(0));
        f.w1 = params_.get_matrix(prefix + ".w1", d, fd);
        f.b1 = params_.get_vector(prefix + ".b1", fd, T(0));
        f.w2 = params_.get_matrix(prefix + ".w2", fd, d);
        f.b2 = params_.get_vector(prefix + ".b2", d, T(0));
        return f;
    }

    void build() {
        const int d = cfg_.model_dim;
        const int c = cfg_.encoder_channels;
        const int f2 = ((cfg_.n_mels + 1) / 2 + 1) / 2;
        enc_.conv1_w = params_.get("encoder.conv1.w", Shape{c, 1, 3, 3}, std::sqrt(1.0 / 9.0));
        enc_.conv1_b = params_.get_vector("encoder.conv1.b", c, T(0));
        enc_.conv2_w = params_.get("encoder.conv2.w", Shape{c, c, 3, 3}, std::sqrt(1.0 / (9.0 * c)));
        enc_.conv2_b = params_.get_vector("encoder.conv2.b", c, T(0));
        enc_.flatten_w = params_.get_matrix("encoder.flatten.w", f2 * c, d);
        enc_.flatten_b = params_.get_vector("encoder.flatten.b", d, T(0));

        cont_proj_w_ = params_.get_matrix("contrastive.proj.w", d, d);
        cont_proj_b_ = params_.get_vector("contrastive.proj.b", d, T(0));

        const int total_blocks = cfg_.n_contrastive_layers + cfg_.n_masked_layers;
        for (int i = 0; i < total_blocks; ++i) {
            std::string p = "block" + std::to_string(i);
            BlockParams b;
            b.ffn1 = build_ffn(p + ".ffn1");
            b.ffn2 = build_ffn(p + ".ffn2");
            b.attn_ln_g = params_.get_vector(p + ".attn.ln.g", d, T(1));
            b.attn_ln_b = params_.get_vector(p + ".attn.ln.b", d, T(0));
            b.wq = params_.get_matrix(p + ".attn.wq", d, d);
            b.bq = params_.get_vector(p + ".attn.bq", d, T(0));
            b.wk = params_.get_matrix(p + ".attn.wk", d, d);
            b.bk = params_.get_vector(p + ".attn.bk", d, T(0));
            b.wv = params_.get_matrix(p + ".attn.wv", d, d);
            b.bv = params_.get_vector(p + ".attn.bv", d, T(0));
            b.wo = params_.get_matrix(p + ".attn.wo", d, d);
            b.bo = params_.get_vector(p + ".attn.bo", d, T(0));
            b.conv_ln_g = params_.get_vector(p + ".conv.ln.g", d, T(1));
            b.conv_ln_b = params_.get_vector(p + ".conv.ln.b", d, T(0));
            b.conv_pw1_w = params_.get_matrix(p + ".conv.pw1.w", d, 2 * d);
            b.conv_pw1_b = params_.get_vector(p + ".conv.pw1.b", 2 * d, T(0));
            b.conv_dw_w = params_.get("block" + std::to_string(i) + ".conv.dw.w",
                                      Shape{cfg_.conv_kernel, d}, std::sqrt(1.0 / cfg_.conv_kernel));
            b.conv_dw_b = params_.get_vector(p + ".conv.dw.b", d, T(0));
            b.conv_norm_g = params_.get_vector(p + ".conv.norm.g", d, T(1));
            b.conv_norm_b = params_.get_vector(p + ".conv.norm.b", d, T(0));
            b.conv_pw2_w = params_.get_matrix(p + ".conv.pw2.w", d, d);
            b.conv_pw2_b = params_.get_vector(p + ".conv.pw2.b", d, T(0));
            b.final_ln_g = params_.get_vector(p + ".final.ln.g", d, T(1));
            b.final_ln_b = params_.get_vector(p + ".final.ln.b", d, T(0));
            blocks_.push_back(std::move(b));
        }

        codebook_ = Codebook<T>::build(params_, d, cfg_.quantizer);

        mlm_head_w_ = params_.get_matrix("mlm.head.w", d, cfg_.mlm_vocab());
        mlm_head_b_ = params_.get_vector("mlm.head.b", cfg_.mlm_vocab(), T(0));
    }

    ModelConfig cfg_;
    ParamStore<T> params_;
    EncoderParams enc_;
    std::vector<BlockParams> blocks_;
    Tensor<T> cont_proj_w_, cont_proj_b_;
    Codebook<T> codebook_;
    Tensor<T> mlm_head_w_, mlm_head_b_;
};

} // namespace w2v
