#pragma once

#include <random>
#include <string>
#include <vector>

#include "cada/params.hpp"
#include "cada/tensor.hpp"
#include "cada/textproc.hpp"

namespace cada {

struct ModelConfig {
    // image encoder
    int image_h = 32, image_w = 32, image_c = 3;
    int patch = 8;
    int image_layers = 2;
    int d_v = 64;
    int image_heads = 4;
    // text encoder / decoder
    int text_layers = 2;
    int d_t = 64;
    int text_heads = 4;
    int max_len = 24;
    int vocab_size = 0;  // filled from the vocabulary
    // shared latent for global association
    int d_latent = 32;
    int ffn_mult = 4;

    int num_patches() const { return (image_h / patch) * (image_w / patch); }
    void validate() const;
};

struct LinearParams {
    Tensor weight;  // in x out
    Tensor bias;    // 1 x out, undefined when bias-free
    Tensor forward(const Tensor& x) const;
};

struct LayerNormParams {
    Tensor gamma, beta;  // 1 x d
    Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

struct AttentionParams {
    LinearParams wq, wk, wv, wo;
    int heads = 1;
};

// softmax(q k^T / sqrt(d_head)) v per head, concatenated and projected.
// key_pad, when given, marks padded key positions (additive -1e9 pre-softmax).
Tensor attention(const AttentionParams& p, const Tensor& query_in, const Tensor& kv_in,
                 const std::vector<bool>* key_pad);

struct FeedForwardParams {
    LinearParams fc1, fc2;
    Tensor forward(const Tensor& x) const { return fc2.forward(gelu(fc1.forward(x))); }
};

// Pre-norm residual block: x += attn(ln1(x)); x += ffn(ln2(x)).
struct EncoderLayer {
    LayerNormParams ln1, ln2;
    AttentionParams attn;
    FeedForwardParams ffn;
    Tensor forward(const Tensor& x, const std::vector<bool>* pad_mask) const;
};

// Decoder layer = the matching text-encoder layer's self-attention and FFN
// (same storage) plus a decoder-exclusive cross-attention sublayer.
struct DecoderLayer {
    EncoderLayer shared;  // aliases the text-encoder layer's tensors
    LayerNormParams ln_cross;
    AttentionParams cross;
    Tensor forward(const Tensor& x, const Tensor& image_tokens,
                   const std::vector<bool>* pad_mask) const;
};

struct EncodedImage {
    Tensor tokens;  // (N+1) x d_v, row 0 = [CLS]_v
};

struct EncodedText {
    Tensor tokens;  // max_len x d_t, row 0 = t_cls
    std::vector<bool> pad_mask;
};

struct DecoderOutput {
    Tensor tokens;  // max_len x d_t, row 0 = h_enc
};

class Model {
  public:
    Model(const ModelConfig& config, uint64_t init_seed);

    EncodedImage encode_image(const std::vector<float>& image_hwc) const;
    EncodedText encode_text(const TokenSequence& tokens) const;
    // (v_cls, t_cls) -> (v tilde, t tilde), bias-free projections W_v, W_t.
    std::pair<Tensor, Tensor> project_global(const Tensor& v_cls, const Tensor& t_cls) const;
    DecoderOutput decode(const TokenSequence& text_tokens, const EncodedImage& image) const;

    Tensor match_logits(const Tensor& group) const { return match_head_.forward(group); }
    Tensor mam_logits(const Tensor& rows) const { return mam_head_.forward(rows); }

    const ModelConfig& config() const { return config_; }
    const ParamRegistry& params() const { return params_; }

    struct SharingReport {
        bool ok = true;
        std::vector<std::string> mismatches;
    };
    SharingReport verify_sharing() const;

    // Test hook: replaces one decoder layer's shared sublayers with detached
    // copies, deliberately breaking parameter sharing.
    void unshare_decoder_layer_for_test(int layer);
    // Test hook: zeroes every cross-attention output projection.
    void zero_cross_attention_outputs_for_test();

  private:
    ModelConfig config_;
    // image encoder
    LinearParams patch_embed_;
    Tensor image_cls_;      // 1 x d_v
    Tensor image_pos_;      // (N+1) x d_v
    std::vector<EncoderLayer> image_layers_;
    LayerNormParams image_final_ln_;
    // text encoder
    Tensor token_embed_;    // Voc x d_t
    Tensor text_pos_;       // max_len x d_t
    std::vector<EncoderLayer> text_layers_;
    LayerNormParams text_final_ln_;
    // decoder (self/ffn shared with text encoder, cross exclusive)
    std::vector<DecoderLayer> decoder_layers_;
    // heads
    LinearParams proj_v_, proj_t_;  // bias-free
    LinearParams match_head_;       // d_t x 2
    LinearParams mam_head_;         // d_t x Voc
    ParamRegistry params_;

    Tensor forward_text_layers(Tensor x, const std::vector<bool>* pad_mask) const;
    void register_params();
};

// Splits an H x W x C row-major image into flattened P*P*C patch rows.
Tensor patchify(const std::vector<float>& image_hwc, const ModelConfig& config);

}  // namespace cada
