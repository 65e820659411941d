#include "cada/model.hpp"

#include <algorithm>
#include <cmath>

namespace cada {

void ModelConfig::validate() const {
    if (image_h % patch != 0 || image_w % patch != 0)
        throw ConfigError("model: image " + std::to_string(image_h) + "x" +
                          std::to_string(image_w) + " not divisible by patch " +
                          std::to_string(patch));
    if (d_v % image_heads != 0 || d_t % text_heads != 0)
        throw ConfigError("model: width must be divisible by head count");
    if (vocab_size <= Vocabulary::kNumSpecials)
        throw ConfigError("model: vocab_size not set");
    if (max_len < 2 || image_layers < 1 || text_layers < 1 || d_latent < 1)
        throw ConfigError("model: degenerate architecture");
}

namespace {

Tensor trunc_normal(int rows, int cols, float std_dev, std::mt19937& rng) {
    std::normal_distribution<float> dist(0.0f, std_dev);
    Tensor t = Tensor::zeros(rows, cols, true);
    for (auto& v : t.data()) {
        float x;
        do {
            x = dist(rng);
        } while (std::fabs(x) > 2.0f * std_dev);
        v = x;
    }
    return t;
}

LinearParams make_linear(int in, int out, std::mt19937& rng, bool with_bias = true) {
    LinearParams p;
    p.weight = trunc_normal(in, out, 0.02f, rng);
    if (with_bias) p.bias = Tensor::zeros(1, out, true);
    return p;
}

LayerNormParams make_ln(int d) {
    LayerNormParams p;
    p.gamma = Tensor::full(1, d, 1.0f, true);
    p.beta = Tensor::zeros(1, d, true);
    return p;
}

AttentionParams make_attention(int d, int heads, std::mt19937& rng) {
    AttentionParams p;
    p.wq = make_linear(d, d, rng);
    p.wk = make_linear(d, d, rng);
    p.wv = make_linear(d, d, rng);
    p.wo = make_linear(d, d, rng);
    p.heads = heads;
    return p;
}

EncoderLayer make_encoder_layer(int d, int heads, int ffn_mult, std::mt19937& rng) {
    EncoderLayer layer;
    layer.ln1 = make_ln(d);
    layer.ln2 = make_ln(d);
    layer.attn = make_attention(d, heads, rng);
    layer.ffn.fc1 = make_linear(d, d * ffn_mult, rng);
    layer.ffn.fc2 = make_linear(d * ffn_mult, d, rng);
    return layer;
}

void register_linear(ParamRegistry& reg, const std::string& name, const LinearParams& p) {
    reg.add(name + ".weight", p.weight);
    if (p.bias.defined()) reg.add(name + ".bias", p.bias);
}

void register_ln(ParamRegistry& reg, const std::string& name, const LayerNormParams& p) {
    reg.add(name + ".gamma", p.gamma);
    reg.add(name + ".beta", p.beta);
}

void register_attention(ParamRegistry& reg, const std::string& name, const AttentionParams& p) {
    register_linear(reg, name + ".wq", p.wq);
    register_linear(reg, name + ".wk", p.wk);
    register_linear(reg, name + ".wv", p.wv);
    register_linear(reg, name + ".wo", p.wo);
}

void register_encoder_layer(ParamRegistry& reg, const std::string& name, const EncoderLayer& l) {
    register_ln(reg, name + ".ln1", l.ln1);
    register_ln(reg, name + ".ln2", l.ln2);
    register_attention(reg, name + ".attn", l.attn);
    register_linear(reg, name + ".ffn.fc1", l.ffn.fc1);
    register_linear(reg, name + ".ffn.fc2", l.ffn.fc2);
}

}  // namespace

Tensor LinearParams::forward(const Tensor& x) const {
    Tensor y = matmul(x, weight);
    return bias.defined() ? add_rowvec(y, bias) : y;
}

Tensor attention(const AttentionParams& p, const Tensor& query_in, const Tensor& kv_in,
                 const std::vector<bool>* key_pad) {
    if (key_pad && int(key_pad->size()) != kv_in.rows())
        throw DimensionError("attention: mask length " + std::to_string(key_pad->size()) +
                             " vs " + std::to_string(kv_in.rows()) + " keys");
    const int d = p.wq.weight.cols();
    const int dh = d / p.heads;
    const Tensor q = p.wq.forward(query_in);
    const Tensor k = p.wk.forward(kv_in);
    const Tensor v = p.wv.forward(kv_in);

    Tensor mask_bias;
    if (key_pad) {
        mask_bias = Tensor::zeros(query_in.rows(), kv_in.rows());
        for (int i = 0; i < query_in.rows(); ++i)
            for (int j = 0; j < kv_in.rows(); ++j)
                if ((*key_pad)[size_t(j)]) mask_bias.at(i, j) = -1e9f;
    }

    std::vector<Tensor> head_outs;
    head_outs.reserve(size_t(p.heads));
    for (int h = 0; h < p.heads; ++h) {
        const Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
        const Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
        const Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
        Tensor scores = scale(matmul(qh, transpose(kh)), 1.0f / std::sqrt(float(dh)));
        if (key_pad) scores = add(scores, mask_bias);
        head_outs.push_back(matmul(softmax_rows(scores), vh));
    }
    return p.wo.forward(concat_cols(head_outs));
}

Tensor EncoderLayer::forward(const Tensor& x, const std::vector<bool>* pad_mask) const {
    const Tensor n1 = ln1.forward(x);
    const Tensor x1 = add(x, attention(attn, n1, n1, pad_mask));
    return add(x1, ffn.forward(ln2.forward(x1)));
}

Tensor DecoderLayer::forward(const Tensor& x, const Tensor& image_tokens,
                             const std::vector<bool>* pad_mask) const {
    const Tensor n1 = shared.ln1.forward(x);
    const Tensor x1 = add(x, attention(shared.attn, n1, n1, pad_mask));
    const Tensor x2 = add(x1, attention(cross, ln_cross.forward(x1), image_tokens, nullptr));
    return add(x2, shared.ffn.forward(shared.ln2.forward(x2)));
}

Tensor patchify(const std::vector<float>& image_hwc, const ModelConfig& c) {
    const size_t expected = size_t(c.image_h) * c.image_w * c.image_c;
    if (image_hwc.size() != expected)
        throw DimensionError("patchify: image has " + std::to_string(image_hwc.size()) +
                             " values, config expects " + std::to_string(expected));
    const int ph = c.image_h / c.patch, pw = c.image_w / c.patch;
    const int patch_dim = c.patch * c.patch * c.image_c;
    Tensor out = Tensor::zeros(ph * pw, patch_dim);
    for (int py = 0; py < ph; ++py)
        for (int px = 0; px < pw; ++px) {
            const int row = py * pw + px;
            int k = 0;
            for (int y = 0; y < c.patch; ++y)
                for (int x = 0; x < c.patch; ++x)
                    for (int ch = 0; ch < c.image_c; ++ch)
                        out.at(row, k++) = image_hwc[size_t((py * c.patch + y) * c.image_w +
                                                            px * c.patch + x) * c.image_c + ch];
        }
    return out;
}

Model::Model(const ModelConfig& config, uint64_t init_seed) : config_(config) {
    config_.validate();
    std::mt19937 rng(uint32_t(init_seed ^ (init_seed >> 32)));

    const int patch_dim = config_.patch * config_.patch * config_.image_c;
    patch_embed_ = make_linear(patch_dim, config_.d_v, rng);
    image_cls_ = trunc_normal(1, config_.d_v, 0.02f, rng);
    image_pos_ = trunc_normal(config_.num_patches() + 1, config_.d_v, 0.02f, rng);
    for (int l = 0; l < config_.image_layers; ++l)
        image_layers_.push_back(make_encoder_layer(config_.d_v, config_.image_heads, config_.ffn_mult, rng));
    image_final_ln_ = make_ln(config_.d_v);

    token_embed_ = trunc_normal(config_.vocab_size, config_.d_t, 0.02f, rng);
    text_pos_ = trunc_normal(config_.max_len, config_.d_t, 0.02f, rng);
    for (int l = 0; l < config_.text_layers; ++l)
        text_layers_.push_back(make_encoder_layer(config_.d_t, config_.text_heads, config_.ffn_mult, rng));
    text_final_ln_ = make_ln(config_.d_t);

    for (int l = 0; l < config_.text_layers; ++l) {
        DecoderLayer dl;
        dl.shared = text_layers_[size_t(l)];  // same tensor storage
        dl.ln_cross = make_ln(config_.d_t);
        dl.cross = make_attention(config_.d_t, config_.text_heads, rng);
        decoder_layers_.push_back(std::move(dl));
    }

    proj_v_ = make_linear(config_.d_v, config_.d_latent, rng, /*with_bias=*/false);
    proj_t_ = make_linear(config_.d_t, config_.d_latent, rng, /*with_bias=*/false);
    match_head_ = make_linear(config_.d_t, 2, rng);
    mam_head_ = make_linear(config_.d_t, config_.vocab_size, rng);

    register_params();
}

void Model::register_params() {
    auto& reg = params_;
    register_linear(reg, "image.patch_embed", patch_embed_);
    reg.add("image.cls", image_cls_);
    reg.add("image.pos", image_pos_);
    for (size_t l = 0; l < image_layers_.size(); ++l)
        register_encoder_layer(reg, "image.layer" + std::to_string(l), image_layers_[l]);
    register_ln(reg, "image.final_ln", image_final_ln_);

    reg.add("text.token_embed", token_embed_);
    reg.add("text.pos", text_pos_);
    for (size_t l = 0; l < text_layers_.size(); ++l)
        register_encoder_layer(reg, "text.layer" + std::to_string(l), text_layers_[l]);
    register_ln(reg, "text.final_ln", text_final_ln_);

    // Shared sublayers register as aliases of the text-encoder entries.
    for (size_t l = 0; l < decoder_layers_.size(); ++l) {
        const std::string name = "decoder.layer" + std::to_string(l);
        register_encoder_layer(reg, name + ".shared", decoder_layers_[l].shared);
        register_ln(reg, name + ".ln_cross", decoder_layers_[l].ln_cross);
        register_attention(reg, name + ".cross", decoder_layers_[l].cross);
    }

    register_linear(reg, "heads.proj_v", proj_v_);
    register_linear(reg, "heads.proj_t", proj_t_);
    register_linear(reg, "heads.match", match_head_);
    register_linear(reg, "heads.mam", mam_head_);
}

EncodedImage Model::encode_image(const std::vector<float>& image_hwc) const {
    Tensor x = concat_rows({image_cls_, patch_embed_.forward(patchify(image_hwc, config_))});
    x = add(x, image_pos_);
    for (const auto& layer : image_layers_) x = layer.forward(x, nullptr);
    return {image_final_ln_.forward(x)};
}

Tensor Model::forward_text_layers(Tensor x, const std::vector<bool>* pad_mask) const {
    for (const auto& layer : text_layers_) x = layer.forward(x, pad_mask);
    return text_final_ln_.forward(x);
}

EncodedText Model::encode_text(const TokenSequence& tokens) const {
    if (tokens.ids.empty() || tokens.ids[0] != Vocabulary::kCls)
        throw ValidationError("encode_text: leading token must be [CLS]");
    if (int(tokens.ids.size()) != config_.max_len)
        throw DimensionError("encode_text: sequence length " + std::to_string(tokens.ids.size()) +
                             " vs max_len " + std::to_string(config_.max_len));
    Tensor x = add(embedding_lookup(token_embed_, tokens.ids), text_pos_);
    return {forward_text_layers(x, &tokens.pad_mask), tokens.pad_mask};
}

std::pair<Tensor, Tensor> Model::project_global(const Tensor& v_cls, const Tensor& t_cls) const {
    return {proj_v_.forward(v_cls), proj_t_.forward(t_cls)};
}

DecoderOutput Model::decode(const TokenSequence& text_tokens, const EncodedImage& image) const {
    if (text_tokens.ids.empty() || text_tokens.ids[0] != Vocabulary::kEnc)
        throw ValidationError("decode: leading token must be [ENC]");
    if (int(text_tokens.ids.size()) != config_.max_len)
        throw DimensionError("decode: sequence length mismatch");
    Tensor x = add(embedding_lookup(token_embed_, text_tokens.ids), text_pos_);
    for (const auto& layer : decoder_layers_)
        x = layer.forward(x, image.tokens, &text_tokens.pad_mask);
    return {text_final_ln_.forward(x)};
}

namespace {
void check_alias(Model::SharingReport& r, const char* what, int layer, const Tensor& a,
                 const Tensor& b) {
    if (a.node() != b.node()) {
        r.ok = false;
        r.mismatches.push_back("decoder.layer" + std::to_string(layer) + "." + what +
                               " is not storage-identical to the text encoder");
    }
}
}  // namespace

Model::SharingReport Model::verify_sharing() const {
    SharingReport report;
    for (size_t l = 0; l < decoder_layers_.size(); ++l) {
        const auto& d = decoder_layers_[l].shared;
        const auto& t = text_layers_[l];
        const int li = int(l);
        check_alias(report, "ln1.gamma", li, d.ln1.gamma, t.ln1.gamma);
        check_alias(report, "ln1.beta", li, d.ln1.beta, t.ln1.beta);
        check_alias(report, "ln2.gamma", li, d.ln2.gamma, t.ln2.gamma);
        check_alias(report, "ln2.beta", li, d.ln2.beta, t.ln2.beta);
        check_alias(report, "attn.wq", li, d.attn.wq.weight, t.attn.wq.weight);
        check_alias(report, "attn.wk", li, d.attn.wk.weight, t.attn.wk.weight);
        check_alias(report, "attn.wv", li, d.attn.wv.weight, t.attn.wv.weight);
        check_alias(report, "attn.wo", li, d.attn.wo.weight, t.attn.wo.weight);
        check_alias(report, "ffn.fc1", li, d.ffn.fc1.weight, t.ffn.fc1.weight);
        check_alias(report, "ffn.fc2", li, d.ffn.fc2.weight, t.ffn.fc2.weight);
        // cross-attention must be decoder-exclusive
        for (const auto& p : params_.all()) {
            const bool is_cross_name = p.name.find("decoder.layer" + std::to_string(li) +
                                                   ".cross") == 0 ||
                                       p.name.find("decoder.layer" + std::to_string(li) +
                                                   ".ln_cross") == 0;
            const bool is_cross_storage =
                p.tensor.node() == decoder_layers_[l].cross.wq.weight.node() ||
                p.tensor.node() == decoder_layers_[l].cross.wk.weight.node() ||
                p.tensor.node() == decoder_layers_[l].cross.wv.weight.node() ||
                p.tensor.node() == decoder_layers_[l].cross.wo.weight.node();
            if (is_cross_storage && !is_cross_name) {
                report.ok = false;
                report.mismatches.push_back("cross-attention storage of decoder.layer" +
                                            std::to_string(li) + " aliased by '" + p.name + "'");
            }
        }
    }
    return report;
}

void Model::unshare_decoder_layer_for_test(int layer) {
    auto& shared = decoder_layers_.at(size_t(layer)).shared;
    auto clone = [](Tensor& t) {
        Tensor c = t.detach();
        c.node()->requires_grad = true;
        c.node()->ensure_grad();
        t = c;
    };
    clone(shared.attn.wq.weight);
    clone(shared.ffn.fc1.weight);
}

void Model::zero_cross_attention_outputs_for_test() {
    for (auto& layer : decoder_layers_) {
        std::fill(layer.cross.wo.weight.data().begin(), layer.cross.wo.weight.data().end(), 0.0f);
        std::fill(layer.cross.wo.bias.data().begin(), layer.cross.wo.bias.data().end(), 0.0f);
    }
}

}  // namespace cada
