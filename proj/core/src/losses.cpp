#include "cada/losses.hpp"

#include <algorithm>

namespace cada {

BatchEncodings encode_batch(const Model& model, const PairBatch& batch) {
    if (batch.samples.empty()) throw ValidationError("encode_batch: empty batch");
    BatchEncodings out;
    std::vector<Tensor> v_rows, t_rows;
    for (const auto& s : batch.samples) {
        EncodedImage img = model.encode_image(s.image);
        EncodedText txt = model.encode_text(s.text_cls);
        const Tensor v_cls = slice_rows(img.tokens, 0, 1);
        const Tensor t_cls = slice_rows(txt.tokens, 0, 1);
        auto [v_tilde, t_tilde] = model.project_global(v_cls, t_cls);
        v_rows.push_back(v_tilde);
        t_rows.push_back(t_tilde);
        out.images.push_back(std::move(img));
        out.identities.push_back(s.identity);
    }
    const Tensor v = normalize_rows(concat_rows(v_rows));
    const Tensor t = normalize_rows(concat_rows(t_rows));
    out.sim = matmul(v, transpose(t));
    return out;
}

namespace {

void ndf_direction(const Tensor& sim, const std::vector<int>& row_ids,
                   const std::vector<int>& col_ids, float tau, float eps,
                   std::vector<Tensor>& terms) {
    const int n = sim.rows();
    const Tensor probs = softmax_rows(scale(sim, 1.0f / tau));
    for (int i = 0; i < n; ++i) {
        std::vector<float> q(size_t(n), 0.0f);
        int positives = 0;
        for (int j = 0; j < n; ++j)
            if (col_ids[size_t(j)] == row_ids[size_t(i)]) ++positives;
        if (positives == 0)
            throw ValidationError("ndf_loss: row " + std::to_string(i) +
                                  " has no positive column");
        for (int j = 0; j < n; ++j)
            if (col_ids[size_t(j)] == row_ids[size_t(i)]) q[size_t(j)] = 1.0f / float(positives);
        const Tensor q_t = Tensor::from_data(1, n, std::move(q));
        const Tensor p = slice_rows(probs, i, i + 1);
        terms.push_back(kl_div(p, q_t, eps));
        terms.push_back(kl_div(q_t, p, eps));
    }
}

}  // namespace

Tensor ndf_loss(const Tensor& sim, const std::vector<int>& identities, float tau, float eps) {
    if (tau <= 0.0f) throw ValidationError("ndf_loss: tau must be positive");
    if (sim.rows() != sim.cols() || int(identities.size()) != sim.rows())
        throw DimensionError("ndf_loss: sim " + sim.shape_str() + " with " +
                             std::to_string(identities.size()) + " identities");
    // One wide reduction instead of a chain of scalar adds keeps the float32
    // rounding of the total to a single step.
    std::vector<Tensor> terms;
    terms.reserve(size_t(sim.rows()) * 4);
    ndf_direction(sim, identities, identities, tau, eps, terms);
    ndf_direction(transpose(sim), identities, identities, tau, eps, terms);
    return scale(sum(concat_cols(terms)), 1.0f / float(sim.rows()));
}

HardNegatives select_hard_negatives(const std::vector<float>& sim_values, int n,
                                    const std::vector<int>& identities) {
    if (int(identities.size()) != n || sim_values.size() != size_t(n) * n)
        throw DimensionError("select_hard_negatives: bad dimensions");
    HardNegatives out;
    out.text_for_image.assign(size_t(n), -1);
    out.image_for_text.assign(size_t(n), -1);
    for (int a = 0; a < n; ++a) {
        for (int j = 0; j < n; ++j) {
            if (identities[size_t(j)] == identities[size_t(a)]) continue;
            const float s = sim_values[size_t(a) * n + j];
            int& best = out.text_for_image[size_t(a)];
            if (best < 0 || s > sim_values[size_t(a) * n + best]) best = j;
        }
        for (int i = 0; i < n; ++i) {
            if (identities[size_t(i)] == identities[size_t(a)]) continue;
            const float s = sim_values[size_t(i) * n + a];
            int& best = out.image_for_text[size_t(a)];
            if (best < 0 || s > sim_values[size_t(best) * n + a]) best = i;
        }
        if (out.text_for_image[size_t(a)] < 0 || out.image_for_text[size_t(a)] < 0)
            throw ValidationError("select_hard_negatives: no different-identity candidate for " +
                                  std::to_string(a));
    }
    return out;
}

int group_count(int max_len, int group_size, int stride) {
    if (group_size > max_len)
        throw ConfigError("grouping: group size " + std::to_string(group_size) +
                          " exceeds sequence length " + std::to_string(max_len));
    if (stride < 1) throw ConfigError("grouping: stride must be >= 1");
    return (max_len - group_size) / stride + 1;
}

std::vector<Tensor> group_features(const Tensor& decoder_tokens, int group_size, int stride) {
    const int max_len = decoder_tokens.rows();
    const int kappa = group_count(max_len, group_size, stride);
    std::vector<Tensor> groups;
    groups.reserve(size_t(kappa) + 1);
    groups.push_back(slice_rows(decoder_tokens, 0, 1));  // g_0 = h_enc
    for (int i = 1; i <= kappa; ++i) {
        const int start = 1 + (i - 1) * stride;
        const int end = std::min(start + group_size, max_len);
        groups.push_back(mean_rows(slice_rows(decoder_tokens, start, end)));
    }
    return groups;
}

namespace {

// -log softmax(logits)[cls], the binary cross-entropy building block of ATP.
Tensor match_nll(const Model& model, const Tensor& group, int cls, float eps) {
    const Tensor probs = softmax_rows(model.match_logits(group));
    return scale(log_eps(pick(probs, 0, cls), eps), -1.0f);
}

}  // namespace

Tensor atp_loss(const Model& model, const PairBatch& batch, const BatchEncodings& enc,
                const HardNegatives& negatives, int group_size, int stride, float eps) {
    const int n = int(batch.samples.size());
    const int kappa = group_count(model.config().max_len, group_size, stride);
    std::vector<Tensor> terms;
    terms.reserve(size_t(n) * size_t(kappa + 1) * 3);
    for (int a = 0; a < n; ++a) {
        const int neg_text = negatives.text_for_image[size_t(a)];
        const int neg_image = negatives.image_for_text[size_t(a)];
        const auto pos = group_features(
            model.decode(batch.samples[size_t(a)].text_enc, enc.images[size_t(a)]).tokens,
            group_size, stride);
        const auto neg_t = group_features(
            model.decode(batch.samples[size_t(neg_text)].text_enc, enc.images[size_t(a)]).tokens,
            group_size, stride);
        const auto neg_i = group_features(
            model.decode(batch.samples[size_t(a)].text_enc, enc.images[size_t(neg_image)]).tokens,
            group_size, stride);
        for (int g = 0; g <= kappa; ++g) {
            terms.push_back(match_nll(model, pos[size_t(g)], 0, eps));
            terms.push_back(match_nll(model, neg_t[size_t(g)], 1, eps));
            terms.push_back(match_nll(model, neg_i[size_t(g)], 1, eps));
        }
    }
    return scale(sum(concat_cols(terms)), 1.0f / (float(n) * float(kappa + 1)));
}

AraResult ara_loss(const Model& model, const PairBatch& batch, const BatchEncodings& enc,
                   float eps) {
    AraResult out;
    const int voc = model.config().vocab_size;
    std::vector<Tensor> pair_terms;
    for (size_t a = 0; a < batch.samples.size(); ++a) {
        const auto& sample = batch.samples[a];
        const int n_m = int(sample.masked.mask_positions.size());
        if (n_m == 0) continue;
        TokenSequence masked_seq = sample.text_enc;
        masked_seq.ids = sample.masked.ids;
        const Tensor h = model.decode(masked_seq, enc.images[a]).tokens;
        std::vector<Tensor> mask_terms;
        mask_terms.reserve(size_t(n_m));
        for (int m = 0; m < n_m; ++m) {
            const int pos = sample.masked.mask_positions[size_t(m)];
            const int label = sample.masked.labels[size_t(m)];
            const Tensor probs = softmax_rows(model.mam_logits(slice_rows(h, pos, pos + 1)));
            std::vector<float> onehot(size_t(voc), 0.0f);
            onehot[size_t(label)] = 1.0f;
            mask_terms.push_back(
                kl_div(Tensor::from_data(1, voc, std::move(onehot)), probs, eps));
        }
        pair_terms.push_back(scale(sum(concat_cols(mask_terms)), 1.0f / float(n_m)));
        ++out.pairs_with_masks;
    }
    out.loss = out.pairs_with_masks == 0
                   ? Tensor::scalar(0.0f)
                   : scale(sum(concat_cols(pair_terms)), 1.0f / float(out.pairs_with_masks));
    return out;
}

LossBreakdown total_loss(const Model& model, const PairBatch& batch, const LossConfig& config) {
    const BatchEncodings enc = encode_batch(model, batch);
    LossBreakdown out;
    Tensor total = Tensor::scalar(0.0f);
    if (config.use_ndf) {
        const Tensor ndf = ndf_loss(enc.sim, enc.identities, config.tau, config.eps);
        out.ndf = ndf.item();
        total = add(total, scale(ndf, config.lambda_ndf));
    }
    if (config.use_atp) {
        const auto negs = select_hard_negatives(enc.sim.data(), enc.sim.rows(), enc.identities);
        const Tensor atp = atp_loss(model, batch, enc, negs, config.group_size,
                                    config.group_stride, config.eps);
        out.atp = atp.item();
        total = add(total, atp);
    }
    if (config.use_ara) {
        const AraResult ara = ara_loss(model, batch, enc, config.eps);
        out.ara = ara.loss.item();
        total = add(total, ara.loss);
    }
    out.total = total;
    return out;
}

}  // namespace cada
