#pragma once

#include <vector>

#include "cada/data.hpp"
#include "cada/model.hpp"

namespace cada {

// Forward pass of a batch through both encoders plus the global heads.
// `sim` is the differentiable N_z x N_z cosine similarity matrix
// (rows = images, columns = texts).
struct BatchEncodings {
    std::vector<EncodedImage> images;
    Tensor sim;
    std::vector<int> identities;
};

BatchEncodings encode_batch(const Model& model, const PairBatch& batch);

// lambda * NDF + ATP + ARA; group size p / stride r for ATP.
struct LossConfig {
    float tau = 0.02f;
    float lambda_ndf = 0.1f;
    int group_size = 12;
    int group_stride = 12;
    float eps = kKlEps;
    bool use_ndf = true;
    bool use_atp = true;
    bool use_ara = true;
};

// Symmetric-KL contrastive loss over softmax(sim/tau) rows, both directions,
// averaged per the number of pairs. Ground truth per row is uniform over
// same-identity columns (one-hot when identities are unique in the batch).
Tensor ndf_loss(const Tensor& sim, const std::vector<int>& identities, float tau, float eps);

struct HardNegatives {
    std::vector<int> text_for_image;  // index of T_{a^-} per image a
    std::vector<int> image_for_text;  // index of I_{b^-} per text b
};

// Highest-similarity different-identity candidate, ties to the lowest index.
// Operates on detached values; no gradient flows through selection.
HardNegatives select_hard_negatives(const std::vector<float>& sim_values, int n,
                                    const std::vector<int>& identities);

// kappa = floor((max_len - p) / r) + 1 mean-pooled windows over the token rows
// (h_enc excluded), with g_0 = h_enc prepended. Windows are clamped to the
// available rows.
std::vector<Tensor> group_features(const Tensor& decoder_tokens, int group_size, int stride);

int group_count(int max_len, int group_size, int stride);

Tensor atp_loss(const Model& model, const PairBatch& batch, const BatchEncodings& enc,
                const HardNegatives& negatives, int group_size, int stride, float eps);

struct AraResult {
    Tensor loss;
    int pairs_with_masks = 0;  // 0 means the loss is a constant zero
};

AraResult ara_loss(const Model& model, const PairBatch& batch, const BatchEncodings& enc,
                   float eps);

struct LossBreakdown {
    Tensor total;
    float ndf = 0.0f;
    float atp = 0.0f;
    float ara = 0.0f;
};

LossBreakdown total_loss(const Model& model, const PairBatch& batch, const LossConfig& config);

}  // namespace cada
