#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cada/gradcheck.hpp"
#include "cada/losses.hpp"
#include "doctest.h"

using namespace cada;

namespace {

Vocabulary test_vocab() {
    return Vocabulary({"a", "and", "black", "blue", "hair", "jacket", "long", "person", "shoes",
                       "short", "straight", "walks", "wears", "with"});
}

PosLexicon test_lexicon() {
    PosLexicon lex;
    for (const char* w : {"black", "blue", "long", "short", "straight"}) lex.set(w, PosTag::Adj);
    for (const char* w : {"hair", "jacket", "person", "shoes"}) lex.set(w, PosTag::Noun);
    return lex;
}

ModelConfig tiny_config(int vocab_size) {
    ModelConfig c;
    c.image_h = 16;
    c.image_w = 16;
    c.image_c = 3;
    c.patch = 8;  // 4 patches
    c.image_layers = 1;
    c.d_v = 16;
    c.image_heads = 2;
    c.text_layers = 1;
    c.d_t = 16;
    c.text_heads = 2;
    c.max_len = 10;
    c.vocab_size = vocab_size;
    c.d_latent = 8;
    c.ffn_mult = 2;
    return c;
}

PairSample make_sample(int identity, const std::string& caption, const Vocabulary& v,
                       const PosLexicon& lex, const ModelConfig& cfg, std::mt19937& rng,
                       float alpha) {
    PairSample s;
    s.identity = identity;
    s.image.resize(size_t(cfg.image_h) * cfg.image_w * cfg.image_c);
    std::uniform_real_distribution<float> uni(0.0f, 1.0f);
    for (auto& x : s.image) x = uni(rng);
    s.text_cls = tokenize(caption, v, cfg.max_len, LeadingToken::Cls);
    s.text_enc = tokenize(caption, v, cfg.max_len, LeadingToken::Enc);
    const auto spans = extract_attributes(s.text_enc, v, lex);
    s.masked = mask_attributes(s.text_enc, spans, alpha, rng);
    return s;
}

PairBatch make_test_batch(int n, const Vocabulary& v, const PosLexicon& lex,
                          const ModelConfig& cfg, std::mt19937& rng, float alpha) {
    const std::vector<std::string> captions = {
        "a person wears a black jacket and long hair",
        "a person with blue shoes walks",
        "short straight hair and a blue jacket",
        "black shoes with a long jacket",
    };
    PairBatch batch;
    for (int i = 0; i < n; ++i)
        batch.samples.push_back(
            make_sample(i % 2, captions[size_t(i) % captions.size()], v, lex, cfg, rng, alpha));
    return batch;
}

// Scalar-loop reimplementation of the symmetric-KL contrastive loss, double
// precision except where the library computes in float (row softmax).
double ndf_oracle(const std::vector<float>& sim, int n, const std::vector<int>& ids, double tau,
                  double eps) {
    auto direction = [&](bool transposed) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            std::vector<float> logits(size_t(n), 0.0f);
            for (int j = 0; j < n; ++j)
                logits[size_t(j)] =
                    float((transposed ? sim[size_t(j) * n + i] : sim[size_t(i) * n + j]) / tau);
            float mx = logits[0];
            for (float l : logits) mx = std::max(mx, l);
            double z = 0.0;
            std::vector<float> p(size_t(n), 0.0f);
            for (int j = 0; j < n; ++j) {
                p[size_t(j)] = std::exp(logits[size_t(j)] - mx);
                z += double(p[size_t(j)]);
            }
            for (auto& x : p) x = float(double(x) / z);
            int positives = 0;
            for (int j = 0; j < n; ++j)
                if (ids[size_t(j)] == ids[size_t(i)]) ++positives;
            double fwd = 0.0, bwd = 0.0;
            for (int j = 0; j < n; ++j) {
                const double q =
                    ids[size_t(j)] == ids[size_t(i)] ? double(float(1.0f / positives)) : 0.0;
                const double pj = double(p[size_t(j)]);
                fwd += pj * std::log((pj + eps) / (q + eps));
                bwd += q * std::log((q + eps) / (pj + eps));
            }
            acc += double(float(fwd)) + double(float(bwd));
        }
        return acc;
    };
    const double total = direction(false) + direction(true);
    return double(float(total)) * double(1.0f / float(n));
}

double match_nll_oracle(const Model& model, const Tensor& group, int cls, double eps) {
    const Tensor logits = model.match_logits(group);
    const double l0 = logits.at(0, 0), l1 = logits.at(0, 1);
    const double mx = std::max(l0, l1);
    const double z = std::exp(l0 - mx) + std::exp(l1 - mx);
    const double prob = std::exp((cls == 0 ? l0 : l1) - mx) / z;
    return -std::log(prob + eps);
}

double atp_oracle(const Model& model, const PairBatch& batch, const BatchEncodings& enc,
                  const HardNegatives& negs, int p, int r, double eps) {
    const int n = int(batch.samples.size());
    const int kappa = group_count(model.config().max_len, p, r);
    double acc = 0.0;
    for (int a = 0; a < n; ++a) {
        const auto pos = group_features(
            model.decode(batch.samples[size_t(a)].text_enc, enc.images[size_t(a)]).tokens, p, r);
        const auto neg_t = group_features(
            model
                .decode(batch.samples[size_t(negs.text_for_image[size_t(a)])].text_enc,
                        enc.images[size_t(a)])
                .tokens,
            p, r);
        const auto neg_i = group_features(
            model
                .decode(batch.samples[size_t(a)].text_enc,
                        enc.images[size_t(negs.image_for_text[size_t(a)])])
                .tokens,
            p, r);
        for (int g = 0; g <= kappa; ++g) {
            acc += match_nll_oracle(model, pos[size_t(g)], 0, eps);
            acc += match_nll_oracle(model, neg_t[size_t(g)], 1, eps);
            acc += match_nll_oracle(model, neg_i[size_t(g)], 1, eps);
        }
    }
    return acc / (double(n) * double(kappa + 1));
}

double ara_oracle(const Model& model, const PairBatch& batch, const BatchEncodings& enc,
                  double eps) {
    double acc = 0.0;
    int pairs = 0;
    for (size_t a = 0; a < batch.samples.size(); ++a) {
        const auto& sample = batch.samples[a];
        const int n_m = int(sample.masked.mask_positions.size());
        if (n_m == 0) continue;
        TokenSequence masked_seq = sample.text_enc;
        masked_seq.ids = sample.masked.ids;
        const Tensor h = model.decode(masked_seq, enc.images[a]).tokens;
        double pair_acc = 0.0;
        for (int m = 0; m < n_m; ++m) {
            const int pos = sample.masked.mask_positions[size_t(m)];
            const int label = sample.masked.labels[size_t(m)];
            const Tensor logits = model.mam_logits(slice_rows(h, pos, pos + 1));
            double mx = logits.at(0, 0);
            for (int j = 1; j < logits.cols(); ++j) mx = std::max(mx, double(logits.at(0, j)));
            double z = 0.0;
            for (int j = 0; j < logits.cols(); ++j) z += std::exp(double(logits.at(0, j)) - mx);
            const double prob = std::exp(double(logits.at(0, label)) - mx) / z;
            pair_acc += std::log((1.0 + eps) / (prob + eps));
        }
        acc += pair_acc / n_m;
        ++pairs;
    }
    return pairs == 0 ? 0.0 : acc / pairs;
}

}  // namespace

TEST_CASE("ndf_loss matches the scalar oracle on random matrices") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 4;
        std::vector<float> sim(size_t(n) * n);
        for (auto& x : sim) x = uni(rng);
        const std::vector<int> ids = trial % 2 ? std::vector<int>{0, 0, 1, 1}
                                               : std::vector<int>{0, 1, 2, 3};
        const float tau = trial % 3 == 0 ? 1.0f : 0.5f;
        const Tensor s = Tensor::from_data(n, n, std::vector<float>(sim));
        const float got = ndf_loss(s, ids, tau, kKlEps).item();
        const double want = ndf_oracle(sim, n, ids, tau, kKlEps);
        CHECK(std::abs(got - want) < 1e-6);
    }
}

TEST_CASE("ndf_loss hand cases") {
    SUBCASE("single pair is exactly zero") {
        const Tensor s = Tensor::from_data(1, 1, {0.37f});
        CHECK(ndf_loss(s, {0}, 1.0f, kKlEps).item() == doctest::Approx(0.0).epsilon(1e-9));
    }
    SUBCASE("two pairs, antisymmetric similarities") {
        const Tensor s = Tensor::from_data(2, 2, {1.0f, -1.0f, -1.0f, 1.0f});
        const double want = ndf_oracle({1.0f, -1.0f, -1.0f, 1.0f}, 2, {0, 1}, 1.0, kKlEps);
        CHECK(ndf_loss(s, {0, 1}, 1.0f, kKlEps).item() == doctest::Approx(want).epsilon(1e-6));
        CHECK(want > 0.0);
    }
    SUBCASE("non-positive temperature and bad shapes are rejected") {
        const Tensor s = Tensor::from_data(2, 2, {0.0f, 0.0f, 0.0f, 0.0f});
        CHECK_NOTHROW(ndf_loss(s, {0, 1}, 1.0f, kKlEps));
        CHECK_THROWS_AS(ndf_loss(s, {0, 1}, 0.0f, kKlEps), ValidationError);
        CHECK_THROWS_AS(ndf_loss(s, {0, 1, 2}, 1.0f, kKlEps), DimensionError);
    }
}

TEST_CASE("hard negative selection matches an exhaustive scan") {
    std::mt19937 rng(23);
    std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
    const int n = 8;
    const std::vector<int> ids = {0, 0, 1, 1, 2, 2, 3, 3};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<float> sim(size_t(n) * n);
        for (auto& x : sim) x = uni(rng);
        const HardNegatives got = select_hard_negatives(sim, n, ids);
        for (int a = 0; a < n; ++a) {
            int best_t = -1, best_i = -1;
            for (int j = 0; j < n; ++j) {
                if (ids[size_t(j)] == ids[size_t(a)]) continue;
                if (best_t < 0 || sim[size_t(a) * n + j] > sim[size_t(a) * n + best_t]) best_t = j;
                if (best_i < 0 || sim[size_t(j) * n + a] > sim[size_t(best_i) * n + a]) best_i = j;
            }
            CHECK(got.text_for_image[size_t(a)] == best_t);
            CHECK(got.image_for_text[size_t(a)] == best_i);
        }
    }
}

TEST_CASE("hard negative ties resolve to the lowest index") {
    const std::vector<float> sim = {0.0f, 0.5f, 0.5f, 0.5f, 0.0f, 0.5f, 0.5f, 0.5f, 0.0f};
    const HardNegatives got = select_hard_negatives(sim, 3, {0, 1, 2});
    CHECK(got.text_for_image == std::vector<int>{1, 0, 0});
    CHECK(got.image_for_text == std::vector<int>{1, 0, 0});
    CHECK_THROWS_AS(select_hard_negatives(sim, 3, {0, 0, 0}), ValidationError);
}

TEST_CASE("group_count reproduces the reference table at M=72") {
    CHECK(group_count(72, 36, 36) == 2);
    CHECK(group_count(72, 36, 18) == 3);
    CHECK(group_count(72, 24, 24) == 3);
    CHECK(group_count(72, 48, 24) == 2);
    CHECK(group_count(72, 72, 72) == 1);
    CHECK(group_count(24, 12, 12) == 2);
    CHECK(group_count(24, 8, 8) == 3);
    CHECK(group_count(24, 24, 24) == 1);
    CHECK_THROWS_AS(group_count(24, 25, 12), ConfigError);
    CHECK_THROWS_AS(group_count(24, 12, 0), ConfigError);
}

TEST_CASE("group_features pools windows over token rows, excluding row 0") {
    std::vector<float> data;
    for (int i = 0; i < 6; ++i) {
        data.push_back(float(i));
        data.push_back(float(10 * i));
    }
    const Tensor tokens = Tensor::from_data(6, 2, std::move(data));

    SUBCASE("p=2 r=2 gives three windows plus g_0") {
        const auto groups = group_features(tokens, 2, 2);
        REQUIRE(groups.size() == 4);
        CHECK(groups[0].at(0, 0) == 0.0f);  // g_0 = row 0
        CHECK(groups[1].at(0, 0) == doctest::Approx(1.5));   // rows 1,2
        CHECK(groups[2].at(0, 0) == doctest::Approx(3.5));   // rows 3,4
        CHECK(groups[3].at(0, 0) == doctest::Approx(5.0));   // row 5, clamped
        CHECK(groups[2].at(0, 1) == doctest::Approx(35.0));
    }
    SUBCASE("p=M covers every token row in one group") {
        const auto groups = group_features(tokens, 6, 6);
        REQUIRE(groups.size() == 2);
        CHECK(groups[1].at(0, 0) == doctest::Approx((1 + 2 + 3 + 4 + 5) / 5.0));
    }
}

TEST_CASE("atp_loss matches the scalar oracle and its uniform closed form") {
    const Vocabulary v = test_vocab();
    const PosLexicon lex = test_lexicon();
    const ModelConfig cfg = tiny_config(v.size());
    Model model(cfg, 99);
    std::mt19937 rng(31);
    const PairBatch batch = make_test_batch(4, v, lex, cfg, rng, 1.0f);
    const BatchEncodings enc = encode_batch(model, batch);
    const auto negs = select_hard_negatives(enc.sim.data(), enc.sim.rows(), enc.identities);

    SUBCASE("random model vs oracle") {
        const float got = atp_loss(model, batch, enc, negs, 4, 4, kKlEps).item();
        const double want = atp_oracle(model, batch, enc, negs, 4, 4, kKlEps);
        CHECK(std::abs(got - want) < 1e-6);
        CHECK(got > 0.0f);
    }
    SUBCASE("uniform match head gives 3 log 2") {
        ParamRegistry mutable_params = model.params();
        for (const char* name : {"heads.match.weight", "heads.match.bias"}) {
            const Parameter* p = mutable_params.find(name);
            REQUIRE(p != nullptr);
            Parameter q = *p;
            std::fill(q.tensor.data().begin(), q.tensor.data().end(), 0.0f);
        }
        const float got = atp_loss(model, batch, enc, negs, 4, 4, kKlEps).item();
        CHECK(got == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-4));
    }
}

TEST_CASE("ara_loss matches the scalar oracle and its closed forms") {
    const Vocabulary v = test_vocab();
    const PosLexicon lex = test_lexicon();
    const ModelConfig cfg = tiny_config(v.size());
    Model model(cfg, 7);
    std::mt19937 rng(41);

    SUBCASE("random model vs oracle") {
        const PairBatch batch = make_test_batch(4, v, lex, cfg, rng, 1.0f);
        const BatchEncodings enc = encode_batch(model, batch);
        const AraResult got = ara_loss(model, batch, enc, kKlEps);
        CHECK(got.pairs_with_masks == 4);
        const double want = ara_oracle(model, batch, enc, kKlEps);
        CHECK(std::abs(got.loss.item() - want) < 1e-6);
    }
    SUBCASE("no masks means a constant zero") {
        const PairBatch batch = make_test_batch(4, v, lex, cfg, rng, 0.0f);
        const BatchEncodings enc = encode_batch(model, batch);
        const AraResult got = ara_loss(model, batch, enc, kKlEps);
        CHECK(got.pairs_with_masks == 0);
        CHECK(got.loss.item() == 0.0f);
    }
    SUBCASE("uniform prediction head gives log Voc") {
        ParamRegistry mutable_params = model.params();
        for (const char* name : {"heads.mam.weight", "heads.mam.bias"}) {
            const Parameter* p = mutable_params.find(name);
            REQUIRE(p != nullptr);
            Parameter q = *p;
            std::fill(q.tensor.data().begin(), q.tensor.data().end(), 0.0f);
        }
        const PairBatch batch = make_test_batch(2, v, lex, cfg, rng, 1.0f);
        const BatchEncodings enc = encode_batch(model, batch);
        const AraResult got = ara_loss(model, batch, enc, kKlEps);
        CHECK(got.loss.item() ==
              doctest::Approx(std::log(double(v.size()))).epsilon(1e-4));
    }
}

TEST_CASE("total_loss composes the weighted terms") {
    const Vocabulary v = test_vocab();
    const PosLexicon lex = test_lexicon();
    const ModelConfig cfg = tiny_config(v.size());
    Model model(cfg, 3);
    std::mt19937 rng(51);
    const PairBatch batch = make_test_batch(4, v, lex, cfg, rng, 1.0f);

    LossConfig lc;
    lc.tau = 0.5f;
    lc.lambda_ndf = 0.1f;
    lc.group_size = 4;
    lc.group_stride = 4;
    const LossBreakdown full = total_loss(model, batch, lc);
    CHECK(full.total.item() ==
          doctest::Approx(lc.lambda_ndf * full.ndf + full.atp + full.ara).epsilon(1e-5));
    CHECK(full.ndf > 0.0f);
    CHECK(full.atp > 0.0f);
    CHECK(full.ara > 0.0f);

    LossConfig no_ara = lc;
    no_ara.use_ara = false;
    const LossBreakdown ablated = total_loss(model, batch, no_ara);
    CHECK(ablated.ara == 0.0f);
    CHECK(ablated.total.item() ==
          doctest::Approx(lc.lambda_ndf * ablated.ndf + ablated.atp).epsilon(1e-5));

    LossConfig ndf_only = lc;
    ndf_only.use_atp = false;
    ndf_only.use_ara = false;
    const LossBreakdown ndf = total_loss(model, batch, ndf_only);
    CHECK(ndf.total.item() == doctest::Approx(lc.lambda_ndf * ndf.ndf).epsilon(1e-5));
}

TEST_CASE("cosine similarities from encode_batch are bounded") {
    const Vocabulary v = test_vocab();
    const PosLexicon lex = test_lexicon();
    const ModelConfig cfg = tiny_config(v.size());
    Model model(cfg, 13);
    std::mt19937 rng(61);
    const PairBatch batch = make_test_batch(4, v, lex, cfg, rng, 1.0f);
    const BatchEncodings enc = encode_batch(model, batch);
    REQUIRE(enc.sim.rows() == 4);
    REQUIRE(enc.sim.cols() == 4);
    for (float x : enc.sim.data()) CHECK(std::abs(x) <= 1.0f + 1e-5f);
}

TEST_CASE("total_loss gradients pass the finite-difference check") {
    const Vocabulary v = test_vocab();
    const PosLexicon lex = test_lexicon();
    const ModelConfig cfg = tiny_config(v.size());
    Model model(cfg, 17);
    std::mt19937 rng(71);
    const PairBatch batch = make_test_batch(2, v, lex, cfg, rng, 1.0f);

    LossConfig lc;
    lc.tau = 0.5f;
    lc.group_size = 4;
    lc.group_stride = 4;
    ParamRegistry params = model.params();
    auto loss = [&]() { return total_loss(model, batch, lc).total; };
    const auto report = finite_diff_check(loss, params, 2e-3f, 4);
    INFO("worst ", report.worst_param, " rel err ", report.max_rel_err);
    CHECK(report.max_rel_err < 1e-3f);
}
