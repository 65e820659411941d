// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Thresholds and tolerances are fixed; training settings for the
// end-to-end criteria were established by smoke training before being frozen
// here.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cada/config.hpp"
#include "cada/data.hpp"
#include "cada/errors.hpp"
#include "cada/gradcheck.hpp"
#include "cada/losses.hpp"
#include "cada/model.hpp"
#include "cada/retrieval.hpp"
#include "cada/trainer.hpp"

namespace fs = std::filesystem;
using namespace cada;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    std::cout << "criterion " << id << " (" << name << "): " << (pass ? "PASS" : "FAIL");
    if (!detail.empty()) std::cout << " [" << detail << "]";
    std::cout << std::endl;
    if (!pass) ++g_failures;
}

template <typename Fn>
void criterion(int id, const std::string& name, Fn&& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        report(id, name, false, std::string("exception: ") + e.what());
    }
}

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------- fixtures

Vocabulary small_vocab() {
    return Vocabulary({"a", "and", "black", "blue", "hair", "jacket", "long", "person",
                       "shoes", "short", "straight", "walks", "wears", "with"});
}

PosLexicon small_lexicon() {
    PosLexicon lex;
    for (const char* w : {"black", "blue", "long", "short", "straight"}) lex.set(w, PosTag::Adj);
    for (const char* w : {"hair", "jacket", "person", "shoes"}) lex.set(w, PosTag::Noun);
    return lex;
}

ModelConfig small_model_config(int vocab_size) {
    ModelConfig c;
    c.image_h = 16;
    c.image_w = 16;
    c.image_c = 3;
    c.patch = 8;
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
                       const PosLexicon& lex, const ModelConfig& cfg, std::mt19937& rng) {
    PairSample s;
    s.identity = identity;
    s.image.resize(size_t(cfg.image_h) * cfg.image_w * cfg.image_c);
    std::uniform_real_distribution<float> uni(0.0f, 1.0f);
    for (auto& x : s.image) x = uni(rng);
    s.text_cls = tokenize(caption, v, cfg.max_len, LeadingToken::Cls);
    s.text_enc = tokenize(caption, v, cfg.max_len, LeadingToken::Enc);
    s.masked = mask_attributes(s.text_enc, extract_attributes(s.text_enc, v, lex), 1.0f, rng);
    return s;
}

PairBatch make_small_batch(int n, const Vocabulary& v, const PosLexicon& lex,
                           const ModelConfig& cfg, std::mt19937& rng) {
    const std::vector<std::string> captions = {
        "a person wears a black jacket and long hair",
        "a person with blue shoes walks",
        "short straight hair and a blue jacket",
        "black shoes with a long jacket",
    };
    PairBatch batch;
    for (int i = 0; i < n; ++i)
        batch.samples.push_back(
            make_sample(i % 2, captions[size_t(i) % captions.size()], v, lex, cfg, rng));
    return batch;
}

// ------------------------------------------------- independent loss oracles

double ndf_oracle(const std::vector<float>& sim, int n, const std::vector<int>& ids,
                  double tau, double eps) {
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
            model.decode(batch.samples[size_t(a)].text_enc, enc.images[size_t(a)]).tokens, p,
            r);
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
            for (int j = 0; j < logits.cols(); ++j)
                z += std::exp(double(logits.at(0, j)) - mx);
            const double prob = std::exp(double(logits.at(0, label)) - mx) / z;
            pair_acc += std::log((1.0 + eps) / (prob + eps));
        }
        acc += pair_acc / n_m;
        ++pairs;
    }
    return pairs == 0 ? 0.0 : acc / pairs;
}

// -------------------------------------------- definitional metric oracles

int item_rank(const std::vector<float>& scores, size_t i) {
    int better = 0;
    for (size_t j = 0; j < scores.size(); ++j) {
        if (j == i) continue;
        if (scores[j] > scores[i] || (scores[j] == scores[i] && j < i)) ++better;
    }
    return better + 1;
}

QueryRanking ranking_from_scores(const std::vector<float>& scores,
                                 const std::vector<char>& relevant) {
    QueryRanking qr;
    qr.s_g = scores;
    qr.s_l.assign(scores.size(), 0.0f);
    qr.final_score = scores;
    qr.relevant = relevant;
    qr.order.resize(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) qr.order[i] = int(i);
    std::sort(qr.order.begin(), qr.order.end(), [&scores](int a, int b) {
        if (scores[size_t(a)] != scores[size_t(b)])
            return scores[size_t(a)] > scores[size_t(b)];
        return a < b;
    });
    return qr;
}

double oracle_rank_k(const std::vector<std::vector<float>>& scores,
                     const std::vector<std::vector<char>>& relevant, int k) {
    int hits = 0;
    for (size_t q = 0; q < scores.size(); ++q) {
        bool hit = false;
        for (size_t i = 0; i < scores[q].size(); ++i)
            if (relevant[q][i] && item_rank(scores[q], i) <= k) hit = true;
        hits += hit ? 1 : 0;
    }
    return double(hits) / double(scores.size());
}

double oracle_map(const std::vector<std::vector<float>>& scores,
                  const std::vector<std::vector<char>>& relevant) {
    double total = 0.0;
    for (size_t q = 0; q < scores.size(); ++q) {
        double ap = 0.0;
        int n_rel = 0;
        for (size_t i = 0; i < scores[q].size(); ++i) {
            if (!relevant[q][i]) continue;
            ++n_rel;
            const int r = item_rank(scores[q], i);
            int rel_at_or_before = 0;
            for (size_t j = 0; j < scores[q].size(); ++j)
                if (relevant[q][j] && item_rank(scores[q], j) <= r) ++rel_at_or_before;
            ap += double(rel_at_or_before) / double(r);
        }
        total += ap / double(n_rel);
    }
    return total / double(scores.size());
}

// -------------------------------------------- end-to-end training fixture

// Settings frozen from smoke training: contrastive learning from scratch at
// desk scale needs a softer temperature and a full-weight contrastive term
// (tau=0.02 / lambda=0.1 saturate at random init and do not train).
RunConfig e2e_config(const Dataset& ds, uint64_t seed) {
    RunConfig cfg;
    cfg.model.image_h = ds.image_h;
    cfg.model.image_w = ds.image_w;
    cfg.model.image_c = ds.image_c;
    cfg.model.patch = 8;
    cfg.model.image_layers = 1;
    cfg.model.text_layers = 1;
    cfg.model.d_v = 48;
    cfg.model.d_t = 48;
    cfg.model.image_heads = 4;
    cfg.model.text_heads = 4;
    cfg.model.max_len = 20;
    cfg.model.d_latent = 32;
    cfg.model.vocab_size = ds.vocab.size();
    cfg.loss.tau = 0.2f;
    cfg.loss.lambda_ndf = 1.0f;
    cfg.loss.group_size = 10;
    cfg.loss.group_stride = 10;
    cfg.train.epochs = 40;
    cfg.train.batch_size = 32;
    cfg.train.lr = 1e-3f;
    cfg.train.seed = seed;
    cfg.validate();
    return cfg;
}

struct E2EResult {
    double global_rank1 = 0.0;
    double local_rank1 = 0.0;
    double mam_acc = 0.0;
};

E2EResult train_and_score(const Dataset& ds, const RunConfig& cfg, const fs::path& out_dir,
                          bool score_local_and_mam) {
    Model model(cfg.model, cfg.train.seed);
    train(model, ds, cfg, out_dir.string());

    const auto test_records = ds.split_records("test");
    const GalleryIndex gallery = build_gallery(model, ds, test_records);
    const QuerySet queries = make_query_set(ds, test_records, cfg.model.max_len);
    RankingResult global = global_rank(model, queries, gallery);

    E2EResult res;
    res.global_rank1 = rank_k(global, 1);
    if (!score_local_and_mam) return res;

    RankingResult local = global;
    const int eta = std::min(32, int(gallery.v_unit.size()));
    local_rerank(local, model, queries, gallery, eta);
    res.local_rank1 = rank_k(local, 1);

    // MAM top-1 accuracy on held-out captions, every attribute token masked.
    int64_t correct = 0, total = 0;
    for (const auto& rec : test_records) {
        std::mt19937 rng(0xACC);
        TokenSequence enc_seq = tokenize(rec.caption, ds.vocab, cfg.model.max_len,
                                         LeadingToken::Enc);
        const auto spans = extract_attributes(enc_seq, ds.vocab, ds.lexicon);
        const MaskedText masked = mask_attributes(enc_seq, spans, 1.0f, rng);
        TokenSequence masked_seq = enc_seq;
        masked_seq.ids = masked.ids;
        const EncodedImage img = model.encode_image(ds.load_image(rec));
        const Tensor h = model.decode(masked_seq, img).tokens;
        for (size_t m = 0; m < masked.mask_positions.size(); ++m) {
            const Tensor logits = model.mam_logits(
                slice_rows(h, masked.mask_positions[m], masked.mask_positions[m] + 1));
            int argmax = 0;
            for (int j = 1; j < logits.cols(); ++j)
                if (logits.at(0, j) > logits.at(0, argmax)) argmax = j;
            correct += argmax == masked.labels[m] ? 1 : 0;
            ++total;
        }
    }
    res.mam_acc = total == 0 ? 0.0 : double(correct) / double(total);
    return res;
}

}  // namespace

int main() {
    const fs::path work = fs::temp_directory_path() / "cada_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    // ---- criterion 1: finite-difference gradient checks ----
    criterion(1, "gradient correctness", [&] {
        const double t0 = now_seconds();
        const Vocabulary v = small_vocab();
        const PosLexicon lex = small_lexicon();
        const ModelConfig mc = small_model_config(v.size());
        Model model(mc, 17);
        std::mt19937 rng(71);
        const PairBatch batch = make_small_batch(2, v, lex, mc, rng);
        ParamRegistry params = model.params();

        float worst = 0.0f;
        std::string worst_mode;
        for (const std::string mode : {"ndf", "atp", "ara", "total"}) {
            LossConfig lc;
            lc.tau = 0.5f;
            lc.group_size = 4;
            lc.group_stride = 4;
            lc.use_ndf = mode == "ndf" || mode == "total";
            lc.use_atp = mode == "atp" || mode == "total";
            lc.use_ara = mode == "ara" || mode == "total";
            auto loss = [&]() { return total_loss(model, batch, lc).total; };
            const auto rep = finite_diff_check(loss, params, 2e-3f, 4);
            if (rep.max_rel_err > worst) {
                worst = rep.max_rel_err;
                worst_mode = mode + ":" + rep.worst_param;
            }
        }
        const double secs = now_seconds() - t0;
        std::ostringstream d;
        d << "max rel err " << worst << " (" << worst_mode << "), " << secs << " s";
        report(1, "gradient correctness", worst < 1e-3f && secs < 60.0, d.str());
    });

    // ---- criterion 2: grouping table ----
    criterion(2, "grouping table", [&] {
        const std::vector<std::array<int, 3>> table = {
            {36, 36, 2}, {36, 18, 3}, {24, 24, 3}, {48, 24, 2}, {72, 72, 1}};
        bool ok = true;
        std::ostringstream d;
        for (const auto& row : table) {
            const int got = group_count(72, row[0], row[1]);
            if (got != row[2]) {
                ok = false;
                d << "(" << row[0] << "," << row[1] << ")->" << got << " want " << row[2]
                  << "; ";
            }
        }
        report(2, "grouping table", ok, ok ? "all five (p,r) rows exact at M=72" : d.str());
    });

    // ---- criterion 3: parameter sharing ----
    criterion(3, "parameter sharing", [&] {
        const Vocabulary v = small_vocab();
        const PosLexicon lex = small_lexicon();
        const ModelConfig mc = small_model_config(v.size());
        Model model(mc, 23);
        const bool init_ok = model.verify_sharing().ok;

        std::mt19937 rng(5);
        const PairBatch batch = make_small_batch(4, v, lex, mc, rng);
        LossConfig lc;
        lc.tau = 0.5f;
        lc.group_size = 4;
        lc.group_stride = 4;
        AdamW opt(1e-3f, 0.01f);
        ParamRegistry params = model.params();
        for (int step = 0; step < 100; ++step) {
            params.zero_grad();
            total_loss(model, batch, lc).total.backward();
            opt.step(params);
        }
        const bool after_ok = model.verify_sharing().ok;

        Model broken(mc, 23);
        broken.unshare_decoder_layer_for_test(0);
        const bool control_fails = !broken.verify_sharing().ok;

        std::ostringstream d;
        d << "init " << (init_ok ? "ok" : "BROKEN") << ", after 100 steps "
          << (after_ok ? "ok" : "BROKEN") << ", unshared control "
          << (control_fails ? "detected" : "MISSED");
        report(3, "parameter sharing", init_ok && after_ok && control_fails, d.str());
    });

    // ---- dataset for protocol + end-to-end criteria ----
    GenConfig gen;
    gen.n_ids = 80;  // 64 train / 16 test identities
    gen.images_per_id = 4;
    gen.captions_per_image = 2;
    gen.seed = 11;
    const Dataset ds = load_dataset(generate_dataset(gen, (work / "data").string()));

    // ---- criterion 4: inference protocol ----
    criterion(4, "inference protocol", [&] {
        RunConfig cfg = e2e_config(ds, 99);
        Model model(cfg.model, 99);  // untrained; the protocol is weight-agnostic
        const GalleryIndex gallery = build_gallery(model, ds, ds.records);
        std::vector<DatasetRecord> query_records(ds.records.begin(), ds.records.begin() + 100);
        const QuerySet queries = make_query_set(ds, query_records, cfg.model.max_len);

        const RankingResult global = global_rank(model, queries, gallery);
        RankingResult eta0 = global;
        local_rerank(eta0, model, queries, gallery, 0);
        bool identical = eta0.decoder_calls == 0;
        for (size_t q = 0; q < global.queries.size(); ++q)
            identical = identical && eta0.queries[q].order == global.queries[q].order;

        RankingResult eta32 = global;
        local_rerank(eta32, model, queries, gallery, 32);
        const bool calls_ok = eta32.decoder_calls == int64_t(32) * 100;

        std::ostringstream d;
        d << "eta=0 permutation-identical over 100 queries: " << (identical ? "yes" : "NO")
          << "; eta=32 decoder calls " << eta32.decoder_calls << " (want 3200)";
        report(4, "inference protocol", identical && calls_ok, d.str());
    });

    // ---- criterion 5: metric oracles ----
    criterion(5, "metric oracles", [&] {
        std::mt19937 rng(2024);
        std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
        std::uniform_int_distribution<int> coin(0, 9);
        double worst = 0.0;
        for (int trial = 0; trial < 1000; ++trial) {
            const int nq = 20, ng = 50;
            std::vector<std::vector<float>> scores(nq, std::vector<float>(ng));
            std::vector<std::vector<char>> relevant(nq, std::vector<char>(ng, 0));
            RankingResult res;
            for (int q = 0; q < nq; ++q) {
                for (int i = 0; i < ng; ++i) {
                    scores[size_t(q)][size_t(i)] = uni(rng);
                    relevant[size_t(q)][size_t(i)] = coin(rng) == 0 ? 1 : 0;
                }
                scores[size_t(q)][7] = scores[size_t(q)][3];  // exercise tie-breaks
                relevant[size_t(q)][size_t(coin(rng))] = 1;
                res.queries.push_back(
                    ranking_from_scores(scores[size_t(q)], relevant[size_t(q)]));
            }
            for (int k : {1, 5, 10})
                worst = std::max(worst,
                                 std::abs(rank_k(res, k) - oracle_rank_k(scores, relevant, k)));
            worst = std::max(worst, std::abs(mean_ap(res) - oracle_map(scores, relevant)));
        }
        std::ostringstream d;
        d << "1000 random 20x50 matrices, worst |diff| " << worst;
        report(5, "metric oracles", worst < 1e-12, d.str());
    });

    // ---- criterion 6: loss oracles ----
    criterion(6, "loss oracles", [&] {
        const Vocabulary v = small_vocab();
        const PosLexicon lex = small_lexicon();
        const ModelConfig mc = small_model_config(v.size());
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            Model model(mc, uint64_t(100 + trial));
            std::mt19937 rng(uint64_t(500 + trial));
            const PairBatch batch = make_small_batch(4, v, lex, mc, rng);
            const BatchEncodings enc = encode_batch(model, batch);

            const float tau = 0.5f;
            const float got_ndf = ndf_loss(enc.sim, enc.identities, tau, kKlEps).item();
            const double want_ndf =
                ndf_oracle(enc.sim.data(), 4, enc.identities, tau, kKlEps);
            worst = std::max(worst, std::abs(double(got_ndf) - want_ndf));

            const HardNegatives negs = select_hard_negatives(enc.sim.data(), 4, enc.identities);
            const float got_atp = atp_loss(model, batch, enc, negs, 4, 4, kKlEps).item();
            const double want_atp = atp_oracle(model, batch, enc, negs, 4, 4, kKlEps);
            worst = std::max(worst, std::abs(double(got_atp) - want_atp));

            const AraResult got_ara = ara_loss(model, batch, enc, kKlEps);
            const double want_ara = ara_oracle(model, batch, enc, kKlEps);
            worst = std::max(worst, std::abs(double(got_ara.loss.item()) - want_ara));
        }
        std::ostringstream d;
        d << "10 random 4-pair batches, worst |diff| " << worst;
        report(6, "loss oracles", worst < 1e-6, d.str());
    });

    // ---- criteria 7-9: end-to-end training over 3 seeds ----
    const std::vector<uint64_t> seeds = {1, 2, 3};
    std::vector<E2EResult> full_runs;
    double e2e_minutes = 0.0;
    bool e2e_trained = false;
    criterion(7, "end-to-end learning", [&] {
        const double t0 = now_seconds();
        for (uint64_t seed : seeds) {
            const RunConfig cfg = e2e_config(ds, seed);
            full_runs.push_back(train_and_score(
                ds, cfg, work / ("full_seed" + std::to_string(seed)), true));
        }
        e2e_minutes = (now_seconds() - t0) / 60.0;
        e2e_trained = true;
        double g = 0.0, l = 0.0;
        for (const auto& r : full_runs) {
            g += r.global_rank1 / double(seeds.size());
            l += r.local_rank1 / double(seeds.size());
        }
        std::ostringstream d;
        d << "mean global rank1 " << g << " (>=0.80), mean local rank1 " << l
          << " (>= global-0.02), " << e2e_minutes << " min";
        report(7, "end-to-end learning", g >= 0.80 && l >= g - 0.02 && e2e_minutes <= 15.0,
               d.str());
    });

    criterion(8, "ablation trend", [&] {
        if (!e2e_trained) {
            report(8, "ablation trend", false, "skipped: end-to-end training failed");
            return;
        }
        auto mean_rank1 = [&](bool use_atp, bool use_ara, const char* tag) {
            double acc = 0.0;
            for (uint64_t seed : seeds) {
                RunConfig cfg = e2e_config(ds, seed);
                cfg.loss.use_atp = use_atp;
                cfg.loss.use_ara = use_ara;
                acc += train_and_score(ds, cfg,
                                       work / (std::string(tag) + std::to_string(seed)), false)
                           .global_rank1 /
                       double(seeds.size());
            }
            return acc;
        };
        double full = 0.0;
        for (const auto& r : full_runs) full += r.global_rank1 / double(seeds.size());
        const double no_ara = mean_rank1(true, false, "noara_seed");
        const double no_atp = mean_rank1(false, true, "noatp_seed");
        std::ostringstream d;
        d << "mean rank1: full " << full << ", no-ARA " << no_ara << ", no-ATP " << no_atp
          << " (full >= ablation - 0.01)";
        report(8, "ablation trend", full >= no_ara - 0.01 && full >= no_atp - 0.01, d.str());
    });

    criterion(9, "masked-attribute prediction", [&] {
        if (!e2e_trained) {
            report(9, "masked-attribute prediction", false,
                   "skipped: end-to-end training failed");
            return;
        }
        double acc = 0.0;
        for (const auto& r : full_runs) acc += r.mam_acc / double(seeds.size());
        std::ostringstream d;
        d << "mean held-out top-1 accuracy " << acc << " (>=0.70)";
        report(9, "masked-attribute prediction", acc >= 0.70, d.str());
    });

    // ---- criterion 10: determinism ----
    criterion(10, "determinism", [&] {
        GenConfig small_gen;
        small_gen.n_ids = 10;
        small_gen.images_per_id = 2;
        small_gen.seed = 3;
        const Dataset dsd =
            load_dataset(generate_dataset(small_gen, (work / "det_data").string()));
        RunConfig cfg = e2e_config(dsd, 7);
        cfg.train.epochs = 2;

        auto run = [&](const fs::path& dir) {
            Model model(cfg.model, cfg.train.seed);
            train(model, dsd, cfg, dir.string());
            const auto test_records = dsd.split_records("test");
            const GalleryIndex gallery = build_gallery(model, dsd, test_records);
            const QuerySet queries = make_query_set(dsd, test_records, cfg.model.max_len);
            RankingResult res = global_rank(model, queries, gallery);
            local_rerank(res, model, queries, gallery, int(gallery.v_unit.size()));
            EvalSummary s;
            s.rank1 = rank_k(res, 1);
            s.rank5 = rank_k(res, 5);
            s.rank10 = rank_k(res, 10);
            s.map = mean_ap(res);
            s.decoder_calls = res.decoder_calls;
            write_eval_report((dir / "eval_report.csv").string(), res, s);
        };
        run(work / "det_a");
        run(work / "det_b");
        const bool logs_equal =
            read_file(work / "det_a" / "train_log.csv") ==
            read_file(work / "det_b" / "train_log.csv");
        const bool reports_equal =
            read_file(work / "det_a" / "eval_report.csv") ==
            read_file(work / "det_b" / "eval_report.csv");
        std::ostringstream d;
        d << "loss logs byte-identical: " << (logs_equal ? "yes" : "NO")
          << "; eval reports byte-identical: " << (reports_equal ? "yes" : "NO");
        report(10, "determinism", logs_equal && reports_equal, d.str());
    });

    fs::remove_all(work);
    std::cout << (g_failures == 0 ? "ACCEPTANCE: all criteria passed"
                                  : "ACCEPTANCE: " + std::to_string(g_failures) +
                                        " criterion(s) failed")
              << std::endl;
    return g_failures == 0 ? 0 : 1;
}
