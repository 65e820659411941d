#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cada/losses.hpp"
#include "cada/model.hpp"
#include "cada/optim.hpp"
#include "cada/textproc.hpp"

using namespace cada;

namespace {

Vocabulary bench_vocab() {
    return Vocabulary({"a", "and", "black", "blue", "hair", "jacket", "long", "person",
                       "shoes", "short", "straight", "walks", "wears", "with"});
}

PosLexicon bench_lexicon() {
    PosLexicon lex;
    for (const char* w : {"black", "blue", "long", "short", "straight"}) lex.set(w, PosTag::Adj);
    for (const char* w : {"hair", "jacket", "person", "shoes"}) lex.set(w, PosTag::Noun);
    return lex;
}

ModelConfig bench_config(int vocab_size) {
    ModelConfig c;
    c.patch = 8;
    c.image_layers = 1;
    c.d_v = 48;
    c.image_heads = 4;
    c.text_layers = 1;
    c.d_t = 48;
    c.text_heads = 4;
    c.max_len = 20;
    c.vocab_size = vocab_size;
    c.d_latent = 32;
    return c;
}

std::vector<float> random_image(const ModelConfig& cfg, std::mt19937& rng) {
    std::vector<float> img(size_t(cfg.image_h) * cfg.image_w * cfg.image_c);
    std::uniform_real_distribution<float> uni(0.0f, 1.0f);
    for (auto& x : img) x = uni(rng);
    return img;
}

PairBatch bench_batch(int n, const Vocabulary& v, const PosLexicon& lex,
                      const ModelConfig& cfg, std::mt19937& rng) {
    const std::vector<std::string> captions = {
        "a person wears a black jacket and long hair",
        "a person with blue shoes walks",
        "short straight hair and a blue jacket",
        "black shoes with a long jacket",
    };
    PairBatch batch;
    for (int i = 0; i < n; ++i) {
        PairSample s;
        s.identity = i % 2;
        s.image = random_image(cfg, rng);
        const std::string& cap = captions[size_t(i) % captions.size()];
        s.text_cls = tokenize(cap, v, cfg.max_len, LeadingToken::Cls);
        s.text_enc = tokenize(cap, v, cfg.max_len, LeadingToken::Enc);
        s.masked = mask_attributes(s.text_enc, extract_attributes(s.text_enc, v, lex), 1.0f, rng);
        batch.samples.push_back(std::move(s));
    }
    return batch;
}

void bm_matmul(benchmark::State& state) {
    const int n = int(state.range(0));
    std::mt19937 rng(1);
    std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
    std::vector<float> a(size_t(n) * n), b(size_t(n) * n);
    for (auto& x : a) x = uni(rng);
    for (auto& x : b) x = uni(rng);
    const Tensor ta = Tensor::from_data(n, n, std::move(a));
    const Tensor tb = Tensor::from_data(n, n, std::move(b));
    for (auto _ : state) benchmark::DoNotOptimize(matmul(ta, tb).data());
    state.SetItemsProcessed(state.iterations() * int64_t(n) * n * n);
}

void bm_encode_image(benchmark::State& state) {
    const Vocabulary v = bench_vocab();
    const Model model(bench_config(v.size()), 7);
    std::mt19937 rng(2);
    const auto img = random_image(model.config(), rng);
    for (auto _ : state) benchmark::DoNotOptimize(model.encode_image(img).tokens.data());
}

void bm_encode_text(benchmark::State& state) {
    const Vocabulary v = bench_vocab();
    const Model model(bench_config(v.size()), 7);
    const TokenSequence seq = tokenize("a person wears a black jacket and long hair", v,
                                       model.config().max_len, LeadingToken::Cls);
    for (auto _ : state) benchmark::DoNotOptimize(model.encode_text(seq).tokens.data());
}

void bm_decode(benchmark::State& state) {
    const Vocabulary v = bench_vocab();
    const Model model(bench_config(v.size()), 7);
    std::mt19937 rng(3);
    const EncodedImage img = model.encode_image(random_image(model.config(), rng));
    const TokenSequence seq = tokenize("a person wears a black jacket and long hair", v,
                                       model.config().max_len, LeadingToken::Enc);
    for (auto _ : state) benchmark::DoNotOptimize(model.decode(seq, img).tokens.data());
}

void bm_train_step(benchmark::State& state) {
    const Vocabulary v = bench_vocab();
    const PosLexicon lex = bench_lexicon();
    Model model(bench_config(v.size()), 7);
    std::mt19937 rng(4);
    const PairBatch batch = bench_batch(int(state.range(0)), v, lex, model.config(), rng);
    LossConfig lc;
    lc.tau = 0.2f;
    lc.group_size = 10;
    lc.group_stride = 10;
    AdamW opt(1e-3f, 0.05f);
    ParamRegistry params = model.params();
    for (auto _ : state) {
        params.zero_grad();
        total_loss(model, batch, lc).total.backward();
        opt.step(params);
    }
}

}  // namespace

BENCHMARK(bm_matmul)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bm_encode_image);
BENCHMARK(bm_encode_text);
BENCHMARK(bm_decode);
BENCHMARK(bm_train_step)->Arg(2)->Arg(4);

BENCHMARK_MAIN();
