#pragma once

#include <string>
#include <vector>

#include "cada/data.hpp"
#include "cada/model.hpp"

namespace cada {

struct GalleryIndex {
    std::vector<std::string> image_keys;
    std::vector<int> identities;
    std::vector<std::vector<float>> v_unit;   // unit-norm global vectors
    std::vector<EncodedImage> token_cache;    // detached, for reranking
};

// Encodes every distinct gallery image once.
GalleryIndex build_gallery(const Model& model, const Dataset& dataset,
                           const std::vector<DatasetRecord>& records);

struct QueryRanking {
    std::vector<int> order;           // gallery indices, best first
    std::vector<float> s_g;           // per gallery index
    std::vector<float> s_l;           // per gallery index; 0 unless reranked
    std::vector<float> final_score;   // per gallery index
    std::vector<char> relevant;       // per gallery index
};

struct RankingResult {
    std::vector<QueryRanking> queries;
    int64_t decoder_calls = 0;
};

struct QuerySet {
    std::vector<TokenSequence> cls_tokens;  // for the global stage
    std::vector<TokenSequence> enc_tokens;  // for decoder reranking
    std::vector<int> identities;
};

QuerySet make_query_set(const Dataset& dataset, const std::vector<DatasetRecord>& records,
                        int max_len);

// Stage 1: S_G = cosine(t~, v~) against the whole gallery, full sort
// (descending score, ties by gallery index).
RankingResult global_rank(const Model& model, const QuerySet& queries,
                          const GalleryIndex& gallery);

// Stage 2: decodes each query against its top-eta global candidates, adds
// S_L = match probability of g_0, re-sorts. Exactly eta decoder calls per
// query; candidates outside the top eta keep S_G as their final score.
void local_rerank(RankingResult& result, const Model& model, const QuerySet& queries,
                  const GalleryIndex& gallery, int eta);

double rank_k(const RankingResult& result, int k);
double mean_ap(const RankingResult& result);

struct EvalSummary {
    double rank1 = 0.0, rank5 = 0.0, rank10 = 0.0, map = 0.0;
    int64_t decoder_calls = 0;
    double wall_seconds = 0.0;
};

// Per-query top-10 rows plus a summary block.
void write_eval_report(const std::string& path, const RankingResult& result,
                       const EvalSummary& summary);

}  // namespace cada
