#include "cada/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

namespace cada {

namespace {

std::vector<float> unit(const std::vector<float>& v) {
    double s = 0.0;
    for (float x : v) s += double(x) * x;
    const float inv = float(1.0 / std::max(std::sqrt(s), 1e-12));
    std::vector<float> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] * inv;
    return out;
}

void sort_by_score(std::vector<int>& order, const std::vector<float>& score) {
    std::sort(order.begin(), order.end(), [&score](int a, int b) {
        if (score[size_t(a)] != score[size_t(b)]) return score[size_t(a)] > score[size_t(b)];
        return a < b;
    });
}

}  // namespace

GalleryIndex build_gallery(const Model& model, const Dataset& dataset,
                           const std::vector<DatasetRecord>& records) {
    if (records.empty()) throw ValidationError("gallery: no records");
    GalleryIndex index;
    std::unordered_map<std::string, bool> seen;
    for (const auto& rec : records) {
        if (seen.count(rec.image_path)) continue;
        seen[rec.image_path] = true;
        const auto image = dataset.load_image(rec);
        EncodedImage enc = model.encode_image(image);
        const Tensor v_cls = slice_rows(enc.tokens, 0, 1);
        const Tensor v_tilde = model.project_global(v_cls, v_cls).first;
        index.image_keys.push_back(rec.image_path);
        index.identities.push_back(rec.identity_id);
        index.v_unit.push_back(unit(v_tilde.data()));
        index.token_cache.push_back({enc.tokens.detach()});
    }
    return index;
}

QuerySet make_query_set(const Dataset& dataset, const std::vector<DatasetRecord>& records,
                        int max_len) {
    QuerySet qs;
    for (const auto& rec : records) {
        qs.cls_tokens.push_back(tokenize(rec.caption, dataset.vocab, max_len, LeadingToken::Cls));
        qs.enc_tokens.push_back(tokenize(rec.caption, dataset.vocab, max_len, LeadingToken::Enc));
        qs.identities.push_back(rec.identity_id);
    }
    return qs;
}

RankingResult global_rank(const Model& model, const QuerySet& queries,
                          const GalleryIndex& gallery) {
    if (gallery.v_unit.empty()) throw ValidationError("global_rank: empty gallery");
    const int g = int(gallery.v_unit.size());
    RankingResult result;
    for (size_t qi = 0; qi < queries.cls_tokens.size(); ++qi) {
        const EncodedText enc = model.encode_text(queries.cls_tokens[qi]);
        const Tensor t_cls = slice_rows(enc.tokens, 0, 1);
        const std::vector<float> t_unit = unit(model.project_global(t_cls, t_cls).second.data());

        QueryRanking qr;
        qr.s_g.resize(size_t(g));
        qr.s_l.assign(size_t(g), 0.0f);
        qr.relevant.resize(size_t(g));
        qr.order.resize(size_t(g));
        for (int i = 0; i < g; ++i) {
            double dot = 0.0;
            for (size_t d = 0; d < t_unit.size(); ++d)
                dot += double(t_unit[d]) * gallery.v_unit[size_t(i)][d];
            qr.s_g[size_t(i)] = float(dot);
            qr.relevant[size_t(i)] =
                gallery.identities[size_t(i)] == queries.identities[qi] ? 1 : 0;
            qr.order[size_t(i)] = i;
        }
        qr.final_score = qr.s_g;
        sort_by_score(qr.order, qr.final_score);
        result.queries.push_back(std::move(qr));
    }
    return result;
}

void local_rerank(RankingResult& result, const Model& model, const QuerySet& queries,
                  const GalleryIndex& gallery, int eta) {
    if (eta < 0 || eta > int(gallery.v_unit.size()))
        throw ValidationError("local_rerank: eta " + std::to_string(eta) +
                              " outside [0, gallery size]");
    for (size_t qi = 0; qi < result.queries.size(); ++qi) {
        QueryRanking& qr = result.queries[qi];
        for (int rank = 0; rank < eta; ++rank) {
            const int gi = qr.order[size_t(rank)];
            const DecoderOutput out =
                model.decode(queries.enc_tokens[qi], gallery.token_cache[size_t(gi)]);
            const Tensor g0 = slice_rows(out.tokens, 0, 1);
            const Tensor probs = softmax_rows(model.match_logits(g0));
            qr.s_l[size_t(gi)] = probs.at(0, 0);
            qr.final_score[size_t(gi)] = qr.s_g[size_t(gi)] + qr.s_l[size_t(gi)];
            ++result.decoder_calls;
        }
        sort_by_score(qr.order, qr.final_score);
    }
}

namespace {
void require_relevant(const RankingResult& result) {
    for (size_t qi = 0; qi < result.queries.size(); ++qi) {
        const auto& r = result.queries[qi].relevant;
        if (std::find(r.begin(), r.end(), char(1)) == r.end())
            throw ValidationError("metrics: query " + std::to_string(qi) +
                                  " has no relevant gallery item");
    }
}
}  // namespace

double rank_k(const RankingResult& result, int k) {
    if (result.queries.empty()) throw ValidationError("rank_k: no queries");
    require_relevant(result);
    int hits = 0;
    for (const auto& qr : result.queries) {
        const int limit = std::min<int>(k, int(qr.order.size()));
        for (int i = 0; i < limit; ++i)
            if (qr.relevant[size_t(qr.order[size_t(i)])]) {
                ++hits;
                break;
            }
    }
    return double(hits) / double(result.queries.size());
}

double mean_ap(const RankingResult& result) {
    if (result.queries.empty()) throw ValidationError("mean_ap: no queries");
    require_relevant(result);
    double total = 0.0;
    for (const auto& qr : result.queries) {
        int seen = 0;
        double ap = 0.0;
        for (size_t pos = 0; pos < qr.order.size(); ++pos) {
            if (qr.relevant[size_t(qr.order[pos])]) {
                ++seen;
                ap += double(seen) / double(pos + 1);
            }
        }
        total += ap / double(seen);
    }
    return total / double(result.queries.size());
}

void write_eval_report(const std::string& path, const RankingResult& result,
                       const EvalSummary& summary) {
    std::ofstream os(path);
    if (!os) throw ValidationError("eval: cannot write report '" + path + "'");
    os << "query,rank,gallery_index,image,s_g,s_l,final,relevant\n";
    // image key column is filled by callers that have the gallery; keep index
    for (size_t qi = 0; qi < result.queries.size(); ++qi) {
        const auto& qr = result.queries[qi];
        const size_t top = std::min<size_t>(10, qr.order.size());
        for (size_t r = 0; r < top; ++r) {
            const int gi = qr.order[r];
            os << qi << "," << (r + 1) << "," << gi << ",," << qr.s_g[size_t(gi)] << ","
               << qr.s_l[size_t(gi)] << "," << qr.final_score[size_t(gi)] << ","
               << int(qr.relevant[size_t(gi)]) << "\n";
        }
    }
    os << "summary,rank1," << summary.rank1 << "\n";
    os << "summary,rank5," << summary.rank5 << "\n";
    os << "summary,rank10," << summary.rank10 << "\n";
    os << "summary,map," << summary.map << "\n";
    os << "summary,decoder_calls," << summary.decoder_calls << "\n";
    // wall time goes to timing.txt so reports stay byte-identical across runs
    std::ofstream timing(path + ".timing.txt");
    timing << "wall_seconds=" << summary.wall_seconds << "\n";
}

}  // namespace cada
