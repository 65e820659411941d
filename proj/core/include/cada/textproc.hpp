#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cada/errors.hpp"

namespace cada {

enum class PosTag { Adj, Noun, Other };

// Closed vocabulary over the synthetic generator's word list. Five reserved
// ids come first; real words follow in file order.
class Vocabulary {
  public:
    static constexpr int kPad = 0;
    static constexpr int kCls = 1;   // [CLS]_t, text-encoder leading token
    static constexpr int kEnc = 2;   // [ENC], decoder leading token
    static constexpr int kMask = 3;
    static constexpr int kUnk = 4;
    static constexpr int kNumSpecials = 5;

    explicit Vocabulary(const std::vector<std::string>& words);
    static Vocabulary from_file(const std::string& path);
    void save(const std::string& path) const;

    int size() const { return int(id_to_word_.size()); }
    int id_of(const std::string& word) const;  // kUnk when absent
    const std::string& word_of(int id) const;
    bool is_special(int id) const { return id < kNumSpecials; }

  private:
    std::unordered_map<std::string, int> word_to_id_;
    std::vector<std::string> id_to_word_;
};

struct AttributeSpan {
    int start = 0;  // token index, inclusive
    int end = 0;    // exclusive
};

struct TokenSequence {
    std::vector<int> ids;        // length max_len
    int length = 0;              // real tokens incl. the leading special
    std::vector<bool> pad_mask;  // true at padded positions
    std::vector<AttributeSpan> attribute_spans;
};

enum class LeadingToken { Cls, Enc };

// word -> tag map from a two-column (word<TAB>TAG) file; replaces a learned
// POS tagger for the closed generator lexicon.
class PosLexicon {
  public:
    PosLexicon() = default;
    static PosLexicon from_file(const std::string& path);
    void save(const std::string& path) const;
    void set(const std::string& word, PosTag tag) { tags_[word] = tag; }
    PosTag tag_of(const std::string& word) const;  // Other when absent

  private:
    std::unordered_map<std::string, PosTag> tags_;
};

struct MaskedText {
    std::vector<int> ids;
    std::vector<int> mask_positions;
    std::vector<int> labels;  // original ids at mask_positions
};

std::vector<std::string> split_words(const std::string& text);

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, int max_len,
                       LeadingToken leading);
std::string detokenize(const TokenSequence& tokens, const Vocabulary& vocab);

// Maximal [ADJ]+[NOUN] runs, resolved greedily left to right.
std::vector<AttributeSpan> extract_attributes(const TokenSequence& tokens,
                                              const Vocabulary& vocab,
                                              const PosLexicon& lexicon);

// Whole-phrase masking: each span is independently selected with probability
// alpha and all of its tokens replaced by [MASK].
MaskedText mask_attributes(const TokenSequence& tokens, const std::vector<AttributeSpan>& spans,
                           float alpha, std::mt19937& rng);

}  // namespace cada
