#include "cada/textproc.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace cada {

namespace {
const std::vector<std::string> kSpecialNames = {"[PAD]", "[CLS]", "[ENC]", "[MASK]", "[UNK]"};
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
    id_to_word_ = kSpecialNames;
    for (const auto& w : words) {
        if (w.empty()) throw ValidationError("vocabulary: empty word");
        if (word_to_id_.count(w)) throw ValidationError("vocabulary: duplicate word '" + w + "'");
        word_to_id_[w] = int(id_to_word_.size());
        id_to_word_.push_back(w);
    }
}

Vocabulary Vocabulary::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("vocabulary: cannot open '" + path + "'");
    std::vector<std::string> words;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) words.push_back(line);
    return Vocabulary(words);
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw ValidationError("vocabulary: cannot write '" + path + "'");
    for (size_t i = kNumSpecials; i < id_to_word_.size(); ++i) os << id_to_word_[i] << "\n";
}

int Vocabulary::id_of(const std::string& word) const {
    auto it = word_to_id_.find(word);
    return it == word_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word_of(int id) const {
    if (id < 0 || id >= size())
        throw ValidationError("vocabulary: id " + std::to_string(id) + " out of range");
    return id_to_word_[size_t(id)];
}

PosLexicon PosLexicon::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("lexicon: cannot open '" + path + "'");
    PosLexicon lex;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ValidationError("lexicon: malformed line '" + line + "'");
        const std::string word = line.substr(0, tab);
        const std::string tag = line.substr(tab + 1);
        if (tag == "ADJ")
            lex.set(word, PosTag::Adj);
        else if (tag == "NOUN")
            lex.set(word, PosTag::Noun);
        else if (tag == "OTHER")
            lex.set(word, PosTag::Other);
        else
            throw ValidationError("lexicon: unknown tag '" + tag + "'");
    }
    return lex;
}

void PosLexicon::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw ValidationError("lexicon: cannot write '" + path + "'");
    std::vector<std::pair<std::string, PosTag>> entries(tags_.begin(), tags_.end());
    std::sort(entries.begin(), entries.end());
    for (const auto& [word, tag] : entries) {
        const char* name = tag == PosTag::Adj ? "ADJ" : tag == PosTag::Noun ? "NOUN" : "OTHER";
        os << word << "\t" << name << "\n";
    }
}

PosTag PosLexicon::tag_of(const std::string& word) const {
    auto it = tags_.find(word);
    return it == tags_.end() ? PosTag::Other : it->second;
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) {
            cur.push_back(char(std::tolower(u)));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, int max_len,
                       LeadingToken leading) {
    auto words = split_words(text);
    if (words.empty()) throw ValidationError("tokenize: empty text");
    if (int(words.size()) > max_len - 1) words.resize(size_t(max_len - 1));

    TokenSequence seq;
    seq.ids.assign(size_t(max_len), Vocabulary::kPad);
    seq.ids[0] = leading == LeadingToken::Cls ? Vocabulary::kCls : Vocabulary::kEnc;
    for (size_t i = 0; i < words.size(); ++i) seq.ids[i + 1] = vocab.id_of(words[i]);
    seq.length = int(words.size()) + 1;
    seq.pad_mask.assign(size_t(max_len), false);
    for (int i = seq.length; i < max_len; ++i) seq.pad_mask[size_t(i)] = true;
    return seq;
}

std::string detokenize(const TokenSequence& tokens, const Vocabulary& vocab) {
    std::string out;
    for (int i = 1; i < tokens.length; ++i) {
        if (!out.empty()) out.push_back(' ');
        out += vocab.word_of(tokens.ids[size_t(i)]);
    }
    return out;
}

std::vector<AttributeSpan> extract_attributes(const TokenSequence& tokens,
                                              const Vocabulary& vocab,
                                              const PosLexicon& lexicon) {
    std::vector<AttributeSpan> spans;
    int i = 1;  // skip leading special token
    while (i < tokens.length) {
        const int id = tokens.ids[size_t(i)];
        if (!vocab.is_special(id) && lexicon.tag_of(vocab.word_of(id)) == PosTag::Adj) {
            int j = i + 1;
            while (j < tokens.length) {
                const int jid = tokens.ids[size_t(j)];
                if (vocab.is_special(jid)) break;
                const PosTag t = lexicon.tag_of(vocab.word_of(jid));
                if (t == PosTag::Adj) {
                    ++j;
                } else if (t == PosTag::Noun) {
                    spans.push_back({i, j + 1});
                    ++j;
                    break;
                } else {
                    break;
                }
            }
            i = std::max(j, i + 1);
        } else {
            ++i;
        }
    }
    return spans;
}

MaskedText mask_attributes(const TokenSequence& tokens, const std::vector<AttributeSpan>& spans,
                           float alpha, std::mt19937& rng) {
    if (alpha < 0.0f || alpha > 1.0f)
        throw ValidationError("mask_attributes: alpha must lie in [0, 1]");
    MaskedText out;
    out.ids = tokens.ids;
    std::uniform_real_distribution<float> uni(0.0f, 1.0f);
    for (const auto& span : spans) {
        if (span.start < 1 || span.end > tokens.length || span.start >= span.end)
            throw ValidationError("mask_attributes: span outside token range");
        const bool selected = alpha >= 1.0f || (alpha > 0.0f && uni(rng) < alpha);
        if (!selected) continue;
        for (int pos = span.start; pos < span.end; ++pos) {
            out.mask_positions.push_back(pos);
            out.labels.push_back(tokens.ids[size_t(pos)]);
            out.ids[size_t(pos)] = Vocabulary::kMask;
        }
    }
    return out;
}

}  // namespace cada
