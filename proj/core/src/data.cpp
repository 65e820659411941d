#include "cada/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_set>

#include "cada/checkpoint.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace cada {

namespace {

struct Rgb {
    float r, g, b;
};

const std::vector<std::pair<std::string, Rgb>> kPalette = {
    {"red", {1.0f, 0.0f, 0.0f}},    {"blue", {0.0f, 0.0f, 1.0f}},
    {"green", {0.0f, 0.8f, 0.0f}},  {"yellow", {1.0f, 1.0f, 0.0f}},
    {"purple", {0.6f, 0.0f, 0.8f}}, {"orange", {1.0f, 0.6f, 0.0f}},
    {"white", {1.0f, 1.0f, 1.0f}},  {"black", {0.0f, 0.0f, 0.0f}},
};

const std::vector<std::pair<std::string, Rgb>> kHairColors = {
    {"black", {0.0f, 0.0f, 0.0f}},
    {"brown", {0.45f, 0.3f, 0.15f}},
    {"blonde", {0.9f, 0.8f, 0.5f}},
};

const std::vector<std::string> kHairLengths = {"short", "long"};
const std::vector<std::string> kTopNouns = {"jacket", "shirt", "coat"};
const std::vector<std::string> kBottomNouns = {"pants", "skirt", "shorts"};
const std::vector<std::string> kShoeNouns = {"shoes", "boots"};

const std::vector<std::string> kFillerWords = {
    "a", "person", "with", "wearing", "the", "wears", "has",
    "in", "someone", "and", "dressed",
};

constexpr Rgb kContrast = {0.55f, 0.55f, 0.55f};

// Stripe pixels are a blend so band means stay near the palette color.
Rgb blend_contrast(Rgb c) {
    return {0.65f * c.r + 0.35f * kContrast.r, 0.65f * c.g + 0.35f * kContrast.g,
            0.65f * c.b + 0.35f * kContrast.b};
}

// style 0: solid, 1: vertical 2px stripes, 2: horizontal 2px stripes
Rgb band_pixel(Rgb color, int style, int y, int x) {
    if (style == 1 && (x / 2) % 2 == 1) return blend_contrast(color);
    if (style == 2 && (y / 2) % 2 == 1) return blend_contrast(color);
    return color;
}

std::string fmt_caption(const PersonSpec& s, int template_idx) {
    const std::string hair = s.hair_phrase(), top = s.top_phrase(),
                      bottom = s.bottom_phrase(), shoes = s.shoe_phrase();
    switch (template_idx % 7) {
        case 0: return "a person with " + hair + " wearing a " + top + " and " + bottom +
                       " and " + shoes;
        case 1: return "the person wears a " + top + " with " + bottom + " and has " + hair;
        case 2: return "a person in a " + top + " and " + bottom + " with " + shoes;
        case 3: return "someone with " + hair + " wearing a " + top;
        case 4: return "a person wearing " + shoes + " and a " + bottom + " and a " + top;
        case 5: return "the person has " + hair + " and wears " + shoes + " with a " + bottom;
        default: return "a person dressed in a " + top + " and " + bottom + " wearing " + shoes +
                        " and with " + hair;
    }
}

void write_blob(const std::string& path, const std::vector<float>& image, int h, int w, int c) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("dataset: cannot write blob '" + path + "'");
    const uint16_t header[4] = {uint16_t(h), uint16_t(w), uint16_t(c), 1};
    os.write(reinterpret_cast<const char*>(header), 8);
    os.write(reinterpret_cast<const char*>(image.data()), std::streamsize(image.size() * 4));
}

std::vector<char> read_file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("dataset: missing blob '" + path + "'");
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t h = seed ^ (0x9e3779b97f4a7c15ULL + stream);
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebULL;
    h ^= h >> 31;
    return h;
}

std::string PersonSpec::hair_phrase() const {
    return kHairLengths[size_t(hair_length)] + " " + kHairColors[size_t(hair_color)].first +
           " hair";
}
std::string PersonSpec::top_phrase() const {
    return kPalette[size_t(top_color)].first + " " + kTopNouns[size_t(top_style)];
}
std::string PersonSpec::bottom_phrase() const {
    return kPalette[size_t(bottom_color)].first + " " + kBottomNouns[size_t(bottom_style)];
}
std::string PersonSpec::shoe_phrase() const {
    return kPalette[size_t(shoe_color)].first + " " + kShoeNouns[size_t(shoe_style)];
}

std::vector<std::string> generator_word_list() {
    std::vector<std::string> words = kFillerWords;
    auto add = [&words](const std::string& w) {
        if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
    };
    for (const auto& [name, rgb] : kPalette) add(name);
    for (const auto& [name, rgb] : kHairColors) add(name);
    for (const auto& w : kHairLengths) add(w);
    add("hair");
    for (const auto& w : kTopNouns) add(w);
    for (const auto& w : kBottomNouns) add(w);
    for (const auto& w : kShoeNouns) add(w);
    return words;
}

PosLexicon generator_lexicon() {
    PosLexicon lex;
    for (const auto& w : kFillerWords) lex.set(w, PosTag::Other);
    for (const auto& [name, rgb] : kPalette) lex.set(name, PosTag::Adj);
    for (const auto& [name, rgb] : kHairColors) lex.set(name, PosTag::Adj);
    for (const auto& w : kHairLengths) lex.set(w, PosTag::Adj);
    lex.set("hair", PosTag::Noun);
    for (const auto& w : kTopNouns) lex.set(w, PosTag::Noun);
    for (const auto& w : kBottomNouns) lex.set(w, PosTag::Noun);
    for (const auto& w : kShoeNouns) lex.set(w, PosTag::Noun);
    return lex;
}

std::vector<float> render_person(const PersonSpec& spec, int h, int w, std::mt19937& rng) {
    std::vector<float> img(size_t(h) * w * 3, 0.0f);
    std::uniform_int_distribution<int> jitter(-2, 2);
    std::normal_distribution<float> noise(0.0f, 0.05f);
    std::uniform_int_distribution<int> coin(0, 1);

    const int band = h / 4;
    int b1 = band + jitter(rng), b2 = 2 * band + jitter(rng), b3 = 3 * band + jitter(rng);
    const bool flip = coin(rng) == 1;

    const Rgb hair = kHairColors[size_t(spec.hair_color)].second;
    const Rgb top = kPalette[size_t(spec.top_color)].second;
    const Rgb bottom = kPalette[size_t(spec.bottom_color)].second;
    const Rgb shoe = kPalette[size_t(spec.shoe_color)].second;
    // hair length rendered as a style: long = solid, short = striped
    const int hair_style = spec.hair_length == 1 ? 0 : 1;

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            Rgb px;
            if (y < b1)
                px = band_pixel(hair, hair_style, y, x);
            else if (y < b2)
                px = band_pixel(top, spec.top_style, y, x);
            else if (y < b3)
                px = band_pixel(bottom, spec.bottom_style, y, x);
            else
                px = band_pixel(shoe, spec.shoe_style, y, x);
            const int xx = flip ? w - 1 - x : x;
            float* out = &img[size_t(y * w + xx) * 3];
            out[0] = std::clamp(px.r + noise(rng), 0.0f, 1.0f);
            out[1] = std::clamp(px.g + noise(rng), 0.0f, 1.0f);
            out[2] = std::clamp(px.b + noise(rng), 0.0f, 1.0f);
        }
    return img;
}

std::string generate_dataset(const GenConfig& config, const std::string& out_dir) {
    if (config.n_ids < 2)
        throw ValidationError("gen-data: need at least 2 identities (hard negatives require "
                              "different-identity pairs)");
    const size_t capacity = kHairLengths.size() * kHairColors.size() * kPalette.size() *
                            kTopNouns.size() * kPalette.size() * kBottomNouns.size() *
                            kPalette.size() * kShoeNouns.size();
    if (size_t(config.n_ids) > capacity)
        throw ValidationError("gen-data: attribute space holds only " +
                              std::to_string(capacity) + " distinct identities, requested " +
                              std::to_string(config.n_ids));

    fs::create_directories(fs::path(out_dir) / "images");
    std::mt19937 spec_rng(uint32_t(mix_seed(config.seed, 0xA11)));

    // Distinct attribute assignments, sampled without replacement.
    std::vector<PersonSpec> specs;
    std::set<std::array<int, 8>> used;
    while (int(specs.size()) < config.n_ids) {
        PersonSpec s;
        s.identity_id = int(specs.size());
        s.hair_length = int(spec_rng() % kHairLengths.size());
        s.hair_color = int(spec_rng() % kHairColors.size());
        s.top_color = int(spec_rng() % kPalette.size());
        s.top_style = int(spec_rng() % kTopNouns.size());
        s.bottom_color = int(spec_rng() % kPalette.size());
        s.bottom_style = int(spec_rng() % kBottomNouns.size());
        s.shoe_color = int(spec_rng() % kPalette.size());
        s.shoe_style = int(spec_rng() % kShoeNouns.size());
        const std::array<int, 8> key = {s.hair_length, s.hair_color, s.top_color, s.top_style,
                                        s.bottom_color, s.bottom_style, s.shoe_color,
                                        s.shoe_style};
        if (used.insert(key).second) specs.push_back(s);
    }

    const int n_train = int(std::lround(config.train_frac * config.n_ids));
    std::vector<DatasetRecord> records;
    for (const auto& spec : specs) {
        std::mt19937 id_rng(uint32_t(mix_seed(config.seed, 0xB00 + uint64_t(spec.identity_id))));
        const std::string split = spec.identity_id < n_train ? "train" : "test";
        for (int im = 0; im < config.images_per_id; ++im) {
            const auto image = render_person(spec, config.image_h, config.image_w, id_rng);
            char name[64];
            std::snprintf(name, sizeof(name), "images/id%04d_im%02d.bin", spec.identity_id, im);
            const std::string rel = name;
            write_blob((fs::path(out_dir) / rel).string(), image, config.image_h, config.image_w,
                       config.image_c);
            const auto bytes = read_file_bytes((fs::path(out_dir) / rel).string());
            const uint64_t checksum = fnv1a(bytes.data(), bytes.size());
            for (int cap = 0; cap < config.captions_per_image; ++cap) {
                DatasetRecord rec;
                rec.identity_id = spec.identity_id;
                rec.image_path = rel;
                rec.caption = fmt_caption(spec, int(id_rng() % 7));
                rec.split = split;
                rec.checksum = checksum;
                records.push_back(rec);
            }
        }
    }

    Vocabulary vocab(generator_word_list());
    vocab.save((fs::path(out_dir) / "vocab.txt").string());
    generator_lexicon().save((fs::path(out_dir) / "lexicon.tsv").string());

    const std::string manifest_path = (fs::path(out_dir) / "manifest.jsonl").string();
    std::ofstream os(manifest_path);
    if (!os) throw ValidationError("gen-data: cannot write manifest");
    for (const auto& r : records) {
        nlohmann::ordered_json j;
        j["id"] = r.identity_id;
        j["image_path"] = r.image_path;
        j["caption"] = r.caption;
        j["split"] = r.split;
        j["checksum"] = std::to_string(r.checksum);
        os << j.dump() << "\n";
    }
    return manifest_path;
}

Dataset load_dataset(const std::string& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw ValidationError("dataset: cannot open manifest '" + manifest_path + "'");
    Dataset ds;
    ds.root = fs::path(manifest_path).parent_path().string();
    std::string line;
    size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw ValidationError("dataset: bad manifest line " + std::to_string(line_no) + ": " +
                                  e.what());
        }
        DatasetRecord r;
        r.identity_id = j.at("id").get<int>();
        r.image_path = j.at("image_path").get<std::string>();
        r.caption = j.at("caption").get<std::string>();
        r.split = j.at("split").get<std::string>();
        r.checksum = std::stoull(j.at("checksum").get<std::string>());
        if (r.split != "train" && r.split != "test")
            throw ValidationError("dataset: unknown split '" + r.split + "' at line " +
                                  std::to_string(line_no));
        ds.records.push_back(std::move(r));
    }
    if (ds.records.empty()) throw ValidationError("dataset: empty manifest");
    {
        // Image dimensions come from the blob headers, not the manifest.
        std::ifstream blob(fs::path(ds.root) / ds.records.front().image_path,
                           std::ios::binary);
        uint16_t header[4] = {0, 0, 0, 0};
        if (!blob.read(reinterpret_cast<char*>(header), sizeof(header)))
            throw ValidationError("dataset: cannot read blob header of '" +
                                  ds.records.front().image_path + "'");
        ds.image_h = header[0];
        ds.image_w = header[1];
        ds.image_c = header[2];
    }
    ds.vocab = Vocabulary::from_file((fs::path(ds.root) / "vocab.txt").string());
    ds.lexicon = PosLexicon::from_file((fs::path(ds.root) / "lexicon.tsv").string());
    return ds;
}

std::vector<DatasetRecord> Dataset::split_records(const std::string& split) const {
    std::vector<DatasetRecord> out;
    for (const auto& r : records)
        if (r.split == split) out.push_back(r);
    return out;
}

std::vector<float> Dataset::load_image(const DatasetRecord& record) const {
    const std::string path = (fs::path(root) / record.image_path).string();
    const auto bytes = read_file_bytes(path);
    if (fnv1a(bytes.data(), bytes.size()) != record.checksum)
        throw ValidationError("dataset: checksum mismatch for '" + record.image_path + "'");
    if (bytes.size() < 8) throw ValidationError("dataset: truncated blob '" + record.image_path + "'");
    uint16_t header[4];
    std::memcpy(header, bytes.data(), 8);
    const size_t n = size_t(header[0]) * header[1] * header[2];
    if (bytes.size() != 8 + n * 4)
        throw ValidationError("dataset: truncated blob '" + record.image_path + "' (" +
                              std::to_string(bytes.size()) + " bytes)");
    std::vector<float> img(n);
    std::memcpy(img.data(), bytes.data() + 8, n * 4);
    return img;
}

uint64_t Dataset::manifest_hash() const {
    uint64_t h = 1469598103934665603ULL;
    for (const auto& r : records) {
        h = fnv1a_str(r.image_path) ^ (h * 1099511628211ULL);
        h = fnv1a_str(r.caption) ^ (h * 1099511628211ULL);
        h ^= r.checksum + uint64_t(r.identity_id);
    }
    return h;
}

int PairBatch::distinct_identities() const {
    std::unordered_set<int> ids;
    for (const auto& s : samples) ids.insert(s.identity);
    return int(ids.size());
}

PairBatch make_batch(const Dataset& dataset, const std::vector<DatasetRecord>& pool, int n_z,
                     float alpha, int max_len, std::mt19937& rng) {
    if (int(pool.size()) < n_z)
        throw ValidationError("make_batch: pool of " + std::to_string(pool.size()) +
                              " records cannot fill a batch of " + std::to_string(n_z));
    constexpr int kRetries = 32;
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    for (int attempt = 0; attempt < kRetries; ++attempt) {
        std::vector<size_t> chosen;
        std::unordered_set<size_t> seen;
        while (int(chosen.size()) < n_z) {
            const size_t i = pick(rng);
            if (seen.insert(i).second) chosen.push_back(i);
        }
        std::unordered_set<int> ids;
        for (size_t i : chosen) ids.insert(pool[i].identity_id);
        if (ids.size() < 2) continue;

        PairBatch batch;
        for (size_t i : chosen) {
            const auto& rec = pool[i];
            PairSample s;
            s.identity = rec.identity_id;
            s.image = dataset.load_image(rec);
            s.text_cls = tokenize(rec.caption, dataset.vocab, max_len, LeadingToken::Cls);
            s.text_enc = tokenize(rec.caption, dataset.vocab, max_len, LeadingToken::Enc);
            const auto spans = extract_attributes(s.text_enc, dataset.vocab, dataset.lexicon);
            s.text_enc.attribute_spans = spans;
            s.masked = mask_attributes(s.text_enc, spans, alpha, rng);
            batch.samples.push_back(std::move(s));
        }
        return batch;
    }
    throw ValidationError("make_batch: could not assemble a batch with >= 2 distinct identities");
}

}  // namespace cada
