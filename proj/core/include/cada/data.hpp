#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cada/textproc.hpp"

namespace cada {

// One identity = a full attribute assignment over the four slots.
struct PersonSpec {
    int identity_id = 0;
    int hair_length = 0;   // 0 short, 1 long
    int hair_color = 0;    // index into hair color table
    int top_color = 0;     // index into the 8-color palette
    int top_style = 0;     // jacket / shirt / coat
    int bottom_color = 0;
    int bottom_style = 0;  // pants / skirt / shorts
    int shoe_color = 0;
    int shoe_style = 0;    // shoes / boots

    std::string hair_phrase() const;
    std::string top_phrase() const;
    std::string bottom_phrase() const;
    std::string shoe_phrase() const;
};

struct DatasetRecord {
    int identity_id = 0;
    std::string image_path;  // relative to the dataset root
    std::string caption;
    std::string split;       // "train" or "test"
    uint64_t checksum = 0;   // FNV-1a of the blob file bytes
};

struct GenConfig {
    int n_ids = 80;
    double train_frac = 0.8;
    int images_per_id = 4;
    int captions_per_image = 2;
    uint64_t seed = 0;
    int image_h = 32, image_w = 32, image_c = 3;
};

struct Dataset {
    std::string root;
    std::vector<DatasetRecord> records;
    Vocabulary vocab{std::vector<std::string>{}};
    PosLexicon lexicon;
    int image_h = 32, image_w = 32, image_c = 3;

    std::vector<DatasetRecord> split_records(const std::string& split) const;
    // Reads and validates a blob (header, length, checksum).
    std::vector<float> load_image(const DatasetRecord& record) const;
    uint64_t manifest_hash() const;
};

// Renders the band image for a spec (deterministic given rng state).
std::vector<float> render_person(const PersonSpec& spec, int h, int w, std::mt19937& rng);

// Writes manifest.jsonl, vocab.txt, lexicon.tsv and image blobs under out_dir;
// returns the manifest path. Deterministic given (config, seed).
std::string generate_dataset(const GenConfig& config, const std::string& out_dir);

Dataset load_dataset(const std::string& manifest_path);

// Word lists the generator draws from (single source for vocab + lexicon).
std::vector<std::string> generator_word_list();
PosLexicon generator_lexicon();

struct PairSample {
    int identity = 0;
    std::vector<float> image;        // H*W*C floats
    TokenSequence text_cls;          // unmasked, [CLS] leading
    TokenSequence text_enc;          // unmasked, [ENC] leading
    MaskedText masked;               // over the [ENC] variant
};

struct PairBatch {
    std::vector<PairSample> samples;
    int distinct_identities() const;
};

// Samples N_z aligned (image, caption) pairs with >= 2 distinct identities,
// resampling up to a bound before giving up.
PairBatch make_batch(const Dataset& dataset, const std::vector<DatasetRecord>& pool, int n_z,
                     float alpha, int max_len, std::mt19937& rng);

uint64_t mix_seed(uint64_t seed, uint64_t stream);

}  // namespace cada
