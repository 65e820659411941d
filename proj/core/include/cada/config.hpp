#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cada/losses.hpp"
#include "cada/model.hpp"

namespace cada {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 16;  // N_z
    float lr = 3e-4f;
    float weight_decay = 0.05f;
    float alpha = 0.8f;  // attribute masking rate
    uint64_t seed = 0;
    int checkpoint_every = 0;  // steps; 0 = only at the end
    void validate() const;
};

// Desk-scale defaults; paper-scale values (224/16 patches, 12 layers, width
// 768, d=256, max_len 72, batch 96, lr 1e-5, 40 epochs) stay selectable
// through the same keys.
struct RunConfig {
    ModelConfig model;
    LossConfig loss;
    TrainConfig train;
    int eta = 32;

    void validate() const;
    // Canonical key=value text; also what gets hashed.
    std::string to_text() const;
    uint64_t hash() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);
// Applies "dotted.key=value" overrides; unknown keys are rejected.
void apply_override(RunConfig& config, const std::string& key_value);

}  // namespace cada
