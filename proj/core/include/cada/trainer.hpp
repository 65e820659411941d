#pragma once

#include <string>
#include <vector>

#include "cada/config.hpp"
#include "cada/data.hpp"
#include "cada/model.hpp"
#include "cada/optim.hpp"

namespace cada {

struct LossRow {
    int64_t step = 0;
    float ndf = 0.0f, atp = 0.0f, ara = 0.0f, total = 0.0f, lr = 0.0f;
};

struct TrainResult {
    std::string checkpoint_path;
    std::string log_path;
    std::vector<LossRow> rows;
    int64_t final_step = 0;
};

// Per step: make_batch -> encoders -> similarity -> hard negatives -> three
// losses -> AdamW with cosine-decayed lr. Batch sampling draws from a per-step
// rng derived as mix(seed, step), so resumed runs replay the exact stream.
// Writes train_log.csv, run_meta.txt and checkpoint.bin under out_dir.
// stop_at_step > 0 halts (and checkpoints) partway through the schedule; the
// lr schedule still spans the full configured run, so a later resume continues
// it seamlessly.
TrainResult train(Model& model, const Dataset& dataset, const RunConfig& config,
                  const std::string& out_dir, int64_t resume_from_step = 0,
                  AdamW* resumed_optimizer = nullptr, int64_t stop_at_step = 0);

// Restores model weights, optimizer state and step counter, then continues.
TrainResult resume(Model& model, const Dataset& dataset, const RunConfig& config,
                   const std::string& checkpoint_path, const std::string& out_dir);

int64_t steps_per_epoch(const Dataset& dataset, const RunConfig& config);

}  // namespace cada
