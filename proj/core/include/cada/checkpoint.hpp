#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "cada/optim.hpp"
#include "cada/params.hpp"

namespace cada {

// Self-describing binary checkpoint: header with config hash, one entry per
// distinct parameter storage (name, shape, little-endian float32 payload), an
// alias table mapping shared-parameter names to their canonical entry, and an
// optional optimizer-state section (step counter plus Adam moments in entry
// order). Round trips are bit-exact.
struct TrainState {
    AdamW* optimizer = nullptr;
    int64_t step = 0;
};

void save_checkpoint(const std::string& path, const ParamRegistry& params,
                     uint64_t config_hash, const TrainState* train_state = nullptr);

// Loads values into the registry's existing storages (shapes must match).
// Returns the restored training step when the file carries optimizer state
// and `optimizer` is non-null.
int64_t load_checkpoint(const std::string& path, const ParamRegistry& params,
                        uint64_t expected_config_hash, AdamW* optimizer = nullptr);

uint64_t checkpoint_config_hash(const std::string& path);

// FNV-1a, used for config hashing and blob checksums.
uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 1469598103934665603ULL);
uint64_t fnv1a_str(const std::string& s);

}  // namespace cada
