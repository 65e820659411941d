#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "cada/params.hpp"

namespace cada {

// AdamW with decoupled weight decay. Shared storages are updated exactly once
// per step regardless of how many names alias them; update counts are kept so
// tests can assert the single-update invariant.
class AdamW {
  public:
    AdamW(float lr, float weight_decay, float beta1 = 0.9f, float beta2 = 0.999f,
          float eps = 1e-8f);

    void step(const ParamRegistry& params);
    void set_lr(float lr) { lr_ = lr; }
    float lr() const { return lr_; }
    int64_t step_count() const { return step_count_; }

    // storage -> number of updates applied in the most recent step()
    const std::unordered_map<const TensorNode*, int>& last_update_counts() const {
        return last_update_counts_;
    }

    struct Moments {
        std::vector<float> m;
        std::vector<float> v;
    };
    // Exposed for checkpointing; keyed in ParamRegistry::unique() order.
    std::unordered_map<const TensorNode*, Moments>& moments() { return moments_; }
    void set_step_count(int64_t n) { step_count_ = n; }

  private:
    float lr_, weight_decay_, beta1_, beta2_, eps_;
    int64_t step_count_ = 0;
    std::unordered_map<const TensorNode*, Moments> moments_;
    std::unordered_map<const TensorNode*, int> last_update_counts_;
};

// Cosine decay from base_lr at step 0 towards 0 at total_steps.
float cosine_lr(float base_lr, int64_t step, int64_t total_steps);

}  // namespace cada
