#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cada/params.hpp"

namespace cada {

struct GradCheckReport {
    float max_rel_err = 0.0f;
    std::string worst_param;
    size_t worst_coord = 0;
    int coords_checked = 0;
    bool ok(float tolerance) const { return max_rel_err < tolerance; }
};

// Central-difference check of analytic gradients. loss_fn must rebuild the
// graph from the current parameter values and be deterministic (verified by
// evaluating it twice). Relative error per coordinate is
// |fd - analytic| / max(1, |fd|, |analytic|), which keeps float32 noise on
// near-zero coordinates from dominating the report.
GradCheckReport finite_diff_check(const std::function<Tensor()>& loss_fn,
                                  const ParamRegistry& params, float h,
                                  int max_coords_per_param = 24,
                                  uint64_t sample_seed = 17);

}  // namespace cada
