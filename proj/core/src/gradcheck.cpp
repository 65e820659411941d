#include "cada/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace cada {

GradCheckReport finite_diff_check(const std::function<Tensor()>& loss_fn,
                                  const ParamRegistry& params, float h,
                                  int max_coords_per_param, uint64_t sample_seed) {
    if (h < 1e-4f || h > 1e-2f)
        throw ValidationError("finite_diff_check: h must lie in [1e-4, 1e-2]");

    const float l0 = loss_fn().item();
    const float l0_again = loss_fn().item();
    if (l0 != l0_again)
        throw ValidationError("finite_diff_check: loss_fn is non-deterministic (" +
                              std::to_string(l0) + " vs " + std::to_string(l0_again) + ")");

    // One analytic backward at the current point.
    const_cast<ParamRegistry&>(params).zero_grad();
    loss_fn().backward();

    std::mt19937_64 rng(sample_seed);
    GradCheckReport report;
    auto uniq = params.unique();
    for (auto& p : uniq) {
        std::vector<float>& w = p.tensor.data();
        const std::vector<float>& g = p.tensor.node()->grad;
        std::vector<size_t> coords(w.size());
        for (size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        if (int(coords.size()) > max_coords_per_param) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(max_coords_per_param);
        }
        for (size_t idx : coords) {
            const float orig = w[idx];
            w[idx] = orig + h;
            const float lp = loss_fn().item();
            w[idx] = orig - h;
            const float lm = loss_fn().item();
            w[idx] = orig;
            const float fd = (lp - lm) / (2.0f * h);
            const float an = g[idx];
            const float denom = std::max({1.0f, std::fabs(fd), std::fabs(an)});
            const float rel = std::fabs(fd - an) / denom;
            ++report.coords_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = p.name;
                report.worst_coord = idx;
            }
        }
    }
    return report;
}

}  // namespace cada
