#include "cada/optim.hpp"

#include <cmath>

namespace cada {

AdamW::AdamW(float lr, float weight_decay, float beta1, float beta2, float eps)
    : lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::step(const ParamRegistry& params) {
    ++step_count_;
    last_update_counts_.clear();
    const float bc1 = 1.0f - std::pow(beta1_, float(step_count_));
    const float bc2 = 1.0f - std::pow(beta2_, float(step_count_));
    for (const auto& p : params.unique()) {
        TensorNode* node = p.tensor.node();
        if (node->grad.size() != node->data.size())
            throw ValidationError("adamw: parameter '" + p.name + "' has no gradient");
        auto& mo = moments_[node];
        if (mo.m.empty()) {
            mo.m.assign(node->data.size(), 0.0f);
            mo.v.assign(node->data.size(), 0.0f);
        }
        for (size_t i = 0; i < node->data.size(); ++i) {
            const float g = node->grad[i];
            mo.m[i] = beta1_ * mo.m[i] + (1.0f - beta1_) * g;
            mo.v[i] = beta2_ * mo.v[i] + (1.0f - beta2_) * g * g;
            const float mhat = mo.m[i] / bc1;
            const float vhat = mo.v[i] / bc2;
            node->data[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * node->data[i]);
        }
        ++last_update_counts_[node];
    }
}

float cosine_lr(float base_lr, int64_t step, int64_t total_steps) {
    if (total_steps <= 0) return base_lr;
    const double t = double(step) / double(total_steps);
    return float(base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * std::min(t, 1.0))));
}

}  // namespace cada
