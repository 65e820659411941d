#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cada/errors.hpp"

namespace cada {

// Node in the define-by-run autodiff graph. All tensors are 2-D row-major
// float32; scalars are 1x1 and vectors 1xn. The graph is rebuilt on every
// forward pass and freed when the loss tensor goes out of scope.
struct TensorNode {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;
    std::vector<float> grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    size_t size() const { return data.size(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
    }
};

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

    static Tensor zeros(int rows, int cols, bool requires_grad = false);
    static Tensor full(int rows, int cols, float value, bool requires_grad = false);
    static Tensor from_data(int rows, int cols, std::vector<float> data,
                            bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    int rows() const { return node_->rows; }
    int cols() const { return node_->cols; }
    size_t size() const { return node_->data.size(); }
    std::string shape_str() const;

    std::vector<float>& data() { return node_->data; }
    const std::vector<float>& data() const { return node_->data; }
    float& at(int r, int c) { return node_->data[size_t(r) * node_->cols + c]; }
    float at(int r, int c) const { return node_->data[size_t(r) * node_->cols + c]; }
    float item() const;

    bool requires_grad() const { return node_->requires_grad; }
    std::vector<float>& grad();
    const std::vector<float>& grad() const { return node_->grad; }
    void zero_grad();

    // Same values, cut out of the graph.
    Tensor detach() const;

    // Reverse-mode pass from a scalar. Accumulates into the grad buffers of
    // every requires_grad node reachable through the parents chain.
    void backward() const;

    TensorNode* node() const { return node_.get(); }
    const std::shared_ptr<TensorNode>& ptr() const { return node_; }

  private:
    std::shared_ptr<TensorNode> node_;
};

// --- forward ops, all differentiable ---------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);          // same shape
Tensor add_rowvec(const Tensor& a, const Tensor& b);   // b is 1 x cols, broadcast
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);          // elementwise
Tensor scale(const Tensor& a, float s);
Tensor add_scalar(const Tensor& a, float s);
Tensor sum(const Tensor& a);                           // -> 1x1
Tensor mean_rows(const Tensor& a);                     // -> 1 x cols
Tensor slice_rows(const Tensor& a, int r0, int r1);    // [r0, r1)
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor pick(const Tensor& a, int r, int c);            // -> 1x1
Tensor softmax_rows(const Tensor& a);                  // stabilized, per row
Tensor log_eps(const Tensor& a, float eps);            // log(a + eps)
Tensor gelu(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor normalize_rows(const Tensor& a);                // unit L2 per row

// softmax over an arbitrary axis (0 = down columns, 1 = across rows)
Tensor softmax(const Tensor& a, int axis);

// KL(p || q) with eps inside both logarithm arguments:
// sum_i p_i * log((p_i+eps)/(q_i+eps)). p and q are flat (1xn or nx1).
Tensor kl_div(const Tensor& p, const Tensor& q, float eps);

constexpr float kKlEps = 1e-8f;

}  // namespace cada
