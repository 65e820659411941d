#include "cada/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace cada {

namespace {

std::shared_ptr<TensorNode> make_node(int rows, int cols) {
    auto n = std::make_shared<TensorNode>();
    n->rows = rows;
    n->cols = cols;
    n->data.assign(size_t(rows) * cols, 0.0f);
    return n;
}

std::string dim_str(const TensorNode& n) {
    return "[" + std::to_string(n.rows) + "x" + std::to_string(n.cols) + "]";
}

// Wires parents/backward only when gradient actually has to flow.
Tensor finish(std::shared_ptr<TensorNode> out, std::vector<Tensor> inputs,
              std::function<void(TensorNode&)> backward_fn) {
    bool rg = false;
    for (const auto& t : inputs) rg = rg || t.requires_grad();
    if (rg) {
        out->requires_grad = true;
        out->parents.reserve(inputs.size());
        for (const auto& t : inputs) out->parents.push_back(t.ptr());
        out->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(out));
}

}  // namespace

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
    auto n = make_node(rows, cols);
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return Tensor(std::move(n));
}

Tensor Tensor::full(int rows, int cols, float value, bool requires_grad) {
    Tensor t = zeros(rows, cols, requires_grad);
    for (auto& v : t.data()) v = value;
    return t;
}

Tensor Tensor::from_data(int rows, int cols, std::vector<float> data, bool requires_grad) {
    if (data.size() != size_t(rows) * cols)
        throw DimensionError("from_data: " + std::to_string(data.size()) + " values for [" +
                             std::to_string(rows) + "x" + std::to_string(cols) + "]");
    auto n = make_node(rows, cols);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return from_data(1, 1, {value}, requires_grad);
}

std::string Tensor::shape_str() const { return dim_str(*node_); }

float Tensor::item() const {
    if (size() != 1) throw DimensionError("item() on non-scalar " + shape_str());
    return node_->data[0];
}

std::vector<float>& Tensor::grad() {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    node_->ensure_grad();
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

Tensor Tensor::detach() const {
    auto n = make_node(rows(), cols());
    n->data = node_->data;
    return Tensor(std::move(n));
}

void Tensor::backward() const {
    if (size() != 1) throw DimensionError("backward() requires a scalar loss, got " + shape_str());
    // Iterative post-order DFS; graphs get deep when scalars are chained.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.push_back({node_.get(), 0});
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            TensorNode* p = n->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->ensure_grad();
    node_->grad[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// --------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dims disagree " + a.shape_str() + " * " + b.shape_str());
    const int m = a.rows(), k = a.cols(), n = b.cols();
    auto out = make_node(m, n);
    const float* A = a.data().data();
    const float* B = b.data().data();
    float* C = out->data.data();
    for (int i = 0; i < m; ++i) {
        float* Ci = C + size_t(i) * n;
        for (int p = 0; p < k; ++p) {
            const float aip = A[size_t(i) * k + p];
            if (aip == 0.0f) continue;
            const float* Bp = B + size_t(p) * n;
            for (int j = 0; j < n; ++j) Ci[j] += aip * Bp[j];
        }
    }
    auto an = a.ptr(), bn = b.ptr();
    return finish(std::move(out), {a, b}, [an, bn, m, k, n](TensorNode& self) {
        const float* G = self.grad.data();
        if (an->requires_grad) {
            an->ensure_grad();
            float* dA = an->grad.data();
            const float* B = bn->data.data();
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    float acc = 0.0f;
                    const float* Gi = G + size_t(i) * n;
                    const float* Bp = B + size_t(p) * n;
                    for (int j = 0; j < n; ++j) acc += Gi[j] * Bp[j];
                    dA[size_t(i) * k + p] += acc;
                }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            float* dB = bn->grad.data();
            const float* A = an->data.data();
            for (int p = 0; p < k; ++p)
                for (int i = 0; i < m; ++i) {
                    const float aip = A[size_t(i) * k + p];
                    if (aip == 0.0f) continue;
                    const float* Gi = G + size_t(i) * n;
                    float* dBp = dB + size_t(p) * n;
                    for (int j = 0; j < n; ++j) dBp[j] += aip * Gi[j];
                }
        }
    });
}

Tensor transpose(const Tensor& a) {
    const int m = a.rows(), n = a.cols();
    auto out = make_node(n, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->data[size_t(j) * m + i] = a.at(i, j);
    auto an = a.ptr();
    return finish(std::move(out), {a}, [an, m, n](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                an->grad[size_t(i) * n + j] += self.grad[size_t(j) * m + i];
    });
}

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    auto out = make_node(a.rows(), a.cols());
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a.data()[i] + b.data()[i];
    auto an = a.ptr(), bn = b.ptr();
    return finish(std::move(out), {a, b}, [an, bn](TensorNode& self) {
        for (auto& n : {an, bn}) {
            if (!n->requires_grad) continue;
            n->ensure_grad();
            for (size_t i = 0; i < self.size(); ++i) n->grad[i] += self.grad[i];
        }
    });
}

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
    if (b.rows() != 1 || b.cols() != a.cols())
        throw DimensionError("add_rowvec: " + a.shape_str() + " + " + b.shape_str());
    auto out = make_node(a.rows(), a.cols());
    const int n = a.cols();
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < n; ++j) out->data[size_t(i) * n + j] = a.at(i, j) + b.at(0, j);
    auto an = a.ptr(), bn = b.ptr();
    return finish(std::move(out), {a, b}, [an, bn, n](TensorNode& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int i = 0; i < self.rows; ++i)
                for (int j = 0; j < n; ++j) bn->grad[j] += self.grad[size_t(i) * n + j];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    auto out = make_node(a.rows(), a.cols());
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a.data()[i] - b.data()[i];
    auto an = a.ptr(), bn = b.ptr();
    return finish(std::move(out), {a, b}, [an, bn](TensorNode& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.size(); ++i) bn->grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    auto out = make_node(a.rows(), a.cols());
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a.data()[i] * b.data()[i];
    auto an = a.ptr(), bn = b.ptr();
    return finish(std::move(out), {a, b}, [an, bn](TensorNode& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.size(); ++i) bn->grad[i] += self.grad[i] * an->data[i];
        }
    });
}

Tensor scale(const Tensor& a, float s) {
    auto out = make_node(a.rows(), a.cols());
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a.data()[i] * s;
    auto an = a.ptr();
    return finish(std::move(out), {a}, [an, s](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i] * s;
    });
}

Tensor add_scalar(const Tensor& a, float s) {
    auto out = make_node(a.rows(), a.cols());
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a.data()[i] + s;
    auto an = a.ptr();
    return finish(std::move(out), {a}, [an](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i];
    });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.data()) acc += v;
    auto out = make_node(1, 1);
    out->data[0] = float(acc);
    auto an = a.ptr();
    return finish(std::move(out), {a}, [an](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (auto& g : an->grad) g += self.grad[0];
    });
}

Tensor mean_rows(const Tensor& a) {
    const int m = a.rows(), n = a.cols();
    auto out = make_node(1, n);
    for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) acc += a.at(i, j);
        out->data[j] = float(acc / m);
    }
    auto an = a.ptr();
    return finish(std::move(out), {a}, [an, m, n](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) an->grad[size_t(i) * n + j] += self.grad[j] / m;
    });
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
    if (r0 < 0 || r1 > a.rows() || r0 >= r1)
        throw DimensionError("slice_rows [" + std::to_string(r0) + "," + std::to_string(r1) +
                             ") of " + a.shape_str());
    const int n = a.cols();
    auto out = make_node(r1 - r0, n);
    std::copy(a.data().begin() + size_t(r0) * n, a.data().begin() + size_t(r1) * n,
              out->data.begin());
    auto an = a.ptr();
    return finish(std::move(out), {a}, [an, r0, n](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.size(); ++i) an->grad[size_t(r0) * n + i] += self.grad[i];
    });
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
    if (c0 < 0 || c1 > a.cols() || c0 >= c1)
        throw DimensionError("slice_cols [" + std::to_string(c0) + "," + std::to_string(c1) +
                             ") of " + a.shape_str());
    const int m = a.rows(), n = a.cols(), w = c1 - c0;
    auto out = make_node(m, w);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) out->data[size_t(i) * w + j] = a.at(i, c0 + j);
    auto an = a.ptr();
    return finish(std::move(out), {a}, [an, c0, m, n, w](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
                an->grad[size_t(i) * n + c0 + j] += self.grad[size_t(i) * w + j];
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: empty");
    const int n = parts[0].cols();
    int m = 0;
    for (const auto& p : parts) {
        if (p.cols() != n) throw DimensionError("concat_rows: column mismatch");
        m += p.rows();
    }
    auto out = make_node(m, n);
    size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out->data.begin() + off);
        off += p.size();
    }
    std::vector<Tensor> inputs = parts;
    return finish(std::move(out), parts, [inputs](TensorNode& self) {
        size_t off = 0;
        for (const auto& p : inputs) {
            if (p.node()->requires_grad) {
                p.node()->ensure_grad();
                for (size_t i = 0; i < p.size(); ++i) p.node()->grad[i] += self.grad[off + i];
            }
            off += p.size();
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: empty");
    const int m = parts[0].rows();
    int n = 0;
    for (const auto& p : parts) {
        if (p.rows() != m) throw DimensionError("concat_cols: row mismatch");
        n += p.cols();
    }
    auto out = make_node(m, n);
    int coff = 0;
    for (const auto& p : parts) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < p.cols(); ++j)
                out->data[size_t(i) * n + coff + j] = p.at(i, j);
        coff += p.cols();
    }
    std::vector<Tensor> inputs = parts;
    return finish(std::move(out), parts, [inputs, m, n](TensorNode& self) {
        int coff = 0;
        for (const auto& p : inputs) {
            const int w = p.cols();
            if (p.node()->requires_grad) {
                p.node()->ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < w; ++j)
                        p.node()->grad[size_t(i) * w + j] += self.grad[size_t(i) * n + coff + j];
            }
            coff += w;
        }
    });
}

Tensor pick(const Tensor& a, int r, int c) {
    if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols())
        throw DimensionError("pick(" + std::to_string(r) + "," + std::to_string(c) + ") of " +
                             a.shape_str());
    auto out = make_node(1, 1);
    out->data[0] = a.at(r, c);
    auto an = a.ptr();
    const size_t idx = size_t(r) * a.cols() + c;
    return finish(std::move(out), {a}, [an, idx](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        an->grad[idx] += self.grad[0];
    });
}

Tensor softmax_rows(const Tensor& a) {
    const int m = a.rows(), n = a.cols();
    auto out = make_node(m, n);
    for (int i = 0; i < m; ++i) {
        float mx = a.at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, a.at(i, j));
        if (std::isnan(mx)) throw NumericError("softmax: NaN input");
        double z = 0.0;
        for (int j = 0; j < n; ++j) {
            const float e = std::exp(a.at(i, j) - mx);
            out->data[size_t(i) * n + j] = e;
            z += e;
        }
        for (int j = 0; j < n; ++j) out->data[size_t(i) * n + j] = float(out->data[size_t(i) * n + j] / z);
    }
    auto an = a.ptr();
    return finish(std::move(out), {a}, [an, m, n](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < m; ++i) {
            double dot = 0.0;
            const float* y = self.data.data() + size_t(i) * n;
            const float* g = self.grad.data() + size_t(i) * n;
            for (int j = 0; j < n; ++j) dot += double(y[j]) * g[j];
            float* dx = an->grad.data() + size_t(i) * n;
            for (int j = 0; j < n; ++j) dx[j] += y[j] * (g[j] - float(dot));
        }
    });
}

Tensor softmax(const Tensor& a, int axis) {
    if (axis == 1) return softmax_rows(a);
    if (axis == 0) return transpose(softmax_rows(transpose(a)));
    throw DimensionError("softmax: axis must be 0 or 1");
}

Tensor log_eps(const Tensor& a, float eps) {
    auto out = make_node(a.rows(), a.cols());
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = std::log(a.data()[i] + eps);
    auto an = a.ptr();
    return finish(std::move(out), {a}, [an, eps](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.size(); ++i)
            an->grad[i] += self.grad[i] / (an->data[i] + eps);
    });
}

Tensor gelu(const Tensor& a) {
    // tanh approximation
    constexpr float c = 0.7978845608028654f;  // sqrt(2/pi)
    constexpr float k = 0.044715f;
    auto out = make_node(a.rows(), a.cols());
    for (size_t i = 0; i < out->size(); ++i) {
        const float x = a.data()[i];
        out->data[i] = 0.5f * x * (1.0f + std::tanh(c * (x + k * x * x * x)));
    }
    auto an = a.ptr();
    return finish(std::move(out), {a}, [an, c, k](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.size(); ++i) {
            const float x = an->data[i];
            const float u = c * (x + k * x * x * x);
            const float t = std::tanh(u);
            const float du = c * (1.0f + 3.0f * k * x * x);
            const float d = 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * du;
            an->grad[i] += self.grad[i] * d;
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    const int m = x.rows(), n = x.cols();
    if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n)
        throw DimensionError("layer_norm: affine params must be 1x" + std::to_string(n));
    constexpr float ln_eps = 1e-5f;
    auto out = make_node(m, n);
    std::vector<float> inv_std(m), means(m);
    for (int i = 0; i < m; ++i) {
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += x.at(i, j);
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = x.at(i, j) - mu;
            var += d * d;
        }
        var /= n;
        means[i] = float(mu);
        inv_std[i] = float(1.0 / std::sqrt(var + ln_eps));
        for (int j = 0; j < n; ++j) {
            const float xhat = (x.at(i, j) - means[i]) * inv_std[i];
            out->data[size_t(i) * n + j] = xhat * gamma.at(0, j) + beta.at(0, j);
        }
    }
    auto xn = x.ptr(), gn = gamma.ptr(), bn = beta.ptr();
    return finish(std::move(out), {x, gamma, beta},
                  [xn, gn, bn, m, n, means, inv_std](TensorNode& self) {
        for (int i = 0; i < m; ++i) {
            const float* g = self.grad.data() + size_t(i) * n;
            const float* xr = xn->data.data() + size_t(i) * n;
            if (gn->requires_grad) {
                gn->ensure_grad();
                for (int j = 0; j < n; ++j)
                    gn->grad[j] += g[j] * (xr[j] - means[i]) * inv_std[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int j = 0; j < n; ++j) bn->grad[j] += g[j];
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                double sum_gy = 0.0, sum_gyx = 0.0;
                for (int j = 0; j < n; ++j) {
                    const float gy = g[j] * gn->data[j];
                    const float xhat = (xr[j] - means[i]) * inv_std[i];
                    sum_gy += gy;
                    sum_gyx += double(gy) * xhat;
                }
                float* dx = xn->grad.data() + size_t(i) * n;
                for (int j = 0; j < n; ++j) {
                    const float gy = g[j] * gn->data[j];
                    const float xhat = (xr[j] - means[i]) * inv_std[i];
                    dx[j] += inv_std[i] * (gy - float(sum_gy) / n - xhat * float(sum_gyx) / n);
                }
            }
        }
    });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    const int n = table.cols();
    auto out = make_node(int(ids.size()), n);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table.rows())
            throw DimensionError("embedding_lookup: id " + std::to_string(ids[i]) +
                                 " outside table " + table.shape_str());
        std::copy(table.data().begin() + size_t(ids[i]) * n,
                  table.data().begin() + size_t(ids[i] + 1) * n,
                  out->data.begin() + i * n);
    }
    auto tn = table.ptr();
    return finish(std::move(out), {table}, [tn, ids, n](TensorNode& self) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < n; ++j)
                tn->grad[size_t(ids[i]) * n + j] += self.grad[i * n + j];
    });
}

Tensor normalize_rows(const Tensor& a) {
    const int m = a.rows(), n = a.cols();
    auto out = make_node(m, n);
    std::vector<float> inv_norm(m);
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += double(a.at(i, j)) * a.at(i, j);
        inv_norm[i] = float(1.0 / std::max(std::sqrt(s), 1e-12));
        for (int j = 0; j < n; ++j) out->data[size_t(i) * n + j] = a.at(i, j) * inv_norm[i];
    }
    auto an = a.ptr();
    return finish(std::move(out), {a}, [an, m, n, inv_norm](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < m; ++i) {
            const float* y = self.data.data() + size_t(i) * n;
            const float* g = self.grad.data() + size_t(i) * n;
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += double(g[j]) * y[j];
            float* dx = an->grad.data() + size_t(i) * n;
            for (int j = 0; j < n; ++j) dx[j] += inv_norm[i] * (g[j] - y[j] * float(dot));
        }
    });
}

Tensor kl_div(const Tensor& p, const Tensor& q, float eps) {
    if (p.size() != q.size())
        throw DimensionError("kl_div: length mismatch " + p.shape_str() + " vs " + q.shape_str());
    if (eps <= 0.0f) throw ValidationError("kl_div: eps must be positive");
    double acc = 0.0;
    for (size_t i = 0; i < p.size(); ++i)
        acc += double(p.data()[i]) *
               std::log((double(p.data()[i]) + eps) / (double(q.data()[i]) + eps));
    auto out = make_node(1, 1);
    out->data[0] = float(acc);
    auto pn = p.ptr(), qn = q.ptr();
    return finish(std::move(out), {p, q}, [pn, qn, eps](TensorNode& self) {
        const float g = self.grad[0];
        if (pn->requires_grad) {
            pn->ensure_grad();
            for (size_t i = 0; i < pn->size(); ++i) {
                const float pi = pn->data[i], qi = qn->data[i];
                pn->grad[i] += g * (std::log((pi + eps) / (qi + eps)) + pi / (pi + eps));
            }
        }
        if (qn->requires_grad) {
            qn->ensure_grad();
            for (size_t i = 0; i < qn->size(); ++i)
                qn->grad[i] -= g * pn->data[i] / (qn->data[i] + eps);
        }
    });
}

}  // namespace cada
