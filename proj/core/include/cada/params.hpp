#pragma once

#include <string>
#include <vector>

#include "cada/tensor.hpp"

namespace cada {

// Named trainable tensor. Two parameters aliasing the same storage (shared
// weights) carry different names but the same underlying TensorNode.
struct Parameter {
    std::string name;
    Tensor tensor;
};

class ParamRegistry {
  public:
    void add(const std::string& name, const Tensor& t);
    void add_all(const ParamRegistry& other, const std::string& prefix);

    const std::vector<Parameter>& all() const { return params_; }
    // First-registered parameter per distinct storage.
    std::vector<Parameter> unique() const;
    // (alias, canonical) name pairs for every non-first registration.
    std::vector<std::pair<std::string, std::string>> aliases() const;

    const Parameter* find(const std::string& name) const;
    void zero_grad();
    size_t total_unique_values() const;

  private:
    std::vector<Parameter> params_;
};

}  // namespace cada
