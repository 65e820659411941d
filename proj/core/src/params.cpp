#include "cada/params.hpp"

#include <unordered_map>
#include <unordered_set>

namespace cada {

void ParamRegistry::add(const std::string& name, const Tensor& t) {
    if (!t.requires_grad())
        throw ValidationError("parameter '" + name + "' does not require grad");
    for (const auto& p : params_)
        if (p.name == name) throw ValidationError("duplicate parameter name '" + name + "'");
    params_.push_back({name, t});
}

void ParamRegistry::add_all(const ParamRegistry& other, const std::string& prefix) {
    for (const auto& p : other.params_) add(prefix + p.name, p.tensor);
}

std::vector<Parameter> ParamRegistry::unique() const {
    std::vector<Parameter> out;
    std::unordered_set<const TensorNode*> seen;
    for (const auto& p : params_)
        if (seen.insert(p.tensor.node()).second) out.push_back(p);
    return out;
}

std::vector<std::pair<std::string, std::string>> ParamRegistry::aliases() const {
    std::vector<std::pair<std::string, std::string>> out;
    std::unordered_map<const TensorNode*, std::string> first;
    for (const auto& p : params_) {
        auto [it, inserted] = first.insert({p.tensor.node(), p.name});
        if (!inserted) out.push_back({p.name, it->second});
    }
    return out;
}

const Parameter* ParamRegistry::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

void ParamRegistry::zero_grad() {
    for (auto& p : unique()) p.tensor.zero_grad();
}

size_t ParamRegistry::total_unique_values() const {
    size_t n = 0;
    for (const auto& p : unique()) n += p.tensor.size();
    return n;
}

}  // namespace cada
