#include "ppap/param_store.hpp"

#include <stdexcept>

namespace ppap {

Param& ParamStore::add(const std::string& name, Tensor init) {
    if (params_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    Param p;
    p.grad = Tensor::zeros(init.shape);
    p.value = std::move(init);
    auto [it, ok] = params_.emplace(name, std::move(p));
    (void)ok;
    return it->second;
}

Param& ParamStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

Param* ParamStore::find(const std::string& name) {
    auto it = params_.find(name);
    return it == params_.end() ? nullptr : &it->second;
}

bool ParamStore::contains(const std::string& name) const {
    return params_.count(name) != 0;
}

std::size_t ParamStore::trainable_scalars() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_)
        if (p.trainable) n += p.value.size();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [name, p] : params_) {
        p.grad.fill(0.0f);
        p.grad_touched = false;
    }
}

void ParamStore::set_trainable_all(bool trainable) {
    for (auto& [name, p] : params_) p.trainable = trainable;
}

int ParamStore::set_trainable_prefix(const std::string& prefix, bool trainable) {
    int matched = 0;
    for (auto& [name, p] : params_) {
        if (name.rfind(prefix, 0) == 0) {
            p.trainable = trainable;
            ++matched;
        }
    }
    return matched;
}

std::map<std::string, Tensor> ParamStore::snapshot_values() const {
    std::map<std::string, Tensor> snap;
    for (const auto& [name, p] : params_) snap.emplace(name, p.value);
    return snap;
}

void ParamStore::restore_values(const std::map<std::string, Tensor>& snap) {
    for (const auto& [name, v] : snap) {
        Param& p = at(name);
        if (!p.value.same_shape(v)) throw std::invalid_argument("snapshot shape mismatch for " + name);
        p.value = v;
    }
}

} // namespace ppap
