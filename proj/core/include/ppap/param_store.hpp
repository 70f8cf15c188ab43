#pragma once

#include <map>
#include <string>
#include <vector>

#include "ppap/tensor.hpp"

namespace ppap {

struct Param {
    Tensor value;
    Tensor grad;          // same shape, zeroed between steps
    bool trainable = true;
    bool grad_touched = false; // set when backward accumulates into grad
};

// Named parameter collection; the single source of truth for model weights.
// Iteration is name-ordered, so it is deterministic across runs.
class ParamStore {
public:
    // adds a parameter; name must be unique
    Param& add(const std::string& name, Tensor init);

    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    Param* find(const std::string& name);
    bool contains(const std::string& name) const;

    std::map<std::string, Param>& entries() { return params_; }
    const std::map<std::string, Param>& entries() const { return params_; }

    std::size_t count() const { return params_.size(); }
    // total scalar count over trainable entries
    std::size_t trainable_scalars() const;

    void zero_grads();
    void set_trainable_all(bool trainable);
    // flips trainable on every name starting with prefix; returns how many matched
    int set_trainable_prefix(const std::string& prefix, bool trainable);

    std::map<std::string, Tensor> snapshot_values() const;
    void restore_values(const std::map<std::string, Tensor>& snap);

private:
    std::map<std::string, Param> params_;
};

} // namespace ppap
