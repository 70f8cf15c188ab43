#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "ppap/param_store.hpp"
#include "ppap/tensor.hpp"

namespace ppap {

// Receives the raw step for one parameter and may rewrite it in place; the
// gradient is provided read-only. Must not change the update's shape.
using UpdateHook = std::function<void(const std::string& name, Tensor& update, const Tensor& grad)>;

class Optimizer {
public:
    virtual ~Optimizer() = default;

    // Raw updates (not yet applied) for every trainable parameter. Errors if a
    // trainable parameter never received a gradient this step.
    std::map<std::string, Tensor> compute_raw_update(ParamStore& ps);

    // theta += update, hook applied first when set. A hook that changes an
    // update's shape is a contract violation.
    void apply_update(ParamStore& ps, std::map<std::string, Tensor>& updates, const UpdateHook& hook = {});

    // compute + apply; the applied (post-hook) updates stay readable
    void step(ParamStore& ps, const UpdateHook& hook = {});
    const std::map<std::string, Tensor>& last_updates() const { return last_; }

    virtual void reset() = 0;

protected:
    virtual void begin_step() {}
    virtual void update_for(const std::string& name, const Tensor& grad, Tensor& out) = 0;

private:
    std::map<std::string, Tensor> last_;
};

class SgdMomentum final : public Optimizer {
public:
    explicit SgdMomentum(double lr, double momentum = 0.0);
    void reset() override { velocity_.clear(); }

protected:
    void update_for(const std::string& name, const Tensor& grad, Tensor& out) override;

private:
    double lr_, momentum_;
    std::map<std::string, std::vector<double>> velocity_;
};

class Adam final : public Optimizer {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void reset() override;
    std::int64_t step_count() const { return t_; }

protected:
    void begin_step() override { ++t_; }
    void update_for(const std::string& name, const Tensor& grad, Tensor& out) override;

private:
    double lr_, b1_, b2_, eps_;
    std::int64_t t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

} // namespace ppap
