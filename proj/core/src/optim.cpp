#include "ppap/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace ppap {

std::map<std::string, Tensor> Optimizer::compute_raw_update(ParamStore& ps) {
    begin_step();
    std::map<std::string, Tensor> updates;
    for (auto& [name, p] : ps.entries()) {
        if (!p.trainable) continue;
        if (!p.grad_touched)
            throw std::runtime_error("no gradient for trainable parameter " + name);
        Tensor u = Tensor::zeros(p.value.shape);
        update_for(name, p.grad, u);
        updates.emplace(name, std::move(u));
    }
    return updates;
}

void Optimizer::apply_update(ParamStore& ps, std::map<std::string, Tensor>& updates, const UpdateHook& hook) {
    for (auto& [name, u] : updates) {
        Param& p = ps.at(name);
        if (hook) {
            const std::vector<int> shape_before = u.shape;
            hook(name, u, p.grad);
            if (u.shape != shape_before)
                throw std::runtime_error("update hook changed the shape of " + name);
        }
        for (std::size_t i = 0; i < u.data.size(); ++i) p.value.data[i] += u.data[i];
    }
    last_ = std::move(updates);
    updates.clear();
}

void Optimizer::step(ParamStore& ps, const UpdateHook& hook) {
    auto updates = compute_raw_update(ps);
    apply_update(ps, updates, hook);
}

SgdMomentum::SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {
    if (lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must be in [0,1)");
}

void SgdMomentum::update_for(const std::string& name, const Tensor& grad, Tensor& out) {
    auto& v = velocity_[name];
    if (v.empty()) v.assign(grad.size(), 0.0);
    if (v.size() != grad.size()) throw std::runtime_error("velocity shape mismatch for " + name);
    for (std::size_t i = 0; i < grad.size(); ++i) {
        v[i] = momentum_ * v[i] + static_cast<double>(grad.data[i]);
        out.data[i] = static_cast<float>(-lr_ * v[i]);
    }
}

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    if (lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw std::invalid_argument("betas must be in [0,1)");
    if (eps <= 0.0) throw std::invalid_argument("eps must be positive");
}

void Adam::reset() {
    t_ = 0;
    m_.clear();
    v_.clear();
}

void Adam::update_for(const std::string& name, const Tensor& grad, Tensor& out) {
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
        m.assign(grad.size(), 0.0);
        v.assign(grad.size(), 0.0);
    }
    if (m.size() != grad.size()) throw std::runtime_error("moment shape mismatch for " + name);
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < grad.size(); ++i) {
        const double g = static_cast<double>(grad.data[i]);
        m[i] = b1_ * m[i] + (1.0 - b1_) * g;
        v[i] = b2_ * v[i] + (1.0 - b2_) * g * g;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        out.data[i] = static_cast<float>(-lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
}

} // namespace ppap
