#include "ppap/baselines.hpp"

#include <algorithm>
#include <stdexcept>

namespace ppap {

void SiTracker::attach(const ParamStore& ps) {
    omega_.clear();
    theta_start_.clear();
    for (const auto& [name, p] : ps.entries()) {
        if (!p.trainable) continue;
        omega_[name].assign(p.value.size(), 0.0);
        theta_start_.emplace(name, p.value);
    }
}

void SiTracker::observe(const ParamStore& ps, const std::map<std::string, Tensor>& updates) {
    if (omega_.empty()) throw std::logic_error("tracker not attached");
    for (auto& [name, om] : omega_) {
        auto it = updates.find(name);
        if (it == updates.end()) throw std::runtime_error("no update for tracked parameter " + name);
        const Tensor& u = it->second;
        const Tensor& g = ps.at(name).grad;
        for (std::size_t i = 0; i < om.size(); ++i)
            om[i] -= static_cast<double>(g.data[i]) * static_cast<double>(u.data[i]);
    }
}

const std::vector<double>& SiTracker::omega(const std::string& name) const {
    auto it = omega_.find(name);
    if (it == omega_.end()) throw std::out_of_range("not tracked: " + name);
    return it->second;
}

ImportanceMap SiTracker::consolidate(const ParamStore& ps, double xi, double strength) const {
    if (xi <= 0.0) throw std::invalid_argument("si damping xi must be positive");
    ImportanceMap map;
    map.method = ImportanceMap::Method::si;
    map.strength = strength;
    map.xi = xi;
    for (const auto& [name, om] : omega_) {
        const Tensor& now = ps.at(name).value;
        const Tensor& start = theta_start_.at(name);
        auto& big = map.omega[name];
        big.resize(om.size());
        for (std::size_t i = 0; i < om.size(); ++i) {
            const double move = static_cast<double>(now.data[i]) - static_cast<double>(start.data[i]);
            big[i] = std::max(om[i], 0.0) / (move * move + xi);
        }
        map.anchor.emplace(name, now);
    }
    return map;
}

ImportanceMap ewc_fisher(Model& model, const Tensor& x, const std::vector<int>& labels,
                         int max_samples, Rng& rng, double lambda) {
    const int n = x.dim(0);
    if (n == 0 || labels.empty()) throw std::invalid_argument("fisher needs a non-empty sample");
    Tensor xs = x;
    std::vector<int> ys = labels;
    if (n > max_samples) {
        const auto perm = rng.permutation(n);
        const int cols = static_cast<int>(x.size() / static_cast<std::size_t>(n));
        Tensor sub = Tensor::zeros([&] {
            std::vector<int> s = x.shape;
            s[0] = max_samples;
            return s;
        }());
        std::vector<int> suby(static_cast<std::size_t>(max_samples));
        for (int i = 0; i < max_samples; ++i) {
            const auto src = static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]);
            std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(src * static_cast<std::size_t>(cols)), cols,
                        sub.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(i) * static_cast<std::size_t>(cols)));
            suby[static_cast<std::size_t>(i)] = labels[src];
        }
        xs = std::move(sub);
        ys = std::move(suby);
    }
    auto raw = model.curvature_raw(xs, ys);
    const double inv_n = 1.0 / static_cast<double>(xs.dim(0));
    ImportanceMap map;
    map.method = ImportanceMap::Method::ewc;
    map.strength = lambda;
    for (auto& [name, f] : raw) {
        for (double& v : f) v *= inv_n;
        map.anchor.emplace(name, model.store().at(name).value);
        map.omega.emplace(name, std::move(f));
    }
    return map;
}

void add_penalty_gradient(const ImportanceMap& map, ParamStore& ps) {
    if (map.strength == 0.0) return;
    const double coef = map.method == ImportanceMap::Method::si ? 2.0 * map.strength : map.strength;
    for (const auto& [name, om] : map.omega) {
        Param* p = ps.find(name);
        if (!p || !p->trainable) continue;
        const Tensor& anchor = map.anchor.at(name);
        for (std::size_t i = 0; i < om.size(); ++i) {
            const double move = static_cast<double>(p->value.data[i]) - static_cast<double>(anchor.data[i]);
            p->grad.data[i] += static_cast<float>(coef * om[i] * move);
        }
    }
}

} // namespace ppap
