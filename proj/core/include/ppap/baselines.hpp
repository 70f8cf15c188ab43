#pragma once

#include <map>
#include <string>
#include <vector>

#include "ppap/model.hpp"
#include "ppap/param_store.hpp"
#include "ppap/rng.hpp"
#include "ppap/tensor.hpp"

namespace ppap {

struct ImportanceMap {
    enum class Method { si, ewc };
    Method method = Method::si;
    double strength = 0.0; // c for SI, lambda for EWC
    double xi = 0.0;       // SI damping
    std::map<std::string, std::vector<double>> omega; // importance, >= 0
    std::map<std::string, Tensor> anchor;             // theta* values
};

// Path-integral importance tracker: omega_w += -grad_w * dtheta_w per step.
// Attach before training starts; consolidate once the task ends.
class SiTracker {
public:
    // snapshots theta_start over currently-trainable parameters
    void attach(const ParamStore& ps);
    void observe(const ParamStore& ps, const std::map<std::string, Tensor>& updates);
    // Omega = max(omega,0) / ((theta_end - theta_start)^2 + xi); anchors are
    // the current values
    ImportanceMap consolidate(const ParamStore& ps, double xi, double strength) const;

    const std::vector<double>& omega(const std::string& name) const;

private:
    std::map<std::string, std::vector<double>> omega_;
    std::map<std::string, Tensor> theta_start_;
};

// Diagonal empirical Fisher over at most max_samples drawn without
// replacement; anchors are the current values.
ImportanceMap ewc_fisher(Model& model, const Tensor& x, const std::vector<int>& labels,
                         int max_samples, Rng& rng, double lambda);

// Adds 2*c*Omega*(theta-theta*) (SI) or lambda*F*(theta-theta*) (EWC) to the
// grads of trainable parameters present in the map. Exact no-op at strength 0.
void add_penalty_gradient(const ImportanceMap& map, ParamStore& ps);

} // namespace ppap
