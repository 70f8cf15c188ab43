#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ppap/optim.hpp"
#include "ppap/param_store.hpp"
#include "ppap/tensor.hpp"

namespace ppap {

// f(dl) = exp(-k * dl^2); k > 0
double gaussian_scale(double loss_delta, double k);

enum class SpikeTrigger { positive, absolute };

struct BlendConfig {
    double r = 1.0;            // fraction of the raw update kept unmodulated
    float default_score = 1.0f; // score for parameters absent from the profile
};

// Finalized per-parameter flexibility scores in [0,1]; immutable.
class PlateauProfile {
public:
    PlateauProfile() = default;
    PlateauProfile(double k, std::string task_id, std::int64_t steps, std::map<std::string, Tensor> scores);

    double k() const { return k_; }
    const std::string& task_id() const { return task_id_; }
    std::int64_t steps() const { return steps_; } // in-memory provenance only
    const std::map<std::string, Tensor>& scores() const { return scores_; }
    const Tensor* find(const std::string& name) const;

    // binary round-trip; scores and metadata are bit-exact
    void save(const std::string& path) const;
    static PlateauProfile load(const std::string& path);

private:
    double k_ = 0.0;
    std::string task_id_;
    std::int64_t steps_ = 0;
    std::map<std::string, Tensor> scores_;
};

// Online per-parameter activity statistics. One global effective step count N
// is shared by all parameters (reductions apply uniformly); S, mu, SSD are
// per scalar in f64.
class ActivityAccumulator {
public:
    explicit ActivityAccumulator(double k, SpikeTrigger trigger = SpikeTrigger::positive);

    // registers every currently-trainable parameter; resets statistics
    void attach(const ParamStore& ps);

    double k() const { return k_; }
    double sigma_thresh() const;

    // One observed training step: the applied updates, the gradients still in
    // ps, and the same-batch loss delta. Spike reduction precedes this step's
    // accumulation.
    void observe(const ParamStore& ps, const std::map<std::string, Tensor>& updates, double loss_delta);

    std::int64_t effective_n() const { return n_; }
    std::int64_t raw_steps() const { return raw_steps_; }
    bool finalized() const { return finalized_; }

    // test introspection
    const std::vector<double>& S(const std::string& name) const;
    const std::vector<double>& mu(const std::string& name) const;
    const std::vector<double>& ssd(const std::string& name) const;

    // global min-max of S and sigma, merged, re-normalized; marks this
    // accumulator finalized (observe afterwards is an error)
    PlateauProfile finalize(const std::string& task_id);

private:
    double k_;
    SpikeTrigger trigger_;
    std::map<std::string, std::vector<double>> s_, mu_, ssd_;
    std::map<std::string, std::vector<int>> shapes_;
    std::int64_t n_ = 0;
    std::int64_t raw_steps_ = 0;
    bool finalized_ = false;
};

// r*u + (1-r)*u*P elementwise; r=1 leaves updates bit-identical
UpdateHook make_ppap_hook(const PlateauProfile& profile, const BlendConfig& blend);

enum class CombineRule { latest, min, product };

// Elementwise combination over the union of parameter names; entries missing
// from a profile contribute default_score.
PlateauProfile combine_profiles(const std::vector<const PlateauProfile*>& profiles, CombineRule rule,
                                float default_score = 1.0f);

} // namespace ppap
