#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ppap/layers.hpp"
#include "ppap/param_store.hpp"
#include "ppap/rng.hpp"
#include "ppap/tensor.hpp"

namespace ppap {

struct LayerDesc {
    enum class Kind { dense, conv, relu, maxpool2, dropout, flatten };
    Kind kind;
    int a = 0;    // dense: in, conv: in_ch
    int b = 0;    // dense: out, conv: out_ch
    int c = 0;    // conv: kernel size
    double p = 0; // dropout rate
};

// Immutable architecture description; models are built from it per run.
struct ModelSpec {
    std::vector<int> input_shape;        // [d] or [c,h,w]
    std::vector<LayerDesc> backbone;
    std::vector<int> head_dims;          // one dense head per entry
    std::vector<std::string> head_names; // defaults task0..taskN-1
    int feature_dim = 0;                 // backbone output width
};

// dense-ReLU stack; last dim becomes the single head (last layer linear)
ModelSpec build_mlp(const std::vector<int>& layer_dims);
// shared dense-ReLU backbone with one linear head per entry of head_dims
ModelSpec build_mlp_multihead(const std::vector<int>& backbone_dims, const std::vector<int>& head_dims);
// 4 conv layers (32,32,64,64) + dense 512, dropout 0.25/0.25/0.5, multi-head
ModelSpec build_cnn_multihead(const std::vector<int>& input_shape, const std::vector<int>& head_dims);
// deeper 6-conv variant (~0.5M params) for the two-task image protocol
ModelSpec build_cnn6(const std::vector<int>& input_shape, const std::vector<int>& head_dims);

class Model {
public:
    Model(const ModelSpec& spec, std::uint64_t seed);

    // routes through the backbone and the active head
    Tensor forward(const Tensor& x, bool train = false);
    // dlogits from the loss; fills parameter grads, errors if called twice
    void backward(const Tensor& dlogits);
    // eval-mode backbone output (no head)
    Tensor features(const Tensor& x);

    void activate_head(const std::string& name);
    void activate_head(int idx);
    int active_head() const { return active_; }
    int n_heads() const { return static_cast<int>(heads_.size()); }
    const std::string& head_name(int idx) const;
    int head_index(const std::string& name) const; // -1 if unknown
    void reinit_head(int idx, Rng& rng);

    // raw squared-gradient curvature sums over a labeled batch via the active
    // head; caller divides by the sample count
    std::map<std::string, std::vector<double>> curvature_raw(const Tensor& x, const std::vector<int>& labels);

    void set_mask_replay(bool on);

    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }
    const ModelSpec& spec() const { return spec_; }
    const std::vector<std::unique_ptr<Layer>>& backbone_layers() const { return backbone_; }
    Rng& rng() { return rng_; }

private:
    ModelSpec spec_;
    Rng rng_;
    ParamStore store_;
    std::vector<std::unique_ptr<Layer>> backbone_;
    std::vector<std::unique_ptr<DenseLayer>> heads_;
    int active_ = 0;
    bool backward_ready_ = false;
};

struct FdReport {
    double max_rel_err = 0.0;
    bool pass = false;
    std::vector<std::pair<std::string, double>> per_param; // name -> max rel err
};

// Central finite differences vs. analytic gradients on the active head's mean
// cross-entropy. Relative error uses max(|analytic|,|numeric|,denom_floor) as
// denominator; both sides below 1e-12 count as zero error. Stochastic layers
// must be disabled or in replay mode so the loss is deterministic in theta.
FdReport finite_diff_check(Model& model, const Tensor& x, const std::vector<int>& labels,
                           double h, double tol, double denom_floor = 0.1);

// True when no relu input sits within eps of its kink and no 2x2 pool window
// has a top-two gap under eps — i.e. the loss is locally smooth in theta and
// safe for finite differencing. `train` must match how the check will run
// (dropout masks must already be primed and in replay mode when true).
bool fd_margins_ok(Model& model, const Tensor& x, double eps, bool train = false);

} // namespace ppap
