#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ppap/param_store.hpp"
#include "ppap/rng.hpp"
#include "ppap/tensor.hpp"

namespace ppap {

// Feed-forward layer with cached activations: forward stores what backward
// needs; backward accumulates parameter gradients and returns dL/dx.
class Layer {
public:
    explicit Layer(std::string label) : label_(std::move(label)) {}
    virtual ~Layer() = default;

    virtual Tensor forward(const Tensor& x, bool train) = 0;
    virtual Tensor backward(const Tensor& dy) = 0;

    // Same input-gradient chain as backward, but instead of touching grads it
    // accumulates squared-factor curvature sums into `fisher` (raw, caller
    // normalizes). Param-free layers reuse backward.
    virtual Tensor backward_fisher(const Tensor& dy, std::map<std::string, std::vector<double>>&) {
        return backward(dy);
    }

    // dropout-only: reuse the previous forward's mask
    virtual void set_mask_replay(bool) {}

    const std::string& label() const { return label_; }

protected:
    std::string label_;
};

class DenseLayer final : public Layer {
public:
    DenseLayer(ParamStore& ps, Rng& rng, const std::string& label, int in_dim, int out_dim);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& dy) override;
    Tensor backward_fisher(const Tensor& dy, std::map<std::string, std::vector<double>>& fisher) override;

    void reinit(Rng& rng);
    int in_dim() const { return in_; }
    int out_dim() const { return out_; }

private:
    Param* w_;
    Param* b_;
    int in_, out_;
    Tensor x_;
};

class Conv2dLayer final : public Layer {
public:
    // stride 1, zero padding (k-1)/2 so spatial size is preserved; k odd
    Conv2dLayer(ParamStore& ps, Rng& rng, const std::string& label, int in_ch, int out_ch, int ksize);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& dy) override;
    Tensor backward_fisher(const Tensor& dy, std::map<std::string, std::vector<double>>& fisher) override;

private:
    Param* w_;
    Param* b_;
    int in_ch_, out_ch_, k_, pad_;
    Tensor x_;
};

class ReluLayer final : public Layer {
public:
    explicit ReluLayer(const std::string& label) : Layer(label) {}
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& dy) override;

private:
    Tensor x_;
};

class MaxPool2x2Layer final : public Layer {
public:
    explicit MaxPool2x2Layer(const std::string& label) : Layer(label) {}
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& dy) override;

private:
    std::vector<int> in_shape_;
    std::vector<std::size_t> argmax_;
};

class DropoutLayer final : public Layer {
public:
    DropoutLayer(Rng* rng, const std::string& label, double p);
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& dy) override;
    void set_mask_replay(bool on) override { replay_ = on; }
    const Tensor& mask() const { return mask_; }

private:
    Rng* rng_;
    double p_;
    bool replay_ = false;
    Tensor mask_; // 0 or 1/(1-p) per element
};

class FlattenLayer final : public Layer {
public:
    explicit FlattenLayer(const std::string& label) : Layer(label) {}
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& dy) override;

private:
    std::vector<int> in_shape_;
};

// He-normal init, fan-in based; biases start at zero
Tensor he_init(Rng& rng, const std::vector<int>& shape, int fan_in);

// throws a numeric error naming the layer when t has NaN/Inf
void check_finite(const Tensor& t, const std::string& label, const char* phase);

} // namespace ppap
