#include "ppap/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ppap/loss.hpp"

namespace ppap {

namespace {

std::vector<std::string> default_head_names(std::size_t n) {
    std::vector<std::string> names;
    names.reserve(n);
    for (std::size_t i = 0; i < n; ++i) names.push_back("task" + std::to_string(i));
    return names;
}

} // namespace

ModelSpec build_mlp(const std::vector<int>& layer_dims) {
    if (layer_dims.size() < 2) throw std::invalid_argument("mlp needs at least input and output dims");
    std::vector<int> backbone(layer_dims.begin(), layer_dims.end() - 1);
    return build_mlp_multihead(backbone, {layer_dims.back()});
}

ModelSpec build_mlp_multihead(const std::vector<int>& backbone_dims, const std::vector<int>& head_dims) {
    if (backbone_dims.empty()) throw std::invalid_argument("mlp backbone needs at least the input dim");
    if (head_dims.empty()) throw std::invalid_argument("model needs at least one head");
    ModelSpec spec;
    spec.input_shape = {backbone_dims[0]};
    for (std::size_t i = 0; i + 1 < backbone_dims.size(); ++i) {
        spec.backbone.push_back({LayerDesc::Kind::dense, backbone_dims[i], backbone_dims[i + 1], 0, 0.0});
        spec.backbone.push_back({LayerDesc::Kind::relu, 0, 0, 0, 0.0});
    }
    spec.feature_dim = backbone_dims.back();
    spec.head_dims = head_dims;
    spec.head_names = default_head_names(head_dims.size());
    return spec;
}

ModelSpec build_cnn_multihead(const std::vector<int>& input_shape, const std::vector<int>& head_dims) {
    if (input_shape.size() != 3) throw std::invalid_argument("cnn input shape must be [c,h,w]");
    if (head_dims.empty()) throw std::invalid_argument("model needs at least one head");
    const int c = input_shape[0], h = input_shape[1], w = input_shape[2];
    if (h % 4 != 0 || w % 4 != 0) throw std::invalid_argument("cnn input sides must be divisible by 4");
    ModelSpec spec;
    spec.input_shape = input_shape;
    using K = LayerDesc::Kind;
    spec.backbone = {
        {K::conv, c, 32, 3, 0.0},  {K::relu, 0, 0, 0, 0.0},
        {K::conv, 32, 32, 3, 0.0}, {K::relu, 0, 0, 0, 0.0},
        {K::maxpool2, 0, 0, 0, 0.0},
        {K::dropout, 0, 0, 0, 0.25},
        {K::conv, 32, 64, 3, 0.0}, {K::relu, 0, 0, 0, 0.0},
        {K::conv, 64, 64, 3, 0.0}, {K::relu, 0, 0, 0, 0.0},
        {K::maxpool2, 0, 0, 0, 0.0},
        {K::dropout, 0, 0, 0, 0.25},
        {K::flatten, 0, 0, 0, 0.0},
        {K::dense, 64 * (h / 4) * (w / 4), 512, 0, 0.0}, {K::relu, 0, 0, 0, 0.0},
        {K::dropout, 0, 0, 0, 0.5},
    };
    spec.feature_dim = 512;
    spec.head_dims = head_dims;
    spec.head_names = default_head_names(head_dims.size());
    return spec;
}

ModelSpec build_cnn6(const std::vector<int>& input_shape, const std::vector<int>& head_dims) {
    if (input_shape.size() != 3) throw std::invalid_argument("cnn input shape must be [c,h,w]");
    if (head_dims.empty()) throw std::invalid_argument("model needs at least one head");
    const int c = input_shape[0], h = input_shape[1], w = input_shape[2];
    if (h % 8 != 0 || w % 8 != 0) throw std::invalid_argument("cnn6 input sides must be divisible by 8");
    ModelSpec spec;
    spec.input_shape = input_shape;
    using K = LayerDesc::Kind;
    spec.backbone = {
        {K::conv, c, 32, 3, 0.0},   {K::relu, 0, 0, 0, 0.0},
        {K::conv, 32, 32, 3, 0.0},  {K::relu, 0, 0, 0, 0.0},
        {K::maxpool2, 0, 0, 0, 0.0},
        {K::conv, 32, 64, 3, 0.0},  {K::relu, 0, 0, 0, 0.0},
        {K::conv, 64, 64, 3, 0.0},  {K::relu, 0, 0, 0, 0.0},
        {K::maxpool2, 0, 0, 0, 0.0},
        {K::conv, 64, 128, 3, 0.0}, {K::relu, 0, 0, 0, 0.0},
        {K::conv, 128, 128, 3, 0.0},{K::relu, 0, 0, 0, 0.0},
        {K::maxpool2, 0, 0, 0, 0.0},
        {K::flatten, 0, 0, 0, 0.0},
        {K::dense, 128 * (h / 8) * (w / 8), 128, 0, 0.0}, {K::relu, 0, 0, 0, 0.0},
    };
    spec.feature_dim = 128;
    spec.head_dims = head_dims;
    spec.head_names = default_head_names(head_dims.size());
    return spec;
}

Model::Model(const ModelSpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed) {
    if (spec.head_dims.empty()) throw std::invalid_argument("model needs at least one head");
    if (spec.head_names.size() != spec.head_dims.size())
        throw std::invalid_argument("head_names and head_dims length mismatch");
    int fc = 0, conv = 0, aux = 0;
    for (const LayerDesc& d : spec.backbone) {
        switch (d.kind) {
            case LayerDesc::Kind::dense:
                backbone_.push_back(std::make_unique<DenseLayer>(store_, rng_, "fc" + std::to_string(fc++), d.a, d.b));
                break;
            case LayerDesc::Kind::conv:
                backbone_.push_back(std::make_unique<Conv2dLayer>(store_, rng_, "conv" + std::to_string(conv++), d.a, d.b, d.c));
                break;
            case LayerDesc::Kind::relu:
                backbone_.push_back(std::make_unique<ReluLayer>("relu" + std::to_string(aux++)));
                break;
            case LayerDesc::Kind::maxpool2:
                backbone_.push_back(std::make_unique<MaxPool2x2Layer>("pool" + std::to_string(aux++)));
                break;
            case LayerDesc::Kind::dropout:
                backbone_.push_back(std::make_unique<DropoutLayer>(&rng_, "drop" + std::to_string(aux++), d.p));
                break;
            case LayerDesc::Kind::flatten:
                backbone_.push_back(std::make_unique<FlattenLayer>("flat" + std::to_string(aux++)));
                break;
        }
    }
    for (std::size_t i = 0; i < spec.head_dims.size(); ++i)
        heads_.push_back(std::make_unique<DenseLayer>(store_, rng_, "head" + std::to_string(i), spec.feature_dim, spec.head_dims[i]));
    activate_head(0);
}

Tensor Model::forward(const Tensor& x, bool train) {
    if (x.size() == 0 || x.dim(0) == 0) throw std::invalid_argument("empty batch");
    Tensor h = x;
    for (auto& layer : backbone_) h = layer->forward(h, train);
    h = heads_[static_cast<std::size_t>(active_)]->forward(h, train);
    backward_ready_ = true;
    return h;
}

void Model::backward(const Tensor& dlogits) {
    if (!backward_ready_) throw std::logic_error("backward without a fresh forward");
    backward_ready_ = false;
    Tensor g = heads_[static_cast<std::size_t>(active_)]->backward(dlogits);
    for (auto it = backbone_.rbegin(); it != backbone_.rend(); ++it) g = (*it)->backward(g);
}

Tensor Model::features(const Tensor& x) {
    if (x.size() == 0 || x.dim(0) == 0) throw std::invalid_argument("empty batch");
    Tensor h = x;
    for (auto& layer : backbone_) h = layer->forward(h, false);
    return h;
}

void Model::activate_head(const std::string& name) {
    const int idx = head_index(name);
    if (idx < 0) throw std::invalid_argument("unknown head: " + name);
    activate_head(idx);
}

void Model::activate_head(int idx) {
    if (idx < 0 || idx >= n_heads()) throw std::invalid_argument("head index out of range: " + std::to_string(idx));
    active_ = idx;
    for (int i = 0; i < n_heads(); ++i)
        store_.set_trainable_prefix("head" + std::to_string(i) + ".", i == idx);
}

const std::string& Model::head_name(int idx) const {
    return spec_.head_names.at(static_cast<std::size_t>(idx));
}

int Model::head_index(const std::string& name) const {
    for (std::size_t i = 0; i < spec_.head_names.size(); ++i)
        if (spec_.head_names[i] == name) return static_cast<int>(i);
    return -1;
}

void Model::reinit_head(int idx, Rng& rng) {
    if (idx < 0 || idx >= n_heads()) throw std::invalid_argument("head index out of range: " + std::to_string(idx));
    heads_[static_cast<std::size_t>(idx)]->reinit(rng);
}

std::map<std::string, std::vector<double>> Model::curvature_raw(const Tensor& x, const std::vector<int>& labels) {
    std::map<std::string, std::vector<double>> out;
    if (x.size() == 0 || x.dim(0) == 0) throw std::invalid_argument("empty batch");
    Tensor h = x;
    for (auto& layer : backbone_) h = layer->forward(h, false);
    Tensor logits = heads_[static_cast<std::size_t>(active_)]->forward(h, false);
    Tensor d = softmax_dlogits_persample(logits, labels);
    Tensor g = heads_[static_cast<std::size_t>(active_)]->backward_fisher(d, out);
    for (auto it = backbone_.rbegin(); it != backbone_.rend(); ++it) g = (*it)->backward_fisher(g, out);
    backward_ready_ = false;
    return out;
}

void Model::set_mask_replay(bool on) {
    for (auto& layer : backbone_) layer->set_mask_replay(on);
}

FdReport finite_diff_check(Model& model, const Tensor& x, const std::vector<int>& labels,
                           double h, double tol, double denom_floor) {
    FdReport report;
    ParamStore& ps = model.store();

    auto loss_at = [&]() {
        Tensor logits = model.forward(x, true);
        return softmax_ce(logits, labels);
    };

    // analytic pass
    ps.zero_grads();
    Tensor dlogits;
    Tensor logits = model.forward(x, true);
    const double base = softmax_ce(logits, labels, &dlogits);
    (void)base;
    model.backward(dlogits);

    report.pass = true;
    for (auto& [name, p] : ps.entries()) {
        if (!p.trainable) continue;
        double worst = 0.0;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const float orig = p.value.data[i];
            p.value.data[i] = static_cast<float>(orig + h);
            const double lp = loss_at();
            p.value.data[i] = static_cast<float>(orig - h);
            const double lm = loss_at();
            p.value.data[i] = orig;
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = static_cast<double>(p.grad.data[i]);
            double rel = 0.0;
            if (std::abs(analytic) >= 1e-12 || std::abs(numeric) >= 1e-12) {
                const double denom = std::max({std::abs(analytic), std::abs(numeric), denom_floor});
                rel = std::abs(analytic - numeric) / denom;
            }
            worst = std::max(worst, rel);
        }
        report.per_param.emplace_back(name, worst);
        report.max_rel_err = std::max(report.max_rel_err, worst);
        if (worst >= tol) report.pass = false;
    }
    return report;
}

bool fd_margins_ok(Model& model, const Tensor& x, double eps, bool train) {
    const auto& layers = model.backbone_layers();
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Tensor next = layers[i]->forward(h, train);
        if (i + 1 < layers.size()) {
            if (dynamic_cast<ReluLayer*>(layers[i + 1].get())) {
                for (float v : next.data)
                    if (std::fabs(static_cast<double>(v)) < eps) return false;
            } else if (dynamic_cast<MaxPool2x2Layer*>(layers[i + 1].get())) {
                const int n = next.dim(0), c = next.dim(1), hh = next.dim(2), ww = next.dim(3);
                const float* d = next.data.data();
                for (int img = 0; img < n; ++img)
                    for (int ch = 0; ch < c; ++ch) {
                        const float* plane = d + (static_cast<std::size_t>(img) * c + ch) * hh * ww;
                        for (int r = 0; r + 1 < hh; r += 2)
                            for (int col = 0; col + 1 < ww; col += 2) {
                                float w[4] = {plane[r * ww + col], plane[r * ww + col + 1],
                                              plane[(r + 1) * ww + col], plane[(r + 1) * ww + col + 1]};
                                std::sort(w, w + 4);
                                // a tie between exactly-clamped zeros is stable;
                                // any other close pair of competitors is a kink
                                if (!(w[3] == 0.0f && w[2] == 0.0f) &&
                                    static_cast<double>(w[3]) - static_cast<double>(w[2]) < eps)
                                    return false;
                            }
                    }
            }
        }
        h = std::move(next);
    }
    return true;
}

} // namespace ppap
