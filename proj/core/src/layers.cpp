#include "ppap/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace ppap {

namespace {

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const float* A, const float* B, float* C, int M, int K, int N) {
    for (int m = 0; m < M; ++m) {
        const float* a_row = A + static_cast<std::size_t>(m) * K;
        float* c_row = C + static_cast<std::size_t>(m) * N;
        for (int k = 0; k < K; ++k) {
            const float a = a_row[k];
            if (a == 0.0f) continue;
            const float* b_row = B + static_cast<std::size_t>(k) * N;
            for (int n = 0; n < N; ++n) c_row[n] += a * b_row[n];
        }
    }
}

// C[m,n] += A[k,m]^T * B[k,n]
void gemm_tn(const float* A, const float* B, float* C, int M, int K, int N) {
    for (int k = 0; k < K; ++k) {
        const float* a_row = A + static_cast<std::size_t>(k) * M;
        const float* b_row = B + static_cast<std::size_t>(k) * N;
        for (int m = 0; m < M; ++m) {
            const float a = a_row[m];
            if (a == 0.0f) continue;
            float* c_row = C + static_cast<std::size_t>(m) * N;
            for (int n = 0; n < N; ++n) c_row[n] += a * b_row[n];
        }
    }
}

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(const float* A, const float* B, float* C, int M, int K, int N) {
    for (int m = 0; m < M; ++m) {
        const float* a_row = A + static_cast<std::size_t>(m) * K;
        float* c_row = C + static_cast<std::size_t>(m) * N;
        for (int n = 0; n < N; ++n) {
            const float* b_row = B + static_cast<std::size_t>(n) * K;
            float acc = 0.0f;
            for (int k = 0; k < K; ++k) acc += a_row[k] * b_row[k];
            c_row[n] += acc;
        }
    }
}

} // namespace

void check_finite(const Tensor& t, const std::string& label, const char* phase) {
    if (!t.all_finite())
        throw std::runtime_error(std::string("non-finite values in ") + phase + " of layer " + label);
}

Tensor he_init(Rng& rng, const std::vector<int>& shape, int fan_in) {
    Tensor t = Tensor::zeros(shape);
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (float& v : t.data) v = static_cast<float>(rng.normal() * scale);
    return t;
}

// ---- Dense ----

DenseLayer::DenseLayer(ParamStore& ps, Rng& rng, const std::string& label, int in_dim, int out_dim)
    : Layer(label), in_(in_dim), out_(out_dim) {
    if (in_dim <= 0 || out_dim <= 0) throw std::invalid_argument("dense dims must be positive: " + label);
    w_ = &ps.add(label + ".w", he_init(rng, {in_dim, out_dim}, in_dim));
    b_ = &ps.add(label + ".b", Tensor::zeros({out_dim}));
}

void DenseLayer::reinit(Rng& rng) {
    w_->value = he_init(rng, {in_, out_}, in_);
    b_->value.fill(0.0f);
}

Tensor DenseLayer::forward(const Tensor& x, bool) {
    if (x.rank() != 2 || x.dim(1) != in_)
        throw std::invalid_argument("dense " + label_ + " expects [n," + std::to_string(in_) + "], got " + shape_str(x.shape));
    x_ = x;
    const int n = x.dim(0);
    Tensor y = Tensor::zeros({n, out_});
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < out_; ++o) y.at(i, o) = b_->value.data[static_cast<std::size_t>(o)];
    gemm_nn(x.data.data(), w_->value.data.data(), y.data.data(), n, in_, out_);
    check_finite(y, label_, "forward");
    return y;
}

Tensor DenseLayer::backward(const Tensor& dy) {
    const int n = x_.dim(0);
    if (dy.rank() != 2 || dy.dim(0) != n || dy.dim(1) != out_)
        throw std::invalid_argument("dense " + label_ + " backward shape mismatch: " + shape_str(dy.shape));
    if (w_->trainable) {
        gemm_tn(x_.data.data(), dy.data.data(), w_->grad.data.data(), in_, n, out_);
        w_->grad_touched = true;
    }
    if (b_->trainable) {
        for (int i = 0; i < n; ++i)
            for (int o = 0; o < out_; ++o) b_->grad.data[static_cast<std::size_t>(o)] += dy.at(i, o);
        b_->grad_touched = true;
    }
    Tensor dx = Tensor::zeros({n, in_});
    gemm_nt(dy.data.data(), w_->value.data.data(), dx.data.data(), n, out_, in_);
    check_finite(dx, label_, "backward");
    return dx;
}

Tensor DenseLayer::backward_fisher(const Tensor& dy, std::map<std::string, std::vector<double>>& fisher) {
    const int n = x_.dim(0);
    auto& fw = fisher[label_ + ".w"];
    auto& fb = fisher[label_ + ".b"];
    if (fw.empty()) fw.assign(static_cast<std::size_t>(in_) * static_cast<std::size_t>(out_), 0.0);
    if (fb.empty()) fb.assign(static_cast<std::size_t>(out_), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int o = 0; o < out_; ++o) {
            const double d2 = static_cast<double>(dy.at(i, o)) * static_cast<double>(dy.at(i, o));
            fb[static_cast<std::size_t>(o)] += d2;
            for (int c = 0; c < in_; ++c) {
                const double a = static_cast<double>(x_.at(i, c));
                fw[static_cast<std::size_t>(c) * static_cast<std::size_t>(out_) + static_cast<std::size_t>(o)] += a * a * d2;
            }
        }
    }
    Tensor dx = Tensor::zeros({n, in_});
    gemm_nt(dy.data.data(), w_->value.data.data(), dx.data.data(), n, out_, in_);
    return dx;
}

// ---- Conv2d ----

Conv2dLayer::Conv2dLayer(ParamStore& ps, Rng& rng, const std::string& label, int in_ch, int out_ch, int ksize)
    : Layer(label), in_ch_(in_ch), out_ch_(out_ch), k_(ksize), pad_((ksize - 1) / 2) {
    if (ksize <= 0 || ksize % 2 == 0) throw std::invalid_argument("conv kernel must be odd and positive: " + label);
    w_ = &ps.add(label + ".w", he_init(rng, {out_ch, in_ch, ksize, ksize}, in_ch * ksize * ksize));
    b_ = &ps.add(label + ".b", Tensor::zeros({out_ch}));
}

Tensor Conv2dLayer::forward(const Tensor& x, bool) {
    if (x.rank() != 4 || x.dim(1) != in_ch_)
        throw std::invalid_argument("conv " + label_ + " expects [n," + std::to_string(in_ch_) + ",h,w], got " + shape_str(x.shape));
    x_ = x;
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    Tensor y = Tensor::zeros({n, out_ch_, h, w});
    const std::size_t xs_c = static_cast<std::size_t>(h) * w;
    const std::size_t xs_n = static_cast<std::size_t>(in_ch_) * xs_c;
    const std::size_t ys_n = static_cast<std::size_t>(out_ch_) * xs_c;
    for (int i = 0; i < n; ++i) {
        for (int oc = 0; oc < out_ch_; ++oc) {
            float* yp = y.data.data() + i * ys_n + static_cast<std::size_t>(oc) * xs_c;
            const float bias = b_->value.data[static_cast<std::size_t>(oc)];
            for (std::size_t s = 0; s < xs_c; ++s) yp[s] = bias;
            for (int ic = 0; ic < in_ch_; ++ic) {
                const float* xp = x.data.data() + i * xs_n + static_cast<std::size_t>(ic) * xs_c;
                const float* wp = w_->value.data.data() + ((static_cast<std::size_t>(oc) * in_ch_ + ic) * k_) * k_;
                for (int kh = 0; kh < k_; ++kh) {
                    for (int kw = 0; kw < k_; ++kw) {
                        const float wv = wp[kh * k_ + kw];
                        if (wv == 0.0f) continue;
                        const int r0 = std::max(0, pad_ - kh), r1 = std::min(h, h + pad_ - kh);
                        const int c0 = std::max(0, pad_ - kw), c1 = std::min(w, w + pad_ - kw);
                        for (int r = r0; r < r1; ++r) {
                            const float* xrow = xp + static_cast<std::size_t>(r + kh - pad_) * w + (c0 + kw - pad_);
                            float* yrow = yp + static_cast<std::size_t>(r) * w + c0;
                            for (int c = 0; c < c1 - c0; ++c) yrow[c] += wv * xrow[c];
                        }
                    }
                }
            }
        }
    }
    check_finite(y, label_, "forward");
    return y;
}

Tensor Conv2dLayer::backward(const Tensor& dy) {
    const int n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
    if (dy.rank() != 4 || dy.dim(0) != n || dy.dim(1) != out_ch_ || dy.dim(2) != h || dy.dim(3) != w)
        throw std::invalid_argument("conv " + label_ + " backward shape mismatch: " + shape_str(dy.shape));
    const std::size_t sc = static_cast<std::size_t>(h) * w;
    const std::size_t xs_n = static_cast<std::size_t>(in_ch_) * sc;
    const std::size_t ys_n = static_cast<std::size_t>(out_ch_) * sc;
    Tensor dx = Tensor::zeros(x_.shape);
    for (int i = 0; i < n; ++i) {
        for (int oc = 0; oc < out_ch_; ++oc) {
            const float* dyp = dy.data.data() + i * ys_n + static_cast<std::size_t>(oc) * sc;
            if (b_->trainable) {
                double acc = 0.0;
                for (std::size_t s = 0; s < sc; ++s) acc += dyp[s];
                b_->grad.data[static_cast<std::size_t>(oc)] += static_cast<float>(acc);
            }
            for (int ic = 0; ic < in_ch_; ++ic) {
                const float* xp = x_.data.data() + i * xs_n + static_cast<std::size_t>(ic) * sc;
                float* dxp = dx.data.data() + i * xs_n + static_cast<std::size_t>(ic) * sc;
                const std::size_t wbase = (static_cast<std::size_t>(oc) * in_ch_ + ic) * k_ * k_;
                for (int kh = 0; kh < k_; ++kh) {
                    for (int kw = 0; kw < k_; ++kw) {
                        const int r0 = std::max(0, pad_ - kh), r1 = std::min(h, h + pad_ - kh);
                        const int c0 = std::max(0, pad_ - kw), c1 = std::min(w, w + pad_ - kw);
                        if (w_->trainable) {
                            double acc = 0.0;
                            for (int r = r0; r < r1; ++r) {
                                const float* xrow = xp + static_cast<std::size_t>(r + kh - pad_) * w + (c0 + kw - pad_);
                                const float* dyrow = dyp + static_cast<std::size_t>(r) * w + c0;
                                for (int c = 0; c < c1 - c0; ++c) acc += static_cast<double>(xrow[c]) * dyrow[c];
                            }
                            w_->grad.data[wbase + static_cast<std::size_t>(kh) * k_ + kw] += static_cast<float>(acc);
                        }
                        const float wv = w_->value.data[wbase + static_cast<std::size_t>(kh) * k_ + kw];
                        if (wv != 0.0f) {
                            for (int r = r0; r < r1; ++r) {
                                float* dxrow = dxp + static_cast<std::size_t>(r + kh - pad_) * w + (c0 + kw - pad_);
                                const float* dyrow = dyp + static_cast<std::size_t>(r) * w + c0;
                                for (int c = 0; c < c1 - c0; ++c) dxrow[c] += wv * dyrow[c];
                            }
                        }
                    }
                }
            }
        }
    }
    if (w_->trainable) w_->grad_touched = true;
    if (b_->trainable) b_->grad_touched = true;
    check_finite(dx, label_, "backward");
    return dx;
}

Tensor Conv2dLayer::backward_fisher(const Tensor& dy, std::map<std::string, std::vector<double>>& fisher) {
    const int n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
    const std::size_t sc = static_cast<std::size_t>(h) * w;
    const std::size_t xs_n = static_cast<std::size_t>(in_ch_) * sc;
    const std::size_t ys_n = static_cast<std::size_t>(out_ch_) * sc;
    auto& fw = fisher[label_ + ".w"];
    auto& fb = fisher[label_ + ".b"];
    if (fw.empty()) fw.assign(w_->value.size(), 0.0);
    if (fb.empty()) fb.assign(b_->value.size(), 0.0);
    Tensor dx = Tensor::zeros(x_.shape);
    for (int i = 0; i < n; ++i) {
        for (int oc = 0; oc < out_ch_; ++oc) {
            const float* dyp = dy.data.data() + i * ys_n + static_cast<std::size_t>(oc) * sc;
            double acc_b = 0.0;
            for (std::size_t s = 0; s < sc; ++s) acc_b += static_cast<double>(dyp[s]) * dyp[s];
            fb[static_cast<std::size_t>(oc)] += acc_b;
            for (int ic = 0; ic < in_ch_; ++ic) {
                const float* xp = x_.data.data() + i * xs_n + static_cast<std::size_t>(ic) * sc;
                float* dxp = dx.data.data() + i * xs_n + static_cast<std::size_t>(ic) * sc;
                const std::size_t wbase = (static_cast<std::size_t>(oc) * in_ch_ + ic) * k_ * k_;
                for (int kh = 0; kh < k_; ++kh) {
                    for (int kw = 0; kw < k_; ++kw) {
                        const int r0 = std::max(0, pad_ - kh), r1 = std::min(h, h + pad_ - kh);
                        const int c0 = std::max(0, pad_ - kw), c1 = std::min(w, w + pad_ - kw);
                        double acc = 0.0;
                        for (int r = r0; r < r1; ++r) {
                            const float* xrow = xp + static_cast<std::size_t>(r + kh - pad_) * w + (c0 + kw - pad_);
                            const float* dyrow = dyp + static_cast<std::size_t>(r) * w + c0;
                            for (int c = 0; c < c1 - c0; ++c)
                                acc += static_cast<double>(xrow[c]) * xrow[c] * static_cast<double>(dyrow[c]) * dyrow[c];
                        }
                        fw[wbase + static_cast<std::size_t>(kh) * k_ + kw] += acc;
                        const float wv = w_->value.data[wbase + static_cast<std::size_t>(kh) * k_ + kw];
                        if (wv != 0.0f) {
                            for (int r = r0; r < r1; ++r) {
                                float* dxrow = dxp + static_cast<std::size_t>(r + kh - pad_) * w + (c0 + kw - pad_);
                                const float* dyrow = dyp + static_cast<std::size_t>(r) * w + c0;
                                for (int c = 0; c < c1 - c0; ++c) dxrow[c] += wv * dyrow[c];
                            }
                        }
                    }
                }
            }
        }
    }
    return dx;
}

// ---- ReLU ----

Tensor ReluLayer::forward(const Tensor& x, bool) {
    x_ = x;
    Tensor y = x;
    for (float& v : y.data)
        if (v < 0.0f) v = 0.0f;
    check_finite(y, label_, "forward");
    return y;
}

Tensor ReluLayer::backward(const Tensor& dy) {
    if (!dy.same_shape(x_)) throw std::invalid_argument("relu " + label_ + " backward shape mismatch");
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i)
        if (x_.data[i] <= 0.0f) dx.data[i] = 0.0f;
    return dx;
}

// ---- MaxPool 2x2 ----

Tensor MaxPool2x2Layer::forward(const Tensor& x, bool) {
    if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
        throw std::invalid_argument("maxpool " + label_ + " needs [n,c,even,even], got " + shape_str(x.shape));
    in_shape_ = x.shape;
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = h / 2, ow = w / 2;
    Tensor y = Tensor::zeros({n, c, oh, ow});
    argmax_.assign(y.size(), 0);
    const std::size_t sc = static_cast<std::size_t>(h) * w;
    std::size_t oi = 0;
    for (int i = 0; i < n; ++i) {
        for (int ch = 0; ch < c; ++ch) {
            const float* xp = x.data.data() + (static_cast<std::size_t>(i) * c + ch) * sc;
            for (int r = 0; r < oh; ++r) {
                for (int cc = 0; cc < ow; ++cc, ++oi) {
                    const std::size_t base = static_cast<std::size_t>(2 * r) * w + 2 * cc;
                    std::size_t best = base;
                    float bv = xp[base];
                    const std::size_t cands[3] = {base + 1, base + w, base + w + 1};
                    for (std::size_t cand : cands) {
                        if (xp[cand] > bv) {
                            bv = xp[cand];
                            best = cand;
                        }
                    }
                    y.data[oi] = bv;
                    argmax_[oi] = (static_cast<std::size_t>(i) * c + ch) * sc + best;
                }
            }
        }
    }
    check_finite(y, label_, "forward");
    return y;
}

Tensor MaxPool2x2Layer::backward(const Tensor& dy) {
    if (dy.size() != argmax_.size()) throw std::invalid_argument("maxpool " + label_ + " backward shape mismatch");
    Tensor dx = Tensor::zeros(in_shape_);
    for (std::size_t i = 0; i < dy.size(); ++i) dx.data[argmax_[i]] += dy.data[i];
    return dx;
}

// ---- Dropout ----

DropoutLayer::DropoutLayer(Rng* rng, const std::string& label, double p) : Layer(label), rng_(rng), p_(p) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout rate must be in [0,1): " + label);
}

Tensor DropoutLayer::forward(const Tensor& x, bool train) {
    if (!train || p_ == 0.0) return x;
    if (!replay_ || !mask_.same_shape(x)) {
        mask_ = Tensor::zeros(x.shape);
        const float scale = static_cast<float>(1.0 / (1.0 - p_));
        for (float& m : mask_.data) m = (rng_->uniform() < p_) ? 0.0f : scale;
    }
    Tensor y = x;
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] *= mask_.data[i];
    return y;
}

Tensor DropoutLayer::backward(const Tensor& dy) {
    if (mask_.size() == 0 || !mask_.same_shape(dy)) return dy; // eval-mode pass-through
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= mask_.data[i];
    return dx;
}

// ---- Flatten ----

Tensor FlattenLayer::forward(const Tensor& x, bool) {
    in_shape_ = x.shape;
    const int n = x.dim(0);
    const int rest = static_cast<int>(x.size() / static_cast<std::size_t>(n));
    Tensor y = x;
    y.shape = {n, rest};
    return y;
}

Tensor FlattenLayer::backward(const Tensor& dy) {
    Tensor dx = dy;
    dx.shape = in_shape_;
    return dx;
}

} // namespace ppap
