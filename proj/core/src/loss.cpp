#include "ppap/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace ppap {

namespace {

void validate(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw std::invalid_argument("logits must be [n,c], got " + shape_str(logits.shape));
    const int n = logits.dim(0), c = logits.dim(1);
    if (n == 0 || static_cast<std::size_t>(n) != labels.size())
        throw std::invalid_argument("label count " + std::to_string(labels.size()) + " does not match batch " + std::to_string(n));
    for (int y : labels)
        if (y < 0 || y >= c) throw std::invalid_argument("label " + std::to_string(y) + " out of range for " + std::to_string(c) + " classes");
}

} // namespace

double softmax_ce(const Tensor& logits, const std::vector<int>& labels, Tensor* dlogits) {
    validate(logits, labels);
    const int n = logits.dim(0), c = logits.dim(1);
    if (dlogits) *dlogits = Tensor::zeros({n, c});
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const float* row = logits.data.data() + static_cast<std::size_t>(i) * c;
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
        const double lse = mx + std::log(sum);
        loss += lse - static_cast<double>(row[labels[static_cast<std::size_t>(i)]]);
        if (dlogits) {
            float* drow = dlogits->data.data() + static_cast<std::size_t>(i) * c;
            for (int j = 0; j < c; ++j) {
                const double p = std::exp(static_cast<double>(row[j]) - lse);
                const double target = (j == labels[static_cast<std::size_t>(i)]) ? 1.0 : 0.0;
                drow[j] = static_cast<float>((p - target) / n);
            }
        }
    }
    loss /= n;
    if (!std::isfinite(loss)) throw std::runtime_error("non-finite loss in softmax cross-entropy");
    return loss;
}

Tensor softmax_dlogits_persample(const Tensor& logits, const std::vector<int>& labels) {
    validate(logits, labels);
    const int n = logits.dim(0), c = logits.dim(1);
    Tensor d = Tensor::zeros({n, c});
    for (int i = 0; i < n; ++i) {
        const float* row = logits.data.data() + static_cast<std::size_t>(i) * c;
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
        const double lse = mx + std::log(sum);
        float* drow = d.data.data() + static_cast<std::size_t>(i) * c;
        for (int j = 0; j < c; ++j) {
            const double p = std::exp(static_cast<double>(row[j]) - lse);
            drow[j] = static_cast<float>(j == labels[static_cast<std::size_t>(i)] ? p - 1.0 : p);
        }
    }
    return d;
}

double accuracy(const Tensor& logits, const std::vector<int>& labels) {
    validate(logits, labels);
    const int n = logits.dim(0), c = logits.dim(1);
    int correct = 0;
    for (int i = 0; i < n; ++i) {
        const float* row = logits.data.data() + static_cast<std::size_t>(i) * c;
        int best = 0;
        for (int j = 1; j < c; ++j)
            if (row[j] > row[best]) best = j;
        if (best == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / n;
}

} // namespace ppap
