#include "ppap/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace ppap {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dims must be positive, got " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(std::vector<int> shp, std::vector<float> vals) : shape(std::move(shp)), data(std::move(vals)) {
    if (shape_numel(shape) != data.size())
        throw std::invalid_argument("tensor shape " + shape_str(shape) + " does not match data length " + std::to_string(data.size()));
}

Tensor Tensor::zeros(std::vector<int> shp) {
    const std::size_t n = shape_numel(shp);
    Tensor t;
    t.shape = std::move(shp);
    t.data.assign(n, 0.0f);
    return t;
}

Tensor Tensor::full(std::vector<int> shp, float value) {
    Tensor t = zeros(std::move(shp));
    t.fill(value);
    return t;
}

bool Tensor::all_finite() const {
    for (float v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(float value) {
    for (float& v : data) v = value;
}

} // namespace ppap
