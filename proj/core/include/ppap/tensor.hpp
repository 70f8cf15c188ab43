#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ppap {

// Dense row-major float32 tensor. Shapes are small vectors of positive dims.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<int> shp, std::vector<float> vals);

    static Tensor zeros(std::vector<int> shp);
    static Tensor full(std::vector<int> shp, float value);

    std::size_t size() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    // 2D accessors (row-major)
    float& at(int r, int c) { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(shape[1]) + static_cast<std::size_t>(c)]; }
    float at(int r, int c) const { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(shape[1]) + static_cast<std::size_t>(c)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
    void fill(float value);
};

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

} // namespace ppap
