#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "xlf5/rng.hpp"

namespace xlf5 {

// Dense row-major float tensor with value semantics. Shapes are small
// (rank <= 3 in practice); storage is always contiguous.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::initializer_list<int64_t> shape) : Tensor(std::vector<int64_t>(shape)) {}

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, float value);
    static Tensor randn(std::vector<int64_t> shape, Rng& rng, float stddev = 1.0f);

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim(size_t i) const { return shape_[i]; }
    size_t rank() const { return shape_.size(); }
    int64_t numel() const { return numel_; }
    bool empty() const { return numel_ == 0; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator[](int64_t i) { return data_[size_t(i)]; }
    float operator[](int64_t i) const { return data_[size_t(i)]; }

    // 2-D / 3-D element access
    float& at(int64_t i, int64_t j) { return data_[size_t(i * shape_[1] + j)]; }
    float at(int64_t i, int64_t j) const { return data_[size_t(i * shape_[1] + j)]; }
    float& at(int64_t i, int64_t j, int64_t l) {
        return data_[size_t((i * shape_[1] + j) * shape_[2] + l)];
    }
    float at(int64_t i, int64_t j, int64_t l) const {
        return data_[size_t((i * shape_[1] + j) * shape_[2] + l)];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void fill(float value);

    // Reinterpret as a different shape with identical element count.
    Tensor reshaped(std::vector<int64_t> shape) const;

    std::string shape_str() const;

private:
    std::vector<int64_t> shape_;
    std::vector<float> data_;
    int64_t numel_ = 0;
};

}  // namespace xlf5
