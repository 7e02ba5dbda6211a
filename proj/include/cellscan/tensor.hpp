#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "cellscan/real.hpp"
#include "cellscan/rng.hpp"

namespace cellscan {

// Dense n-dimensional array of reals, row-major (last index fastest).
// Every image, activation, weight and gradient in the stack lives in one
// of these. No broadcasting: shapes must match exactly.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<std::size_t> shape, std::vector<real> data);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_[axis]; }
    std::size_t size() const { return data_.size(); }

    real* data() { return data_.data(); }
    const real* data() const { return data_.data(); }
    real& operator[](std::size_t i) { return data_[i]; }
    real operator[](std::size_t i) const { return data_[i]; }

    // Rank-2 accessors used by the dense/matmul paths.
    real& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    real at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    std::vector<std::size_t> shape_;
    std::vector<real> data_;
};

enum class BinOp { add, sub, mul };

std::size_t shape_numel(const std::vector<std::size_t>& shape);

// All-zero tensor of the given shape. Shape entries must be >= 1 and the
// shape non-empty.
Tensor zeros(const std::vector<std::size_t>& shape);

// Tensor filled with a constant.
Tensor full(const std::vector<std::size_t>& shape, real value);

// Elementwise add/sub/mul of two identically shaped tensors.
Tensor zip_map(const Tensor& a, const Tensor& b, BinOp op);

// Standard matrix product of rank-2 tensors [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);

// Same data, new shape; element counts must agree.
Tensor reshape(const Tensor& t, const std::vector<std::size_t>& new_shape);

// I.i.d. uniform on [-b, b] with b = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Rng& rng, const std::vector<std::size_t>& shape,
                      std::size_t fan_in, std::size_t fan_out);

} // namespace cellscan
