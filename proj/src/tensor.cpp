#include "cellscan/tensor.hpp"

#include <cmath>
#include <string>

#include "cellscan/error.hpp"
#include "cellscan/gemm.hpp"

namespace cellscan {
namespace {

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

void validate_shape(const std::vector<std::size_t>& shape) {
    if (shape.empty())
        throw ShapeError("tensor", "empty shape (rank must be >= 1)");
    for (std::size_t d : shape)
        if (d == 0)
            throw ShapeError("tensor", "zero dimension in shape " + shape_str(shape));
}

} // namespace

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<real> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != shape_numel(shape_))
        throw ShapeError("tensor", "data length " + std::to_string(data_.size()) +
                                       " does not match shape " + shape_str(shape_));
}

Tensor zeros(const std::vector<std::size_t>& shape) {
    validate_shape(shape);
    return Tensor(shape, std::vector<real>(shape_numel(shape), real{0}));
}

Tensor full(const std::vector<std::size_t>& shape, real value) {
    validate_shape(shape);
    return Tensor(shape, std::vector<real>(shape_numel(shape), value));
}

Tensor zip_map(const Tensor& a, const Tensor& b, BinOp op) {
    if (!a.same_shape(b))
        throw ShapeError("tensor", "zip_map shape mismatch " + shape_str(a.shape()) +
                                       " vs " + shape_str(b.shape()));
    std::vector<real> out(a.size());
    const real* pa = a.data();
    const real* pb = b.data();
    switch (op) {
        case BinOp::add:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
            break;
        case BinOp::sub:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] - pb[i];
            break;
        case BinOp::mul:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
            break;
    }
    return Tensor(a.shape(), std::move(out));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("tensor", "matmul needs rank-2 operands, got " +
                                       shape_str(a.shape()) + " and " + shape_str(b.shape()));
    if (a.dim(1) != b.dim(0))
        throw ShapeError("tensor", "matmul inner dimensions disagree: " +
                                       shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Tensor c = zeros({a.dim(0), b.dim(1)});
    gemm_nn(a.dim(0), a.dim(1), b.dim(1), a.data(), b.data(), c.data());
    return c;
}

Tensor reshape(const Tensor& t, const std::vector<std::size_t>& new_shape) {
    validate_shape(new_shape);
    if (shape_numel(new_shape) != t.size())
        throw ShapeError("tensor", "reshape element count mismatch: " +
                                       shape_str(t.shape()) + " -> " + shape_str(new_shape));
    return Tensor(new_shape, std::vector<real>(t.data(), t.data() + t.size()));
}

Tensor glorot_uniform(Rng& rng, const std::vector<std::size_t>& shape,
                      std::size_t fan_in, std::size_t fan_out) {
    validate_shape(shape);
    if (fan_in == 0 || fan_out == 0)
        throw ParamError("tensor", "glorot_uniform fans must be >= 1");
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<real> out(shape_numel(shape));
    for (real& v : out)
        v = static_cast<real>((rng.next_double() * 2.0 - 1.0) * bound);
    return Tensor(shape, std::move(out));
}

} // namespace cellscan
