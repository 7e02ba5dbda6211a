#pragma once

#include <cstdint>
#include <vector>

#include "cellscan/tensor.hpp"

namespace cellscan {

// Adam first/second-moment state, one (m, v) pair per parameter tensor plus
// a shared step counter.
struct AdamState {
    double alpha = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t t = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

// Allocates zeroed moments matching the parameter shapes; resets t.
void adam_init(AdamState& state, const std::vector<Tensor*>& params);

// One update:
//   t += 1
//   m = b1*m + (1-b1)*g        v = b2*v + (1-b2)*g^2
//   p -= alpha * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads,
               AdamState& state);

} // namespace cellscan
