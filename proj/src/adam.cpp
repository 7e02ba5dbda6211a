#include "cellscan/adam.hpp"

#include <cmath>

#include "cellscan/error.hpp"

namespace cellscan {

void adam_init(AdamState& state, const std::vector<Tensor*>& params) {
    state.t = 0;
    state.m.clear();
    state.v.clear();
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const Tensor* p : params) {
        state.m.push_back(zeros(p->shape()));
        state.v.push_back(zeros(p->shape()));
    }
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads,
               AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("nn", "adam_step: parameter/gradient/state counts disagree");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(state.m[i]))
            throw ShapeError("nn", "adam_step: shape mismatch at parameter " + std::to_string(i));

    state.t += 1;
    const real b1 = real(state.beta1), b2 = real(state.beta2);
    const real corr1 = real(1.0 - std::pow(state.beta1, double(state.t)));
    const real corr2 = real(1.0 - std::pow(state.beta2, double(state.t)));
    const real alpha = real(state.alpha), eps = real(state.epsilon);

    for (std::size_t i = 0; i < params.size(); ++i) {
        real* p = params[i]->data();
        const real* g = grads[i]->data();
        real* m = state.m[i].data();
        real* v = state.v[i].data();
        std::size_t n = params[i]->size();
        for (std::size_t j = 0; j < n; ++j) {
            m[j] = b1 * m[j] + (real{1} - b1) * g[j];
            v[j] = b2 * v[j] + (real{1} - b2) * g[j] * g[j];
            real m_hat = m[j] / corr1;
            real v_hat = v[j] / corr2;
            p[j] -= alpha * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

} // namespace cellscan
