#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "cellscan/adam.hpp"
#include "cellscan/layers.hpp"

namespace cellscan {

// Architecture description. The default values are the full stack: four
// conv blocks with a doubling filter schedule and four 512-wide hidden
// blocks on 64x64 inputs. Smaller configurations (fewer blocks, smaller
// inputs) are used by tests.
struct ModelConfig {
    std::size_t input_channels = 3; // 3 = raw RGB, 1 = edge maps
    std::size_t input_size = 64;    // square input, halved by each conv block
    std::vector<std::size_t> conv_filters = {32, 64, 128, 256};
    std::vector<std::size_t> hidden_widths = {512, 512, 512, 512};
    double conv_dropout = 0.2;
    double hidden_dropout = 0.5;
    Activation hidden_activation = Activation::relu;
    std::uint64_t seed = 42;
};

// Layer stack plus its optimizer state. Block order inside the stack is
//   [conv -> act -> maxpool -> batchnorm -> dropout] x conv blocks
//   flatten
//   [dense -> act -> batchnorm -> dropout] x hidden blocks
//   dense(1) -> sigmoid
// which the model file records layer by layer.
class Model {
public:
    ModelConfig config;
    std::vector<std::unique_ptr<Layer>> layers;
    AdamState adam;

    // Full pass; returns probabilities [batch] in (0, 1).
    Tensor forward(const Tensor& x, Phase phase, Rng& rng);
    Tensor forward_eval(const Tensor& x);

    // Chain rule from dL/dp back to every parameter gradient. Requires an
    // immediately preceding train-mode forward.
    Tensor backward(const Tensor& grad_p);

    std::vector<Tensor*> parameters();
    std::vector<Tensor*> gradients();
    std::vector<Tensor*> state_tensors();

    // Flatten width after the conv blocks, from the config alone.
    static std::size_t flatten_width(const ModelConfig& cfg);
};

// Wires and Glorot-initializes the stack described by cfg (deterministic in
// cfg.seed) and zeroes its Adam state.
Model build_model(const ModelConfig& cfg);

} // namespace cellscan
