#include "cellscan/model.hpp"

#include <string>

#include "cellscan/error.hpp"

namespace cellscan {

Tensor Model::forward(const Tensor& x, Phase phase, Rng& rng) {
    if (x.rank() != 4)
        throw ShapeError("nn", "model input must be [batch, ch, h, w]");
    if (x.dim(1) != config.input_channels)
        throw ShapeError("nn", "model expects " + std::to_string(config.input_channels) +
                                   " input channels, got " + std::to_string(x.dim(1)));
    if (x.dim(2) != config.input_size || x.dim(3) != config.input_size)
        throw ShapeError("nn", "model expects " + std::to_string(config.input_size) + "x" +
                                   std::to_string(config.input_size) + " inputs");
    Tensor cur = x;
    for (auto& layer : layers) cur = layer->forward(cur, phase, rng);
    // [batch, 1] -> [batch]
    return reshape(cur, {x.dim(0)});
}

Tensor Model::forward_eval(const Tensor& x) {
    Rng unused(0);
    return forward(x, Phase::eval, unused);
}

Tensor Model::backward(const Tensor& grad_p) {
    if (grad_p.rank() != 1)
        throw ShapeError("nn", "model backward expects dL/dp of shape [batch]");
    Tensor cur = reshape(grad_p, {grad_p.dim(0), std::size_t{1}});
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
        cur = (*it)->backward(cur);
    return cur;
}

std::vector<Tensor*> Model::parameters() {
    std::vector<Tensor*> out;
    for (auto& layer : layers) layer->collect_params(out);
    return out;
}

std::vector<Tensor*> Model::gradients() {
    std::vector<Tensor*> out;
    for (auto& layer : layers) layer->collect_grads(out);
    return out;
}

std::vector<Tensor*> Model::state_tensors() {
    std::vector<Tensor*> out;
    for (auto& layer : layers) layer->collect_state(out);
    return out;
}

std::size_t Model::flatten_width(const ModelConfig& cfg) {
    std::size_t side = cfg.input_size;
    for (std::size_t i = 0; i < cfg.conv_filters.size(); ++i) {
        if (side % 2 != 0)
            throw ConfigError("nn", "input size " + std::to_string(cfg.input_size) +
                                        " is not divisible by 2^" +
                                        std::to_string(cfg.conv_filters.size()));
        side /= 2;
    }
    return side * side * cfg.conv_filters.back();
}

Model build_model(const ModelConfig& cfg) {
    if (cfg.conv_filters.empty() || cfg.hidden_widths.empty())
        throw ConfigError("nn", "need at least one conv block and one hidden block");
    if (cfg.input_channels != 1 && cfg.input_channels != 3)
        throw ConfigError("nn", "input_channels must be 1 or 3");
    if (!(cfg.conv_dropout >= 0 && cfg.conv_dropout < 1) ||
        !(cfg.hidden_dropout >= 0 && cfg.hidden_dropout < 1))
        throw ConfigError("nn", "dropout rates must be in [0, 1)");

    Model model;
    model.config = cfg;
    Rng rng(cfg.seed);

    auto glorot_conv = [&](Conv2dLayer& conv) {
        std::size_t fan_in = conv.in_channels() * 9;
        std::size_t fan_out = conv.out_channels() * 9;
        conv.weights = glorot_uniform(rng, conv.weights.shape(), fan_in, fan_out);
    };
    auto glorot_dense = [&](DenseLayer& dense) {
        dense.weights =
            glorot_uniform(rng, dense.weights.shape(), dense.in_features(), dense.out_features());
    };

    std::size_t in_ch = cfg.input_channels;
    for (std::size_t filters : cfg.conv_filters) {
        auto conv = std::make_unique<Conv2dLayer>(in_ch, filters);
        glorot_conv(*conv);
        model.layers.push_back(std::move(conv));
        model.layers.push_back(std::make_unique<ActivationLayer>(cfg.hidden_activation));
        model.layers.push_back(std::make_unique<MaxPool2Layer>());
        model.layers.push_back(std::make_unique<BatchNormLayer>(filters));
        model.layers.push_back(std::make_unique<DropoutLayer>(real(cfg.conv_dropout)));
        in_ch = filters;
    }

    model.layers.push_back(std::make_unique<FlattenLayer>());

    std::size_t in_f = Model::flatten_width(cfg);
    for (std::size_t width : cfg.hidden_widths) {
        auto dense = std::make_unique<DenseLayer>(in_f, width);
        glorot_dense(*dense);
        model.layers.push_back(std::move(dense));
        model.layers.push_back(std::make_unique<ActivationLayer>(cfg.hidden_activation));
        model.layers.push_back(std::make_unique<BatchNormLayer>(width));
        model.layers.push_back(std::make_unique<DropoutLayer>(real(cfg.hidden_dropout)));
        in_f = width;
    }

    auto head = std::make_unique<DenseLayer>(in_f, 1);
    glorot_dense(*head);
    model.layers.push_back(std::move(head));
    model.layers.push_back(std::make_unique<ActivationLayer>(Activation::sigmoid));

    adam_init(model.adam, model.parameters());
    return model;
}

} // namespace cellscan
