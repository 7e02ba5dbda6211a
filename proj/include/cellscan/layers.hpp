#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cellscan/rng.hpp"
#include "cellscan/tensor.hpp"

namespace cellscan {

enum class Phase { train, eval };

// A differentiable stage of the network. forward() stores whatever the
// matching backward() needs; backward() consumes that cache, fills the
// layer's parameter gradients, and returns the gradient w.r.t. its input.
// Calling backward without a cached forward raises StateError.
class Layer {
public:
    virtual ~Layer() = default;

    virtual Tensor forward(const Tensor& x, Phase phase, Rng& rng) = 0;
    virtual Tensor backward(const Tensor& grad_out) = 0;

    virtual void collect_params(std::vector<Tensor*>& out) { (void)out; }
    virtual void collect_grads(std::vector<Tensor*>& out) { (void)out; }
    // Non-trainable tensors that still belong in the model file (running
    // statistics).
    virtual void collect_state(std::vector<Tensor*>& out) { (void)out; }

    virtual std::string kind() const = 0;
};

// 3x3 convolution, stride 1, zero padding 1 ("same"): spatial dims are
// preserved. Weights are [out_ch, in_ch, 3, 3].
class Conv2dLayer : public Layer {
public:
    Conv2dLayer(std::size_t in_ch, std::size_t out_ch);

    Tensor forward(const Tensor& x, Phase phase, Rng& rng) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect_params(std::vector<Tensor*>& out) override;
    void collect_grads(std::vector<Tensor*>& out) override;
    std::string kind() const override { return "conv2d"; }

    std::size_t in_channels() const { return in_ch_; }
    std::size_t out_channels() const { return out_ch_; }

    Tensor weights; // [out_ch, in_ch, 3, 3]
    Tensor bias;    // [out_ch]
    Tensor grad_weights;
    Tensor grad_bias;

private:
    std::size_t in_ch_, out_ch_;
    std::vector<std::size_t> x_shape_;
    std::vector<real> im2row_; // [B*H*W, in_ch*9], cached for backward
    bool has_cache_ = false;
};

// Non-overlapping 2x2 max pooling, stride 2. The routing map remembers each
// window's argmax (row-major scan, first maximal element wins ties) so
// backward can deposit gradient only there.
class MaxPool2Layer : public Layer {
public:
    Tensor forward(const Tensor& x, Phase phase, Rng& rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "maxpool2"; }

    const std::vector<std::uint8_t>& routing() const { return routing_; }

private:
    std::vector<std::size_t> x_shape_;
    std::vector<std::uint8_t> routing_; // window corner index 0..3 per output
    bool has_cache_ = false;
};

// Per-channel batch normalization with learned scale/shift. Works on
// [batch, ch, H, W] (normalizes over batch and space) and [batch, features]
// (normalizes over batch). Running statistics follow
//   running = momentum * running + (1 - momentum) * batch_stat
// with biased batch variance.
class BatchNormLayer : public Layer {
public:
    explicit BatchNormLayer(std::size_t channels, real epsilon = real(1e-5),
                            real momentum = real(0.9));

    Tensor forward(const Tensor& x, Phase phase, Rng& rng) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect_params(std::vector<Tensor*>& out) override;
    void collect_grads(std::vector<Tensor*>& out) override;
    void collect_state(std::vector<Tensor*>& out) override;
    std::string kind() const override { return "batchnorm"; }

    std::size_t channels() const { return channels_; }
    real epsilon() const { return epsilon_; }
    real momentum() const { return momentum_; }

    Tensor gamma, beta;
    Tensor running_mean, running_var;
    Tensor grad_gamma, grad_beta;

private:
    std::size_t channels_;
    real epsilon_, momentum_;
    std::vector<std::size_t> x_shape_;
    std::vector<real> x_hat_;    // normalized pre-affine values
    std::vector<real> inv_std_;  // per channel
    bool has_cache_ = false;
};

// Inverted dropout: each element is zeroed with probability `rate` during
// training and survivors are scaled by 1/(1-rate); eval is the identity and
// never consumes RNG state.
class DropoutLayer : public Layer {
public:
    explicit DropoutLayer(real rate);

    Tensor forward(const Tensor& x, Phase phase, Rng& rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "dropout"; }

    real rate() const { return rate_; }
    const std::vector<real>& mask() const { return mask_; }

private:
    real rate_;
    std::vector<real> mask_; // 0 or 1/(1-rate), multiplied in on both passes
    std::vector<std::size_t> x_shape_;
    bool has_cache_ = false;
};

// Fully connected x*W + b with weights [in_features, out_features].
class DenseLayer : public Layer {
public:
    DenseLayer(std::size_t in_features, std::size_t out_features);

    Tensor forward(const Tensor& x, Phase phase, Rng& rng) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect_params(std::vector<Tensor*>& out) override;
    void collect_grads(std::vector<Tensor*>& out) override;
    std::string kind() const override { return "dense"; }

    std::size_t in_features() const { return in_f_; }
    std::size_t out_features() const { return out_f_; }

    Tensor weights; // [in, out]
    Tensor bias;    // [out]
    Tensor grad_weights;
    Tensor grad_bias;

private:
    std::size_t in_f_, out_f_;
    Tensor x_cache_;
    bool has_cache_ = false;
};

enum class Activation { relu, sigmoid, tanh };

const char* to_string(Activation a);
Activation parse_activation(const std::string& s);

// Elementwise nonlinearity; backward uses the cached output.
class ActivationLayer : public Layer {
public:
    explicit ActivationLayer(Activation kind) : kind_(kind) {}

    Tensor forward(const Tensor& x, Phase phase, Rng& rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "activation"; }

    Activation activation() const { return kind_; }

private:
    Activation kind_;
    Tensor y_cache_;
    bool has_cache_ = false;
};

// [batch, c, h, w] -> [batch, c*h*w].
class FlattenLayer : public Layer {
public:
    Tensor forward(const Tensor& x, Phase phase, Rng& rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "flatten"; }

private:
    std::vector<std::size_t> x_shape_;
    bool has_cache_ = false;
};

// Elementwise activation applied out of the layer stack (used by tests and
// the loss path).
Tensor apply_activation(const Tensor& x, Activation kind);

// Mean binary cross-entropy over the batch. Probabilities are clamped to
// [1e-7, 1 - 1e-7] before the logs; the returned gradient is d(loss)/dp at
// the clamped values.
std::pair<real, Tensor> bce_loss(const Tensor& p, const Tensor& y);

} // namespace cellscan
