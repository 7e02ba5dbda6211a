#include "cellscan/layers.hpp"

#include <cmath>
#include <cstring>

#include "cellscan/error.hpp"
#include "cellscan/gemm.hpp"
#include "cellscan/thread_pool.hpp"

namespace cellscan {
namespace {

void require_rank4(const Tensor& x, const char* who) {
    if (x.rank() != 4)
        throw ShapeError("nn", std::string(who) + " expects a [batch, ch, h, w] tensor");
}

[[noreturn]] void no_cache(const char* who) {
    throw StateError("nn", std::string(who) + ": backward called without a cached forward");
}

} // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2dLayer::Conv2dLayer(std::size_t in_ch, std::size_t out_ch)
    : in_ch_(in_ch), out_ch_(out_ch) {
    if (in_ch == 0 || out_ch == 0)
        throw ParamError("nn", "conv channels must be >= 1");
    weights = zeros({out_ch, in_ch, 3, 3});
    bias = zeros({out_ch});
    grad_weights = zeros(weights.shape());
    grad_bias = zeros(bias.shape());
}

Tensor Conv2dLayer::forward(const Tensor& x, Phase, Rng&) {
    require_rank4(x, "conv2d");
    if (x.dim(1) != in_ch_)
        throw ShapeError("nn", "conv2d input has " + std::to_string(x.dim(1)) +
                                   " channels, layer expects " + std::to_string(in_ch_));
    std::size_t batch = x.dim(0), h = x.dim(2), w = x.dim(3);
    std::size_t hw = h * w;
    std::size_t rows = batch * hw;
    std::size_t cols = in_ch_ * 9;

    // im2row gather: row (b,y,x) holds the 3x3 neighborhood of every input
    // channel, zero outside the image (padding 1).
    im2row_.assign(rows * cols, real{0});
    const real* xp = x.data();
    parallel_for(batch, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx) {
                    real* row = &im2row_[((b * h + y) * w + xx) * cols];
                    for (std::size_t c = 0; c < in_ch_; ++c) {
                        const real* plane = xp + (b * in_ch_ + c) * hw;
                        for (std::size_t ky = 0; ky < 3; ++ky) {
                            long sy = long(y) + long(ky) - 1;
                            if (sy < 0 || sy >= long(h)) continue;
                            for (std::size_t kx = 0; kx < 3; ++kx) {
                                long sx = long(xx) + long(kx) - 1;
                                if (sx < 0 || sx >= long(w)) continue;
                                row[c * 9 + ky * 3 + kx] = plane[std::size_t(sy) * w + std::size_t(sx)];
                            }
                        }
                    }
                }
    });

    // y_rows[n, oc] = im2row[n, :] . weights[oc, :]
    std::vector<real> y_rows(rows * out_ch_);
    gemm_nt(rows, cols, out_ch_, im2row_.data(), weights.data(), y_rows.data());

    Tensor out = zeros({batch, out_ch_, h, w});
    real* op = out.data();
    const real* bp = bias.data();
    parallel_for(batch, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b)
            for (std::size_t oc = 0; oc < out_ch_; ++oc) {
                real* plane = op + (b * out_ch_ + oc) * hw;
                const real bv = bp[oc];
                for (std::size_t i = 0; i < hw; ++i)
                    plane[i] = y_rows[(b * hw + i) * out_ch_ + oc] + bv;
            }
    });

    x_shape_ = x.shape();
    has_cache_ = true;
    return out;
}

Tensor Conv2dLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) no_cache("conv2d");
    std::size_t batch = x_shape_[0], h = x_shape_[2], w = x_shape_[3];
    std::size_t hw = h * w;
    std::size_t rows = batch * hw;
    std::size_t cols = in_ch_ * 9;
    if (grad_out.rank() != 4 || grad_out.dim(0) != batch || grad_out.dim(1) != out_ch_ ||
        grad_out.dim(2) != h || grad_out.dim(3) != w)
        throw ShapeError("nn", "conv2d backward gradient shape mismatch");

    // [b, oc, y, x] -> rows [n, oc]
    std::vector<real> dy_rows(rows * out_ch_);
    const real* gp = grad_out.data();
    parallel_for(batch, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b)
            for (std::size_t oc = 0; oc < out_ch_; ++oc) {
                const real* plane = gp + (b * out_ch_ + oc) * hw;
                for (std::size_t i = 0; i < hw; ++i)
                    dy_rows[(b * hw + i) * out_ch_ + oc] = plane[i];
            }
    });

    // dW[oc, col] = sum_n dy_rows[n, oc] * im2row[n, col]
    gemm_tn(out_ch_, rows, cols, dy_rows.data(), im2row_.data(), grad_weights.data());

    real* dbp = grad_bias.data();
    parallel_for(out_ch_, [&](std::size_t c0, std::size_t c1) {
        for (std::size_t oc = c0; oc < c1; ++oc) {
            real acc = 0;
            for (std::size_t n = 0; n < rows; ++n) acc += dy_rows[n * out_ch_ + oc];
            dbp[oc] = acc;
        }
    });

    // dR[n, col] = dy_rows[n, :] . W[:, col], then scatter back to image
    std::vector<real> d_rows(rows * cols);
    gemm_nn(rows, out_ch_, cols, dy_rows.data(), weights.data(), d_rows.data());

    Tensor dx = zeros(x_shape_);
    real* dxp = dx.data();
    parallel_for(batch, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx) {
                    const real* row = &d_rows[((b * h + y) * w + xx) * cols];
                    for (std::size_t c = 0; c < in_ch_; ++c) {
                        real* plane = dxp + (b * in_ch_ + c) * hw;
                        for (std::size_t ky = 0; ky < 3; ++ky) {
                            long sy = long(y) + long(ky) - 1;
                            if (sy < 0 || sy >= long(h)) continue;
                            for (std::size_t kx = 0; kx < 3; ++kx) {
                                long sx = long(xx) + long(kx) - 1;
                                if (sx < 0 || sx >= long(w)) continue;
                                plane[std::size_t(sy) * w + std::size_t(sx)] += row[c * 9 + ky * 3 + kx];
                            }
                        }
                    }
                }
    });

    has_cache_ = false;
    im2row_.clear(); // capacity kept for the next batch
    return dx;
}

void Conv2dLayer::collect_params(std::vector<Tensor*>& out) {
    out.push_back(&weights);
    out.push_back(&bias);
}

void Conv2dLayer::collect_grads(std::vector<Tensor*>& out) {
    out.push_back(&grad_weights);
    out.push_back(&grad_bias);
}

// ---------------------------------------------------------------------------
// MaxPool 2x2

Tensor MaxPool2Layer::forward(const Tensor& x, Phase, Rng&) {
    require_rank4(x, "maxpool2");
    std::size_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % 2 != 0 || w % 2 != 0)
        throw ShapeError("nn", "maxpool2 needs even spatial dims, got " + std::to_string(h) +
                                   "x" + std::to_string(w));
    std::size_t oh = h / 2, ow = w / 2;
    Tensor out = zeros({batch, ch, oh, ow});
    routing_.assign(batch * ch * oh * ow, 0);

    const real* xp = x.data();
    real* op = out.data();
    parallel_for(batch * ch, [&](std::size_t p0, std::size_t p1) {
        for (std::size_t p = p0; p < p1; ++p) {
            const real* plane = xp + p * h * w;
            real* oplane = op + p * oh * ow;
            std::uint8_t* route = &routing_[p * oh * ow];
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x2 = 0; x2 < ow; ++x2) {
                    std::size_t base = (2 * y) * w + 2 * x2;
                    real best = plane[base];
                    std::uint8_t arg = 0;
                    const std::size_t offs[4] = {base, base + 1, base + w, base + w + 1};
                    for (std::uint8_t k = 1; k < 4; ++k)
                        if (plane[offs[k]] > best) { // strict: first max wins ties
                            best = plane[offs[k]];
                            arg = k;
                        }
                    oplane[y * ow + x2] = best;
                    route[y * ow + x2] = arg;
                }
        }
    });

    x_shape_ = x.shape();
    has_cache_ = true;
    return out;
}

Tensor MaxPool2Layer::backward(const Tensor& grad_out) {
    if (!has_cache_) no_cache("maxpool2");
    std::size_t batch = x_shape_[0], ch = x_shape_[1], h = x_shape_[2], w = x_shape_[3];
    std::size_t oh = h / 2, ow = w / 2;
    if (grad_out.size() != batch * ch * oh * ow)
        throw ShapeError("nn", "maxpool2 backward gradient shape mismatch");

    Tensor dx = zeros(x_shape_);
    real* dxp = dx.data();
    const real* gp = grad_out.data();
    parallel_for(batch * ch, [&](std::size_t p0, std::size_t p1) {
        for (std::size_t p = p0; p < p1; ++p) {
            real* plane = dxp + p * h * w;
            const real* gplane = gp + p * oh * ow;
            const std::uint8_t* route = &routing_[p * oh * ow];
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x2 = 0; x2 < ow; ++x2) {
                    std::size_t base = (2 * y) * w + 2 * x2;
                    const std::size_t offs[4] = {base, base + 1, base + w, base + w + 1};
                    plane[offs[route[y * ow + x2]]] += gplane[y * ow + x2];
                }
        }
    });
    has_cache_ = false;
    return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm

BatchNormLayer::BatchNormLayer(std::size_t channels, real epsilon, real momentum)
    : channels_(channels), epsilon_(epsilon), momentum_(momentum) {
    if (channels == 0) throw ParamError("nn", "batchnorm channels must be >= 1");
    if (!(epsilon > 0)) throw ParamError("nn", "batchnorm epsilon must be > 0");
    gamma = full({channels}, real{1});
    beta = zeros({channels});
    running_mean = zeros({channels});
    running_var = full({channels}, real{1});
    grad_gamma = zeros({channels});
    grad_beta = zeros({channels});
}

Tensor BatchNormLayer::forward(const Tensor& x, Phase phase, Rng&) {
    if (x.rank() != 2 && x.rank() != 4)
        throw ShapeError("nn", "batchnorm expects rank-2 or rank-4 input");
    if (x.dim(1) != channels_)
        throw ShapeError("nn", "batchnorm input has " + std::to_string(x.dim(1)) +
                                   " channels, layer expects " + std::to_string(channels_));
    std::size_t batch = x.dim(0);
    std::size_t spatial = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
    std::size_t group = batch * spatial; // values normalized together per channel

    if (phase == Phase::train && batch < 2)
        throw BatchSizeError("nn", "batchnorm needs batch >= 2 in train mode");

    Tensor out = zeros(x.shape());
    const real* xp = x.data();
    real* op = out.data();

    auto channel_values = [&](std::size_t c, auto&& fn) {
        for (std::size_t b = 0; b < batch; ++b) {
            const real* base = xp + (b * channels_ + c) * spatial;
            for (std::size_t s = 0; s < spatial; ++s) fn(base[s], (b * channels_ + c) * spatial + s);
        }
    };

    x_hat_.assign(x.size(), real{0});
    inv_std_.assign(channels_, real{0});

    if (phase == Phase::train) {
        parallel_for(channels_, [&](std::size_t c0, std::size_t c1) {
            for (std::size_t c = c0; c < c1; ++c) {
                double sum = 0.0;
                channel_values(c, [&](real v, std::size_t) { sum += double(v); });
                double mean = sum / double(group);
                double var_acc = 0.0;
                channel_values(c, [&](real v, std::size_t) {
                    double d = double(v) - mean;
                    var_acc += d * d;
                });
                double var = var_acc / double(group); // biased
                double inv = 1.0 / std::sqrt(var + double(epsilon_));
                inv_std_[c] = real(inv);
                real g = gamma[c], bta = beta[c];
                channel_values(c, [&](real v, std::size_t idx) {
                    real xh = real((double(v) - mean) * inv);
                    x_hat_[idx] = xh;
                    op[idx] = g * xh + bta;
                });
                running_mean[c] = momentum_ * running_mean[c] + (real{1} - momentum_) * real(mean);
                running_var[c] = momentum_ * running_var[c] + (real{1} - momentum_) * real(var);
            }
        });
        x_shape_ = x.shape();
        has_cache_ = true;
    } else {
        parallel_for(channels_, [&](std::size_t c0, std::size_t c1) {
            for (std::size_t c = c0; c < c1; ++c) {
                double inv = 1.0 / std::sqrt(double(running_var[c]) + double(epsilon_));
                double mean = double(running_mean[c]);
                real g = gamma[c], bta = beta[c];
                channel_values(c, [&](real v, std::size_t idx) {
                    op[idx] = g * real((double(v) - mean) * inv) + bta;
                });
            }
        });
        has_cache_ = false;
    }
    return out;
}

Tensor BatchNormLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) no_cache("batchnorm");
    if (grad_out.shape() != x_shape_)
        throw ShapeError("nn", "batchnorm backward gradient shape mismatch");
    std::size_t batch = x_shape_[0];
    std::size_t spatial = x_shape_.size() == 4 ? x_shape_[2] * x_shape_[3] : 1;
    std::size_t group = batch * spatial;

    Tensor dx = zeros(x_shape_);
    const real* gp = grad_out.data();
    real* dxp = dx.data();

    parallel_for(channels_, [&](std::size_t c0, std::size_t c1) {
        for (std::size_t c = c0; c < c1; ++c) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                std::size_t base = (b * channels_ + c) * spatial;
                for (std::size_t s = 0; s < spatial; ++s) {
                    double dy = double(gp[base + s]);
                    sum_dy += dy;
                    sum_dy_xhat += dy * double(x_hat_[base + s]);
                }
            }
            grad_beta[c] = real(sum_dy);
            grad_gamma[c] = real(sum_dy_xhat);

            double g = double(gamma[c]);
            double inv = double(inv_std_[c]);
            double n = double(group);
            for (std::size_t b = 0; b < batch; ++b) {
                std::size_t base = (b * channels_ + c) * spatial;
                for (std::size_t s = 0; s < spatial; ++s) {
                    double dy = double(gp[base + s]);
                    double xh = double(x_hat_[base + s]);
                    dxp[base + s] =
                        real(g * inv * (dy - sum_dy / n - xh * sum_dy_xhat / n));
                }
            }
        }
    });
    has_cache_ = false;
    return dx;
}

void BatchNormLayer::collect_params(std::vector<Tensor*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

void BatchNormLayer::collect_grads(std::vector<Tensor*>& out) {
    out.push_back(&grad_gamma);
    out.push_back(&grad_beta);
}

void BatchNormLayer::collect_state(std::vector<Tensor*>& out) {
    out.push_back(&running_mean);
    out.push_back(&running_var);
}

// ---------------------------------------------------------------------------
// Dropout

DropoutLayer::DropoutLayer(real rate) : rate_(rate) {
    if (!(rate >= 0 && rate < 1))
        throw ParamError("nn", "dropout rate must be in [0, 1)");
}

Tensor DropoutLayer::forward(const Tensor& x, Phase phase, Rng& rng) {
    if (phase == Phase::eval) {
        has_cache_ = false;
        return x;
    }
    real keep_scale = real{1} / (real{1} - rate_);
    mask_.resize(x.size());
    // One sequential pass over the RNG stream keeps masks reproducible.
    for (std::size_t i = 0; i < mask_.size(); ++i)
        mask_[i] = rng.next_double() < double(rate_) ? real{0} : keep_scale;

    Tensor out = zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * mask_[i];
    x_shape_ = x.shape();
    has_cache_ = true;
    return out;
}

Tensor DropoutLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) no_cache("dropout");
    if (grad_out.shape() != x_shape_)
        throw ShapeError("nn", "dropout backward gradient shape mismatch");
    Tensor dx = zeros(x_shape_);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = grad_out[i] * mask_[i];
    has_cache_ = false;
    return dx;
}

// ---------------------------------------------------------------------------
// Dense

DenseLayer::DenseLayer(std::size_t in_features, std::size_t out_features)
    : in_f_(in_features), out_f_(out_features) {
    if (in_features == 0 || out_features == 0)
        throw ParamError("nn", "dense dims must be >= 1");
    weights = zeros({in_features, out_features});
    bias = zeros({out_features});
    grad_weights = zeros(weights.shape());
    grad_bias = zeros(bias.shape());
}

Tensor DenseLayer::forward(const Tensor& x, Phase, Rng&) {
    if (x.rank() != 2)
        throw ShapeError("nn", "dense expects [batch, features] input");
    if (x.dim(1) != in_f_)
        throw ShapeError("nn", "dense input has " + std::to_string(x.dim(1)) +
                                   " features, layer expects " + std::to_string(in_f_));
    std::size_t batch = x.dim(0);
    Tensor out = zeros({batch, out_f_});
    gemm_nn(batch, in_f_, out_f_, x.data(), weights.data(), out.data());
    real* op = out.data();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < out_f_; ++j) op[b * out_f_ + j] += bias[j];
    x_cache_ = x;
    has_cache_ = true;
    return out;
}

Tensor DenseLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) no_cache("dense");
    std::size_t batch = x_cache_.dim(0);
    if (grad_out.rank() != 2 || grad_out.dim(0) != batch || grad_out.dim(1) != out_f_)
        throw ShapeError("nn", "dense backward gradient shape mismatch");

    gemm_tn(in_f_, batch, out_f_, x_cache_.data(), grad_out.data(), grad_weights.data());
    for (std::size_t j = 0; j < out_f_; ++j) {
        real acc = 0;
        for (std::size_t b = 0; b < batch; ++b) acc += grad_out.at2(b, j);
        grad_bias[j] = acc;
    }
    Tensor dx = zeros({batch, in_f_});
    gemm_nt(batch, out_f_, in_f_, grad_out.data(), weights.data(), dx.data());
    has_cache_ = false;
    return dx;
}

void DenseLayer::collect_params(std::vector<Tensor*>& out) {
    out.push_back(&weights);
    out.push_back(&bias);
}

void DenseLayer::collect_grads(std::vector<Tensor*>& out) {
    out.push_back(&grad_weights);
    out.push_back(&grad_bias);
}

// ---------------------------------------------------------------------------
// Activation

const char* to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "tanh") return Activation::tanh;
    throw ParamError("nn", "unknown activation '" + s + "'");
}

Tensor apply_activation(const Tensor& x, Activation kind) {
    Tensor out = zeros(x.shape());
    const real* xp = x.data();
    real* op = out.data();
    switch (kind) {
        case Activation::relu:
            for (std::size_t i = 0; i < x.size(); ++i) op[i] = xp[i] > 0 ? xp[i] : real{0};
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < x.size(); ++i) {
                double v = double(xp[i]);
                // branch keeps exp() argument negative for stability
                op[i] = v >= 0 ? real(1.0 / (1.0 + std::exp(-v)))
                               : real(std::exp(v) / (1.0 + std::exp(v)));
            }
            break;
        case Activation::tanh:
            for (std::size_t i = 0; i < x.size(); ++i) op[i] = real(std::tanh(double(xp[i])));
            break;
    }
    return out;
}

Tensor ActivationLayer::forward(const Tensor& x, Phase, Rng&) {
    y_cache_ = apply_activation(x, kind_);
    has_cache_ = true;
    return y_cache_;
}

Tensor ActivationLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) no_cache("activation");
    if (grad_out.shape() != y_cache_.shape())
        throw ShapeError("nn", "activation backward gradient shape mismatch");
    Tensor dx = zeros(y_cache_.shape());
    const real* gp = grad_out.data();
    const real* yp = y_cache_.data();
    switch (kind_) {
        case Activation::relu:
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = yp[i] > 0 ? gp[i] : real{0};
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < dx.size(); ++i)
                dx[i] = gp[i] * yp[i] * (real{1} - yp[i]);
            break;
        case Activation::tanh:
            for (std::size_t i = 0; i < dx.size(); ++i)
                dx[i] = gp[i] * (real{1} - yp[i] * yp[i]);
            break;
    }
    has_cache_ = false;
    return dx;
}

// ---------------------------------------------------------------------------
// Flatten

Tensor FlattenLayer::forward(const Tensor& x, Phase, Rng&) {
    require_rank4(x, "flatten");
    x_shape_ = x.shape();
    has_cache_ = true;
    return reshape(x, {x.dim(0), x.dim(1) * x.dim(2) * x.dim(3)});
}

Tensor FlattenLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) no_cache("flatten");
    has_cache_ = false;
    return reshape(grad_out, x_shape_);
}

// ---------------------------------------------------------------------------
// Loss

std::pair<real, Tensor> bce_loss(const Tensor& p, const Tensor& y) {
    if (!p.same_shape(y))
        throw ShapeError("nn", "bce_loss probability/target shape mismatch");
    const double lo = 1e-7, hi = 1.0 - 1e-7;
    std::size_t n = p.size();
    Tensor grad = zeros(p.shape());
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double pi = std::min(std::max(double(p[i]), lo), hi);
        double yi = double(y[i]);
        loss -= yi * std::log(pi) + (1.0 - yi) * std::log(1.0 - pi);
        grad[i] = real((pi - yi) / (pi * (1.0 - pi) * double(n)));
    }
    return {real(loss / double(n)), std::move(grad)};
}

} // namespace cellscan
