#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "koopid/errors.hpp"
#include "koopid/linalg.hpp"
#include "koopid/rng.hpp"

namespace koopid {

enum class Activation { Tanh, Linear };

inline const char* activation_name(Activation a) {
    return a == Activation::Tanh ? "tanh" : "linear";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "linear") return Activation::Linear;
    fail(ErrorCode::Parse, "unknown activation '" + s + "'");
}

// Parameters of a fully connected feedforward network. weights[i] maps layer
// i (width layer_sizes[i]) to layer i+1; the last layer transition uses
// output_activation, all earlier ones hidden_activation.
struct MLPParams {
    std::vector<std::size_t> layer_sizes;
    std::vector<Mat> weights;
    std::vector<Vec> biases;
    Activation hidden_activation = Activation::Tanh;
    Activation output_activation = Activation::Linear;

    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t output_size() const { return layer_sizes.back(); }
    std::size_t num_transitions() const { return weights.size(); }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const Mat& w : weights) n += w.size();
        for (const Vec& b : biases) n += b.size();
        return n;
    }
};

// Gradients in the same layout as MLPParams, plus the gradient with respect
// to the network input (needed when the network sits inside a larger graph).
struct MlpGrad {
    std::vector<Mat> d_weights;
    std::vector<Vec> d_biases;
    Vec d_input;
};

inline MlpGrad make_zero_grad(const MLPParams& p) {
    MlpGrad g;
    g.d_weights.reserve(p.weights.size());
    g.d_biases.reserve(p.biases.size());
    for (const Mat& w : p.weights) g.d_weights.emplace_back(w.rows, w.cols);
    for (const Vec& b : p.biases) g.d_biases.emplace_back(b.size(), 0.0);
    g.d_input.assign(p.input_size(), 0.0);
    return g;
}

// Every weight and bias entry is drawn i.i.d. from U(-sqrt(m), sqrt(m)) with
// m = 1/sqrt(n_in), n_in the input width of the layer the entry feeds from.
inline MLPParams mlp_init(const std::vector<std::size_t>& layer_sizes,
                          Activation hidden, Activation output, Rng& rng) {
    if (layer_sizes.size() < 2)
        fail(ErrorCode::Config, "mlp_init: need at least input and output layer sizes");
    for (std::size_t n : layer_sizes)
        if (n < 1) fail(ErrorCode::Config, "mlp_init: layer sizes must be >= 1");

    MLPParams p;
    p.layer_sizes = layer_sizes;
    p.hidden_activation = hidden;
    p.output_activation = output;
    for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
        const std::size_t n_in = layer_sizes[i];
        const std::size_t n_out = layer_sizes[i + 1];
        const double bound = std::sqrt(1.0 / std::sqrt(static_cast<double>(n_in)));
        Mat w(n_out, n_in);
        for (double& v : w.a) v = rng.uniform(-bound, bound);
        Vec b(n_out);
        for (double& v : b) v = rng.uniform(-bound, bound);
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::move(b));
    }
    return p;
}

inline MLPParams mlp_init(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
    Rng rng(seed);
    return mlp_init(layer_sizes, Activation::Tanh, Activation::Linear, rng);
}

inline void apply_activation(Activation act, Vec& v) {
    if (act == Activation::Tanh)
        for (double& x : v) x = std::tanh(x);
}

// Post-activation values of every layer; act[0] is the input itself.
// Kept as a reusable workspace because training evaluates thousands of
// forward/backward pairs per batch.
struct MlpCache {
    std::vector<Vec> act;
};

inline void mlp_forward_cached(const MLPParams& p, const Vec& input, MlpCache& cache) {
    if (input.size() != p.input_size())
        fail(ErrorCode::Shape, "mlp_forward: input has length " + std::to_string(input.size()) +
                                   ", expected " + std::to_string(p.input_size()));
    cache.act.resize(p.num_transitions() + 1);
    cache.act[0] = input;
    for (std::size_t l = 0; l < p.num_transitions(); ++l) {
        Vec& out = cache.act[l + 1];
        matvec_into(p.weights[l], cache.act[l], out);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += p.biases[l][i];
        const bool last = (l + 1 == p.num_transitions());
        apply_activation(last ? p.output_activation : p.hidden_activation, out);
    }
}

inline Vec mlp_forward(const MLPParams& p, const Vec& input) {
    MlpCache cache;
    mlp_forward_cached(p, input, cache);
    return std::move(cache.act.back());
}

// Reverse pass for the scalar upstream_grad . output. Gradients are
// accumulated into `grad` (parameter entries are +=, d_input is overwritten),
// so a caller can sum contributions from many evaluations in one bundle.
inline void mlp_backward_cached(const MLPParams& p, const MlpCache& cache,
                                const Vec& upstream_grad, MlpGrad& grad) {
    if (upstream_grad.size() != p.output_size())
        fail(ErrorCode::Shape, "mlp_backward: upstream gradient has length " +
                                   std::to_string(upstream_grad.size()) + ", expected " +
                                   std::to_string(p.output_size()));

    Vec delta = upstream_grad;
    for (std::size_t l = p.num_transitions(); l-- > 0;) {
        const bool last = (l + 1 == p.num_transitions());
        const Activation act = last ? p.output_activation : p.hidden_activation;
        if (act == Activation::Tanh) {
            const Vec& h = cache.act[l + 1];
            for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= 1.0 - h[i] * h[i];
        }
        add_outer(grad.d_weights[l], delta, cache.act[l]);
        axpy(1.0, delta, grad.d_biases[l]);
        Vec next(p.layer_sizes[l], 0.0);
        matvec_t_acc(p.weights[l], delta, next);
        delta = std::move(next);
    }
    grad.d_input = std::move(delta);
}

inline MlpGrad mlp_backward(const MLPParams& p, const Vec& input, const Vec& upstream_grad) {
    MlpCache cache;
    mlp_forward_cached(p, input, cache);
    MlpGrad grad = make_zero_grad(p);
    mlp_backward_cached(p, cache, upstream_grad, grad);
    return grad;
}

}  // namespace koopid
