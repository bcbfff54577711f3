#pragma once

#include <cstdint>
#include <vector>

#include "cdt/field.hpp"

namespace cdt {

// Minimal fixed-topology conv stack: 3x3 same-padding convolutions with an
// elementwise activation after each. Parameters live in one flat vector
// (per layer: weights [out][in][ky][kx], then biases [out]) so optimizers and
// finite-difference checks can treat the model as a plain coordinate vector.
enum class Activation { identity, tanh_act, sigmoid_act };

struct ConvLayer {
    int in_c = 0;
    int out_c = 0;
    int k = 3;
    Activation act = Activation::identity;
};

struct ConvNet {
    std::vector<ConvLayer> layers;
    std::vector<double> params;

    size_t num_params() const;
    size_t layer_param_offset(int layer) const;
};

// widths = channel progression {in, hidden..., out}; acts has one entry per
// layer. Weights draw from N(0, 1/fan_in); the last layer is additionally
// scaled by final_scale (0 gives an exactly zero head).
ConvNet make_convnet(const std::vector<int>& widths, const std::vector<Activation>& acts,
                     uint64_t seed, double final_scale = 1.0);

// Forward pass caches per-layer activations for the backward pass.
struct ConvTape {
    Field input;
    std::vector<Field> post;  // activation outputs, one per layer
};

Field convnet_forward(const ConvNet& net, const Field& input, ConvTape* tape = nullptr);

// Accumulates parameter gradients into pgrad (must be num_params() long,
// caller zeroes it) and returns dL/dinput when want_input_grad.
Field convnet_backward(const ConvNet& net, const ConvTape& tape, const Field& gout,
                       std::vector<double>& pgrad, bool want_input_grad);

// Classic momentum SGD over a flat parameter vector.
struct SgdMomentum {
    double lr = 1e-2;
    double momentum = 0.9;
    std::vector<double> vel;

    void step(std::vector<double>& params, const std::vector<double>& grad, double lr_scale = 1.0);
};

}  // namespace cdt
