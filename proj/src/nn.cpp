#include "cdt/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace cdt {

namespace {

size_t layer_size(const ConvLayer& l) {
    return static_cast<size_t>(l.out_c) * l.in_c * l.k * l.k + l.out_c;
}

void conv_forward(const ConvLayer& l, const double* p, const Field& in, Field& out) {
    const int pad = l.k / 2;
    const double* bias = p + static_cast<size_t>(l.out_c) * l.in_c * l.k * l.k;
    for (int o = 0; o < l.out_c; ++o) {
        for (int y = 0; y < in.h; ++y) {
            for (int x = 0; x < in.w; ++x) {
                double acc = bias[o];
                for (int i = 0; i < l.in_c; ++i) {
                    const double* wk = p + ((static_cast<size_t>(o) * l.in_c + i) * l.k) * l.k;
                    for (int ky = 0; ky < l.k; ++ky) {
                        int sy = y + ky - pad;
                        if (sy < 0 || sy >= in.h) continue;
                        for (int kx = 0; kx < l.k; ++kx) {
                            int sx = x + kx - pad;
                            if (sx < 0 || sx >= in.w) continue;
                            acc += wk[ky * l.k + kx] * in.at(i, sy, sx);
                        }
                    }
                }
                out.at(o, y, x) = acc;
            }
        }
    }
}

void conv_backward(const ConvLayer& l, const double* p, const Field& in, const Field& gout,
                   double* gp, Field* gin) {
    const int pad = l.k / 2;
    double* gbias = gp + static_cast<size_t>(l.out_c) * l.in_c * l.k * l.k;
    for (int o = 0; o < l.out_c; ++o) {
        for (int y = 0; y < in.h; ++y) {
            for (int x = 0; x < in.w; ++x) {
                double go = gout.at(o, y, x);
                if (go == 0.0) continue;
                gbias[o] += go;
                for (int i = 0; i < l.in_c; ++i) {
                    const double* wk = p + ((static_cast<size_t>(o) * l.in_c + i) * l.k) * l.k;
                    double* gwk = gp + ((static_cast<size_t>(o) * l.in_c + i) * l.k) * l.k;
                    for (int ky = 0; ky < l.k; ++ky) {
                        int sy = y + ky - pad;
                        if (sy < 0 || sy >= in.h) continue;
                        for (int kx = 0; kx < l.k; ++kx) {
                            int sx = x + kx - pad;
                            if (sx < 0 || sx >= in.w) continue;
                            gwk[ky * l.k + kx] += go * in.at(i, sy, sx);
                            if (gin) gin->at(i, sy, sx) += go * wk[ky * l.k + kx];
                        }
                    }
                }
            }
        }
    }
}

void apply_act(Activation a, Field& f) {
    switch (a) {
        case Activation::identity: break;
        case Activation::tanh_act:
            for (auto& x : f.v) x = std::tanh(x);
            break;
        case Activation::sigmoid_act:
            for (auto& x : f.v) x = 1.0 / (1.0 + std::exp(-x));
            break;
    }
}

// Gradient through the activation expressed via its output value.
void act_backward(Activation a, const Field& post, Field& g) {
    switch (a) {
        case Activation::identity: break;
        case Activation::tanh_act:
            for (size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - post[i] * post[i];
            break;
        case Activation::sigmoid_act:
            for (size_t i = 0; i < g.size(); ++i) g[i] *= post[i] * (1.0 - post[i]);
            break;
    }
}

}  // namespace

size_t ConvNet::num_params() const {
    size_t n = 0;
    for (const auto& l : layers) n += layer_size(l);
    return n;
}

size_t ConvNet::layer_param_offset(int layer) const {
    size_t off = 0;
    for (int i = 0; i < layer; ++i) off += layer_size(layers[i]);
    return off;
}

ConvNet make_convnet(const std::vector<int>& widths, const std::vector<Activation>& acts,
                     uint64_t seed, double final_scale) {
    if (widths.size() < 2 || acts.size() != widths.size() - 1)
        throw std::invalid_argument("make_convnet: need widths n>=2 and one activation per layer");
    ConvNet net;
    for (size_t i = 0; i + 1 < widths.size(); ++i)
        net.layers.push_back({widths[i], widths[i + 1], 3, acts[i]});
    net.params.assign(net.num_params(), 0.0);

    Rng rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (size_t li = 0; li < net.layers.size(); ++li) {
        const auto& l = net.layers[li];
        double scale = std::sqrt(1.0 / (l.in_c * l.k * l.k));
        if (li + 1 == net.layers.size()) scale *= final_scale;
        double* p = net.params.data() + net.layer_param_offset(static_cast<int>(li));
        size_t nw = static_cast<size_t>(l.out_c) * l.in_c * l.k * l.k;
        for (size_t j = 0; j < nw; ++j) p[j] = scale * n01(rng);
        // biases stay zero
    }
    return net;
}

Field convnet_forward(const ConvNet& net, const Field& input, ConvTape* tape) {
    if (net.layers.empty()) throw std::invalid_argument("convnet_forward: empty net");
    if (input.c != net.layers.front().in_c)
        throw std::invalid_argument("convnet_forward: input channel mismatch");
    if (tape) {
        tape->input = input;
        tape->post.clear();
    }
    Field cur = input;
    for (size_t li = 0; li < net.layers.size(); ++li) {
        const auto& l = net.layers[li];
        Field out(l.out_c, cur.h, cur.w);
        conv_forward(l, net.params.data() + net.layer_param_offset(static_cast<int>(li)), cur, out);
        apply_act(l.act, out);
        if (tape) tape->post.push_back(out);
        cur = std::move(out);
    }
    return cur;
}

Field convnet_backward(const ConvNet& net, const ConvTape& tape, const Field& gout,
                       std::vector<double>& pgrad, bool want_input_grad) {
    if (pgrad.size() != net.num_params())
        throw std::invalid_argument("convnet_backward: pgrad size mismatch");
    if (tape.post.size() != net.layers.size())
        throw std::invalid_argument("convnet_backward: tape does not match net");
    Field g = gout;
    for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
        const auto& l = net.layers[li];
        act_backward(l.act, tape.post[li], g);
        const Field& in = (li == 0) ? tape.input : tape.post[li - 1];
        bool need_gin = (li > 0) || want_input_grad;
        Field gin;
        if (need_gin) gin = Field(l.in_c, in.h, in.w, 0.0);
        conv_backward(l, net.params.data() + net.layer_param_offset(li), in, g,
                      pgrad.data() + net.layer_param_offset(li), need_gin ? &gin : nullptr);
        if (!need_gin) return Field();
        g = std::move(gin);
    }
    return g;
}

void SgdMomentum::step(std::vector<double>& params, const std::vector<double>& grad, double lr_scale) {
    if (params.size() != grad.size())
        throw std::invalid_argument("SgdMomentum::step: size mismatch");
    if (vel.size() != params.size()) vel.assign(params.size(), 0.0);
    double eta = lr * lr_scale;
    for (size_t i = 0; i < params.size(); ++i) {
        vel[i] = momentum * vel[i] - eta * grad[i];
        params[i] += vel[i];
    }
}

}  // namespace cdt
