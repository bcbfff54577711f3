#include "cdt/mixfield.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cdt {

ChannelPolyParams identity_poly(int channels, int degree) {
    if (channels < 1 || degree < 1)
        throw std::invalid_argument("identity_poly: need channels >= 1, degree >= 1");
    ChannelPolyParams p;
    p.channels = channels;
    p.degree = degree;
    p.coeff.assign(static_cast<size_t>(channels) * (degree + 1), 0.0);
    for (int c = 0; c < channels; ++c) p.coeff[static_cast<size_t>(c) * (degree + 1) + 1] = 1.0;
    return p;
}

ModNetParams modnet_init(uint64_t seed, int channels, double final_scale) {
    if (channels < 1) throw std::invalid_argument("modnet_init: channels >= 1");
    ModNetParams p;
    p.channels = channels;
    p.net = make_convnet({5, 8, 16, channels},
                         {Activation::tanh_act, Activation::tanh_act, Activation::sigmoid_act},
                         seed, final_scale);
    return p;
}

Field position_encoding(int H, int W) {
    Field pe(4, H, W);
    const double pi = std::acos(-1.0);
    for (int j = 0; j < H; ++j) {
        double y = (H > 1) ? 2.0 * j / (H - 1) - 1.0 : -1.0;
        for (int i = 0; i < W; ++i) {
            double x = (W > 1) ? 2.0 * i / (W - 1) - 1.0 : -1.0;
            pe.at(0, j, i) = std::sin(pi * y);
            pe.at(1, j, i) = std::cos(pi * y);
            pe.at(2, j, i) = std::sin(pi * x);
            pe.at(3, j, i) = std::cos(pi * x);
        }
    }
    return pe;
}

double logistic_squash(double f, double eps) {
    if (!(eps > 0.0 && eps < 0.5)) throw std::invalid_argument("logistic_squash: eps in (0, 0.5)");
    double beta = std::log((1.0 - eps) / eps);
    double alpha = 2.0 * beta;
    return 1.0 / (1.0 + std::exp(beta - alpha * f));
}

double boundary_interp(double lam_lin, double g) {
    return lam_lin * (1.0 + g * (1.0 - lam_lin));
}

Field modnet_forward(const ModNetParams& p, double lam_lin, const Field& posenc,
                     ConvTape* tape) {
    if (posenc.c != 4) throw std::invalid_argument("modnet_forward: posenc must have 4 channels");
    Field input(5, posenc.h, posenc.w);
    std::fill(input.v.begin(), input.v.begin() + input.plane(), lam_lin);
    std::copy(posenc.v.begin(), posenc.v.end(), input.v.begin() + input.plane());
    return convnet_forward(p.net, input, tape);
}

bool MixField::has(int t) const {
    return std::binary_search(grid.begin(), grid.end(), t);
}

const Field& MixField::slice(int t) const {
    auto it = std::lower_bound(grid.begin(), grid.end(), t);
    if (it == grid.end() || *it != t)
        throw std::invalid_argument("MixField::slice: step " + std::to_string(t) +
                                    " not materialized");
    return values[static_cast<size_t>(it - grid.begin())];
}

Field MixField::slice_at(double t) const {
    if (grid.empty()) throw std::invalid_argument("MixField::slice_at: empty field");
    if (t <= grid.front()) return values.front();
    if (t >= grid.back()) return values.back();
    auto it = std::upper_bound(grid.begin(), grid.end(), t);
    size_t hi = static_cast<size_t>(it - grid.begin());
    size_t lo = hi - 1;
    double span = grid[hi] - grid[lo];
    double w = (t - grid[lo]) / span;
    Field out = values[lo];
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = (1.0 - w) * values[lo][i] + w * values[hi][i];
    return out;
}

void validate_mixfield(const MixField& L) {
    if (L.grid.size() != L.values.size() || L.grid.empty())
        throw std::invalid_argument("mixfield: grid/value size mismatch");
    if (L.t1 < 1 || L.t1 > L.T) throw std::invalid_argument("mixfield: t1 out of [1,T]");
    const double tol = 1e-12;
    for (size_t k = 0; k < L.grid.size(); ++k) {
        int t = L.grid[k];
        if (k > 0 && t <= L.grid[k - 1])
            throw std::invalid_argument("mixfield: grid not strictly ascending");
        if (t < 0 || t > L.T) throw std::invalid_argument("mixfield: grid index out of [0,T]");
        if (!L.values[k].same_shape(L.values[0]))
            throw std::invalid_argument("mixfield: inconsistent slice shapes");
        for (double x : L.values[k].v) {
            if (t == 0) {
                if (x != 0.0) throw std::invalid_argument("mixfield: Lambda_0 must be exactly 0");
            } else if (t > L.t1 || (t == L.T && L.t1 == L.T)) {
                if (x != 1.0) throw std::invalid_argument("mixfield: Lambda must be exactly 1 at t=" +
                                                          std::to_string(t));
            } else {
                double lo = L.raw_linear ? 0.0 : L.eps;
                if (x < lo - tol || x > 1.0 - L.eps + tol)
                    throw std::invalid_argument("mixfield: interior value out of range at t=" +
                                                std::to_string(t));
            }
        }
    }
}

double base_eta(int t, int t1) {
    if (t <= 0) return 0.0;
    if (t >= t1) return 1.0;
    return static_cast<double>(t) / t1;
}

Field dynamic_lambda_slice(const ModNetParams& p, double eta, const Field& posenc, double eps,
                           DynamicSliceTape* tape) {
    Field h = modnet_forward(p, eta, posenc, tape ? &tape->conv : nullptr);
    Field lam = Field::like(h);
    for (size_t i = 0; i < h.size(); ++i) {
        double g = 2.0 * h[i] - 1.0;
        lam[i] = logistic_squash(boundary_interp(eta, g), eps);
    }
    if (tape) {
        tape->eta = eta;
        tape->eps = eps;
        tape->h = h;
        tape->lam = lam;
    }
    return lam;
}

void dynamic_lambda_backward(const ModNetParams& p, const DynamicSliceTape& tape,
                             const Field& glam, std::vector<double>& pgrad) {
    require_same_shape(glam, tape.lam, "dynamic_lambda_backward");
    // Chain: Lambda = squash(f), f = eta (1 + g (1 - eta)), g = 2h - 1, so
    // d Lambda/d h = Lambda (1 - Lambda) * alpha * eta (1 - eta) * 2.
    double alpha = 2.0 * std::log((1.0 - tape.eps) / tape.eps);
    double df_dg = tape.eta * (1.0 - tape.eta);
    Field gh = Field::like(tape.h);
    for (size_t i = 0; i < gh.size(); ++i) {
        double lam = tape.lam[i];
        gh[i] = glam[i] * lam * (1.0 - lam) * alpha * df_dg * 2.0;
    }
    convnet_backward(p.net, tape.conv, gh, pgrad, false);
}

std::vector<double> channel_poly_lambda(const ChannelPolyParams& p, double eta, double eps) {
    std::vector<double> out(p.channels);
    for (int c = 0; c < p.channels; ++c) {
        double acc = 0.0, pw = 1.0;
        const double* a = p.coeff.data() + static_cast<size_t>(c) * (p.degree + 1);
        for (int i = 0; i <= p.degree; ++i) {
            acc += a[i] * pw;
            pw *= eta;
        }
        out[c] = std::clamp(acc, eps, 1.0 - eps);
    }
    return out;
}

void channel_poly_backward(const ChannelPolyParams& p, double eta, double eps,
                           const std::vector<double>& gl_per_channel, std::vector<double>& cgrad) {
    if (gl_per_channel.size() != static_cast<size_t>(p.channels) ||
        cgrad.size() != p.coeff.size())
        throw std::invalid_argument("channel_poly_backward: size mismatch");
    for (int c = 0; c < p.channels; ++c) {
        double raw = 0.0, pw = 1.0;
        const double* a = p.coeff.data() + static_cast<size_t>(c) * (p.degree + 1);
        for (int i = 0; i <= p.degree; ++i) {
            raw += a[i] * pw;
            pw *= eta;
        }
        if (raw <= eps || raw >= 1.0 - eps) continue;  // clipped: zero subgradient
        pw = 1.0;
        for (int i = 0; i <= p.degree; ++i) {
            cgrad[static_cast<size_t>(c) * (p.degree + 1) + i] += gl_per_channel[c] * pw;
            pw *= eta;
        }
    }
}

namespace {

// Shared builder skeleton: endpoint/truncation clamps here, variant-specific
// interior values from the slice callback.
template <typename SliceFn>
MixField build_common(MixVariant variant, const NoiseSchedule& s, int C, int H, int W, double eps,
                      int t1, const std::vector<int>* grid_in, bool raw_linear, SliceFn interior) {
    if (!(eps > 0.0 && eps < 0.5)) throw std::invalid_argument("mixfield: eps in (0, 0.5)");
    if (C < 1 || H < 1 || W < 1) throw std::invalid_argument("mixfield: bad shape");
    if (t1 == -1) t1 = s.T;
    if (t1 < 1 || t1 > s.T) throw std::invalid_argument("mixfield: t1 out of [1,T]");

    MixField L;
    L.variant = variant;
    L.eps = eps;
    L.T = s.T;
    L.t1 = t1;
    L.raw_linear = raw_linear;
    if (grid_in) {
        L.grid = *grid_in;
        std::sort(L.grid.begin(), L.grid.end());
        L.grid.erase(std::unique(L.grid.begin(), L.grid.end()), L.grid.end());
    } else {
        L.grid.resize(s.T + 1);
        for (int t = 0; t <= s.T; ++t) L.grid[t] = t;
    }
    L.values.reserve(L.grid.size());
    for (int t : L.grid) {
        if (t < 0 || t > s.T) throw std::invalid_argument("mixfield: grid index out of [0,T]");
        if (t == 0) {
            L.values.emplace_back(C, H, W, 0.0);
        } else if (t > t1 || (t == s.T && t1 == s.T)) {
            L.values.emplace_back(C, H, W, 1.0);
        } else {
            L.values.push_back(interior(t));
        }
    }
    validate_mixfield(L);
    return L;
}

}  // namespace

MixField build_mixfield_linear(const NoiseSchedule& s, int C, int H, int W, double eps, int t1,
                               bool squash, const std::vector<int>* grid) {
    int tt1 = (t1 == -1) ? s.T : t1;
    return build_common(MixVariant::linear, s, C, H, W, eps, t1, grid, !squash, [&](int t) {
        double eta = base_eta(t, tt1);
        double val = squash ? logistic_squash(eta, eps) : eta;
        return Field(C, H, W, val);
    });
}

MixField build_mixfield_channel_poly(const ChannelPolyParams& p, const NoiseSchedule& s, int H,
                                     int W, double eps, int t1, const std::vector<int>* grid) {
    int tt1 = (t1 == -1) ? s.T : t1;
    return build_common(MixVariant::channel_poly, s, p.channels, H, W, eps, t1, grid, false,
                        [&](int t) {
                            Field f(p.channels, H, W);
                            if (t == tt1 && tt1 < s.T) {
                                // ramp must be complete at the truncation index
                                std::fill(f.v.begin(), f.v.end(), 1.0 - eps);
                                return f;
                            }
                            auto vals = channel_poly_lambda(p, base_eta(t, tt1), eps);
                            for (int c = 0; c < p.channels; ++c)
                                std::fill(f.v.begin() + static_cast<size_t>(c) * f.plane(),
                                          f.v.begin() + static_cast<size_t>(c + 1) * f.plane(),
                                          vals[c]);
                            return f;
                        });
}

MixField build_mixfield_dynamic(const ModNetParams& p, const NoiseSchedule& s, int H, int W,
                                double eps, int t1, const std::vector<int>* grid) {
    Field pe = position_encoding(H, W);
    int tt1 = (t1 == -1) ? s.T : t1;
    return build_common(MixVariant::dynamic, s, p.channels, H, W, eps, t1, grid, false,
                        [&](int t) {
                            return dynamic_lambda_slice(p, base_eta(t, tt1), pe, eps, nullptr);
                        });
}

}  // namespace cdt
