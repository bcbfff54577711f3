#pragma once

#include <cstdint>
#include <vector>

#include "cdt/field.hpp"
#include "cdt/nn.hpp"
#include "cdt/schedules.hpp"

namespace cdt {

enum class MixVariant { linear, channel_poly, dynamic };

// Per-channel polynomial reshaping of the base ramp eta:
// lambda_c(eta) = sum_i coeff[c][i] * eta^i, clipped to [eps, 1-eps] interior.
struct ChannelPolyParams {
    int channels = 1;
    int degree = 3;
    std::vector<double> coeff;  // channels x (degree+1), constant term first
};

ChannelPolyParams identity_poly(int channels, int degree = 3);

// Spatial modulation network: conv stack (1+4) -> 8 -> 16 -> C with smooth
// saturating hidden units and a logistic output h in (0,1).
struct ModNetParams {
    int channels = 1;
    ConvNet net;
};

// final_scale = 0 zeroes the output head, which collapses the dynamic variant
// onto the linear one (h = 0.5 everywhere, zero modulation).
ModNetParams modnet_init(uint64_t seed, int channels, double final_scale = 1.0);

// Four-channel coordinate embedding [sin(pi y), cos(pi y), sin(pi x), cos(pi x)]
// with x = 2i/(W-1) - 1, y = 2j/(H-1) - 1 (degenerate axes sit at -1).
Field position_encoding(int H, int W);

// Calibrated logistic: with beta = -logit(eps), alpha = -2 logit(eps),
// squash(f) = sigmoid(alpha f - beta) maps 0 -> eps, 1/2 -> 1/2, 1 -> 1-eps.
double logistic_squash(double f, double eps);

// Endpoint-respecting reshape of the base ramp: f = lam (1 + g (1 - lam)),
// fixed points at lam = 0 and lam = 1 for any modulation g in (-1, 1).
double boundary_interp(double lam_lin, double g);

Field modnet_forward(const ModNetParams& p, double lam_lin, const Field& posenc,
                     ConvTape* tape = nullptr);

// Spatially varying mixing schedule materialized on a grid of step indices.
// Endpoints are clamped exactly (Lambda_0 = 0, Lambda_T = 1); with truncation
// active (t1 < T) the base ramp spans [0, t1], Lambda = 1 exactly above t1,
// and Lambda_{t1} sits at the interior ceiling 1-eps so the sampler's
// reparameterization stays finite on its whole grid.
struct MixField {
    MixVariant variant = MixVariant::linear;
    double eps = 1e-4;
    int T = 0;
    int t1 = 0;               // == T when truncation is inactive
    bool raw_linear = false;  // linear variant without the logistic squash
    std::vector<int> grid;    // ascending step indices with materialized slices
    std::vector<Field> values;

    bool has(int t) const;
    const Field& slice(int t) const;      // throws if t was not materialized
    Field slice_at(double t) const;       // linear interpolation between slices
};

void validate_mixfield(const MixField& L);

// Builders. C/H/W give the field shape (channel_poly and dynamic take C from
// their parameters). grid restricts materialization to selected indices
// (nullptr = every step 0..T); t1 = -1 means no truncation. squash = false on
// the linear variant exposes the raw base ramp for baseline comparisons.
MixField build_mixfield_linear(const NoiseSchedule& s, int C, int H, int W, double eps = 1e-4,
                               int t1 = -1, bool squash = true,
                               const std::vector<int>* grid = nullptr);
MixField build_mixfield_channel_poly(const ChannelPolyParams& p, const NoiseSchedule& s, int H,
                                     int W, double eps = 1e-4, int t1 = -1,
                                     const std::vector<int>* grid = nullptr);
MixField build_mixfield_dynamic(const ModNetParams& p, const NoiseSchedule& s, int H, int W,
                                double eps = 1e-4, int t1 = -1,
                                const std::vector<int>* grid = nullptr);

// Single-slice evaluation primitives shared by the builders and the joint
// training loop (which differentiates through them).
double base_eta(int t, int t1);

struct DynamicSliceTape {
    double eta = 0.0;
    double eps = 0.0;
    ConvTape conv;
    Field h;
    Field lam;
};

Field dynamic_lambda_slice(const ModNetParams& p, double eta, const Field& posenc, double eps,
                           DynamicSliceTape* tape = nullptr);
// Accumulates d(loss)/d(params) given d(loss)/d(Lambda slice).
void dynamic_lambda_backward(const ModNetParams& p, const DynamicSliceTape& tape,
                             const Field& glam, std::vector<double>& pgrad);

std::vector<double> channel_poly_lambda(const ChannelPolyParams& p, double eta, double eps);
// Gradient of the clipped polynomial w.r.t. coefficients (zero where clipped).
void channel_poly_backward(const ChannelPolyParams& p, double eta, double eps,
                           const std::vector<double>& gl_per_channel, std::vector<double>& cgrad);

}  // namespace cdt
