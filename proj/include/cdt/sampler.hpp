#pragma once

#include <functional>

#include "cdt/field.hpp"
#include "cdt/mixfield.hpp"
#include "cdt/predictors.hpp"
#include "cdt/schedules.hpp"

namespace cdt {

// Mixture-aware reparameterization at step t: Upsilon = sqrt(alpha_bar)(1 -
// Lambda) and the per-cell noise-to-signal ratio lambda = sigma / Upsilon.
// Throws std::domain_error where Lambda reaches 1 (the t = T clamp); the
// sampler stays on t <= t1 where the interior ceiling keeps Upsilon positive.
struct Reparam {
    Field upsilon;
    Field lambda;
};

Reparam reparam(const NoiseSchedule& s, const Field& lam, int t);

// Score of the mixed marginal expressed through a data prediction:
// score = -(x_t - sqrt(ab_t) d_hat) / sigma_t^2 with d_hat = Lambda x_src +
// (1 - Lambda) pred_x0. Undefined at t = 0 (sigma = 0).
Field score_from_data_pred(const NoiseSchedule& s, const Field& lam, const Field& x_t,
                           const Field& x_src, const Field& pred_x0, int t);

// alpha_bar at a possibly fractional step index (exact table lookup at
// integers, log-linear in between).
double alpha_bar_index(const NoiseSchedule& s, double t);

// Marginal inversions between noise- and data-space predictions.
Field eps_to_x0(const NoiseSchedule& s, const Field& lam, const Field& x_t, const Field& x_src,
                const Field& eps_hat, double t);
Field x0_to_eps(const NoiseSchedule& s, const Field& lam, const Field& x_t, const Field& x_src,
                const Field& pred_x0, double t);

struct SamplerConfig {
    int N = 20;                // reverse steps
    int t1 = 0;                // truncation index, 1 <= t1 < T
    bool stochastic = true;
    int quadrature_n = 8;      // panels for exact_reverse_step
    bool literal_alg3_init = false;  // Upsilon_{t1} x_src + sigma_{t1} z instead
                                     // of the truncation-corollary init
};

// One step of the first-order solver from grid index s_idx down to t_idx
// (variation of constants with the predictor frozen at the step start).
// t_idx == s_idx is a zero-length step and returns x_s unchanged.
Field first_order_step(const NoiseSchedule& s, const MixField& L, const Predictor& pred,
                       const Field& x_s, const Field& x_src, int s_idx, int t_idx, Rng& rng,
                       bool stochastic);

// Exact-solution step: same transport/drift terms, but the predictor integral
// is resolved with a midpoint product rule over the per-cell lambda interval
// (quadrature_n panels, state frozen at x_s, time interpolated). A constant
// predictor reproduces first_order_step exactly.
Field exact_reverse_step(const NoiseSchedule& s, const MixField& L, const Predictor& pred,
                         const Field& x_s, const Field& x_src, int s_idx, int t_idx,
                         int quadrature_n, Rng& rng, bool stochastic);

using StepCallback = std::function<void(int t_idx, const Field& x)>;

// Full fast sampler: truncation-corollary init at t1, first-order steps down
// the uniformly spaced index grid, one final clip to [-1, 1]. The callback
// (when given) sees every grid state including the init.
Field sample(const NoiseSchedule& s, const MixField& L, const Predictor& pred,
             const Field& x_src, const SamplerConfig& cfg, Rng& rng,
             const StepCallback* cb = nullptr);

// Euler-Maruyama reference for the reverse-time SDE, integrating from index
// t_from down to t_to with n_substeps uniform substeps. d Lambda/dt comes from
// finite differences on the materialized grid; the predictor supplies x0 in
// both the score and the mixing-motion drift.
Field euler_maruyama_reference(const NoiseSchedule& s, const MixField& L, const Predictor& pred,
                               const Field& x_init, const Field& x_src, double t_from,
                               double t_to, int n_substeps, Rng& rng, bool stochastic = true);

}  // namespace cdt
