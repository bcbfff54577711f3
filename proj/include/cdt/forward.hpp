#pragma once

#include "cdt/field.hpp"
#include "cdt/mixfield.hpp"
#include "cdt/schedules.hpp"

namespace cdt {

// Mixed clean signal d_t = Lambda_t * x_src + (1 - Lambda_t) * x_tgt (all
// elementwise).
Field domain_mixture(const Field& lam, const DomainPair& pair);

// d_t - d_{t-1} = (Lambda_t - Lambda_{t-1}) * (x_src - x_tgt); evaluated in
// this factored form so the telescoping identity holds to roundoff.
Field mixture_increment(const Field& lam_t, const Field& lam_prev, const DomainPair& pair);

// One-shot sample from the closed-form marginal
// x_t = sqrt(alpha_bar_t) d_t + sigma_t z. Requires 1 <= t <= T.
Field forward_marginal_sample(const NoiseSchedule& s, const MixField& L, const DomainPair& pair,
                              int t, Rng& rng);

// One Markov step x_t = rho_t x_{t-1} + sqrt(alpha_bar_t) (d_t - d_{t-1})
//                        + sqrt(1 - rho_t^2) z. Requires 1 <= t <= T.
Field markov_step(const NoiseSchedule& s, const MixField& L, const DomainPair& pair,
                  const Field& x_prev, int t, Rng& rng);

// Sampler initialization under truncation: with Lambda == 1 above t1 the
// marginal at t1 is source-centered, x_{t1} = sqrt(alpha_bar_{t1}) x_src
// + sigma_{t1} z. Requires 1 <= t1 < T. stochastic=false drops the noise.
Field truncated_init(const NoiseSchedule& s, const Field& x_src, int t1, Rng& rng,
                     bool stochastic = true);

}  // namespace cdt
