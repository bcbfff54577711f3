#include "cdt/forward.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cdt {

Field domain_mixture(const Field& lam, const DomainPair& pair) {
    require_same_shape(lam, pair.x_src, "domain_mixture");
    require_same_shape(pair.x_src, pair.x_tgt, "domain_mixture");
    Field d = Field::like(lam);
    for (size_t i = 0; i < d.size(); ++i)
        d[i] = lam[i] * pair.x_src[i] + (1.0 - lam[i]) * pair.x_tgt[i];
    return d;
}

Field mixture_increment(const Field& lam_t, const Field& lam_prev, const DomainPair& pair) {
    require_same_shape(lam_t, lam_prev, "mixture_increment");
    require_same_shape(lam_t, pair.x_src, "mixture_increment");
    Field inc = Field::like(lam_t);
    for (size_t i = 0; i < inc.size(); ++i)
        inc[i] = (lam_t[i] - lam_prev[i]) * (pair.x_src[i] - pair.x_tgt[i]);
    return inc;
}

Field forward_marginal_sample(const NoiseSchedule& s, const MixField& L, const DomainPair& pair,
                              int t, Rng& rng) {
    if (t < 1 || t > s.T)
        throw std::invalid_argument("forward_marginal_sample: t out of [1,T]");
    Field d = domain_mixture(L.slice(t), pair);
    double root_ab = std::sqrt(s.alpha_bar[t]);
    std::normal_distribution<double> n01(0.0, 1.0);
    Field x = Field::like(d);
    for (size_t i = 0; i < x.size(); ++i) x[i] = root_ab * d[i] + s.sigma[t] * n01(rng);
    return x;
}

Field markov_step(const NoiseSchedule& s, const MixField& L, const DomainPair& pair,
                  const Field& x_prev, int t, Rng& rng) {
    if (t < 1 || t > s.T) throw std::invalid_argument("markov_step: t out of [1,T]");
    require_same_shape(x_prev, pair.x_src, "markov_step");
    Field inc = mixture_increment(L.slice(t), L.slice(t - 1), pair);
    double root_ab = std::sqrt(s.alpha_bar[t]);
    double rho = s.rho[t];
    double noise = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    std::normal_distribution<double> n01(0.0, 1.0);
    Field x = Field::like(x_prev);
    for (size_t i = 0; i < x.size(); ++i)
        x[i] = rho * x_prev[i] + root_ab * inc[i] + noise * n01(rng);
    return x;
}

Field truncated_init(const NoiseSchedule& s, const Field& x_src, int t1, Rng& rng,
                     bool stochastic) {
    if (t1 < 1 || t1 >= s.T)
        throw std::invalid_argument("truncated_init: t1 out of [1, T)");
    double root_ab = std::sqrt(s.alpha_bar[t1]);
    Field x = Field::like(x_src);
    if (stochastic) {
        std::normal_distribution<double> n01(0.0, 1.0);
        for (size_t i = 0; i < x.size(); ++i) x[i] = root_ab * x_src[i] + s.sigma[t1] * n01(rng);
    } else {
        for (size_t i = 0; i < x.size(); ++i) x[i] = root_ab * x_src[i];
    }
    return x;
}

}  // namespace cdt
