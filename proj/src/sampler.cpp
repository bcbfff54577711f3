#include "cdt/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cdt/forward.hpp"

namespace cdt {

Reparam reparam(const NoiseSchedule& s, const Field& lam, int t) {
    if (t < 0 || t > s.T) throw std::invalid_argument("reparam: t out of [0,T]");
    Reparam r;
    r.upsilon = Field::like(lam);
    r.lambda = Field::like(lam);
    double root_ab = std::sqrt(s.alpha_bar[t]);
    for (size_t i = 0; i < lam.size(); ++i) {
        double one_m = 1.0 - lam[i];
        if (one_m <= 1e-12)
            throw std::domain_error("reparam: Lambda = 1 at t=" + std::to_string(t) +
                                    " (clamped endpoint; sample at t <= t1)");
        r.upsilon[i] = root_ab * one_m;
        r.lambda[i] = s.sigma[t] / r.upsilon[i];
    }
    return r;
}

Field score_from_data_pred(const NoiseSchedule& s, const Field& lam, const Field& x_t,
                           const Field& x_src, const Field& pred_x0, int t) {
    if (t < 1 || t > s.T)
        throw std::domain_error("score_from_data_pred: undefined at t=0 (sigma=0)");
    require_same_shape(lam, x_t, "score_from_data_pred");
    double root_ab = std::sqrt(s.alpha_bar[t]);
    double s2 = s.sigma[t] * s.sigma[t];
    Field out = Field::like(x_t);
    for (size_t i = 0; i < out.size(); ++i) {
        double dhat = lam[i] * x_src[i] + (1.0 - lam[i]) * pred_x0[i];
        out[i] = -(x_t[i] - root_ab * dhat) / s2;
    }
    return out;
}

double alpha_bar_index(const NoiseSchedule& s, double t) {
    double r = std::round(t);
    if (std::abs(t - r) < 1e-9 && r >= 0.0 && r <= s.T)
        return s.alpha_bar[static_cast<int>(r)];
    return alpha_bar_at(s, t / s.T);
}

Field eps_to_x0(const NoiseSchedule& s, const Field& lam, const Field& x_t, const Field& x_src,
                const Field& eps_hat, double t) {
    require_same_shape(lam, x_t, "eps_to_x0");
    double ab = alpha_bar_index(s, t);
    double root_ab = std::sqrt(ab);
    double sig = std::sqrt(std::max(0.0, 1.0 - ab));
    Field out = Field::like(x_t);
    for (size_t i = 0; i < out.size(); ++i) {
        double one_m = 1.0 - lam[i];
        if (one_m <= 1e-12)
            throw std::domain_error("eps_to_x0: Lambda = 1 leaves x0 unidentified");
        out[i] = ((x_t[i] - sig * eps_hat[i]) / root_ab - lam[i] * x_src[i]) / one_m;
    }
    return out;
}

Field x0_to_eps(const NoiseSchedule& s, const Field& lam, const Field& x_t, const Field& x_src,
                const Field& pred_x0, double t) {
    require_same_shape(lam, x_t, "x0_to_eps");
    double ab = alpha_bar_index(s, t);
    double root_ab = std::sqrt(ab);
    double sig = std::sqrt(std::max(0.0, 1.0 - ab));
    if (sig <= 0.0) throw std::domain_error("x0_to_eps: sigma = 0 at t = 0");
    Field out = Field::like(x_t);
    for (size_t i = 0; i < out.size(); ++i) {
        double dhat = lam[i] * x_src[i] + (1.0 - lam[i]) * pred_x0[i];
        out[i] = (x_t[i] - root_ab * dhat) / sig;
    }
    return out;
}

namespace {

// Shared closed-form step coefficients (per cell):
//   x_t = (Ups_t/Ups_s) r x_s + Ups_t (q_t - q_s r) x_src
//         + Ups_t (1 - r) phi + Ups_t sqrt(lam_t^2 (1 - r)) z,
// with r = (lam_t/lam_s)^2 and q = Lambda/(1 - Lambda). Ratio forms keep the
// zero-length step bit-exact.
struct StepCoeffs {
    Field transport;
    Field drift;
    Field denoise;
    Field noise;
    Field lam_s;  // per-cell noise-to-signal ratios, for the quadrature grid
    Field lam_t;
};

StepCoeffs step_coeffs(const NoiseSchedule& s, const MixField& L, int s_idx, int t_idx) {
    const Field& Ls = L.slice(s_idx);
    const Field& Lt = L.slice(t_idx);
    Reparam rs = reparam(s, Ls, s_idx);
    Reparam rt = reparam(s, Lt, t_idx);
    StepCoeffs c;
    c.transport = Field::like(Ls);
    c.drift = Field::like(Ls);
    c.denoise = Field::like(Ls);
    c.noise = Field::like(Ls);
    c.lam_s = rs.lambda;
    c.lam_t = rt.lambda;
    for (size_t i = 0; i < Ls.size(); ++i) {
        double ratio = rt.lambda[i] / rs.lambda[i];
        double r = ratio * ratio;
        double q_s = Ls[i] / (1.0 - Ls[i]);
        double q_t = Lt[i] / (1.0 - Lt[i]);
        double ups_t = rt.upsilon[i];
        c.transport[i] = (ups_t / rs.upsilon[i]) * r;
        c.drift[i] = ups_t * (q_t - q_s * r);
        c.denoise[i] = ups_t * (1.0 - r);
        double var = rt.lambda[i] * rt.lambda[i] * std::max(0.0, 1.0 - r);
        c.noise[i] = ups_t * std::sqrt(var);
    }
    return c;
}

void check_step_indices(const NoiseSchedule& s, int s_idx, int t_idx) {
    if (s_idx < 1 || s_idx > s.T || t_idx < 0 || t_idx > s.T || t_idx > s_idx)
        throw std::invalid_argument("reverse step: need 0 <= t_idx <= s_idx <= T, s_idx >= 1");
}

Field assemble_step(const StepCoeffs& c, const Field& x_s, const Field& x_src, const Field& phi,
                    Rng& rng, bool stochastic) {
    Field x = Field::like(x_s);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (size_t i = 0; i < x.size(); ++i) {
        x[i] = c.transport[i] * x_s[i] + c.drift[i] * x_src[i] + c.denoise[i] * phi[i];
        if (stochastic) x[i] += c.noise[i] * n01(rng);
    }
    return x;
}

}  // namespace

Field first_order_step(const NoiseSchedule& s, const MixField& L, const Predictor& pred,
                       const Field& x_s, const Field& x_src, int s_idx, int t_idx, Rng& rng,
                       bool stochastic) {
    if (t_idx == s_idx) return x_s;
    check_step_indices(s, s_idx, t_idx);
    StepCoeffs c = step_coeffs(s, L, s_idx, t_idx);
    Field phi = pred.predict_x0(x_s, x_src, s_idx);
    return assemble_step(c, x_s, x_src, phi, rng, stochastic);
}

Field exact_reverse_step(const NoiseSchedule& s, const MixField& L, const Predictor& pred,
                         const Field& x_s, const Field& x_src, int s_idx, int t_idx,
                         int quadrature_n, Rng& rng, bool stochastic) {
    if (quadrature_n < 1) throw std::invalid_argument("exact_reverse_step: quadrature_n >= 1");
    if (t_idx == s_idx) return x_s;
    check_step_indices(s, s_idx, t_idx);
    StepCoeffs c = step_coeffs(s, L, s_idx, t_idx);

    // Anchor evaluation at the step start; panel evaluations share the frozen
    // state and interpolate only the time input.
    Field phi0 = pred.predict_x0(x_s, x_src, s_idx);
    Field phi_bar = phi0;

    const int n = quadrature_n;
    std::vector<Field> phi_k;
    phi_k.reserve(n);
    for (int k = 0; k < n; ++k) {
        double tau = s_idx + (k + 0.5) / n * (t_idx - s_idx);
        phi_k.push_back(pred.predict_x0(x_s, x_src, tau));
    }

    // Panel weights are the exact integral of the kernel 2 lam_t^2 / lam^3
    // over each lambda panel: w_k = (lam_t/g_k)^2 - (lam_t/g_{k+1})^2, with the
    // grid linear in lambda per cell. Normalizing by the total and anchoring
    // at phi0 makes a constant predictor collapse to the first-order step.
    for (size_t i = 0; i < phi_bar.size(); ++i) {
        double ls = c.lam_s[i];
        double lt = c.lam_t[i];
        auto ratio2 = [&](int j) {
            if (j == n) return 1.0;
            double g = ls * (1.0 - static_cast<double>(j) / n) + lt * (static_cast<double>(j) / n);
            double rr = lt / g;
            return rr * rr;
        };
        double total = ratio2(0) - 1.0;
        if (total == 0.0) continue;  // zero-length lambda interval in this cell
        double acc = 0.0;
        double prev = ratio2(0);
        for (int k = 0; k < n; ++k) {
            double next = ratio2(k + 1);
            double w = (prev - next) / total;
            acc += w * (phi_k[k][i] - phi0[i]);
            prev = next;
        }
        phi_bar[i] = phi0[i] + acc;
    }
    return assemble_step(c, x_s, x_src, phi_bar, rng, stochastic);
}

Field sample(const NoiseSchedule& s, const MixField& L, const Predictor& pred,
             const Field& x_src, const SamplerConfig& cfg, Rng& rng, const StepCallback* cb) {
    if (cfg.t1 < 1 || cfg.t1 >= s.T)
        throw std::invalid_argument("sample: t1 must lie in [1, T)");
    std::vector<int> grid = make_spaced_grid(s, cfg.N, cfg.t1);

    // The mixing ramp must be complete at t1, i.e. the slice sits at the
    // interior ceiling 1 - eps; otherwise the source-centered init is invalid.
    {
        const Field& top = L.slice(cfg.t1);
        for (double v : top.v)
            if (std::abs(v - (1.0 - L.eps)) > L.eps)
                throw std::invalid_argument(
                    "sample: MixField ramp not complete at t1 (expected Lambda ~ 1-eps)");
    }

    Field x;
    if (cfg.literal_alg3_init) {
        Reparam rt = reparam(s, L.slice(cfg.t1), cfg.t1);
        x = Field::like(x_src);
        std::normal_distribution<double> n01(0.0, 1.0);
        for (size_t i = 0; i < x.size(); ++i) {
            x[i] = rt.upsilon[i] * x_src[i];
            if (cfg.stochastic) x[i] += s.sigma[cfg.t1] * n01(rng);
        }
    } else {
        x = truncated_init(s, x_src, cfg.t1, rng, cfg.stochastic);
    }
    if (cb) (*cb)(grid[0], x);

    for (size_t k = 1; k < grid.size(); ++k) {
        x = first_order_step(s, L, pred, x, x_src, grid[k - 1], grid[k], rng, cfg.stochastic);
        if (cb) (*cb)(grid[k], x);
    }
    for (auto& v : x.v) v = std::clamp(v, -1.0, 1.0);
    return x;
}

namespace {

// Piecewise slope of the materialized Lambda grid around fractional index tau,
// expressed per unit of normalized time u = t/T.
Field lambda_slope(const MixField& L, double tau, int T) {
    const auto& g = L.grid;
    if (g.size() < 2) throw std::invalid_argument("lambda_slope: need at least two slices");
    size_t hi = std::upper_bound(g.begin(), g.end(), tau) - g.begin();
    if (hi == 0) hi = 1;
    if (hi >= g.size()) hi = g.size() - 1;
    size_t lo = hi - 1;
    const Field& a = L.values[lo];
    const Field& b = L.values[hi];
    double span = static_cast<double>(g[hi] - g[lo]) / T;
    Field out = Field::like(a);
    for (size_t i = 0; i < out.size(); ++i) out[i] = (b[i] - a[i]) / span;
    return out;
}

}  // namespace

Field euler_maruyama_reference(const NoiseSchedule& s, const MixField& L, const Predictor& pred,
                               const Field& x_init, const Field& x_src, double t_from,
                               double t_to, int n_substeps, Rng& rng, bool stochastic) {
    if (n_substeps < 1) throw std::invalid_argument("euler_maruyama_reference: n_substeps >= 1");
    if (!(t_from > t_to) || t_to < 0.0 || t_from > s.T)
        throw std::invalid_argument("euler_maruyama_reference: need T >= t_from > t_to >= 0");
    Field x = x_init;
    std::normal_distribution<double> n01(0.0, 1.0);
    double du = (t_to - t_from) / n_substeps / s.T;
    for (int k = 0; k < n_substeps; ++k) {
        double tau = t_from + (t_to - t_from) * k / n_substeps;
        double u = tau / s.T;
        double ab = alpha_bar_index(s, tau);
        double sig2 = 1.0 - ab;
        if (sig2 <= 0.0)
            throw std::domain_error("euler_maruyama_reference: sigma = 0 inside integration");
        double root_ab = std::sqrt(ab);
        ContCoeffs cc = continuous_coefficients(s, std::min(u, 1.0));
        Field lam = L.slice_at(tau);
        Field lam_dot = lambda_slope(L, tau, s.T);
        Field phi = pred.predict_x0(x, x_src, tau);
        double gnoise = std::sqrt(cc.g2 * std::abs(du));
        for (size_t i = 0; i < x.size(); ++i) {
            double dhat = lam[i] * x_src[i] + (1.0 - lam[i]) * phi[i];
            double score = -(x[i] - root_ab * dhat) / sig2;
            double drift = cc.f * x[i] + root_ab * lam_dot[i] * (x_src[i] - phi[i]) - cc.g2 * score;
            x[i] += drift * du;
            if (stochastic) x[i] += gnoise * n01(rng);
        }
    }
    return x;
}

}  // namespace cdt
