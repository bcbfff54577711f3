#include "cdt/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <limits>

#include "cdt/energy.hpp"
#include "cdt/forward.hpp"
#include "cdt/mixfield.hpp"
#include "cdt/predictors.hpp"
#include "cdt/sampler.hpp"
#include "cdt/schedules.hpp"
#include "cdt/tasks.hpp"

namespace cdt {

namespace {

std::string fmt(const char* pattern, ...) {
    char buf[512];
    va_list args;
    va_start(args, pattern);
    std::vsnprintf(buf, sizeof buf, pattern, args);
    va_end(args);
    return buf;
}

double max_abs_diff(const Field& a, const Field& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double rmse(const Field& a, const Field& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc / a.size());
}

bool all_finite(const Field& f) {
    for (double v : f.v)
        if (!std::isfinite(v)) return false;
    return true;
}

ChannelPolyParams random_poly(Rng& rng, int channels) {
    ChannelPolyParams p = identity_poly(channels);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (double& c : p.coeff) c += u(rng);
    return p;
}

DomainPair random_pair(Rng& rng, int c, int h, int w) {
    DomainPair pair;
    pair.x_src = uniform_field(rng, c, h, w, -1.0, 1.0);
    pair.x_tgt = uniform_field(rng, c, h, w, -1.0, 1.0);
    return pair;
}

CheckResult check_logistic_calibration() {
    double worst = 0.0;
    for (double eps : {1e-2, 1e-4, 1e-6}) {
        worst = std::max(worst, std::abs(logistic_squash(0.0, eps) - eps) / eps);
        worst = std::max(worst,
                         std::abs(logistic_squash(1.0, eps) - (1.0 - eps)) / (1.0 - eps));
        worst = std::max(worst, std::abs(logistic_squash(0.5, eps) - 0.5) / 0.5);
    }
    return {1, "logistic calibration", worst <= 1e-12, fmt("max rel err %.3g", worst)};
}

CheckResult check_endpoint_clamps() {
    NoiseSchedule s = make_vp_schedule(40, 1e-4, 0.1);
    const int C = 2, H = 7, W = 6;
    const double eps = 1e-3;
    bool ok = true;
    std::string why;
    auto inspect = [&](const MixField& L, const char* tag) {
        for (size_t g = 0; g < L.grid.size() && ok; ++g) {
            int t = L.grid[g];
            for (double v : L.values[g].v) {
                if (t == 0 && v != 0.0) { ok = false; why = fmt("%s: Lambda_0 != 0", tag); }
                if (t == L.T && v != 1.0) { ok = false; why = fmt("%s: Lambda_T != 1", tag); }
                if (t > 0 && t < L.T && t <= L.t1 && (v < eps - 1e-15 || v > 1.0 - eps + 1e-15)) {
                    ok = false;
                    why = fmt("%s: interior slice out of [eps, 1-eps] at t=%d", tag, t);
                }
            }
        }
    };
    for (uint64_t seed : {11u, 12u, 13u}) {
        Rng rng(seed);
        inspect(build_mixfield_linear(s, C, H, W, eps), "linear");
        inspect(build_mixfield_channel_poly(random_poly(rng, C), s, H, W, eps), "channel");
        inspect(build_mixfield_dynamic(modnet_init(seed, C), s, H, W, eps), "dynamic");
        inspect(build_mixfield_dynamic(modnet_init(seed + 7, C), s, H, W, eps, 30), "truncated");
        if (!ok) break;
    }
    return {2, "endpoint clamps (all variants)", ok, ok ? "exact 0/1 ends, interior in band" : why};
}

CheckResult check_marginal_consistency() {
    const int T = 40, H = 8, W = 8, N = 20000;
    NoiseSchedule s = make_vp_schedule(T, 1e-4, 0.12);
    MixField L = build_mixfield_dynamic(modnet_init(99, 1), s, H, W, 1e-3);
    Rng prng(4242);
    DomainPair pair = random_pair(prng, 1, H, W);

    const int checks[3] = {T / 4, T / 2, 3 * T / 4};
    Field sum[3] = {Field(1, H, W), Field(1, H, W), Field(1, H, W)};
    Field sumsq[3] = {Field(1, H, W), Field(1, H, W), Field(1, H, W)};

    Rng rng(2026);
    for (int n = 0; n < N; ++n) {
        Field x = domain_mixture(L.slice(0), pair);
        for (int t = 1; t <= checks[2]; ++t) {
            x = markov_step(s, L, pair, x, t, rng);
            for (int c = 0; c < 3; ++c)
                if (t == checks[c])
                    for (size_t i = 0; i < x.size(); ++i) {
                        sum[c][i] += x[i];
                        sumsq[c][i] += x[i] * x[i];
                    }
        }
    }

    double worst_gap = 0.0, worst_ratio_lo = 1.0, worst_ratio_hi = 1.0;
    for (int c = 0; c < 3; ++c) {
        int t = checks[c];
        Field mean_ref = domain_mixture(L.slice(t), pair);
        double ab = s.alpha_bar[t], sig = s.sigma[t];
        double se = sig / std::sqrt(static_cast<double>(N));
        for (size_t i = 0; i < mean_ref.size(); ++i) {
            double m = sum[c][i] / N;
            double var = sumsq[c][i] / N - m * m;
            worst_gap = std::max(worst_gap,
                                 std::abs(m - std::sqrt(ab) * mean_ref[i]) / (4.0 * se));
            double ratio = var / (sig * sig);
            worst_ratio_lo = std::min(worst_ratio_lo, ratio);
            worst_ratio_hi = std::max(worst_ratio_hi, ratio);
        }
    }
    bool ok = worst_gap < 1.0 && worst_ratio_lo >= 0.9 && worst_ratio_hi <= 1.1;
    return {3, "forward-marginal consistency", ok,
            fmt("worst mean gap %.2f of 4SE, var ratio [%.3f, %.3f]", worst_gap,
                worst_ratio_lo, worst_ratio_hi)};
}

CheckResult check_increment_identity() {
    Rng rng(7);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        int h = 3 + static_cast<int>(rng() % 5), w = 3 + static_cast<int>(rng() % 5);
        DomainPair pair = random_pair(rng, 2, h, w);
        Field lam_t = uniform_field(rng, 2, h, w, 0.0, 1.0);
        Field lam_prev = uniform_field(rng, 2, h, w, 0.0, 1.0);
        Field lhs = domain_mixture(lam_t, pair);
        Field prev = domain_mixture(lam_prev, pair);
        for (size_t k = 0; k < lhs.size(); ++k) lhs[k] -= prev[k];
        worst = std::max(worst, max_abs_diff(lhs, mixture_increment(lam_t, lam_prev, pair)));
    }
    return {4, "mixture-increment identity", worst < 1e-12, fmt("max abs gap %.3g", worst)};
}

CheckResult check_strict_domination() {
    EnergyInstance het = reference_heterogeneous_instance();
    EnergyInstance hom = reference_homogeneous_instance();
    DominationReport rh = verify_strict_domination(het.spec, het.pair);
    DominationReport ro = verify_strict_domination(hom.spec, hom.pair);
    bool het_ok = rh.heterogeneous && rh.gap >= 0.05 * rh.e_glob && rh.certificate_descent &&
                  rh.certificate_linear;
    bool hom_ok = std::abs(ro.gap) < 1e-3 * ro.e_glob;
    return {5, "strict domination of pixelwise schedules", het_ok && hom_ok,
            fmt("hetero gap %.4g (%.1f%% of E_glob, descent %d linear %d); control gap %.3g",
                rh.gap, 100.0 * rh.gap / rh.e_glob, static_cast<int>(rh.certificate_descent),
                static_cast<int>(rh.certificate_linear), std::abs(ro.gap) / ro.e_glob)};
}

CheckResult check_sampler_exactness() {
    const int T = 100, t1 = 50, H = 8, W = 8;
    NoiseSchedule s = make_vp_schedule(T, 1e-4, 0.1);
    MixField L = build_mixfield_dynamic(modnet_init(5, 1), s, H, W, 1e-3, t1);
    Rng rng(31);
    DomainPair pair = random_pair(rng, 1, H, W);

    // constant predictor: closed form has no quadrature left, bit-for-bit
    OraclePairPredictor oracle(pair.x_tgt);
    Field x = truncated_init(s, pair.x_src, t1, rng);
    std::vector<int> grid = make_spaced_grid(s, 10, t1);
    for (size_t i = 0; i + 1 < grid.size(); ++i) {
        Field a = first_order_step(s, L, oracle, x, pair.x_src, grid[i], grid[i + 1], rng, false);
        Field b = exact_reverse_step(s, L, oracle, x, pair.x_src, grid[i], grid[i + 1], 8, rng,
                                     false);
        if (std::memcmp(a.v.data(), b.v.data(), a.size() * sizeof(double)) != 0)
            return {6, "sampler exactness", false, "constant-predictor paths not bit-identical"};
        x = a;
    }

    // state-dependent predictor: default panels against a 1000-panel reference
    Field mu0 = uniform_field(rng, 1, H, W, -0.5, 0.5);
    GaussianPosteriorPredictor post(mu0, 0.3, s, L);
    x = truncated_init(s, pair.x_src, t1, rng);
    double worst = 0.0;
    for (size_t i = 0; i + 1 < grid.size(); ++i) {
        Field a = exact_reverse_step(s, L, post, x, pair.x_src, grid[i], grid[i + 1], 8, rng,
                                     false);
        Field fine = exact_reverse_step(s, L, post, x, pair.x_src, grid[i], grid[i + 1], 1000,
                                        rng, false);
        worst = std::max(worst, rmse(a, fine));
        x = a;
    }
    return {6, "sampler exactness", worst <= 1e-3,
            fmt("bit-identical constant case; worst per-step RMSE vs fine grid %.3g", worst)};
}

CheckResult check_oracle_round_trip() {
    const int T = 200, t1 = 100;
    NoiseSchedule s = make_vp_schedule(T, 1e-4, 0.1);
    SyntheticTaskSpec spec{TaskKind::contrast_swap, 20, 32, 32, 1, 555};
    std::vector<DomainPair> data = gen_dataset(spec);
    SamplerConfig cfg;
    cfg.N = 50;
    cfg.t1 = t1;
    std::vector<int> grid = make_spaced_grid(s, cfg.N, t1);
    MixField L = build_mixfield_linear(s, 1, 32, 32, 1e-4, t1, true, &grid);
    Rng rng(77);
    double acc = 0.0;
    for (auto& pair : data) {
        OraclePairPredictor oracle(pair.x_tgt);
        Field gen = sample(s, L, oracle, pair.x_src, cfg, rng);
        acc += std::min(psnr(gen, pair.x_tgt), 200.0);  // cap the +inf sentinel
    }
    double mean = acc / data.size();
    return {7, "oracle round-trip", mean > 30.0, fmt("mean PSNR %.1f dB over 20 pairs", mean)};
}

// Independent plain-VP first-order sampler written directly from the
// schedule tables (no Upsilon/lambda reparameterization).
Field plain_vp_step(const NoiseSchedule& s, const Field& x_s, const Field& pred_x0, int s_idx,
                    int t_idx) {
    double ab_s = s.alpha_bar[s_idx], ab_t = s.alpha_bar[t_idx];
    double sig2_s = 1.0 - ab_s, sig2_t = 1.0 - ab_t;
    double r = (sig2_t / sig2_s) * (ab_s / ab_t);
    double keep = std::sqrt(ab_t / ab_s) * r;
    double inject = std::sqrt(ab_t) * (1.0 - r);
    Field out = Field::like(x_s);
    for (size_t i = 0; i < out.size(); ++i) out[i] = keep * x_s[i] + inject * pred_x0[i];
    return out;
}

CheckResult check_vp_reduction() {
    const int T = 60, H = 6, W = 5;
    NoiseSchedule s = make_vp_schedule(T, 1e-4, 0.15);
    // Lambda == 0 on the whole grid collapses the mixture onto plain VP
    MixField L;
    L.variant = MixVariant::linear;
    L.eps = 0.0;
    L.T = T;
    L.t1 = T;
    L.raw_linear = true;
    for (int t = 0; t <= T; ++t) {
        L.grid.push_back(t);
        L.values.push_back(Field(1, H, W, 0.0));
    }
    Rng rng(808);
    DomainPair pair = random_pair(rng, 1, H, W);
    Field mu0 = uniform_field(rng, 1, H, W, -0.5, 0.5);
    GaussianPosteriorPredictor post(mu0, 0.4, s, L);

    Field x = gaussian_field(rng, 1, H, W);
    double worst = 0.0;
    std::vector<int> grid = make_spaced_grid(s, 12, T);
    for (size_t i = 0; i + 1 < grid.size() && grid[i + 1] > 0; ++i) {
        Field mine = first_order_step(s, L, post, x, pair.x_src, grid[i], grid[i + 1], rng,
                                      false);
        Field ref = plain_vp_step(s, x, post.predict_x0(x, pair.x_src, grid[i]), grid[i],
                                  grid[i + 1]);
        worst = std::max(worst, max_abs_diff(mine, ref));
        x = mine;
    }
    return {8, "plain-VP reduction", worst < 1e-8, fmt("max per-step gap %.3g", worst)};
}

CheckResult check_posterior_oracle() {
    const int T = 200, H = 4, W = 4;
    NoiseSchedule s = make_vp_schedule(T, 1e-4, 0.1);
    MixField L = build_mixfield_dynamic(modnet_init(21, 1), s, H, W, 1e-3);
    Rng rng(606);
    Field mu0 = uniform_field(rng, 1, H, W, -0.5, 0.5);
    Field x_src = uniform_field(rng, 1, H, W, -1.0, 1.0);

    // Regression slope of x0 on x_t, per cell. The slope estimator's
    // standard error relative to k is sigma / (sqrt(ab) (1 - Lambda) tau
    // sqrt(N)), so the comparison runs at a low-noise time with a wide
    // prior, where 50000 draws resolve the slope to ~0.1%.
    const double tau2_reg = 2.0;
    int t = 15;
    const Field& lam = L.slice(t);
    double ab = s.alpha_bar[t], sig = s.sigma[t];
    const int N = 50000;
    size_t ncells = lam.size();
    std::vector<double> sx(ncells, 0.0), sy(ncells, 0.0), sxx(ncells, 0.0), sxy(ncells, 0.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int n = 0; n < N; ++n)
        for (size_t i = 0; i < ncells; ++i) {
            double x0 = mu0[i] + std::sqrt(tau2_reg) * normal(rng);
            double d = lam[i] * x_src[i] + (1.0 - lam[i]) * x0;
            double xt = std::sqrt(ab) * d + sig * normal(rng);
            sx[i] += xt;
            sy[i] += x0;
            sxx[i] += xt * xt;
            sxy[i] += xt * x0;
        }
    double worst_k = 0.0;
    for (size_t i = 0; i < ncells; ++i) {
        double mx = sx[i] / N, my = sy[i] / N;
        double k_mc = (sxy[i] / N - mx * my) / (sxx[i] / N - mx * mx);
        double k = std::sqrt(ab) * (1.0 - lam[i]) * tau2_reg /
                   (ab * (1.0 - lam[i]) * (1.0 - lam[i]) * tau2_reg + sig * sig);
        worst_k = std::max(worst_k, std::abs(k_mc - k) / std::abs(k));
    }

    // Bayes dominance over the prior mean and the naive marginal inversion,
    // as paired risk differences on shared draws. Where the closed-form
    // margin is resolvable at this sample size, demand a strict win; where
    // it sits below Monte Carlo resolution (prior-mean at 3T/4 trails by
    // ~1e-7), demand the difference stay within 4 SE of zero.
    const double tau2 = 0.3;
    GaussianPosteriorPredictor post(mu0, tau2, s, L);
    bool dominates = true;
    for (int tc : {T / 4, T / 2, 3 * T / 4}) {
        const Field& lamc = L.slice(tc);
        double abc = s.alpha_bar[tc], sigc = s.sigma[tc];
        const int M = 100000;
        double sum_p = 0.0, sq_p = 0.0, sum_n = 0.0, sq_n = 0.0;
        for (int n = 0; n < M; ++n) {
            Field x0 = Field::like(mu0);
            Field xt = Field::like(mu0);
            for (size_t i = 0; i < x0.size(); ++i) {
                x0[i] = mu0[i] + std::sqrt(tau2) * normal(rng);
                double d = lamc[i] * x_src[i] + (1.0 - lamc[i]) * x0[i];
                xt[i] = std::sqrt(abc) * d + sigc * normal(rng);
            }
            Field est = post.predict_x0(xt, x_src, tc);
            for (size_t i = 0; i < x0.size(); ++i) {
                double naive = (xt[i] / std::sqrt(abc) - lamc[i] * x_src[i]) / (1.0 - lamc[i]);
                double e_post = (est[i] - x0[i]) * (est[i] - x0[i]);
                double dp = e_post - (mu0[i] - x0[i]) * (mu0[i] - x0[i]);
                double dn = e_post - (naive - x0[i]) * (naive - x0[i]);
                sum_p += dp;
                sq_p += dp * dp;
                sum_n += dn;
                sq_n += dn * dn;
            }
        }
        double margin_p = 0.0, margin_n = 0.0;  // expected risk deficits
        for (size_t i = 0; i < ncells; ++i) {
            double ups = std::sqrt(abc) * (1.0 - lamc[i]);
            double varx = ups * ups * tau2 + sigc * sigc;
            double k = ups * tau2 / varx;
            margin_p += k * k * varx / ncells;
            margin_n += (sigc * sigc / (abc * (1.0 - lamc[i]) * (1.0 - lamc[i])) -
                         (tau2 - k * k * varx)) /
                        ncells;
        }
        double cnt = static_cast<double>(M) * ncells;
        auto check_one = [&](double sum, double sq, double margin) {
            double mean = sum / cnt;
            double se = std::sqrt(std::max(0.0, sq / cnt - mean * mean) / cnt);
            return margin > 6.0 * se ? mean < 0.0 : mean <= 4.0 * se;
        };
        if (!check_one(sum_p, sq_p, margin_p)) dominates = false;
        if (!check_one(sum_n, sq_n, margin_n)) dominates = false;
    }
    return {9, "Gaussian-posterior oracle", worst_k <= 0.01 && dominates,
            fmt("worst k rel err %.3g, Bayes dominance %s", worst_k,
                dominates ? "holds" : "violated")};
}

CheckResult check_training_smoke() {
    // finite-difference agreement on hand-picked batch draws
    const int T = 50, t1 = 25, H = 12, W = 12;
    NoiseSchedule s = make_vp_schedule(T, 1e-4, 0.1);
    Rng rng(999);
    std::vector<DomainPair> data;
    for (int i = 0; i < 4; ++i) data.push_back(random_pair(rng, 1, H, W));

    ToyPredictorParams pred = toy_predictor_init(3, 1, 8, T);
    MixerModel mixer;
    mixer.variant = MixVariant::dynamic;
    mixer.eps = 1e-3;
    mixer.t1 = t1;
    mixer.modnet = modnet_init(4, 1);

    TrainBatch batch;
    batch.pair_idx = {0, 1};
    batch.t_step = {7, 18};  // both strictly inside (0, t1) so mixer grads flow
    batch.noise.push_back(gaussian_field(rng, 1, H, W));
    batch.noise.push_back(gaussian_field(rng, 1, H, W));

    std::vector<double> pgrad, mgrad;
    training_loss(data, pred, mixer, s, batch, &pgrad, &mgrad);

    auto loss_at = [&]() { return training_loss(data, pred, mixer, s, batch, nullptr, nullptr); };
    auto fd_check = [&](std::vector<double>& params, const std::vector<double>& grad, int want,
                        double& worst) {
        // largest-gradient coordinates, where the relative comparison is
        // well conditioned
        std::vector<size_t> idx(params.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(),
                  [&](size_t a, size_t b) { return std::abs(grad[a]) > std::abs(grad[b]); });
        const double h = 1e-4;
        for (int k = 0; k < want && k < static_cast<int>(idx.size()); ++k) {
            size_t i = idx[k];
            double keep = params[i];
            params[i] = keep + h;
            double up = loss_at();
            params[i] = keep - h;
            double dn = loss_at();
            params[i] = keep;
            double fd = (up - dn) / (2.0 * h);
            worst = std::max(worst,
                             std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]),
                                                                1e-8}));
        }
    };
    double worst_fd = 0.0;
    fd_check(pred.net.params, pgrad, 12, worst_fd);
    fd_check(mixer.modnet.net.params, mgrad, 8, worst_fd);
    if (worst_fd > 1e-3)
        return {10, "training smoke + gradient check", false,
                fmt("FD rel err %.3g exceeds 1e-3", worst_fd)};

    // loss trend on a real task
    SyntheticTaskSpec dspec{TaskKind::contrast_swap, 200, 40, 40, 1, 31337};
    std::vector<DomainPair> task_data = gen_dataset(dspec);
    NoiseSchedule s2 = make_vp_schedule(200, 1e-4, 0.1);
    ToyPredictorParams pred2 = toy_predictor_init(8, 1, 16, 200);
    MixerModel mixer2;
    mixer2.variant = MixVariant::dynamic;
    mixer2.eps = 1e-4;
    mixer2.t1 = 100;
    mixer2.modnet = modnet_init(9, 1);
    TrainConfig tc;
    tc.steps = 2000;
    tc.lr = 0.02;
    tc.mixer_lr_mult = 10.0;
    tc.batch = 4;
    tc.seed = 7;
    TrainResult tr = train_score_matching(task_data, pred2, mixer2, s2, tc);
    double before = tr.smoothed[tc.smooth_window - 1];
    double after = tr.smoothed.back();
    double reduction = 1.0 - after / before;
    return {10, "training smoke + gradient check", reduction >= 0.30,
            fmt("FD rel err %.3g; smoothed loss %.3f -> %.3f (%.0f%% reduction)", worst_fd,
                before, after, 100.0 * reduction)};
}

// ---------------------------------------------------------------------------
// trained-model studies (criteria 11..13)

struct StudyModel {
    ToyPredictorParams pred;
    MixerModel mixer;
};

struct StudySetup {
    NoiseSchedule s = make_vp_schedule(200, 1e-4, 0.1);
    int t1 = 100;
    int H = 40, W = 40;
    std::vector<DomainPair> train_data;
    std::vector<DomainPair> eval_data;
};

StudyModel train_study_model(const StudySetup& setup, bool dynamic, uint64_t seed) {
    StudyModel m;
    m.pred = toy_predictor_init(seed, 1, 16, setup.s.T);
    m.mixer.variant = dynamic ? MixVariant::dynamic : MixVariant::linear;
    m.mixer.eps = 1e-4;
    m.mixer.t1 = setup.t1;
    if (dynamic) m.mixer.modnet = modnet_init(seed + 1000, 1);
    TrainConfig tc;
    tc.steps = 1200;
    tc.lr = 0.02;
    tc.mixer_lr_mult = 10.0;
    tc.batch = 4;
    tc.seed = seed;
    train_score_matching(setup.train_data, m.pred, m.mixer, setup.s, tc);
    return m;
}

struct EvalStats {
    double psnr_mean = 0.0;
    double dice_mean = 0.0;
    double hausdorff_mean = 0.0;
    bool finite = true;
};

EvalStats eval_study_model(const StudySetup& setup, const StudyModel& m, int steps,
                           uint64_t seed, int shift = 0) {
    std::vector<int> grid = make_spaced_grid(setup.s, steps, setup.t1);
    MixField L = mixer_build_field(m.mixer, setup.s, 1, setup.H, setup.W, &grid);
    TrainedPredictor pred(m.pred, setup.s, L);
    SamplerConfig cfg;
    cfg.N = steps;
    cfg.t1 = setup.t1;
    Rng rng(mix_seed(seed, 17));
    EvalStats st;
    for (auto& pair : setup.eval_data) {
        const DomainPair& in = pair;
        DomainPair shifted;
        if (shift > 0) shifted = misalign(pair, shift);
        Field gen = sample(setup.s, L, pred, shift > 0 ? shifted.x_src : in.x_src, cfg, rng);
        if (!all_finite(gen)) st.finite = false;
        st.psnr_mean += std::min(psnr(gen, pair.x_tgt), 200.0);
        SegMetrics sm = seg_metrics(gen, pair.mask);
        st.dice_mean += sm.dice;
        st.hausdorff_mean += sm.hausdorff;
    }
    double n = static_cast<double>(setup.eval_data.size());
    st.psnr_mean /= n;
    st.dice_mean /= n;
    st.hausdorff_mean /= n;
    return st;
}

}  // namespace

std::vector<CheckResult> run_fast_checks() {
    return {check_logistic_calibration(), check_endpoint_clamps(), check_marginal_consistency(),
            check_increment_identity(),   check_strict_domination(), check_sampler_exactness(),
            check_oracle_round_trip(),    check_vp_reduction(),      check_posterior_oracle(),
            check_training_smoke()};
}

std::vector<CheckResult> run_training_studies() {
    StudySetup setup;
    SyntheticTaskSpec train_spec{TaskKind::shape_to_mask, 64, setup.H, setup.W, 1, 2001};
    SyntheticTaskSpec eval_spec{TaskKind::shape_to_mask, 20, setup.H, setup.W, 1, 9001};
    setup.train_data = gen_dataset(train_spec);
    setup.eval_data = gen_dataset(eval_spec);

    const uint64_t seeds[3] = {1, 2, 3};
    double dice_dyn = 0.0, dice_lin = 0.0, haus_dyn = 0.0, haus_lin = 0.0;
    double psnr_lin20 = 0.0;
    double psnr_dyn[3] = {0.0, 0.0, 0.0};  // dynamic at 5, 10, 20 steps
    const int step_grid[3] = {5, 10, 20};
    std::vector<StudyModel> dyn_models;

    for (uint64_t seed : seeds) {
        StudyModel dyn = train_study_model(setup, true, seed);
        StudyModel lin = train_study_model(setup, false, seed);
        EvalStats e_lin = eval_study_model(setup, lin, 20, seed);
        dice_lin += e_lin.dice_mean / 3.0;
        haus_lin += e_lin.hausdorff_mean / 3.0;
        psnr_lin20 += e_lin.psnr_mean / 3.0;
        for (int g = 0; g < 3; ++g) {
            EvalStats e_dyn = eval_study_model(setup, dyn, step_grid[g], seed);
            psnr_dyn[g] += e_dyn.psnr_mean / 3.0;
            if (step_grid[g] == 20) {
                dice_dyn += e_dyn.dice_mean / 3.0;
                haus_dyn += e_dyn.hausdorff_mean / 3.0;
            }
        }
        dyn_models.push_back(std::move(dyn));
    }

    CheckResult c11{11, "ablation direction (dynamic vs linear schedule)",
                    dice_dyn >= dice_lin && haus_dyn <= haus_lin,
                    fmt("dice %.3f vs %.3f, hausdorff %.2f vs %.2f (3-seed means)", dice_dyn,
                        dice_lin, haus_dyn, haus_lin)};

    int best_steps = -1;
    for (int g = 0; g < 3; ++g)
        if (psnr_dyn[g] >= psnr_lin20 && best_steps < 0) best_steps = step_grid[g];
    CheckResult c12{12, "step-efficiency direction", best_steps > 0,
                    fmt("dynamic PSNR %.2f/%.2f/%.2f dB at 5/10/20 steps vs linear %.2f at 20%s",
                        psnr_dyn[0], psnr_dyn[1], psnr_dyn[2], psnr_lin20,
                        best_steps > 0 ? fmt(", matched at %d", best_steps).c_str()
                                       : ", never matched")};

    bool finite = true;
    double dice_at[4] = {0.0, 0.0, 0.0, 0.0};
    const int shifts[4] = {0, 1, 4, 8};
    for (int i = 0; i < 4; ++i) {
        EvalStats st = eval_study_model(setup, dyn_models[0], 20, 77, shifts[i]);
        finite = finite && st.finite;
        dice_at[i] = st.dice_mean;
    }
    bool graceful = finite && dice_at[3] < dice_at[0] && dice_at[3] >= 0.5 * dice_at[0];
    CheckResult c13{13, "misalignment robustness", graceful,
                    fmt("dice %.3f/%.3f/%.3f/%.3f at shifts 0/1/4/8%s", dice_at[0], dice_at[1],
                        dice_at[2], dice_at[3], finite ? "" : ", non-finite outputs")};
    return {c11, c12, c13};
}

}  // namespace cdt
