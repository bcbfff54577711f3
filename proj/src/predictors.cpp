#include "cdt/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cdt/forward.hpp"
#include "cdt/sampler.hpp"

namespace cdt {

Field GaussianPosteriorPredictor::predict_x0(const Field& x_t, const Field& x_src,
                                             double t) const {
    require_same_shape(x_t, mu0, "GaussianPosteriorPredictor");
    double ab = alpha_bar_index(*sched, t);
    double root_ab = std::sqrt(ab);
    double sig2 = 1.0 - ab;
    Field lam = L->slice_at(t);
    Field out = Field::like(x_t);
    for (size_t i = 0; i < out.size(); ++i) {
        double one_m = 1.0 - lam[i];
        double k = root_ab * one_m * tau2 / (ab * one_m * one_m * tau2 + sig2);
        double mean_t = root_ab * (lam[i] * x_src[i] + one_m * mu0[i]);
        out[i] = mu0[i] + k * (x_t[i] - mean_t);
    }
    return out;
}

ToyPredictorParams toy_predictor_init(uint64_t seed, int channels, int width, int T) {
    if (channels < 1 || width < 1 || T < 1)
        throw std::invalid_argument("toy_predictor_init: bad channels/width/T");
    ToyPredictorParams p;
    p.channels = channels;
    p.width = width;
    p.T = T;
    p.net = make_convnet({2 * channels + 6, width, width, channels},
                         {Activation::tanh_act, Activation::tanh_act, Activation::identity},
                         seed, 0.05);
    return p;
}

Field time_embedding(double t, int T, int H, int W) {
    Field emb(6, H, W);
    double u = t / T;
    const double pi = std::acos(-1.0);
    double vals[6];
    for (int f = 0; f < 3; ++f) {
        double ang = 2.0 * pi * u * (1 << f);
        vals[2 * f] = std::sin(ang);
        vals[2 * f + 1] = std::cos(ang);
    }
    for (int ch = 0; ch < 6; ++ch)
        std::fill(emb.v.begin() + static_cast<size_t>(ch) * emb.plane(),
                  emb.v.begin() + static_cast<size_t>(ch + 1) * emb.plane(), vals[ch]);
    return emb;
}

Field predict_eps(const ToyPredictorParams& p, const Field& x_t, const Field& x_src, double t,
                  ConvTape* tape) {
    require_same_shape(x_t, x_src, "predict_eps");
    if (x_t.c != p.channels) throw std::invalid_argument("predict_eps: channel mismatch");
    Field input(2 * p.channels + 6, x_t.h, x_t.w);
    size_t plane = static_cast<size_t>(x_t.h) * x_t.w;
    std::copy(x_t.v.begin(), x_t.v.end(), input.v.begin());
    std::copy(x_src.v.begin(), x_src.v.end(), input.v.begin() + plane * p.channels);
    Field emb = time_embedding(t, p.T, x_t.h, x_t.w);
    std::copy(emb.v.begin(), emb.v.end(), input.v.begin() + plane * 2 * p.channels);
    return convnet_forward(p.net, input, tape);
}

Field TrainedPredictor::predict_x0(const Field& x_t, const Field& x_src, double t) const {
    Field eps_hat = predict_eps(*params, x_t, x_src, t);
    return eps_to_x0(*sched, L->slice_at(t), x_t, x_src, eps_hat, t);
}

Field mixer_slice(const MixerModel& mixer, const NoiseSchedule& s, int t, int C, int H, int W,
                  const Field* posenc, DynamicSliceTape* tape) {
    int t1 = (mixer.t1 == -1) ? s.T : mixer.t1;
    if (t < 0 || t > s.T) throw std::invalid_argument("mixer_slice: t out of [0,T]");
    if (t == 0) return Field(C, H, W, 0.0);
    if (t > t1 || (t == s.T && t1 == s.T)) return Field(C, H, W, 1.0);
    double eta = base_eta(t, t1);
    switch (mixer.variant) {
        case MixVariant::linear:
            return Field(C, H, W, logistic_squash(eta, mixer.eps));
        case MixVariant::channel_poly: {
            if (t == t1 && t1 < s.T) return Field(C, H, W, 1.0 - mixer.eps);
            auto vals = channel_poly_lambda(mixer.poly, eta, mixer.eps);
            Field f(C, H, W);
            for (int c = 0; c < C; ++c)
                std::fill(f.v.begin() + static_cast<size_t>(c) * f.plane(),
                          f.v.begin() + static_cast<size_t>(c + 1) * f.plane(), vals[c]);
            return f;
        }
        case MixVariant::dynamic: {
            if (!posenc) throw std::invalid_argument("mixer_slice: dynamic variant needs posenc");
            return dynamic_lambda_slice(mixer.modnet, eta, *posenc, mixer.eps, tape);
        }
    }
    throw std::logic_error("mixer_slice: unknown variant");
}

MixField mixer_build_field(const MixerModel& mixer, const NoiseSchedule& s, int C, int H, int W,
                           const std::vector<int>* grid) {
    switch (mixer.variant) {
        case MixVariant::linear:
            return build_mixfield_linear(s, C, H, W, mixer.eps, mixer.t1, true, grid);
        case MixVariant::channel_poly:
            return build_mixfield_channel_poly(mixer.poly, s, H, W, mixer.eps, mixer.t1, grid);
        case MixVariant::dynamic:
            return build_mixfield_dynamic(mixer.modnet, s, H, W, mixer.eps, mixer.t1, grid);
    }
    throw std::logic_error("mixer_build_field: unknown variant");
}

size_t mixer_param_count(const MixerModel& mixer) {
    switch (mixer.variant) {
        case MixVariant::linear: return 0;
        case MixVariant::channel_poly: return mixer.poly.coeff.size();
        case MixVariant::dynamic: return mixer.modnet.net.params.size();
    }
    return 0;
}

TrainBatch draw_train_batch(Rng& rng, int n_pairs, const NoiseSchedule& s, int batch, int C,
                            int H, int W) {
    if (n_pairs < 1 || batch < 1) throw std::invalid_argument("draw_train_batch: empty batch");
    TrainBatch b;
    std::uniform_int_distribution<int> upair(0, n_pairs - 1);
    // Alg.-style uniform draw over the T noising steps (0-based draw maps to
    // the 1-based step carrying at least one noise application).
    std::uniform_int_distribution<int> ustep(0, s.T - 1);
    for (int i = 0; i < batch; ++i) {
        b.pair_idx.push_back(upair(rng));
        b.t_step.push_back(ustep(rng) + 1);
        b.noise.push_back(gaussian_field(rng, C, H, W));
    }
    return b;
}

double training_loss(const std::vector<DomainPair>& data, const ToyPredictorParams& pred,
                     const MixerModel& mixer, const NoiseSchedule& s, const TrainBatch& batch,
                     std::vector<double>* pred_grad, std::vector<double>* mixer_grad) {
    if (data.empty()) throw std::invalid_argument("training_loss: empty dataset");
    const int B = static_cast<int>(batch.pair_idx.size());
    const int C = data[0].x_src.c, H = data[0].x_src.h, W = data[0].x_src.w;
    int t1 = (mixer.t1 == -1) ? s.T : mixer.t1;
    Field posenc;
    if (mixer.variant == MixVariant::dynamic) posenc = position_encoding(H, W);

    bool want_mixer = mixer_grad && mixer.variant != MixVariant::linear;
    if (pred_grad) pred_grad->assign(pred.net.num_params(), 0.0);
    if (want_mixer) mixer_grad->assign(mixer_param_count(mixer), 0.0);

    double loss = 0.0;
    const double npix = static_cast<double>(C) * H * W;
    for (int bi = 0; bi < B; ++bi) {
        const DomainPair& pair = data[batch.pair_idx[bi]];
        int t = batch.t_step[bi];
        bool mixer_active = want_mixer && t > 0 && t < t1;

        DynamicSliceTape mtape;
        Field lam = mixer_slice(mixer, s, t, C, H, W,
                                mixer.variant == MixVariant::dynamic ? &posenc : nullptr,
                                mixer_active && mixer.variant == MixVariant::dynamic ? &mtape
                                                                                     : nullptr);
        Field d = domain_mixture(lam, pair);
        double root_ab = std::sqrt(s.alpha_bar[t]);
        Field x_t = Field::like(d);
        for (size_t i = 0; i < x_t.size(); ++i)
            x_t[i] = root_ab * d[i] + s.sigma[t] * batch.noise[bi][i];

        ConvTape tape;
        Field eps_hat = predict_eps(pred, x_t, pair.x_src, t, &tape);

        Field resid = Field::like(eps_hat);
        double l = 0.0;
        for (size_t i = 0; i < resid.size(); ++i) {
            resid[i] = eps_hat[i] - batch.noise[bi][i];
            l += resid[i] * resid[i];
        }
        loss += l / npix / B;

        if (!pred_grad && !mixer_active) continue;
        Field gout = Field::like(resid);
        double scale = 2.0 / npix / B;
        for (size_t i = 0; i < gout.size(); ++i) gout[i] = scale * resid[i];

        std::vector<double> dummy;
        std::vector<double>& pg = pred_grad ? *pred_grad : dummy;
        if (!pred_grad) dummy.assign(pred.net.num_params(), 0.0);
        Field gin = convnet_backward(pred.net, tape, gout, pg, mixer_active);

        if (mixer_active) {
            // d loss/d Lambda flows only through x_t = sqrt(ab) d + sigma eps
            // (the eps-space loss has no other Lambda dependence).
            Field glam(C, H, W, 0.0);
            for (size_t i = 0; i < glam.size(); ++i)
                glam[i] = gin[i] * root_ab * (pair.x_src[i] - pair.x_tgt[i]);
            if (mixer.variant == MixVariant::dynamic) {
                dynamic_lambda_backward(mixer.modnet, mtape, glam, *mixer_grad);
            } else {
                std::vector<double> gl(C, 0.0);
                for (int c = 0; c < C; ++c) {
                    const double* g = glam.v.data() + static_cast<size_t>(c) * glam.plane();
                    for (int i = 0; i < glam.plane(); ++i) gl[c] += g[i];
                }
                channel_poly_backward(mixer.poly, base_eta(t, t1), mixer.eps, gl, *mixer_grad);
            }
        }
    }
    return loss;
}

TrainResult train_score_matching(const std::vector<DomainPair>& data, ToyPredictorParams& pred,
                                 MixerModel& mixer, const NoiseSchedule& s,
                                 const TrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("train_score_matching: empty dataset");
    if (cfg.steps < 0 || cfg.batch < 1 || !(cfg.lr > 0.0))
        throw std::invalid_argument("train_score_matching: bad config");
    const int C = data[0].x_src.c, H = data[0].x_src.h, W = data[0].x_src.w;
    for (const auto& p : data)
        if (!p.x_src.same_shape(data[0].x_src) || !p.x_tgt.same_shape(data[0].x_src))
            throw std::invalid_argument("train_score_matching: inconsistent pair shapes");

    Rng rng(cfg.seed);
    SgdMomentum opt_pred{cfg.lr, cfg.momentum, {}};
    SgdMomentum opt_mix{cfg.lr, cfg.momentum, {}};
    bool trainable_mixer = mixer.train_mixer && mixer.variant != MixVariant::linear;

    TrainResult res;
    std::vector<double> pg, mg;
    for (int step = 0; step < cfg.steps; ++step) {
        TrainBatch batch = draw_train_batch(rng, static_cast<int>(data.size()), s, cfg.batch, C,
                                            H, W);
        double loss = training_loss(data, pred, mixer, s, batch, &pg,
                                    trainable_mixer ? &mg : nullptr);
        if (!std::isfinite(loss))
            throw std::runtime_error("train_score_matching: non-finite loss at step " +
                                     std::to_string(step) + " (t=" +
                                     std::to_string(batch.t_step.front()) + ", loss=" +
                                     std::to_string(loss) + ")");
        opt_pred.step(pred.net.params, pg);
        if (trainable_mixer) {
            auto& mp = (mixer.variant == MixVariant::dynamic) ? mixer.modnet.net.params
                                                              : mixer.poly.coeff;
            opt_mix.step(mp, mg, cfg.mixer_lr_mult);
        }
        res.loss.push_back(loss);
        int win = std::min<int>(cfg.smooth_window, static_cast<int>(res.loss.size()));
        double acc = 0.0;
        for (int k = 0; k < win; ++k) acc += res.loss[res.loss.size() - 1 - k];
        res.smoothed.push_back(acc / win);
    }
    return res;
}

}  // namespace cdt
