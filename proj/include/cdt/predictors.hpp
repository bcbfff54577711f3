#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "cdt/field.hpp"
#include "cdt/mixfield.hpp"
#include "cdt/nn.hpp"
#include "cdt/schedules.hpp"

namespace cdt {

// Data-prediction interface used by the reverse solvers: given the noisy state
// and the source image, estimate the clean target x0. Time t is in step-index
// units and may be fractional (the reference integrator evaluates between
// grid points).
struct Predictor {
    enum class Kind { oracle_pair, gaussian_posterior, trained };
    Kind kind;

    explicit Predictor(Kind k) : kind(k) {}
    virtual ~Predictor() = default;
    virtual Field predict_x0(const Field& x_t, const Field& x_src, double t) const = 0;
};

// Ground-truth oracle: always returns the paired target.
struct OraclePairPredictor : Predictor {
    Field x_tgt;
    explicit OraclePairPredictor(Field tgt)
        : Predictor(Kind::oracle_pair), x_tgt(std::move(tgt)) {}
    Field predict_x0(const Field&, const Field&, double) const override { return x_tgt; }
};

// Closed-form posterior mean under a per-cell Gaussian prior x0 ~ N(mu0, tau2):
// pred = mu0 + k (x_t - sqrt(ab)(Lambda x_src + (1-Lambda) mu0)) with
// k = sqrt(ab)(1-Lambda) tau2 / (ab (1-Lambda)^2 tau2 + sigma^2).
struct GaussianPosteriorPredictor : Predictor {
    Field mu0;
    double tau2;
    const NoiseSchedule* sched;
    const MixField* L;

    GaussianPosteriorPredictor(Field mu0_, double tau2_, const NoiseSchedule& s,
                               const MixField& field)
        : Predictor(Kind::gaussian_posterior),
          mu0(std::move(mu0_)),
          tau2(tau2_),
          sched(&s),
          L(&field) {}
    Field predict_x0(const Field& x_t, const Field& x_src, double t) const override;
};

// Small conv net trained for noise prediction. Input is the concatenation of
// x_t, x_src and a 6-channel sinusoidal embedding of t/T; the native output is
// eps_hat, and predict_x0 converts it through the marginal inversion.
struct ToyPredictorParams {
    int channels = 1;
    int width = 16;
    int T = 0;
    ConvNet net;  // (2C+6) -> width -> width -> C, tanh hidden, linear head
};

// Variance-scaled init; the head is shrunk (not zeroed) so an untrained net
// outputs near-zero eps while every parameter keeps a usable gradient.
ToyPredictorParams toy_predictor_init(uint64_t seed, int channels, int width, int T);

Field time_embedding(double t, int T, int H, int W);

Field predict_eps(const ToyPredictorParams& p, const Field& x_t, const Field& x_src, double t,
                  ConvTape* tape = nullptr);

struct TrainedPredictor : Predictor {
    const ToyPredictorParams* params;
    const NoiseSchedule* sched;
    const MixField* L;

    TrainedPredictor(const ToyPredictorParams& p, const NoiseSchedule& s, const MixField& field)
        : Predictor(Kind::trained), params(&p), sched(&s), L(&field) {}
    Field predict_x0(const Field& x_t, const Field& x_src, double t) const override;
};

// Mixing-schedule model as seen by the trainer. linear has no parameters;
// channel_poly and dynamic are trainable. t1 = -1 means no truncation.
struct MixerModel {
    MixVariant variant = MixVariant::linear;
    double eps = 1e-4;
    int t1 = -1;
    bool train_mixer = true;
    ChannelPolyParams poly;
    ModNetParams modnet;
};

// Lambda slice the trainer/builders agree on (endpoint and truncation clamps
// included). H/W give the slice shape for the uniform variants.
Field mixer_slice(const MixerModel& mixer, const NoiseSchedule& s, int t, int C, int H, int W,
                  const Field* posenc, DynamicSliceTape* tape);

// Materialize the mixer as a MixField (delegates to the module builders so
// trained parameters and sampling see identical values).
MixField mixer_build_field(const MixerModel& mixer, const NoiseSchedule& s, int C, int H, int W,
                           const std::vector<int>* grid = nullptr);

struct TrainConfig {
    int steps = 2000;
    double lr = 0.02;
    double mixer_lr_mult = 10.0;  // tenfold faster mixer updates
    int batch = 4;
    uint64_t seed = 0;
    double momentum = 0.9;
    int smooth_window = 51;
};

struct TrainResult {
    std::vector<double> loss;
    std::vector<double> smoothed;  // trailing-window mean of loss
};

// One batch worth of frozen draws, so the loss is a deterministic function of
// the parameters (finite-difference checks rely on this).
struct TrainBatch {
    std::vector<int> pair_idx;
    std::vector<int> t_step;     // 1..T
    std::vector<Field> noise;
};

TrainBatch draw_train_batch(Rng& rng, int n_pairs, const NoiseSchedule& s, int batch, int C,
                            int H, int W);

// eps-space MSE (per-element mean, averaged over the batch) plus analytic
// gradients. Pass nullptr to skip a gradient; mixer_grad is ignored for the
// linear variant.
double training_loss(const std::vector<DomainPair>& data, const ToyPredictorParams& pred,
                     const MixerModel& mixer, const NoiseSchedule& s, const TrainBatch& batch,
                     std::vector<double>* pred_grad, std::vector<double>* mixer_grad);

size_t mixer_param_count(const MixerModel& mixer);

// Momentum-SGD joint training: t drawn uniformly over the T noising steps,
// mixer parameters updated at lr * mixer_lr_mult. Throws on non-finite loss.
TrainResult train_score_matching(const std::vector<DomainPair>& data, ToyPredictorParams& pred,
                                 MixerModel& mixer, const NoiseSchedule& s,
                                 const TrainConfig& cfg);

}  // namespace cdt
