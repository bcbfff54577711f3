#include "cdt/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cdt {

NoiseSchedule make_vp_schedule(int T, double beta_min, double beta_max) {
    if (T < 1) throw std::invalid_argument("make_vp_schedule: T must be >= 1");
    if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0))
        throw std::invalid_argument("make_vp_schedule: need 0 < beta_min <= beta_max < 1");

    NoiseSchedule s;
    s.T = T;
    s.beta_min = beta_min;
    s.beta_max = beta_max;
    s.beta.assign(T + 1, 0.0);
    s.alpha.assign(T + 1, 1.0);
    s.alpha_bar.assign(T + 1, 1.0);
    s.sigma.assign(T + 1, 0.0);
    s.rho.assign(T + 1, 1.0);

    for (int t = 1; t <= T; ++t) {
        double frac = (T > 1) ? static_cast<double>(t - 1) / (T - 1) : 0.0;
        s.beta[t] = beta_min + (beta_max - beta_min) * frac;
        s.alpha[t] = 1.0 - s.beta[t];
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
        s.sigma[t] = std::sqrt(1.0 - s.alpha_bar[t]);
        s.rho[t] = std::sqrt(s.alpha[t]);
    }
    validate_schedule(s);
    return s;
}

void validate_schedule(const NoiseSchedule& s) {
    if (s.T < 1 || static_cast<int>(s.alpha_bar.size()) != s.T + 1)
        throw std::invalid_argument("schedule: bad horizon/array sizes");
    if (s.alpha_bar[0] != 1.0 || s.sigma[0] != 0.0)
        throw std::invalid_argument("schedule: index 0 must be the clean state");
    for (int t = 1; t <= s.T; ++t) {
        if (!(s.beta[t] > 0.0 && s.beta[t] < 1.0))
            throw std::invalid_argument("schedule: beta out of (0,1) at t=" + std::to_string(t));
        if (s.beta[t] + 1e-15 < s.beta[t - 1] && t > 1)
            throw std::invalid_argument("schedule: beta must be nondecreasing");
        if (!(s.alpha_bar[t] > 0.0 && s.alpha_bar[t] < s.alpha_bar[t - 1]))
            throw std::invalid_argument("schedule: alpha_bar must decrease strictly in (0,1)");
        double vp = s.sigma[t] * s.sigma[t] + s.alpha_bar[t];
        if (std::abs(vp - 1.0) > 1e-12)
            throw std::invalid_argument("schedule: sigma^2 + alpha_bar != 1 at t=" + std::to_string(t));
        double chain = s.rho[t] * s.rho[t] * s.alpha_bar[t - 1];
        if (std::abs(chain - s.alpha_bar[t]) > 1e-12)
            throw std::invalid_argument("schedule: rho^2 * alpha_bar_{t-1} != alpha_bar_t at t=" +
                                        std::to_string(t));
    }
}

namespace {

// Segment index for u in [0,1]: u lives in [k/T, (k+1)/T), clamped so u = 1
// uses the last segment.
int segment_of(const NoiseSchedule& s, double u) {
    if (!(u >= 0.0 && u <= 1.0))
        throw std::invalid_argument("continuous time u must lie in [0,1]");
    int k = static_cast<int>(std::floor(u * s.T));
    return std::clamp(k, 0, s.T - 1);
}

}  // namespace

double alpha_bar_at(const NoiseSchedule& s, double u) {
    int k = segment_of(s, u);
    double la = std::log(s.alpha_bar[k]);
    double lb = std::log(s.alpha_bar[k + 1]);
    double frac = u * s.T - k;
    return std::exp(la + (lb - la) * frac);
}

ContCoeffs continuous_coefficients(const NoiseSchedule& s, double u) {
    int k = segment_of(s, u);
    double slope = (std::log(s.alpha_bar[k + 1]) - std::log(s.alpha_bar[k])) * s.T;
    ContCoeffs c;
    c.f = 0.5 * slope;
    // d sigma^2/du = -alpha_bar * dln(alpha_bar)/du = -2 f alpha_bar, so the
    // balance leaves g2 = -2f independent of alpha_bar on the segment.
    double ab = alpha_bar_at(s, u);
    double dsigma2 = -2.0 * c.f * ab;
    c.g2 = dsigma2 - 2.0 * (1.0 - ab) * c.f;
    if (c.g2 < -1e-12)
        throw std::invalid_argument("continuous_coefficients: negative squared diffusion (inconsistent schedule)");
    return c;
}

std::vector<int> make_spaced_grid(const NoiseSchedule& s, int N, int t1) {
    if (t1 < 1 || t1 > s.T) throw std::invalid_argument("make_spaced_grid: t1 out of [1,T]");
    if (N < 1 || N > t1) throw std::invalid_argument("make_spaced_grid: need 1 <= N <= t1");
    std::vector<int> grid(N + 1);
    for (int i = 0; i <= N; ++i)
        grid[i] = static_cast<int>(std::llround(static_cast<double>(t1) * (N - i) / N));
    grid[0] = t1;
    grid[N] = 0;
    // Rounding can collide on coarse grids; restore strict decrease from the end.
    for (int i = N - 1; i >= 0; --i)
        if (grid[i] <= grid[i + 1]) grid[i] = grid[i + 1] + 1;
    if (grid[0] > t1)
        throw std::invalid_argument("make_spaced_grid: N too large for t1 after de-duplication");
    return grid;
}

}  // namespace cdt
