#pragma once

#include <vector>

namespace cdt {

// Discrete variance-preserving noise schedule. Arrays are indexed by step
// t = 0..T where index 0 is the clean state (alpha_bar = 1, sigma = 0); the
// noising steps proper are t = 1..T.
struct NoiseSchedule {
    int T = 0;
    double beta_min = 0.0;
    double beta_max = 0.0;
    std::vector<double> beta;       // per-step noise rate, beta[0] = 0
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // running product of alpha
    std::vector<double> sigma;      // sqrt(1 - alpha_bar)
    std::vector<double> rho;        // sqrt(alpha_bar_t / alpha_bar_{t-1}) = sqrt(alpha_t)
};

// Continuous-time drift/diffusion coefficients of the equivalent SDE at
// normalized time u = t/T. f = d/du ln sqrt(alpha_bar); g2 satisfies the
// second-moment balance d sigma^2/du = 2 f sigma^2 + g2.
struct ContCoeffs {
    double f = 0.0;
    double g2 = 0.0;
};

// Linear beta ramp from beta_min at t=1 to beta_max at t=T.
NoiseSchedule make_vp_schedule(int T, double beta_min, double beta_max);

// Throws std::invalid_argument if any schedule invariant is broken.
void validate_schedule(const NoiseSchedule& s);

// ln(alpha_bar) is interpolated piecewise-linearly between step knots, so f is
// piecewise constant and g2 = -2f exactly on each segment.
ContCoeffs continuous_coefficients(const NoiseSchedule& s, double u);

// alpha_bar at fractional time u in [0,1] (log-linear between knots).
double alpha_bar_at(const NoiseSchedule& s, double u);

// N+1 step indices from t1 down to 0, uniformly spaced in index space,
// strictly decreasing. Requires 1 <= N <= t1 <= T.
std::vector<int> make_spaced_grid(const NoiseSchedule& s, int N, int t1);

}  // namespace cdt
