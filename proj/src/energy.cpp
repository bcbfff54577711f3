#include "cdt/energy.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace cdt {

SchedulePath linear_path(PathClass cls, int M, int ncells) {
    if (M < 2 || ncells < 1) throw std::invalid_argument("linear_path: need M >= 2, ncells >= 1");
    SchedulePath p;
    p.cls = cls;
    p.M = M;
    p.ncells = ncells;
    p.values.resize(static_cast<size_t>(M + 1) * ncells);
    for (int k = 0; k <= M; ++k)
        for (int j = 0; j < ncells; ++j) p.at(k, j) = static_cast<double>(k) / M;
    return p;
}

void validate_energy_spec(const EnergySpec& spec, const DomainPair& pair) {
    if (spec.M < 2 || spec.ncells < 1) throw std::invalid_argument("energy spec: M >= 2, ncells >= 1");
    size_t nodes = static_cast<size_t>(spec.M + 1) * spec.ncells;
    if (spec.a.size() != nodes || spec.u.size() != nodes ||
        spec.m.size() != static_cast<size_t>(spec.ncells) ||
        spec.contrast.size() != static_cast<size_t>(spec.ncells))
        throw std::invalid_argument("energy spec: array sizes inconsistent with M/ncells");
    for (double x : spec.a)
        if (!(x > 0.0)) throw std::invalid_argument("energy spec: kinetic weights must be > 0");
    for (double x : spec.m)
        if (x < 0.0) throw std::invalid_argument("energy spec: potential strengths must be >= 0");
    if (pair.x_src.size() != static_cast<size_t>(spec.ncells) ||
        pair.x_tgt.size() != static_cast<size_t>(spec.ncells))
        throw std::invalid_argument("energy spec: pair shape does not match ncells");
    for (int j = 0; j < spec.ncells; ++j) {
        double d = pair.x_src[j] - pair.x_tgt[j];
        if (std::abs(d - spec.contrast[j]) > 1e-12)
            throw std::invalid_argument("energy spec: contrast does not match pair");
    }
}

void validate_path(const SchedulePath& path, const EnergySpec& spec) {
    if (path.M != spec.M || path.ncells != spec.ncells)
        throw std::invalid_argument("schedule path: resolution does not match spec");
    if (path.values.size() != static_cast<size_t>(spec.M + 1) * spec.ncells)
        throw std::invalid_argument("schedule path: value array size mismatch");
    const double tol = 1e-12;
    for (int j = 0; j < path.ncells; ++j) {
        if (path.at(0, j) != 0.0)
            throw std::invalid_argument("schedule path: lambda(0) must be exactly 0");
        if (path.at(path.M, j) != 1.0)
            throw std::invalid_argument("schedule path: lambda(1) must be exactly 1");
        for (int k = 0; k <= path.M; ++k) {
            double v = path.at(k, j);
            if (v < -tol || v > 1.0 + tol)
                throw std::invalid_argument("schedule path: value outside [0,1]");
            if (k > 0 && v < path.at(k - 1, j) - tol)
                throw std::invalid_argument("schedule path: values must be nondecreasing");
        }
    }
    if (path.cls == PathClass::global_path)
        for (int k = 0; k <= path.M; ++k)
            for (int j = 1; j < path.ncells; ++j)
                if (path.at(k, j) != path.at(k, 0))
                    throw std::invalid_argument("schedule path: global path must be spatially constant");
}

namespace {

// Raw discretized energy, no feasibility checks (the descent certificate
// evaluates slightly infeasible perturbations of the optimum).
double energy_raw(const EnergySpec& spec, const DomainPair& pair, const double* vals) {
    const int M = spec.M, n = spec.ncells;
    const double h = 1.0 / M;
    double e = 0.0;
    for (int j = 0; j < n; ++j) {
        double tgt = pair.x_tgt[j];
        double delta = spec.contrast[j];
        double mj = spec.m[j];
        for (int k = 0; k <= M; ++k) {
            double lam = vals[static_cast<size_t>(k) * n + j];
            double d = tgt + lam * delta;
            double v;
            if (k == 0)
                v = (vals[static_cast<size_t>(1) * n + j] - lam) * delta / h;
            else if (k == M)
                v = (lam - vals[static_cast<size_t>(M - 1) * n + j]) * delta / h;
            else
                v = (vals[static_cast<size_t>(k + 1) * n + j] -
                     vals[static_cast<size_t>(k - 1) * n + j]) *
                    delta / (2.0 * h);
            double w = (k == 0 || k == M) ? h / 2.0 : h;
            double a = spec.a[static_cast<size_t>(k) * n + j];
            double du = d - spec.u[static_cast<size_t>(k) * n + j];
            e += w * (a * v * v + mj * du * du);
        }
    }
    return e;
}

// dE/dlambda(k, j), accumulated into grad (same layout as vals).
void grad_raw(const EnergySpec& spec, const DomainPair& pair, const double* vals, double* grad) {
    const int M = spec.M, n = spec.ncells;
    const double h = 1.0 / M;
    std::fill(grad, grad + static_cast<size_t>(M + 1) * n, 0.0);
    for (int j = 0; j < n; ++j) {
        double tgt = pair.x_tgt[j];
        double delta = spec.contrast[j];
        double mj = spec.m[j];
        for (int k = 0; k <= M; ++k) {
            double lam = vals[static_cast<size_t>(k) * n + j];
            double w = (k == 0 || k == M) ? h / 2.0 : h;
            double a = spec.a[static_cast<size_t>(k) * n + j];
            // potential part
            double d = tgt + lam * delta;
            double du = d - spec.u[static_cast<size_t>(k) * n + j];
            grad[static_cast<size_t>(k) * n + j] += w * mj * 2.0 * du * delta;
            // kinetic part: scatter to the nodes the velocity stencil touches
            if (k == 0) {
                double v = (vals[static_cast<size_t>(1) * n + j] - lam) * delta / h;
                double c = w * a * 2.0 * v * delta / h;
                grad[static_cast<size_t>(1) * n + j] += c;
                grad[static_cast<size_t>(0) * n + j] -= c;
            } else if (k == M) {
                double v = (lam - vals[static_cast<size_t>(M - 1) * n + j]) * delta / h;
                double c = w * a * 2.0 * v * delta / h;
                grad[static_cast<size_t>(M) * n + j] += c;
                grad[static_cast<size_t>(M - 1) * n + j] -= c;
            } else {
                double v = (vals[static_cast<size_t>(k + 1) * n + j] -
                            vals[static_cast<size_t>(k - 1) * n + j]) *
                           delta / (2.0 * h);
                double c = w * a * 2.0 * v * delta / (2.0 * h);
                grad[static_cast<size_t>(k + 1) * n + j] += c;
                grad[static_cast<size_t>(k - 1) * n + j] -= c;
            }
        }
    }
}

// Monotone/box/endpoint projection: PAV, clip to [0,1], pin the ends.
void project_monotone(std::vector<double>& x) {
    isotonic_projection(x);
    for (auto& v : x) v = std::clamp(v, 0.0, 1.0);
    x.front() = 0.0;
    x.back() = 1.0;
}

struct PgdFuncs {
    std::function<double(const std::vector<double>&)> energy;
    std::function<void(const std::vector<double>&, std::vector<double>&)> grad;
};

// FISTA with backtracking and function-value restart on the monotone class.
// Convex quadratic objective, so this converges to the constrained optimum.
struct PgdOutcome {
    std::vector<double> x;
    double energy = 0.0;
    bool converged = false;
    int iters = 0;
};

PgdOutcome pgd_solve(const PgdFuncs& f, std::vector<double> x0, const OptimOptions& opt) {
    project_monotone(x0);
    std::vector<double> x = x0, x_prev = x0, y = x0, g(x0.size()), cand(x0.size());
    double fx = f.energy(x);
    double L = 1.0;
    double tk = 1.0;
    PgdOutcome out;
    auto stationary = [&](const std::vector<double>& pt) {
        f.grad(pt, g);
        cand = pt;
        for (size_t i = 0; i < cand.size(); ++i) cand[i] -= g[i] / L;
        project_monotone(cand);
        double pg = 0.0;
        for (size_t i = 0; i < cand.size(); ++i)
            pg = std::max(pg, std::abs(cand[i] - pt[i]) * L);
        return pg < opt.tol;
    };
    int it = 0;
    for (; it < opt.max_iters; ++it) {
        f.grad(y, g);
        double fy = f.energy(y);
        // backtrack the majorizer constant
        double fc = 0.0;
        for (int bt = 0; bt < 60; ++bt) {
            cand = y;
            for (size_t i = 0; i < cand.size(); ++i) cand[i] -= g[i] / L;
            project_monotone(cand);
            fc = f.energy(cand);
            double q = fy;
            for (size_t i = 0; i < cand.size(); ++i) {
                double dxi = cand[i] - y[i];
                q += g[i] * dxi + 0.5 * L * dxi * dxi;
            }
            if (fc <= q + 1e-15) break;
            L *= 2.0;
        }
        x_prev = x;
        x = cand;
        double fx_new = fc;
        if (fx_new > fx + 1e-14 * (1.0 + std::abs(fx))) {
            // momentum overshoot: restart from the last monotone iterate
            y = x_prev;
            x = x_prev;
            tk = 1.0;
            L *= 2.0;
            if (L > 1e18) break;
            continue;
        }
        fx = fx_new;
        double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
        for (size_t i = 0; i < x.size(); ++i)
            y[i] = x[i] + (tk - 1.0) / t_next * (x[i] - x_prev[i]);
        tk = t_next;

        if (it % 10 == 9 && stationary(x)) {
            out.converged = true;
            break;
        }
    }
    if (!out.converged) out.converged = stationary(x);
    out.x = x;
    out.energy = f.energy(x);
    out.iters = it;
    return out;
}

std::vector<double> random_monotone_start(Rng& rng, int M) {
    std::vector<double> x(M + 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : x) v = u(rng);
    std::sort(x.begin(), x.end());
    x.front() = 0.0;
    x.back() = 1.0;
    return x;
}

}  // namespace

double path_energy(const EnergySpec& spec, const SchedulePath& path, const DomainPair& pair) {
    validate_energy_spec(spec, pair);
    validate_path(path, spec);
    return energy_raw(spec, pair, path.values.data());
}

void isotonic_projection(std::vector<double>& y) {
    // Pool-adjacent-violators, single forward pass with block merging.
    const size_t n = y.size();
    if (n < 2) return;
    std::vector<double> mean(n), weight(n);
    std::vector<size_t> len(n);
    size_t blocks = 0;
    for (size_t i = 0; i < n; ++i) {
        mean[blocks] = y[i];
        weight[blocks] = 1.0;
        len[blocks] = 1;
        ++blocks;
        while (blocks > 1 && mean[blocks - 2] > mean[blocks - 1]) {
            double w = weight[blocks - 2] + weight[blocks - 1];
            mean[blocks - 2] =
                (mean[blocks - 2] * weight[blocks - 2] + mean[blocks - 1] * weight[blocks - 1]) / w;
            weight[blocks - 2] = w;
            len[blocks - 2] += len[blocks - 1];
            --blocks;
        }
    }
    size_t i = 0;
    for (size_t b = 0; b < blocks; ++b)
        for (size_t k = 0; k < len[b]; ++k) y[i++] = mean[b];
}

OptimResult optimize_global(const EnergySpec& spec, const DomainPair& pair,
                            const OptimOptions& opt) {
    validate_energy_spec(spec, pair);
    const int M = spec.M, n = spec.ncells;
    std::vector<double> vals(static_cast<size_t>(M + 1) * n), cellgrad(vals.size());

    PgdFuncs f;
    f.energy = [&](const std::vector<double>& x) {
        for (int k = 0; k <= M; ++k)
            for (int j = 0; j < n; ++j) vals[static_cast<size_t>(k) * n + j] = x[k];
        return energy_raw(spec, pair, vals.data());
    };
    f.grad = [&](const std::vector<double>& x, std::vector<double>& g) {
        for (int k = 0; k <= M; ++k)
            for (int j = 0; j < n; ++j) vals[static_cast<size_t>(k) * n + j] = x[k];
        grad_raw(spec, pair, vals.data(), cellgrad.data());
        for (int k = 0; k <= M; ++k) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += cellgrad[static_cast<size_t>(k) * n + j];
            g[k] = acc;
        }
    };

    Rng rng(opt.seed);
    PgdOutcome best;
    bool have = false;
    for (int r = 0; r < std::max(1, opt.restarts); ++r) {
        std::vector<double> x0(M + 1);
        if (r == 0)
            for (int k = 0; k <= M; ++k) x0[k] = static_cast<double>(k) / M;
        else
            x0 = random_monotone_start(rng, M);
        PgdOutcome o = pgd_solve(f, std::move(x0), opt);
        if (!have || o.energy < best.energy) {
            best = std::move(o);
            have = true;
        }
    }

    OptimResult res;
    res.path.cls = PathClass::global_path;
    res.path.M = M;
    res.path.ncells = n;
    res.path.values.resize(vals.size());
    for (int k = 0; k <= M; ++k)
        for (int j = 0; j < n; ++j) res.path.values[static_cast<size_t>(k) * n + j] = best.x[k];
    res.energy = best.energy;
    res.converged = best.converged;
    res.iters = best.iters;
    validate_path(res.path, spec);
    return res;
}

OptimResult optimize_pixelwise(const EnergySpec& spec, const DomainPair& pair,
                               const OptimOptions& opt) {
    validate_energy_spec(spec, pair);
    const int M = spec.M, n = spec.ncells;
    OptimResult res;
    res.path.cls = PathClass::pixelwise;
    res.path.M = M;
    res.path.ncells = n;
    res.path.values.resize(static_cast<size_t>(M + 1) * n);
    res.energy = 0.0;
    res.converged = true;

    for (int j = 0; j < n; ++j) {
        EnergySpec sub;
        sub.M = M;
        sub.ncells = 1;
        sub.a.resize(M + 1);
        sub.u.resize(M + 1);
        for (int k = 0; k <= M; ++k) {
            sub.a[k] = spec.a[static_cast<size_t>(k) * n + j];
            sub.u[k] = spec.u[static_cast<size_t>(k) * n + j];
        }
        sub.m = {spec.m[j]};
        sub.contrast = {spec.contrast[j]};
        DomainPair cell;
        cell.x_src = Field(1, 1, 1, pair.x_src[j]);
        cell.x_tgt = Field(1, 1, 1, pair.x_tgt[j]);
        OptimResult one = optimize_global(sub, cell, opt);
        for (int k = 0; k <= M; ++k)
            res.path.values[static_cast<size_t>(k) * n + j] = one.path.at(k, 0);
        res.energy += one.energy;
        res.converged = res.converged && one.converged;
        res.iters = std::max(res.iters, one.iters);
    }
    validate_path(res.path, spec);
    return res;
}

DominationReport verify_strict_domination(const EnergySpec& spec, const DomainPair& pair,
                                          const OptimOptions& opt) {
    validate_energy_spec(spec, pair);
    const int M = spec.M, n = spec.ncells;
    DominationReport rep;

    bool differs = false;
    for (int j = 1; j < n && !differs; ++j) {
        if (spec.m[j] != spec.m[0]) differs = true;
        for (int k = 0; k <= M && !differs; ++k) {
            if (spec.a[static_cast<size_t>(k) * n + j] != spec.a[static_cast<size_t>(k) * n] ||
                spec.u[static_cast<size_t>(k) * n + j] != spec.u[static_cast<size_t>(k) * n])
                differs = true;
        }
    }
    bool contrast_ok = true;
    for (double d : spec.contrast)
        if (d == 0.0) contrast_ok = false;
    rep.heterogeneous = differs && contrast_ok;
    if (!rep.heterogeneous) rep.note = "homogeneous instance; strict gap not required";

    OptimResult glob = optimize_global(spec, pair, opt);
    OptimResult pix = optimize_pixelwise(spec, pair, opt);
    rep.e_glob = glob.energy;
    rep.e_pix = pix.energy;
    rep.gap = glob.energy - pix.energy;
    rep.gap_positive = rep.gap > 1e-6 * std::abs(glob.energy);

    // First-order descent direction from the potential force, spread by a
    // raised-cosine bump on the middle third of [0,1].
    std::vector<double> psi(M + 1, 0.0);
    const double pi = std::acos(-1.0);
    for (int k = 0; k <= M; ++k) {
        double sfrac = static_cast<double>(k) / M;
        if (sfrac > 1.0 / 3.0 && sfrac < 2.0 / 3.0)
            psi[k] = 0.5 * (1.0 - std::cos(2.0 * pi * (3.0 * sfrac - 1.0)));
    }
    double base = energy_raw(spec, pair, glob.path.values.data());
    const double epses[3] = {1e-4, 3.1622776601683794e-4, 1e-3};
    std::vector<double> perturbed(glob.path.values.size());
    for (double eps : epses) {
        for (int k = 0; k <= M; ++k)
            for (int j = 0; j < n; ++j) {
                double lam = glob.path.at(k, j);
                double d = pair.x_tgt[j] + lam * spec.contrast[j];
                double G = 2.0 * spec.m[j] * (d - spec.u[static_cast<size_t>(k) * n + j]) *
                           spec.contrast[j];
                double sgn = (G > 0.0) - (G < 0.0);
                perturbed[static_cast<size_t>(k) * n + j] = lam - eps * sgn * psi[k];
            }
        double de = energy_raw(spec, pair, perturbed.data()) - base;
        rep.certificate.emplace_back(eps, de);
    }
    rep.certificate_descent = true;
    for (auto& [e, de] : rep.certificate)
        if (!(de < 0.0)) rep.certificate_descent = false;
    if (rep.certificate_descent) {
        double r0 = rep.certificate[0].second / rep.certificate[0].first;
        rep.certificate_linear = true;
        for (auto& [e, de] : rep.certificate)
            if (std::abs(de / e / r0 - 1.0) > 0.15) rep.certificate_linear = false;
    }
    return rep;
}

namespace {

EnergyInstance make_two_cell(const std::string& name, int M,
                             const std::function<double(double)>& u0,
                             const std::function<double(double)>& u1) {
    EnergyInstance inst;
    inst.name = name;
    inst.spec.M = M;
    inst.spec.ncells = 2;
    inst.spec.a.assign(static_cast<size_t>(M + 1) * 2, 1.0);
    inst.spec.m = {6.0, 6.0};
    inst.spec.contrast = {1.0, 1.0};
    inst.spec.u.resize(static_cast<size_t>(M + 1) * 2);
    for (int k = 0; k <= M; ++k) {
        double sfrac = static_cast<double>(k) / M;
        inst.spec.u[static_cast<size_t>(k) * 2 + 0] = u0(sfrac);
        inst.spec.u[static_cast<size_t>(k) * 2 + 1] = u1(sfrac);
    }
    inst.pair.x_src = Field(1, 1, 2, 1.0);
    inst.pair.x_tgt = Field(1, 1, 2, 0.0);
    return inst;
}

}  // namespace

EnergyInstance reference_heterogeneous_instance(int M) {
    // cell 0 is pulled toward an early ramp, cell 1 toward a late one
    return make_two_cell("heterogeneous", M, [](double s) { return 1.0 - (1.0 - s) * (1.0 - s); },
                         [](double s) { return s * s; });
}

EnergyInstance reference_homogeneous_instance(int M) {
    return make_two_cell("homogeneous", M, [](double s) { return s; },
                         [](double s) { return s; });
}

}  // namespace cdt
