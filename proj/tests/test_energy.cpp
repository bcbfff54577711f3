#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cdt/energy.hpp"
#include "cdt/field.hpp"
#include "doctest.h"

using namespace cdt;

namespace {

// Textbook O(n^2) pool-adjacent-violators: rescan after every merge. Slow but
// independently correct, used as the projection oracle.
std::vector<double> pav_reference(std::vector<double> y) {
    std::vector<double> val = y, wgt(y.size(), 1.0);
    bool merged = true;
    while (merged) {
        merged = false;
        for (size_t i = 0; i + 1 < val.size(); ++i) {
            if (val[i] > val[i + 1]) {
                double w = wgt[i] + wgt[i + 1];
                val[i] = (val[i] * wgt[i] + val[i + 1] * wgt[i + 1]) / w;
                wgt[i] = w;
                val.erase(val.begin() + i + 1);
                wgt.erase(wgt.begin() + i + 1);
                merged = true;
                break;
            }
        }
    }
    std::vector<double> out;
    for (size_t b = 0; b < val.size(); ++b)
        for (int k = 0; k < static_cast<int>(wgt[b]); ++k) out.push_back(val[b]);
    return out;
}

// Exhaustive global optimum over quantized monotone paths with fixed ends.
// States are (previous level, current level) because the central-difference
// velocity at node k touches nodes k-1 and k+1.
double dp_global_minimum(const EnergySpec& spec, const DomainPair& pair, int K) {
    const int M = spec.M, n = spec.ncells;
    const double h = 1.0 / M;
    auto lv = [&](int q) { return static_cast<double>(q) / K; };
    auto wk = [&](int k) { return (k == 0 || k == M) ? h / 2.0 : h; };
    auto pot = [&](int k, double lam) {
        double e = 0.0;
        for (int j = 0; j < n; ++j) {
            double d = pair.x_tgt[j] + lam * spec.contrast[j] -
                       spec.u[static_cast<size_t>(k) * n + j];
            e += spec.m[j] * d * d;
        }
        return wk(k) * e;
    };
    auto kin_coeff = [&](int k, double step) {
        double e = 0.0;
        for (int j = 0; j < n; ++j)
            e += spec.a[static_cast<size_t>(k) * n + j] * spec.contrast[j] * spec.contrast[j];
        return wk(k) * e / (step * step);
    };

    const double inf = std::numeric_limits<double>::infinity();
    const size_t S = static_cast<size_t>(K + 1);
    std::vector<double> dp(S * S, inf), nxt(S * S, inf);

    // node 0: one-sided velocity (lambda_1 - 0) / h, fixed lambda_0 = 0
    double kin0 = kin_coeff(0, h);
    for (int l1 = 0; l1 <= K; ++l1) dp[0 * S + l1] = pot(0, 0.0) + kin0 * lv(l1) * lv(l1);

    for (int k = 1; k <= M - 1; ++k) {
        std::fill(nxt.begin(), nxt.end(), inf);
        double kc = kin_coeff(k, 2.0 * h);
        for (int lc = 0; lc <= K; ++lc) {
            double p = pot(k, lv(lc));
            int next_lo = (k == M - 1) ? K : lc;
            for (int lp = 0; lp <= lc; ++lp) {
                double base = dp[static_cast<size_t>(lp) * S + lc];
                if (base == inf) continue;
                for (int ln = next_lo; ln <= K; ++ln) {
                    double dv = lv(ln) - lv(lp);
                    double cand = base + p + kc * dv * dv;
                    double& slot = nxt[static_cast<size_t>(lc) * S + ln];
                    if (cand < slot) slot = cand;
                }
            }
        }
        dp.swap(nxt);
    }

    // node M: one-sided velocity (1 - lambda_{M-1}) / h, fixed lambda_M = 1
    double kinM = kin_coeff(M, h);
    double best = inf;
    for (int lp = 0; lp <= K; ++lp) {
        double base = dp[static_cast<size_t>(lp) * S + K];
        if (base == inf) continue;
        double dv = 1.0 - lv(lp);
        best = std::min(best, base + pot(M, 1.0) + kinM * dv * dv);
    }
    return best;
}

// Single-cell exhaustive minimum over all nondecreasing interior level
// sequences (the odometer walks the monotone lattice).
double brute_cell_minimum(const EnergySpec& spec, const DomainPair& pair, int cell, int L) {
    const int M = spec.M, n = spec.ncells;
    const double h = 1.0 / M;
    double tgt = pair.x_tgt[cell], delta = spec.contrast[cell], mj = spec.m[cell];
    auto av = [&](int k) { return spec.a[static_cast<size_t>(k) * n + cell]; };
    auto uv = [&](int k) { return spec.u[static_cast<size_t>(k) * n + cell]; };

    std::vector<int> lev(M - 1, 0);
    std::vector<double> lam(M + 1, 0.0);
    lam[M] = 1.0;
    double best = std::numeric_limits<double>::infinity();
    while (true) {
        for (int k = 1; k < M; ++k) lam[k] = static_cast<double>(lev[k - 1]) / L;
        double e = 0.0;
        for (int k = 0; k <= M; ++k) {
            double v;
            if (k == 0)
                v = (lam[1] - lam[0]) * delta / h;
            else if (k == M)
                v = (lam[M] - lam[M - 1]) * delta / h;
            else
                v = (lam[k + 1] - lam[k - 1]) * delta / (2.0 * h);
            double d = tgt + lam[k] * delta - uv(k);
            double w = (k == 0 || k == M) ? h / 2.0 : h;
            e += w * (av(k) * v * v + mj * d * d);
        }
        best = std::min(best, e);

        int pos = M - 2;
        while (pos >= 0 && lev[pos] == L) --pos;
        if (pos < 0) break;
        int v = ++lev[pos];
        for (int q = pos + 1; q < M - 1; ++q) lev[q] = v;  // keep nondecreasing
    }
    return best;
}

EnergyInstance mixed_instance(int M) {
    EnergyInstance inst;
    inst.name = "mixed";
    inst.spec.M = M;
    inst.spec.ncells = 2;
    inst.spec.m = {3.0, 1.5};
    inst.spec.contrast = {0.8, -0.6};
    inst.spec.a.resize(static_cast<size_t>(M + 1) * 2);
    inst.spec.u.resize(static_cast<size_t>(M + 1) * 2);
    for (int k = 0; k <= M; ++k) {
        double s = static_cast<double>(k) / M;
        inst.spec.a[static_cast<size_t>(k) * 2 + 0] = 0.6 + 0.5 * s;
        inst.spec.a[static_cast<size_t>(k) * 2 + 1] = 1.4 - 0.7 * s;
        inst.spec.u[static_cast<size_t>(k) * 2 + 0] = -0.2 + 0.8 * std::sqrt(s);
        inst.spec.u[static_cast<size_t>(k) * 2 + 1] = 0.5 - 0.6 * s * s;
    }
    inst.pair.x_src = Field(1, 1, 2);
    inst.pair.x_tgt = Field(1, 1, 2);
    inst.pair.x_src.v = {0.6, -0.1};
    inst.pair.x_tgt.v = {-0.2, 0.5};
    return inst;
}

}  // namespace

TEST_CASE("hand-computed three-node energy") {
    EnergySpec spec;
    spec.M = 2;
    spec.ncells = 1;
    spec.a = {2.0, 3.0, 4.0};
    spec.m = {5.0};
    spec.u = {0.1, 0.5, 0.2};
    spec.contrast = {1.0};
    DomainPair pair;
    pair.x_src = Field(1, 1, 1, 0.7);
    pair.x_tgt = Field(1, 1, 1, -0.3);

    SchedulePath p = linear_path(PathClass::global_path, 2, 1);
    p.at(1, 0) = 0.25;
    CHECK(path_energy(spec, p, pair) == doctest::Approx(5.14375).epsilon(1e-14));
}

TEST_CASE("energy is exactly quadratic along feasible segments") {
    EnergyInstance inst = reference_heterogeneous_instance(32);
    SchedulePath p = linear_path(PathClass::global_path, 32, 2);
    SchedulePath q = p;
    for (int k = 1; k < 32; ++k) {
        double s = static_cast<double>(k) / 32;
        double v = s * s * (3.0 - 2.0 * s);  // smoothstep, still monotone
        for (int j = 0; j < 2; ++j) q.at(k, j) = v;
    }
    auto blend = [&](double w) {
        SchedulePath r = p;
        for (size_t i = 0; i < r.values.size(); ++i)
            r.values[i] = (1.0 - w) * p.values[i] + w * q.values[i];
        return path_energy(inst.spec, r, inst.pair);
    };
    double e0 = blend(0.0), eh = blend(0.5), e1 = blend(1.0);
    // fit E(w) = c0 + c1 w + c2 w^2 through 0, 1/2, 1 and predict w = 1/4
    double c0 = e0;
    double c2 = 2.0 * (e1 + e0 - 2.0 * eh);
    double c1 = e1 - e0 - c2;
    double want = c0 + 0.25 * c1 + 0.0625 * c2;
    CHECK(blend(0.25) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("isotonic projection: reference PAV, idempotence, nearest point") {
    Rng rng(41);
    std::uniform_real_distribution<double> un(-2.0, 2.0);
    std::uniform_int_distribution<int> len(1, 40);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> y(len(rng));
        for (auto& v : y) v = un(rng);
        std::vector<double> z = y;
        isotonic_projection(z);
        std::vector<double> ref = pav_reference(y);
        REQUIRE(z.size() == ref.size());
        for (size_t i = 0; i < z.size(); ++i) CHECK(z[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        for (size_t i = 0; i + 1 < z.size(); ++i) CHECK(z[i] <= z[i + 1] + 1e-15);

        std::vector<double> zz = z;
        isotonic_projection(zz);
        for (size_t i = 0; i < z.size(); ++i) CHECK(zz[i] == z[i]);

        double dz = 0.0;
        for (size_t i = 0; i < y.size(); ++i) dz += (y[i] - z[i]) * (y[i] - z[i]);
        for (int probe = 0; probe < 20; ++probe) {
            std::vector<double> w(y.size());
            for (auto& v : w) v = un(rng);
            std::sort(w.begin(), w.end());
            double dw = 0.0;
            for (size_t i = 0; i < y.size(); ++i) dw += (y[i] - w[i]) * (y[i] - w[i]);
            CHECK(dz <= dw + 1e-12);
        }
    }
}

TEST_CASE("path validation rejects each constraint violation") {
    EnergyInstance inst = reference_homogeneous_instance(16);
    SchedulePath p = linear_path(PathClass::global_path, 16, 2);
    CHECK_NOTHROW(validate_path(p, inst.spec));

    SchedulePath bad = p;
    bad.at(0, 0) = 1e-15;
    bad.at(0, 1) = 1e-15;
    CHECK_THROWS_WITH_AS(validate_path(bad, inst.spec),
                         "schedule path: lambda(0) must be exactly 0", std::invalid_argument);

    bad = p;
    bad.at(16, 0) = 1.0 - 1e-15;
    bad.at(16, 1) = 1.0 - 1e-15;
    CHECK_THROWS_WITH_AS(validate_path(bad, inst.spec),
                         "schedule path: lambda(1) must be exactly 1", std::invalid_argument);

    bad = p;
    bad.at(5, 0) = bad.at(4, 0) - 1e-6;
    bad.at(5, 1) = bad.at(5, 0);
    CHECK_THROWS_WITH_AS(validate_path(bad, inst.spec),
                         "schedule path: values must be nondecreasing", std::invalid_argument);

    bad = p;
    bad.at(5, 1) += 1e-6;  // breaks spatial constancy of a global path
    CHECK_THROWS_WITH_AS(validate_path(bad, inst.spec),
                         "schedule path: global path must be spatially constant",
                         std::invalid_argument);

    EnergySpec tampered = inst.spec;
    tampered.contrast[0] += 1e-3;
    CHECK_THROWS_AS(validate_energy_spec(tampered, inst.pair), std::invalid_argument);
    tampered = inst.spec;
    tampered.a[3] = 0.0;
    CHECK_THROWS_AS(validate_energy_spec(tampered, inst.pair), std::invalid_argument);
    tampered = inst.spec;
    tampered.m[1] = -1e-9;
    CHECK_THROWS_AS(validate_energy_spec(tampered, inst.pair), std::invalid_argument);
}

TEST_CASE("homogeneous control: the linear ramp is the optimum with energy 2") {
    EnergyInstance inst = reference_homogeneous_instance(128);
    SchedulePath lin = linear_path(PathClass::global_path, 128, 2);
    // constant unit velocity and a potential that tracks the ramp exactly:
    // trapezoid weights sum to one per cell, so the energy is a per cell
    CHECK(path_energy(inst.spec, lin, inst.pair) == doctest::Approx(2.0).epsilon(1e-13));

    OptimResult glob = optimize_global(inst.spec, inst.pair);
    CHECK(glob.converged);
    CHECK(glob.energy == doctest::Approx(2.0).epsilon(1e-7));
    for (int k = 0; k <= 128; ++k)
        CHECK(glob.path.at(k, 0) == doctest::Approx(static_cast<double>(k) / 128).epsilon(2e-4));

    DominationReport rep = verify_strict_domination(inst.spec, inst.pair);
    CHECK_FALSE(rep.heterogeneous);
    CHECK(std::abs(rep.gap) < 1e-3 * rep.e_glob);
    CHECK_FALSE(rep.note.empty());
}

TEST_CASE("global optimizer matches the pair-state DP oracle") {
    const int K = 320;
    for (EnergyInstance inst : {reference_heterogeneous_instance(8), mixed_instance(8)}) {
        double e_dp = dp_global_minimum(inst.spec, inst.pair, K);
        OptimResult glob = optimize_global(inst.spec, inst.pair);
        CHECK(glob.converged);
        // the DP path is feasible, so the continuous optimum can only be
        // lower; quantization at 1/320 keeps it within a few 1e-5
        CHECK(glob.energy <= e_dp + 1e-9);
        CHECK(e_dp - glob.energy <= 5e-4);
    }
}

TEST_CASE("pixelwise optimizer matches the monotone-lattice brute force") {
    const int L = 20;
    for (EnergyInstance inst : {reference_heterogeneous_instance(8), mixed_instance(8)}) {
        double e_brute = 0.0;
        for (int j = 0; j < inst.spec.ncells; ++j)
            e_brute += brute_cell_minimum(inst.spec, inst.pair, j, L);
        OptimResult pix = optimize_pixelwise(inst.spec, inst.pair);
        CHECK(pix.converged);
        CHECK(pix.path.cls == PathClass::pixelwise);
        CHECK(pix.energy <= e_brute + 1e-9);
        CHECK(e_brute - pix.energy <= 2e-2);
    }
}

TEST_CASE("optimum survives random feasible competition") {
    EnergyInstance inst = reference_heterogeneous_instance(64);
    OptimResult glob = optimize_global(inst.spec, inst.pair);
    Rng rng(99);
    std::uniform_real_distribution<double> un(0.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        SchedulePath q = linear_path(PathClass::global_path, 64, 2);
        std::vector<double> vals(65);
        for (auto& v : vals) v = un(rng);
        std::sort(vals.begin(), vals.end());
        vals.front() = 0.0;
        vals.back() = 1.0;
        for (int k = 0; k <= 64; ++k)
            for (int j = 0; j < 2; ++j) q.at(k, j) = vals[k];
        CHECK(path_energy(inst.spec, q, inst.pair) >= glob.energy - 1e-9);
    }
}

TEST_CASE("heterogeneous reference instance separates strictly") {
    EnergyInstance inst = reference_heterogeneous_instance(128);
    DominationReport rep = verify_strict_domination(inst.spec, inst.pair);
    CHECK(rep.heterogeneous);
    CHECK(rep.gap_positive);
    CHECK(rep.gap >= 0.05 * rep.e_glob);
    CHECK(rep.e_pix <= rep.e_glob + 1e-9);
    REQUIRE(rep.certificate.size() == 3);
    CHECK(rep.certificate[0].first == doctest::Approx(1e-4));
    CHECK(rep.certificate[2].first == doctest::Approx(1e-3));
    CHECK(rep.certificate_descent);
    CHECK(rep.certificate_linear);
    for (auto& [eps, de] : rep.certificate) CHECK(de < 0.0);
}
