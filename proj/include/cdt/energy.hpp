#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cdt/field.hpp"

namespace cdt {

// Discretized mixing-path energy on [0, 1]:
//   E[lambda] = sum_k w_k sum_cells [ a(k,cell) * ddot(k,cell)^2
//                                     + m(cell) * (d(k,cell) - u(k,cell))^2 ]
// with d = x_tgt + lambda * contrast, velocities by central differences
// (one-sided at the ends) and trapezoid node weights w_k. Cells are the
// flattened (channel, pixel) entries of the instance pair.
struct EnergySpec {
    int M = 128;                   // M+1 time nodes
    int ncells = 0;
    std::vector<double> a;         // (M+1) x ncells kinetic weights, > 0
    std::vector<double> m;         // ncells potential strengths, >= 0
    std::vector<double> u;         // (M+1) x ncells moving potential targets
    std::vector<double> contrast;  // ncells, x_src - x_tgt
};

enum class PathClass { global_path, pixelwise };

// lambda values at the M+1 nodes for each cell (node-major layout). A
// global_path is spatially constant per node.
struct SchedulePath {
    PathClass cls = PathClass::global_path;
    int M = 0;
    int ncells = 0;
    std::vector<double> values;  // (M+1) x ncells

    double& at(int k, int cell) { return values[static_cast<size_t>(k) * ncells + cell]; }
    double at(int k, int cell) const { return values[static_cast<size_t>(k) * ncells + cell]; }
};

SchedulePath linear_path(PathClass cls, int M, int ncells);

void validate_energy_spec(const EnergySpec& spec, const DomainPair& pair);
// Throws naming the violated constraint: endpoints 0/1, monotone, range [0,1].
void validate_path(const SchedulePath& path, const EnergySpec& spec);

double path_energy(const EnergySpec& spec, const SchedulePath& path, const DomainPair& pair);

// In-place pool-adjacent-violators projection onto nondecreasing sequences
// (unit weights, Euclidean metric).
void isotonic_projection(std::vector<double>& y);

struct OptimOptions {
    int max_iters = 20000;
    double tol = 1e-10;   // projected-gradient stationarity
    int restarts = 5;
    uint64_t seed = 0;
};

struct OptimResult {
    SchedulePath path;
    double energy = 0.0;
    bool converged = false;
    int iters = 0;
};

// Best shared monotone schedule (one trajectory broadcast over all cells).
OptimResult optimize_global(const EnergySpec& spec, const DomainPair& pair,
                            const OptimOptions& opt = {});
// Independent per-cell solves of the same constrained problem.
OptimResult optimize_pixelwise(const EnergySpec& spec, const DomainPair& pair,
                               const OptimOptions& opt = {});

struct DominationReport {
    double e_glob = 0.0;
    double e_pix = 0.0;
    double gap = 0.0;  // e_glob - e_pix
    bool heterogeneous = false;
    bool gap_positive = false;
    // First-order descent certificate at the global optimum: perturbation
    // -eps * sgn(dU/dd * contrast) * psi(t) with psi a raised cosine on the
    // middle third; rows are (eps, energy change).
    std::vector<std::pair<double, double>> certificate;
    bool certificate_descent = false;  // every energy change negative
    bool certificate_linear = false;   // deltaE/eps constant across the decade
    std::string note;
};

DominationReport verify_strict_domination(const EnergySpec& spec, const DomainPair& pair,
                                          const OptimOptions& opt = {});

// Shipped reference instances (1 x 1 x 2 pairs). The heterogeneous one pulls
// its two cells toward an early and a late ramp respectively; the homogeneous
// control gives both cells the same pull.
struct EnergyInstance {
    std::string name;
    EnergySpec spec;
    DomainPair pair;
};

EnergyInstance reference_heterogeneous_instance(int M = 128);
EnergyInstance reference_homogeneous_instance(int M = 128);

}  // namespace cdt
