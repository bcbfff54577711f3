#pragma once

#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdt {

using Rng = std::mt19937_64;

// Dense row-major C x H x W grid of doubles. Channel-major so a channel is a
// contiguous H*W plane.
struct Field {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<double> v;

    Field() = default;
    Field(int c_, int h_, int w_, double fill = 0.0)
        : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill) {
        if (c_ <= 0 || h_ <= 0 || w_ <= 0)
            throw std::invalid_argument("Field: dims must be positive");
    }

    size_t size() const { return v.size(); }
    int plane() const { return h * w; }

    double& at(int ci, int y, int x) { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }
    double at(int ci, int y, int x) const { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }

    double& operator[](size_t i) { return v[i]; }
    double operator[](size_t i) const { return v[i]; }

    bool same_shape(const Field& o) const { return c == o.c && h == o.h && w == o.w; }

    static Field like(const Field& o, double fill = 0.0) { return Field(o.c, o.h, o.w, fill); }
};

inline void require_same_shape(const Field& a, const Field& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

inline Field gaussian_field(Rng& rng, int c, int h, int w) {
    Field f(c, h, w);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& x : f.v) x = n(rng);
    return f;
}

inline Field uniform_field(Rng& rng, int c, int h, int w, double lo, double hi) {
    Field f(c, h, w);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& x : f.v) x = u(rng);
    return f;
}

// Source/target image pair; mask is a 1 x H x W binary field present for
// segmentation-style tasks.
struct DomainPair {
    Field x_src;
    Field x_tgt;
    bool has_mask = false;
    Field mask;
};

// splitmix64: cheap decorrelated per-item seeds derived from one dataset seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t index) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace cdt
