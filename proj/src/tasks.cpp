#include "cdt/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace cdt {

TaskKind task_kind_from_name(const std::string& name) {
    if (name == "contrast_swap") return TaskKind::contrast_swap;
    if (name == "speckle_to_smooth") return TaskKind::speckle_to_smooth;
    if (name == "shape_to_mask") return TaskKind::shape_to_mask;
    throw std::invalid_argument("unknown task: " + name);
}

std::string task_kind_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::contrast_swap: return "contrast_swap";
        case TaskKind::speckle_to_smooth: return "speckle_to_smooth";
        case TaskKind::shape_to_mask: return "shape_to_mask";
    }
    throw std::logic_error("task_kind_name: bad enum");
}

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Sum of random Gaussian bumps, rescaled to peak magnitude `amp`.
Field blob_scene(Rng& rng, int h, int w, int nblobs, double amp) {
    Field f(1, h, w);
    std::uniform_real_distribution<double> ucy(0.0, h - 1.0), ucx(0.0, w - 1.0);
    std::uniform_real_distribution<double> uamp(-1.0, 1.0);
    std::uniform_real_distribution<double> usig(std::min(h, w) / 8.0, std::min(h, w) / 3.0);
    for (int b = 0; b < nblobs; ++b) {
        double cy = ucy(rng), cx = ucx(rng), a = uamp(rng), sig = usig(rng);
        double inv = 1.0 / (2.0 * sig * sig);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double dy = y - cy, dx = x - cx;
                f.at(0, y, x) += a * std::exp(-(dy * dy + dx * dx) * inv);
            }
    }
    double peak = 0.0;
    for (double v : f.v) peak = std::max(peak, std::abs(v));
    if (peak > 0.0)
        for (double& v : f.v) v *= amp / peak;
    return f;
}

// Smooth blobs; target inverts and gamma-warps the intensities, so the pair
// is perfectly co-registered with strongly anticorrelated values.
DomainPair make_contrast_swap(Rng& rng, int h, int w, int c) {
    DomainPair pair;
    pair.x_src = Field(c, h, w);
    pair.x_tgt = Field(c, h, w);
    std::uniform_int_distribution<int> nb(5, 8);
    std::uniform_real_distribution<double> ugamma(0.7, 1.4);
    double gamma = ugamma(rng);
    for (int ci = 0; ci < c; ++ci) {
        Field scene = blob_scene(rng, h, w, nb(rng), 0.9);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double s = scene.at(0, y, x);
                pair.x_src.at(ci, y, x) = s;
                double p = (s + 1.0) / 2.0;
                pair.x_tgt.at(ci, y, x) = 2.0 * std::pow(1.0 - p, gamma) - 1.0;
            }
    }
    return pair;
}

// Target is a clean scene of filled rectangles and discs; source is the same
// scene with edges emphasized and multiplicative unit-mean exponential
// speckle, the classic SAR degradation.
DomainPair make_speckle_to_smooth(Rng& rng, int h, int w, int c) {
    Field tgt01(1, h, w, 0.1);
    std::uniform_int_distribution<int> nshapes(3, 6);
    std::uniform_real_distribution<double> uin(0.35, 1.0);
    std::uniform_real_distribution<double> ucy(2.0, h - 3.0), ucx(2.0, w - 3.0);
    std::uniform_real_distribution<double> usz(std::min(h, w) / 10.0, std::min(h, w) / 4.0);
    std::bernoulli_distribution isdisc(0.5);
    int ns = nshapes(rng);
    for (int s = 0; s < ns; ++s) {
        double cy = ucy(rng), cx = ucx(rng), val = uin(rng);
        bool disc = isdisc(rng);
        double ry = usz(rng), rx = disc ? ry : usz(rng);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                bool inside = disc ? ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= ry * ry)
                                   : (std::abs(y - cy) <= ry && std::abs(x - cx) <= rx);
                if (inside) tgt01.at(0, y, x) = std::max(tgt01.at(0, y, x), val);
            }
    }

    Field grad(1, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double gy = tgt01.at(0, std::min(y + 1, h - 1), x) -
                        tgt01.at(0, std::max(y - 1, 0), x);
            double gx = tgt01.at(0, y, std::min(x + 1, w - 1)) -
                        tgt01.at(0, y, std::max(x - 1, 0));
            grad.at(0, y, x) = std::hypot(gy, gx);
        }

    DomainPair pair;
    pair.x_src = Field(c, h, w);
    pair.x_tgt = Field(c, h, w);
    std::exponential_distribution<double> speckle(1.0);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double t = tgt01.at(0, y, x);
                pair.x_tgt.at(ci, y, x) = 2.0 * t - 1.0;
                double enhanced = clamp01(t + 1.2 * grad.at(0, y, x));
                double s = enhanced * speckle(rng);
                pair.x_src.at(ci, y, x) = std::clamp(2.0 * s - 1.0, -1.0, 1.0);
            }
    return pair;
}

// Thin random-walk strokes on a textured background; target is the exact
// binary stroke image and the 0/1 mask rides along for segmentation metrics.
DomainPair make_shape_to_mask(Rng& rng, int h, int w, int c) {
    Field mask(1, h, w, 0.0);
    std::uniform_int_distribution<int> nstrokes(2, 4);
    std::uniform_real_distribution<double> upos_y(1.0, h - 2.0), upos_x(1.0, w - 2.0);
    std::uniform_real_distribution<double> uang(0.0, 2.0 * std::acos(-1.0));
    std::normal_distribution<double> turn(0.0, 0.35);
    int ns = nstrokes(rng);
    for (int s = 0; s < ns; ++s) {
        double y = upos_y(rng), x = upos_x(rng), ang = uang(rng);
        int steps = 2 * (h + w);
        for (int k = 0; k < steps; ++k) {
            int iy = static_cast<int>(std::lround(y)), ix = static_cast<int>(std::lround(x));
            mask.at(0, std::clamp(iy, 0, h - 1), std::clamp(ix, 0, w - 1)) = 1.0;
            ang += turn(rng);
            y += std::sin(ang);
            x += std::cos(ang);
            if (y < 1.0 || y > h - 2.0) {
                ang = -ang;
                y = std::clamp(y, 1.0, h - 2.0);
            }
            if (x < 1.0 || x > w - 2.0) {
                ang = std::acos(-1.0) - ang;
                x = std::clamp(x, 1.0, w - 2.0);
            }
        }
    }

    Field texture = blob_scene(rng, h, w, 6, 1.0);
    std::uniform_real_distribution<double> grain(-0.05, 0.05);
    DomainPair pair;
    pair.x_src = Field(c, h, w);
    pair.x_tgt = Field(c, h, w);
    pair.has_mask = true;
    pair.mask = mask;
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double bg = clamp01(0.55 + 0.25 * texture.at(0, y, x) + grain(rng));
                double s = bg * (1.0 - 0.75 * mask.at(0, y, x));
                pair.x_src.at(ci, y, x) = std::clamp(2.0 * s - 1.0, -1.0, 1.0);
                pair.x_tgt.at(ci, y, x) = mask.at(0, y, x) > 0.0 ? 1.0 : -1.0;
            }
    return pair;
}

}  // namespace

std::vector<DomainPair> gen_dataset(const SyntheticTaskSpec& spec) {
    if (spec.n < 1 || spec.h < 8 || spec.w < 8 || spec.c < 1)
        throw std::invalid_argument("gen_dataset: need n >= 1 and at least 8x8 images");
    std::vector<DomainPair> out;
    out.reserve(spec.n);
    for (int i = 0; i < spec.n; ++i) {
        Rng rng(mix_seed(spec.seed, static_cast<uint64_t>(i)));
        switch (spec.kind) {
            case TaskKind::contrast_swap:
                out.push_back(make_contrast_swap(rng, spec.h, spec.w, spec.c));
                break;
            case TaskKind::speckle_to_smooth:
                out.push_back(make_speckle_to_smooth(rng, spec.h, spec.w, spec.c));
                break;
            case TaskKind::shape_to_mask:
                out.push_back(make_shape_to_mask(rng, spec.h, spec.w, spec.c));
                break;
        }
    }
    return out;
}

double mse(const Field& a, const Field& b) {
    require_same_shape(a, b, "mse");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / a.size();
}

double mae(const Field& a, const Field& b) {
    require_same_shape(a, b, "mae");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / a.size();
}

double psnr(const Field& a, const Field& b) {
    double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(4.0 / m);
}

double ssim(const Field& a, const Field& b, int window) {
    require_same_shape(a, b, "ssim");
    if (window < 3 || window % 2 == 0)
        throw std::invalid_argument("ssim: window must be odd and >= 3");
    if (a.h < window || a.w < window)
        throw std::invalid_argument("ssim: image smaller than window");
    const int r = window / 2;
    std::vector<double> wgt(static_cast<size_t>(window) * window);
    double wsum = 0.0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            double g = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
            wgt[static_cast<size_t>(dy + r) * window + (dx + r)] = g;
            wsum += g;
        }
    for (double& g : wgt) g /= wsum;

    const double c1 = (0.01 * 2.0) * (0.01 * 2.0);
    const double c2 = (0.03 * 2.0) * (0.03 * 2.0);
    double acc = 0.0;
    size_t count = 0;
    for (int ci = 0; ci < a.c; ++ci)
        for (int y = r; y < a.h - r; ++y)
            for (int x = r; x < a.w - r; ++x) {
                double ma = 0.0, mb = 0.0, sa = 0.0, sb = 0.0, sab = 0.0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        double g = wgt[static_cast<size_t>(dy + r) * window + (dx + r)];
                        double va = a.at(ci, y + dy, x + dx);
                        double vb = b.at(ci, y + dy, x + dx);
                        ma += g * va;
                        mb += g * vb;
                        sa += g * va * va;
                        sb += g * vb * vb;
                        sab += g * va * vb;
                    }
                sa -= ma * ma;
                sb -= mb * mb;
                sab -= ma * mb;
                acc += (2.0 * ma * mb + c1) * (2.0 * sab + c2) /
                       ((ma * ma + mb * mb + c1) * (sa + sb + c2));
                ++count;
            }
    return acc / count;
}

SegMetrics seg_metrics(const Field& pred_mask, const Field& true_mask) {
    require_same_shape(pred_mask, true_mask, "seg_metrics");
    std::vector<std::pair<int, int>> pa, pb;
    size_t tp = 0, fp = 0, fn = 0;
    for (int ci = 0; ci < pred_mask.c; ++ci)
        for (int y = 0; y < pred_mask.h; ++y)
            for (int x = 0; x < pred_mask.w; ++x) {
                bool p = pred_mask.at(ci, y, x) > 0.0;
                bool t = true_mask.at(ci, y, x) > 0.0;
                if (p) pa.emplace_back(y, x);
                if (t) pb.emplace_back(y, x);
                tp += p && t;
                fp += p && !t;
                fn += !p && t;
            }

    SegMetrics m;
    if (pa.empty() && pb.empty()) {
        m.dice = m.iou = m.precision = m.recall = 1.0;
        m.hausdorff = 0.0;
        return m;
    }
    if (pa.empty() || pb.empty()) {
        m.dice = m.iou = m.precision = m.recall = 0.0;
        m.hausdorff = std::hypot(pred_mask.h - 1.0, pred_mask.w - 1.0);
        return m;
    }
    m.iou = static_cast<double>(tp) / (tp + fp + fn);
    m.dice = 2.0 * tp / (2.0 * tp + fp + fn);
    m.precision = static_cast<double>(tp) / (tp + fp);
    m.recall = static_cast<double>(tp) / (tp + fn);

    auto directed = [](const std::vector<std::pair<int, int>>& from,
                       const std::vector<std::pair<int, int>>& to) {
        double worst = 0.0;
        for (auto& [ay, ax] : from) {
            double best = std::numeric_limits<double>::infinity();
            for (auto& [by, bx] : to) {
                double d2 = static_cast<double>(ay - by) * (ay - by) +
                            static_cast<double>(ax - bx) * (ax - bx);
                best = std::min(best, d2);
                if (best == 0.0) break;
            }
            worst = std::max(worst, best);
        }
        return std::sqrt(worst);
    };
    m.hausdorff = std::max(directed(pa, pb), directed(pb, pa));
    return m;
}

DomainPair misalign(const DomainPair& pair, int shift) {
    int h = pair.x_src.h, w = pair.x_src.w;
    if (shift < 0 || shift >= std::min(h, w) / 4.0)
        throw std::invalid_argument("misalign: shift must satisfy 0 <= shift < min(H,W)/4");
    DomainPair out = pair;
    for (int ci = 0; ci < pair.x_src.c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.x_src.at(ci, y, x) =
                    pair.x_src.at(ci, std::max(y - shift, 0), std::max(x - shift, 0));
    return out;
}

MetricReport aggregate_report(std::vector<std::string> names,
                              std::vector<std::vector<double>> rows) {
    for (auto& r : rows)
        if (r.size() != names.size())
            throw std::invalid_argument("aggregate_report: row width mismatch");
    MetricReport rep;
    rep.names = std::move(names);
    rep.rows = std::move(rows);
    size_t nm = rep.names.size(), n = rep.rows.size();
    rep.mean.assign(nm, 0.0);
    rep.stdev.assign(nm, 0.0);
    if (n == 0) return rep;
    for (auto& r : rep.rows)
        for (size_t j = 0; j < nm; ++j) rep.mean[j] += r[j];
    for (size_t j = 0; j < nm; ++j) rep.mean[j] /= n;
    if (n > 1) {
        for (auto& r : rep.rows)
            for (size_t j = 0; j < nm; ++j) {
                double d = r[j] - rep.mean[j];
                rep.stdev[j] += d * d;
            }
        for (size_t j = 0; j < nm; ++j) rep.stdev[j] = std::sqrt(rep.stdev[j] / (n - 1));
    }
    return rep;
}

}  // namespace cdt
