#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <limits>

#include "cdt/tasks.hpp"
#include "doctest.h"

using namespace cdt;

namespace {

SyntheticTaskSpec make_spec(TaskKind kind, int n, int hw, uint64_t seed) {
    SyntheticTaskSpec spec;
    spec.kind = kind;
    spec.n = n;
    spec.h = hw;
    spec.w = hw;
    spec.seed = seed;
    return spec;
}

bool bit_equal(const Field& a, const Field& b) {
    return a.same_shape(b) &&
           std::memcmp(a.v.data(), b.v.data(), a.size() * sizeof(double)) == 0;
}

double correlation(const Field& a, const Field& b) {
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
        sab += (a[i] - ma) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

// Direct per-window SSIM transcription, no incremental tricks: every interior
// window recomputes its weighted moments from scratch.
double ssim_reference(const Field& a, const Field& b, int win) {
    const double c1 = (0.01 * 2.0) * (0.01 * 2.0), c2 = (0.03 * 2.0) * (0.03 * 2.0);
    const int r = win / 2;
    std::vector<double> g(static_cast<size_t>(win) * win);
    double gsum = 0.0;
    for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
            double dy = y - r, dx = x - r;
            g[static_cast<size_t>(y) * win + x] = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
            gsum += g[static_cast<size_t>(y) * win + x];
        }
    for (auto& v : g) v /= gsum;

    double acc = 0.0;
    int count = 0;
    for (int ch = 0; ch < a.c; ++ch)
        for (int cy = r; cy < a.h - r; ++cy)
            for (int cx = r; cx < a.w - r; ++cx) {
                double mua = 0.0, mub = 0.0, vaa = 0.0, vbb = 0.0, vab = 0.0;
                for (int y = 0; y < win; ++y)
                    for (int x = 0; x < win; ++x) {
                        double w = g[static_cast<size_t>(y) * win + x];
                        mua += w * a.at(ch, cy + y - r, cx + x - r);
                        mub += w * b.at(ch, cy + y - r, cx + x - r);
                    }
                for (int y = 0; y < win; ++y)
                    for (int x = 0; x < win; ++x) {
                        double w = g[static_cast<size_t>(y) * win + x];
                        double da = a.at(ch, cy + y - r, cx + x - r) - mua;
                        double db = b.at(ch, cy + y - r, cx + x - r) - mub;
                        vaa += w * da * da;
                        vbb += w * db * db;
                        vab += w * da * db;
                    }
                acc += ((2.0 * mua * mub + c1) * (2.0 * vab + c2)) /
                       ((mua * mua + mub * mub + c1) * (vaa + vbb + c2));
                ++count;
            }
    return acc / count;
}

Field mask_from(const std::vector<std::pair<int, int>>& pts, int h, int w) {
    Field m(1, h, w, -1.0);
    for (auto [y, x] : pts) m.at(0, y, x) = 1.0;
    return m;
}

}  // namespace

TEST_CASE("dataset generation is deterministic with per-pair seeds") {
    for (TaskKind kind :
         {TaskKind::contrast_swap, TaskKind::speckle_to_smooth, TaskKind::shape_to_mask}) {
        std::vector<DomainPair> a = gen_dataset(make_spec(kind, 5, 16, 9));
        std::vector<DomainPair> b = gen_dataset(make_spec(kind, 5, 16, 9));
        std::vector<DomainPair> prefix = gen_dataset(make_spec(kind, 3, 16, 9));
        REQUIRE(a.size() == 5);
        for (int i = 0; i < 5; ++i) {
            CHECK(bit_equal(a[i].x_src, b[i].x_src));
            CHECK(bit_equal(a[i].x_tgt, b[i].x_tgt));
        }
        for (int i = 0; i < 3; ++i) {
            CHECK(bit_equal(a[i].x_src, prefix[i].x_src));
            CHECK(bit_equal(a[i].x_tgt, prefix[i].x_tgt));
        }
        std::vector<DomainPair> other = gen_dataset(make_spec(kind, 5, 16, 10));
        CHECK_FALSE(bit_equal(a[0].x_src, other[0].x_src));
        for (const auto& p : a)
            for (const Field* f : {&p.x_src, &p.x_tgt})
                for (double v : f->v) {
                    CHECK(v >= -1.0);
                    CHECK(v <= 1.0);
                }
    }
    CHECK_THROWS_AS(gen_dataset(make_spec(TaskKind::contrast_swap, 0, 16, 1)),
                    std::invalid_argument);
    CHECK_THROWS_AS(gen_dataset(make_spec(TaskKind::contrast_swap, 2, 4, 1)),
                    std::invalid_argument);
}

TEST_CASE("task-specific structure of the generated pairs") {
    SUBCASE("contrast swap anticorrelates source and target") {
        std::vector<DomainPair> data = gen_dataset(make_spec(TaskKind::contrast_swap, 6, 24, 3));
        for (const auto& p : data) CHECK(correlation(p.x_src, p.x_tgt) < -0.5);
    }
    SUBCASE("speckled source is rougher than its smooth target") {
        std::vector<DomainPair> data =
            gen_dataset(make_spec(TaskKind::speckle_to_smooth, 6, 24, 4));
        for (const auto& p : data) {
            double tv_src = 0.0, tv_tgt = 0.0;
            for (int y = 0; y < 24; ++y)
                for (int x = 0; x + 1 < 24; ++x) {
                    tv_src += std::abs(p.x_src.at(0, y, x + 1) - p.x_src.at(0, y, x));
                    tv_tgt += std::abs(p.x_tgt.at(0, y, x + 1) - p.x_tgt.at(0, y, x));
                }
            CHECK(tv_src > 2.0 * tv_tgt);
        }
    }
    SUBCASE("mask task: binary targets, populated mask, darkened strokes") {
        std::vector<DomainPair> data = gen_dataset(make_spec(TaskKind::shape_to_mask, 6, 24, 5));
        for (const auto& p : data) {
            REQUIRE(p.mask.size() == p.x_tgt.size());
            int fg = 0;
            for (size_t i = 0; i < p.x_tgt.size(); ++i) {
                CHECK((p.x_tgt[i] == 1.0 || p.x_tgt[i] == -1.0));
                CHECK((p.mask[i] == 1.0 || p.mask[i] == 0.0));
                CHECK(p.mask[i] == (p.x_tgt[i] + 1.0) / 2.0);
                fg += p.mask[i] == 1.0;
            }
            CHECK(fg > 0);
            CHECK(fg < static_cast<int>(p.mask.size()));
        }
    }
}

TEST_CASE("pixel metrics have their textbook closed forms") {
    Field a(1, 10, 10, 0.25);
    Field b = a;
    for (auto& v : b.v) v += 0.2;
    CHECK(mse(a, b) == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(mae(a, b) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(psnr(b, a) == psnr(a, b));
    CHECK(std::isinf(psnr(a, a)));
    CHECK(psnr(a, a) > 0);

    Rng rng(6);
    Field base = uniform_field(rng, 1, 12, 12, -0.5, 0.5);
    double prev = std::numeric_limits<double>::infinity();
    std::normal_distribution<double> n01(0.0, 1.0);
    for (double sigma : {0.01, 0.05, 0.1}) {
        Field noisy = base;
        Rng nz(7);
        for (auto& v : noisy.v) v += sigma * n01(nz);
        double p = psnr(base, noisy);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("ssim agrees with a direct reference and ranks similarity") {
    Rng rng(8);
    Field a = uniform_field(rng, 1, 20, 18, -1.0, 1.0);
    CHECK(ssim(a, a) == 1.0);

    Field unrelated = uniform_field(rng, 1, 20, 18, -1.0, 1.0);
    CHECK(ssim(a, unrelated) < 0.2);  // independent noise shares no structure

    Field b = a;
    std::normal_distribution<double> n01(0.0, 1.0);
    for (auto& v : b.v) v += 0.1 * n01(rng);
    CHECK(ssim(a, b) == doctest::Approx(ssim_reference(a, b, 11)).epsilon(1e-9));
    CHECK(ssim(a, b, 7) == doctest::Approx(ssim_reference(a, b, 7)).epsilon(1e-9));
    CHECK(ssim(a, unrelated) == doctest::Approx(ssim_reference(a, unrelated, 11)).epsilon(1e-9));
    CHECK(ssim(a, b) > ssim(a, unrelated));

    Field tiny(1, 8, 8, 0.0);
    CHECK_THROWS_AS(ssim(tiny, tiny), std::invalid_argument);
    CHECK_THROWS_AS(ssim(a, b, 4), std::invalid_argument);  // even window
}

TEST_CASE("segmentation metrics: overlap algebra and degenerate masks") {
    Field pred = mask_from({{2, 2}, {2, 3}, {3, 2}}, 8, 8);
    Field truth = mask_from({{2, 2}, {2, 3}, {4, 5}}, 8, 8);
    SegMetrics m = seg_metrics(pred, truth);
    // tp = 2, fp = 1, fn = 1
    CHECK(m.precision == doctest::Approx(2.0 / 3.0));
    CHECK(m.recall == doctest::Approx(2.0 / 3.0));
    CHECK(m.iou == doctest::Approx(0.5));
    CHECK(m.dice == doctest::Approx(2.0 * m.iou / (1.0 + m.iou)).epsilon(1e-12));
    // directed distances: pred -> truth peaks at 1 (from (3,2)), truth ->
    // pred at sqrt(8) (from (4,5) to its nearest (2,3))
    CHECK(m.hausdorff == doctest::Approx(std::sqrt(8.0)));

    SegMetrics empty = seg_metrics(mask_from({}, 8, 8), mask_from({}, 8, 8));
    CHECK(empty.dice == 1.0);
    CHECK(empty.iou == 1.0);
    CHECK(empty.precision == 1.0);
    CHECK(empty.recall == 1.0);
    CHECK(empty.hausdorff == 0.0);

    SegMetrics one = seg_metrics(mask_from({{1, 1}}, 8, 8), mask_from({}, 8, 8));
    CHECK(one.dice == 0.0);
    CHECK(one.iou == 0.0);
    CHECK(one.hausdorff == doctest::Approx(std::sqrt(2.0 * 49.0)));

    // identical diagonal strokes shifted by 3 columns
    Field s1 = mask_from({{1, 1}, {2, 2}, {3, 3}}, 10, 10);
    Field s2 = mask_from({{1, 4}, {2, 5}, {3, 6}}, 10, 10);
    CHECK(seg_metrics(s1, s2).hausdorff == doctest::Approx(3.0));
    CHECK(seg_metrics(s1, s1).hausdorff == 0.0);
    CHECK(seg_metrics(s1, s1).dice == 1.0);
}

TEST_CASE("misalignment shifts the source only, with edge replication") {
    std::vector<DomainPair> data = gen_dataset(make_spec(TaskKind::shape_to_mask, 1, 20, 11));
    const DomainPair& p = data[0];

    DomainPair zero = misalign(p, 0);
    CHECK(bit_equal(zero.x_src, p.x_src));
    CHECK(bit_equal(zero.x_tgt, p.x_tgt));

    DomainPair two = misalign(p, 2);
    CHECK(bit_equal(two.x_tgt, p.x_tgt));
    CHECK(bit_equal(two.mask, p.mask));
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x)
            CHECK(two.x_src.at(0, y, x) ==
                  p.x_src.at(0, std::max(y - 2, 0), std::max(x - 2, 0)));

    // shifting twice by 2 equals shifting once by 4 away from the edge band
    DomainPair four = misalign(p, 4);
    DomainPair twice = misalign(two, 2);
    for (int y = 4; y < 20; ++y)
        for (int x = 4; x < 20; ++x)
            CHECK(twice.x_src.at(0, y, x) == four.x_src.at(0, y, x));

    CHECK_THROWS_AS(misalign(p, 5), std::invalid_argument);   // 5 == 20/4
    CHECK_THROWS_AS(misalign(p, -1), std::invalid_argument);
}

TEST_CASE("aggregate report computes sample statistics") {
    MetricReport rep = aggregate_report({"a", "b"}, {{1.0, 10.0}, {2.0, 10.0}, {3.0, 10.0}});
    REQUIRE(rep.mean.size() == 2);
    CHECK(rep.mean[0] == doctest::Approx(2.0));
    CHECK(rep.mean[1] == doctest::Approx(10.0));
    CHECK(rep.stdev[0] == doctest::Approx(1.0));  // sample stdev of {1,2,3}
    CHECK(rep.stdev[1] == doctest::Approx(0.0));

    MetricReport single = aggregate_report({"a"}, {{5.0}});
    CHECK(single.mean[0] == 5.0);
    CHECK(single.stdev[0] == 0.0);

    CHECK_THROWS_AS(aggregate_report({"a"}, {{1.0, 2.0}}), std::invalid_argument);
}

TEST_CASE("task names round-trip") {
    for (TaskKind kind :
         {TaskKind::contrast_swap, TaskKind::speckle_to_smooth, TaskKind::shape_to_mask})
        CHECK(task_kind_from_name(task_kind_name(kind)) == kind);
    CHECK_THROWS_AS(task_kind_from_name("unknown_task"), std::invalid_argument);
}
