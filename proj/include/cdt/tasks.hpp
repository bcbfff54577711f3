#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdt/field.hpp"

namespace cdt {

// Synthetic paired-modality tasks, ordered roughly by translation difficulty:
// contrast_swap keeps structure and remaps intensity, speckle_to_smooth adds
// heavy multiplicative noise to the source, shape_to_mask asks for a binary
// segmentation-style target and carries a ground-truth mask.
enum class TaskKind { contrast_swap, speckle_to_smooth, shape_to_mask };

TaskKind task_kind_from_name(const std::string& name);
std::string task_kind_name(TaskKind kind);

struct SyntheticTaskSpec {
    TaskKind kind = TaskKind::contrast_swap;
    int n = 0;  // pair count
    int h = 0;
    int w = 0;
    int c = 1;
    uint64_t seed = 0;
};

// Deterministic in spec.seed; pair i depends only on mix_seed(seed, i), so a
// prefix of a larger dataset equals the smaller one.
std::vector<DomainPair> gen_dataset(const SyntheticTaskSpec& spec);

double mse(const Field& a, const Field& b);
double mae(const Field& a, const Field& b);
// Dynamic range L = 2 for [-1, 1] images; +infinity when mse is exactly 0.
double psnr(const Field& a, const Field& b);
// Gaussian-weighted (sigma 1.5) mean SSIM over all fully interior windows,
// constants C1 = (0.01 L)^2, C2 = (0.03 L)^2 with L = 2. Window must be odd
// and no larger than the image.
double ssim(const Field& a, const Field& b, int window = 11);

struct SegMetrics {
    double dice = 0.0;
    double iou = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double hausdorff = 0.0;
};

// Foreground = value > 0 in both arguments. Conventions for degenerate masks:
// both empty -> overlap scores 1 and hausdorff 0; exactly one empty ->
// overlap scores 0 and hausdorff = image diagonal.
SegMetrics seg_metrics(const Field& pred_mask, const Field& true_mask);

// Translates the source by (shift, shift) pixels with edge replication;
// target and mask stay put. Requires 0 <= shift < min(H, W)/4.
DomainPair misalign(const DomainPair& pair, int shift);

struct MetricReport {
    std::vector<std::string> names;
    std::vector<std::vector<double>> rows;  // one row of metric values per pair
    std::vector<double> mean;
    std::vector<double> stdev;  // sample standard deviation, 0 for n < 2
};

MetricReport aggregate_report(std::vector<std::string> names,
                              std::vector<std::vector<double>> rows);

}  // namespace cdt
