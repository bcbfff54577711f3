#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdt/field.hpp"
#include "cdt/predictors.hpp"
#include "cdt/tasks.hpp"

namespace cdt {

// Error taxonomy mapped to CLI exit codes: ConfigError -> 2, IoError -> 3,
// FormatError -> 4.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Binary tensor container: magic "CDT1", u16 version, u16 rank, u32 dims,
// then float32 payload, everything little-endian, row-major with the last
// dimension fastest. Values are converted from/to double at the boundary.
struct Tensor {
    std::vector<uint32_t> dims;
    std::vector<double> data;
};

void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

void write_field(const std::string& path, const Field& f);
Field read_field(const std::string& path);

// 8-bit binary PGM of one channel, [-1, 1] mapped onto [0, 255].
void write_pgm(const std::string& path, const Field& f, int channel);

// Flat key=value run configuration. All keys optional except task and
// out_dir; t1 < 0 stands for "unset" and resolves to T/2.
struct RunConfig {
    std::string task;
    std::string out_dir;
    int T = 200;
    double beta_min = 1e-4;
    double beta_max = 0.1;
    int t1 = -1;
    int sampler_steps = 20;
    std::string schedule_variant = "dynamic";  // linear | channel | dynamic
    int train_steps = 1500;
    double lr = 0.02;
    double mixer_lr_mult = 10.0;
    uint64_t seed = 1;

    int resolved_t1() const { return t1 < 0 ? T / 2 : t1; }
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig parse_run_config(const std::string& path);
// Canonical echo of the fully resolved configuration, parseable back.
std::string render_run_config(const RunConfig& cfg);

// Atomic file replacement: write to <path>.tmp, then rename over path.
void write_bytes_atomic(const std::string& path, const std::string& bytes);

void ensure_dir(const std::string& path);

// %.17g: shortest text that round-trips a double bit-exactly.
std::string format_double(double v);

std::string render_metrics_csv(const MetricReport& rep);
std::string render_loss_csv(const TrainResult& tr);

// Parameter files: magic "CDP1", u16 version, u16 kind (1 = spatial mixer
// net, 2 = per-channel polynomial mixer, 3 = noise-prediction net), then a
// kind-specific fixed header and float64 parameters.
void save_predictor(const std::string& path, const ToyPredictorParams& p);
ToyPredictorParams load_predictor(const std::string& path);

// The linear variant has no parameters and therefore no file.
void save_mixer(const std::string& path, const MixerModel& m);
MixerModel load_mixer(const std::string& path);

}  // namespace cdt
