#include "cdt/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

namespace fs = std::filesystem;

namespace cdt {

namespace {

void put_u16(std::string& s, uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& s, uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& s, uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& s, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(s, u);
}

void put_f64(std::string& s, double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    put_u64(s, u);
}

struct ByteReader {
    const std::string& buf;
    std::string path;
    size_t pos = 0;

    void need(size_t n) {
        if (pos + n > buf.size()) throw FormatError(path + ": truncated file");
    }
    uint8_t u8() {
        need(1);
        return static_cast<uint8_t>(buf[pos++]);
    }
    uint16_t u16() {
        uint16_t v = u8();
        return static_cast<uint16_t>(v | (u8() << 8));
    }
    uint32_t u32() {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(u8()) << (8 * i);
        return v;
    }
    uint64_t u64() {
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(u8()) << (8 * i);
        return v;
    }
    float f32() {
        uint32_t u = u32();
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    double f64() {
        uint64_t u = u64();
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    void expect_magic(const char* magic) {
        need(4);
        if (buf.compare(pos, 4, magic) != 0)
            throw FormatError(path + ": bad magic (expected " + magic + ")");
        pos += 4;
    }
    void expect_end() {
        if (pos != buf.size()) throw FormatError(path + ": trailing bytes");
    }
};

std::string read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed on " + path);
    return buf;
}

}  // namespace

void write_bytes_atomic(const std::string& path, const std::string& bytes) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("write failed on " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename " + tmp + " -> " + path + ": " + ec.message());
}

void ensure_dir(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_tensor(const std::string& path, const Tensor& t) {
    if (t.dims.empty()) throw std::invalid_argument("write_tensor: rank must be >= 1");
    size_t n = 1;
    for (uint32_t d : t.dims) {
        if (d == 0) throw std::invalid_argument("write_tensor: zero dimension");
        n *= d;
    }
    if (n != t.data.size()) throw std::invalid_argument("write_tensor: dims do not match payload");
    std::string buf;
    buf.reserve(8 + 4 * t.dims.size() + 4 * n);
    buf += "CDT1";
    put_u16(buf, 1);
    put_u16(buf, static_cast<uint16_t>(t.dims.size()));
    for (uint32_t d : t.dims) put_u32(buf, d);
    for (double v : t.data) put_f32(buf, static_cast<float>(v));
    write_bytes_atomic(path, buf);
}

Tensor read_tensor(const std::string& path) {
    std::string buf = read_all(path);
    ByteReader r{buf, path};
    r.expect_magic("CDT1");
    uint16_t version = r.u16();
    if (version != 1) throw FormatError(path + ": unsupported tensor version");
    uint16_t rank = r.u16();
    if (rank == 0) throw FormatError(path + ": rank 0 tensor");
    Tensor t;
    size_t n = 1;
    for (int i = 0; i < rank; ++i) {
        uint32_t d = r.u32();
        if (d == 0) throw FormatError(path + ": zero dimension");
        t.dims.push_back(d);
        n *= d;
        if (n > (1u << 30)) throw FormatError(path + ": tensor too large");
    }
    t.data.resize(n);
    for (size_t i = 0; i < n; ++i) t.data[i] = r.f32();
    r.expect_end();
    return t;
}

void write_field(const std::string& path, const Field& f) {
    Tensor t;
    t.dims = {static_cast<uint32_t>(f.c), static_cast<uint32_t>(f.h),
              static_cast<uint32_t>(f.w)};
    t.data = f.v;
    write_tensor(path, t);
}

Field read_field(const std::string& path) {
    Tensor t = read_tensor(path);
    if (t.dims.size() != 3) throw FormatError(path + ": expected a rank-3 image tensor");
    Field f(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
            static_cast<int>(t.dims[2]));
    f.v = std::move(t.data);
    return f;
}

void write_pgm(const std::string& path, const Field& f, int channel) {
    if (channel < 0 || channel >= f.c) throw std::invalid_argument("write_pgm: channel out of range");
    std::string buf = "P5\n" + std::to_string(f.w) + " " + std::to_string(f.h) + "\n255\n";
    for (int y = 0; y < f.h; ++y)
        for (int x = 0; x < f.w; ++x) {
            double v = (f.at(channel, y, x) + 1.0) / 2.0 * 255.0;
            long q = std::lround(v);
            buf.push_back(static_cast<char>(std::clamp(q, 0L, 255L)));
        }
    write_bytes_atomic(path, buf);
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("invalid integer for " + key + ": '" + value + "'");
    }
}

double parse_num(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size() || !std::isfinite(v)) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("invalid number for " + key + ": '" + value + "'");
    }
}

uint64_t parse_seed(const std::string& value) {
    try {
        if (!value.empty() && value[0] == '-') throw std::invalid_argument("");
        size_t pos = 0;
        uint64_t v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("invalid seed: '" + value + "'");
    }
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
    RunConfig cfg;
    std::set<std::string> seen;
    size_t start = 0;
    while (start <= text.size()) {
        size_t nl = text.find('\n', start);
        std::string line = trim(text.substr(start, nl == std::string::npos ? nl : nl - start));
        start = nl == std::string::npos ? text.size() + 1 : nl + 1;
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!seen.insert(key).second) throw ConfigError("duplicate config key: " + key);

        if (key == "task") {
            try {
                task_kind_from_name(value);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
            cfg.task = value;
        } else if (key == "out_dir") {
            if (value.empty()) throw ConfigError("out_dir must not be empty");
            cfg.out_dir = value;
        } else if (key == "T") {
            cfg.T = static_cast<int>(parse_int(key, value));
        } else if (key == "beta_min") {
            cfg.beta_min = parse_num(key, value);
        } else if (key == "beta_max") {
            cfg.beta_max = parse_num(key, value);
        } else if (key == "t1") {
            cfg.t1 = static_cast<int>(parse_int(key, value));
        } else if (key == "sampler_steps") {
            cfg.sampler_steps = static_cast<int>(parse_int(key, value));
        } else if (key == "schedule_variant") {
            if (value != "linear" && value != "channel" && value != "dynamic")
                throw ConfigError("schedule_variant must be linear|channel|dynamic, got '" +
                                  value + "'");
            cfg.schedule_variant = value;
        } else if (key == "train_steps") {
            cfg.train_steps = static_cast<int>(parse_int(key, value));
        } else if (key == "lr") {
            cfg.lr = parse_num(key, value);
        } else if (key == "mixer_lr_mult") {
            cfg.mixer_lr_mult = parse_num(key, value);
        } else if (key == "seed") {
            cfg.seed = parse_seed(value);
        } else {
            throw ConfigError("unknown config key: " + key);
        }
    }
    if (cfg.task.empty()) throw ConfigError("missing required key: task");
    if (cfg.out_dir.empty()) throw ConfigError("missing required key: out_dir");
    if (cfg.T < 2) throw ConfigError("T must be >= 2");
    if (!(cfg.beta_min > 0.0) || cfg.beta_max < cfg.beta_min || cfg.beta_max >= 1.0)
        throw ConfigError("need 0 < beta_min <= beta_max < 1");
    if (cfg.t1 >= 0 && (cfg.t1 < 1 || cfg.t1 >= cfg.T))
        throw ConfigError("t1 must lie in [1, T)");
    if (cfg.sampler_steps < 1) throw ConfigError("sampler_steps must be >= 1");
    if (cfg.sampler_steps > cfg.resolved_t1())
        throw ConfigError("sampler_steps must be <= t1 (one step per grid interval)");
    if (cfg.train_steps < 1) throw ConfigError("train_steps must be >= 1");
    if (!(cfg.lr > 0.0)) throw ConfigError("lr must be > 0");
    if (!(cfg.mixer_lr_mult >= 0.0)) throw ConfigError("mixer_lr_mult must be >= 0");
    return cfg;
}

RunConfig parse_run_config(const std::string& path) {
    return parse_run_config_text(read_all(path));
}

std::string render_run_config(const RunConfig& cfg) {
    std::string s;
    s += "task=" + cfg.task + "\n";
    s += "T=" + std::to_string(cfg.T) + "\n";
    s += "beta_min=" + format_double(cfg.beta_min) + "\n";
    s += "beta_max=" + format_double(cfg.beta_max) + "\n";
    s += "t1=" + std::to_string(cfg.resolved_t1()) + "\n";
    s += "sampler_steps=" + std::to_string(cfg.sampler_steps) + "\n";
    s += "schedule_variant=" + cfg.schedule_variant + "\n";
    s += "train_steps=" + std::to_string(cfg.train_steps) + "\n";
    s += "lr=" + format_double(cfg.lr) + "\n";
    s += "mixer_lr_mult=" + format_double(cfg.mixer_lr_mult) + "\n";
    s += "seed=" + std::to_string(cfg.seed) + "\n";
    s += "out_dir=" + cfg.out_dir + "\n";
    return s;
}

std::string render_metrics_csv(const MetricReport& rep) {
    std::string s = "pair";
    for (auto& n : rep.names) s += "," + n + "," + n + "_std";
    s += "\n";
    for (size_t i = 0; i < rep.rows.size(); ++i) {
        s += std::to_string(i);
        for (double v : rep.rows[i]) s += "," + format_double(v) + ",";
        s += "\n";
    }
    s += "aggregate";
    for (size_t j = 0; j < rep.names.size(); ++j)
        s += "," + format_double(rep.mean[j]) + "," + format_double(rep.stdev[j]);
    s += "\n";
    return s;
}

std::string render_loss_csv(const TrainResult& tr) {
    std::string s = "step,loss,smoothed\n";
    for (size_t i = 0; i < tr.loss.size(); ++i)
        s += std::to_string(i) + "," + format_double(tr.loss[i]) + "," +
             format_double(tr.smoothed[i]) + "\n";
    return s;
}

namespace {

constexpr uint16_t kKindModNet = 1;
constexpr uint16_t kKindChanPoly = 2;
constexpr uint16_t kKindPredictor = 3;

std::string param_header(uint16_t kind) {
    std::string buf = "CDP1";
    put_u16(buf, 1);
    put_u16(buf, kind);
    return buf;
}

uint16_t open_param_file(ByteReader& r) {
    r.expect_magic("CDP1");
    if (r.u16() != 1) throw FormatError(r.path + ": unsupported parameter-file version");
    return r.u16();
}

void put_params(std::string& buf, const std::vector<double>& p) {
    put_u64(buf, p.size());
    for (double v : p) put_f64(buf, v);
}

void get_params(ByteReader& r, std::vector<double>& p, const char* what) {
    uint64_t n = r.u64();
    if (n != p.size())
        throw FormatError(r.path + ": " + what + " parameter count mismatch");
    for (auto& v : p) v = r.f64();
}

}  // namespace

void save_predictor(const std::string& path, const ToyPredictorParams& p) {
    std::string buf = param_header(kKindPredictor);
    put_u32(buf, static_cast<uint32_t>(p.channels));
    put_u32(buf, static_cast<uint32_t>(p.width));
    put_u32(buf, static_cast<uint32_t>(p.T));
    put_params(buf, p.net.params);
    write_bytes_atomic(path, buf);
}

ToyPredictorParams load_predictor(const std::string& path) {
    std::string buf = read_all(path);
    ByteReader r{buf, path};
    if (open_param_file(r) != kKindPredictor)
        throw FormatError(path + ": not a predictor parameter file");
    int channels = static_cast<int>(r.u32());
    int width = static_cast<int>(r.u32());
    int T = static_cast<int>(r.u32());
    if (channels < 1 || width < 1 || T < 1) throw FormatError(path + ": bad predictor header");
    ToyPredictorParams p = toy_predictor_init(0, channels, width, T);
    get_params(r, p.net.params, "predictor");
    r.expect_end();
    return p;
}

void save_mixer(const std::string& path, const MixerModel& m) {
    if (m.variant == MixVariant::linear)
        throw std::invalid_argument("save_mixer: linear variant has no parameters");
    std::string buf;
    if (m.variant == MixVariant::dynamic) {
        buf = param_header(kKindModNet);
        put_u32(buf, static_cast<uint32_t>(m.modnet.channels));
        put_u32(buf, static_cast<uint32_t>(static_cast<int32_t>(m.t1)));
        put_f64(buf, m.eps);
        put_params(buf, m.modnet.net.params);
    } else {
        buf = param_header(kKindChanPoly);
        put_u32(buf, static_cast<uint32_t>(m.poly.channels));
        put_u32(buf, static_cast<uint32_t>(m.poly.degree));
        put_u32(buf, static_cast<uint32_t>(static_cast<int32_t>(m.t1)));
        put_f64(buf, m.eps);
        put_params(buf, m.poly.coeff);
    }
    write_bytes_atomic(path, buf);
}

MixerModel load_mixer(const std::string& path) {
    std::string buf = read_all(path);
    ByteReader r{buf, path};
    uint16_t kind = open_param_file(r);
    MixerModel m;
    if (kind == kKindModNet) {
        m.variant = MixVariant::dynamic;
        int channels = static_cast<int>(r.u32());
        m.t1 = static_cast<int32_t>(r.u32());
        m.eps = r.f64();
        if (channels < 1 || !(m.eps > 0.0 && m.eps < 0.5))
            throw FormatError(path + ": bad mixer header");
        m.modnet = modnet_init(0, channels);
        get_params(r, m.modnet.net.params, "mixer");
    } else if (kind == kKindChanPoly) {
        m.variant = MixVariant::channel_poly;
        int channels = static_cast<int>(r.u32());
        int degree = static_cast<int>(r.u32());
        m.t1 = static_cast<int32_t>(r.u32());
        m.eps = r.f64();
        if (channels < 1 || degree < 1 || !(m.eps > 0.0 && m.eps < 0.5))
            throw FormatError(path + ": bad mixer header");
        m.poly = identity_poly(channels, degree);
        get_params(r, m.poly.coeff, "mixer");
    } else {
        throw FormatError(path + ": not a mixer parameter file");
    }
    r.expect_end();
    return m;
}

}  // namespace cdt
