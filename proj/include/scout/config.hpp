#pragma once
// Flat `key = value` experiment configuration: parsing, validation and
// canonical emission. Emitting a resolved config and parsing it back yields
// an identical ExperimentConfig.

#include "scout/errors.hpp"
#include "scout/harness.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace scout {

/// Syntax or value error in a config file; `line` is 1-based.
struct ConfigParseError : std::runtime_error {
    ConfigParseError(std::size_t line_no, const std::string& what, const std::string& source = "")
        : std::runtime_error((source.empty() ? "" : source + ": ") + "line " + std::to_string(line_no) + ": " + what),
          line(line_no),
          message(what) {}
    std::size_t line;
    std::string message;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

inline double parse_double(std::string_view key, std::string_view v) {
    const std::string s(v);
    char* end = nullptr;
    const double out = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(out))
        throw ValidationError(std::string(key), "expected a finite number, got '" + s + "'");
    return out;
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view v) {
    Int out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size())
        throw ValidationError(std::string(key), "expected an integer, got '" + std::string(v) + "'");
    return out;
}

inline bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError(std::string(key), "expected true or false");
}

inline std::vector<double> parse_list(std::string_view key, std::string_view v) {
    std::vector<double> out;
    for (auto part : split(v, ',')) out.push_back(parse_double(key, part));
    return out;
}

/// "A..B" (inclusive) or a comma-separated list.
inline std::vector<std::uint64_t> parse_seeds(std::string_view key, std::string_view v) {
    std::vector<std::uint64_t> out;
    if (trim(v).empty()) return out;
    if (const auto pos = v.find(".."); pos != std::string_view::npos) {
        const auto a = parse_int<std::uint64_t>(key, trim(v.substr(0, pos)));
        const auto b = parse_int<std::uint64_t>(key, trim(v.substr(pos + 2)));
        if (b < a) throw ValidationError(std::string(key), "range end precedes start");
        for (std::uint64_t s = a; s <= b; ++s) out.push_back(s);
        return out;
    }
    for (auto part : split(v, ',')) out.push_back(parse_int<std::uint64_t>(key, part));
    return out;
}

/// Shortest %g form that parses back to the same double.
inline std::string exact(double v) {
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + exact(v[i]);
    return s;
}

}  // namespace detail

/// Applies one setting. Throws ValidationError for unknown keys or bad values.
inline void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
    using namespace detail;
    const std::string k(key);
    if (key == "d") {
        cfg.d = parse_int<int>(key, value);
    } else if (key == "T") {
        cfg.horizon = parse_int<std::int64_t>(key, value);
    } else if (key == "alpha") {
        cfg.alpha = parse_double(key, value);
    } else if (key == "delta") {
        cfg.delta = parse_double(key, value);
    } else if (key == "delta_prime") {
        // Derived; accepted only when consistent so emitted files re-parse.
        const double dp = parse_double(key, value);
        if (dp != cfg.delta_prime()) throw ValidationError(k, "must equal delta/7 (set delta instead)");
    } else if (key == "mode") {
        if (value == "rigorous") cfg.mode = Mode::Rigorous;
        else if (value == "practical") cfg.mode = Mode::Practical;
        else throw ValidationError(k, "expected rigorous or practical");
    } else if (key == "distribution") {
        if (value == "uniform") cfg.distribution = DistributionKind::UniformBall;
        else if (value == "radial") cfg.distribution = DistributionKind::Radial;
        else throw ValidationError(k, "expected uniform or radial");
    } else if (key == "radial_edges") {
        cfg.radial.edges = parse_list(key, value);
    } else if (key == "radial_levels") {
        cfg.radial.levels = parse_list(key, value);
    } else if (key == "theta_star") {
        if (value == "random") cfg.theta_star.reset();
        else cfg.theta_star = parse_list(key, value);
    } else if (key == "seed") {
        cfg.seeds = {parse_int<std::uint64_t>(key, value)};
    } else if (key == "seeds") {
        cfg.seeds = parse_seeds(key, value);
    } else if (key == "refit") {
        if (value == "every") cfg.refit = RefitSchedule::EveryRound;
        else if (value == "doubling") cfg.refit = RefitSchedule::Doubling;
        else throw ValidationError(k, "expected every or doubling");
    } else if (key == "c_b") {
        cfg.c_b = parse_double(key, value);
    } else if (key == "slack_scale") {
        cfg.slack_scale = parse_double(key, value);
    } else if (key == "projection") {
        cfg.projection = parse_bool(key, value);
    } else if (key == "kappa") {
        cfg.kappa = parse_double(key, value);
    } else if (key == "eps_min") {
        cfg.eps_min = parse_double(key, value);
    } else if (key == "curve_points") {
        cfg.curve_points = parse_int<int>(key, value);
    } else if (key == "track_pessimism") {
        cfg.track_pessimism = parse_bool(key, value);
    } else if (key == "out") {
        cfg.out_dir = std::string(value);
    } else {
        throw ValidationError(k, "unknown key");
    }
}

/// Applies config text on top of `base` without validating the result.
inline ExperimentConfig read_config(std::istream& in, ExperimentConfig base = {}) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto body = detail::trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) throw ConfigParseError(line_no, "expected key = value");
        const auto key = detail::trim(body.substr(0, eq));
        const auto value = detail::trim(body.substr(eq + 1));
        if (key.empty()) throw ConfigParseError(line_no, "missing key");
        try {
            apply_setting(base, key, value);
        } catch (const ValidationError& e) {
            throw ConfigParseError(line_no, e.what());
        }
    }
    return base;
}

/// Parses config text on top of `base` (defaults when omitted), then validates.
inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {}) {
    ExperimentConfig cfg = read_config(in, std::move(base));
    cfg.validate();
    return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base = {}) {
    std::istringstream in(text);
    return parse_config(in, std::move(base));
}

struct ConfigFileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Reads a config file without validating; flags may still be layered on top.
inline ExperimentConfig read_config_file(const std::string& path, ExperimentConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigFileError("cannot open config file: " + path);
    try {
        return read_config(in, std::move(base));
    } catch (const ConfigParseError& e) {
        throw ConfigParseError(e.line, e.message, path);
    }
}

/// Ordered (key, value) pairs of the resolved config. The output directory is
/// left out when `include_out` is false so traces do not depend on where they
/// were written.
inline std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg,
                                                                       bool include_out = true) {
    using detail::exact;
    const ExperimentConfig r = cfg.resolved();
    std::vector<std::pair<std::string, std::string>> e;
    e.emplace_back("d", std::to_string(r.d));
    e.emplace_back("T", std::to_string(r.horizon));
    e.emplace_back("alpha", exact(r.alpha));
    e.emplace_back("delta", exact(r.delta));
    e.emplace_back("delta_prime", exact(r.delta_prime()));
    e.emplace_back("mode", to_string(r.mode));
    e.emplace_back("distribution", r.distribution == DistributionKind::UniformBall ? "uniform" : "radial");
    if (r.distribution == DistributionKind::Radial) {
        e.emplace_back("radial_edges", detail::join(r.radial.edges));
        e.emplace_back("radial_levels", detail::join(r.radial.levels));
    }
    e.emplace_back("theta_star", r.theta_star ? detail::join(*r.theta_star) : "random");
    std::string seeds;
    for (std::size_t i = 0; i < r.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(r.seeds[i]);
    e.emplace_back("seeds", seeds);
    e.emplace_back("refit", to_string(*r.refit));
    e.emplace_back("c_b", exact(*r.c_b));
    e.emplace_back("slack_scale", exact(*r.slack_scale));
    e.emplace_back("projection", *r.projection ? "true" : "false");
    e.emplace_back("kappa", exact(r.kappa));
    e.emplace_back("eps_min", exact(r.eps_min));
    e.emplace_back("curve_points", std::to_string(r.curve_points));
    e.emplace_back("track_pessimism", r.track_pessimism ? "true" : "false");
    if (include_out) e.emplace_back("out", r.out_dir);
    return e;
}

inline std::string emit_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
    return out;
}

inline bool operator==(const RadialProfile& a, const RadialProfile& b) {
    return a.edges == b.edges && a.levels == b.levels;
}

/// Field-wise equality of configs after resolving mode defaults.
inline bool same_config(const ExperimentConfig& a, const ExperimentConfig& b) {
    const auto ra = a.resolved(), rb = b.resolved();
    return ra.d == rb.d && ra.horizon == rb.horizon && ra.alpha == rb.alpha && ra.delta == rb.delta &&
           ra.mode == rb.mode && ra.distribution == rb.distribution &&
           (ra.distribution == DistributionKind::UniformBall || ra.radial == rb.radial) &&
           ra.theta_star == rb.theta_star && ra.seeds == rb.seeds && ra.refit == rb.refit && ra.c_b == rb.c_b &&
           ra.slack_scale == rb.slack_scale && ra.projection == rb.projection && ra.kappa == rb.kappa &&
           ra.eps_min == rb.eps_min && ra.curve_points == rb.curve_points &&
           ra.track_pessimism == rb.track_pessimism && ra.out_dir == rb.out_dir;
}

}  // namespace scout
