#pragma once
// Per-round CSV traces and aggregate JSON documents.
//
// CSV layout (format version 1): comment lines `# key=value` carrying the
// format version, the run seed and the resolved config, then the header
//   t,z,y,y_hat,score,tau_t,b_t,lambda_min,n_theta,n_p,cum_tests,cum_errors
// and one row per round. Floats use 9 significant digits; an AlwaysTest
// threshold is written as `inf`.

#include "scout/config.hpp"
#include "scout/harness.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <span>
#include <string>

namespace scout {

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kCsvHeader = "t,z,y,y_hat,score,tau_t,b_t,lambda_min,n_theta,n_p,cum_tests,cum_errors";

inline std::string format_float(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline void write_records_csv(std::ostream& os, const ExperimentConfig& cfg, std::uint64_t seed,
                              std::span<const RoundRecord> records) {
    os << "# format_version=" << kFormatVersion << "\n";
    os << "# seed=" << seed << "\n";
    for (const auto& [k, v] : config_entries(cfg, false)) os << "# config." << k << "=" << v << "\n";
    os << kCsvHeader << "\n";
    for (const auto& r : records) {
        os << r.t << ',' << r.z << ',' << r.y << ',' << r.y_hat << ',' << format_float(r.score) << ','
           << format_float(r.tau_t) << ',' << format_float(r.b_t) << ',' << format_float(r.lambda_min) << ','
           << r.n_theta << ',' << r.n_p << ',' << r.cum_tests << ',' << r.cum_errors << '\n';
    }
}

inline nlohmann::ordered_json config_json(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config_entries(cfg, false)) j[k] = v;
    return j;
}

inline nlohmann::ordered_json summary_json(const RunSummary& s) {
    nlohmann::ordered_json j;
    j["seed"] = s.seed;
    j["horizon"] = s.horizon;
    j["tests"] = s.tests;
    j["test_rate"] = static_cast<double>(s.tests) / static_cast<double>(s.horizon);
    j["errors"] = s.errors;
    j["p_star"] = s.p_star;
    j["tau_star"] = s.tau_star;
    j["excess_tests"] = s.excess_tests;
    j["max_prefix_rate"] = s.max_prefix_rate;
    j["safety_satisfied"] = s.safety_satisfied;
    j["first_violation"] = s.first_violation;
    j["oracle_tests"] = s.oracle_tests;
    j["oracle_errors"] = s.oracle_errors;
    j["oracle_max_prefix_rate"] = s.oracle_max_prefix_rate;
    if (s.pessimism_violations >= 0) {
        j["pessimism_violations"] = s.pessimism_violations;
        j["dominates_alpha_t_oracle"] = s.dominates_alpha_t_oracle;
    }
    nlohmann::ordered_json t = nlohmann::ordered_json::array(), ex = nlohmann::ordered_json::array();
    for (const auto& c : s.curve) {
        t.push_back(c.t);
        ex.push_back(c.excess_tests);
    }
    j["regret_curve"] = {{"t", t}, {"excess_tests", ex}};
    return j;
}

inline nlohmann::ordered_json aggregate_json(const ExperimentConfig& cfg, const OracleInfo& oracle,
                                             std::span<const RunSummary> runs, const AggregateReport& rep) {
    nlohmann::ordered_json j;
    j["format_version"] = kFormatVersion;
    j["config"] = config_json(cfg);
    j["oracle"] = {{"tau_star", oracle.tau_star},
                   {"p_star", oracle.p_star},
                   {"p_star_standard_error", oracle.p_star_standard_error},
                   {"source", oracle.source}};
    auto& runs_j = j["runs"] = nlohmann::ordered_json::array();
    for (const auto& s : runs) runs_j.push_back(summary_json(s));
    j["curves"] = {{"t", rep.grid},
                   {"test_rate_q10", rep.test_rate_q10},
                   {"test_rate_q50", rep.test_rate_q50},
                   {"test_rate_q90", rep.test_rate_q90},
                   {"error_rate_q10", rep.error_rate_q10},
                   {"error_rate_q50", rep.error_rate_q50},
                   {"error_rate_q90", rep.error_rate_q90},
                   {"oracle_test_rate_q50", rep.oracle_test_rate_q50},
                   {"mean_excess_tests", rep.mean_excess}};
    j["slope_fit"] = {{"t_from", rep.slope_from},
                      {"t_to", rep.slope_to},
                      {"slope", std::isfinite(rep.slope) ? nlohmann::ordered_json(rep.slope) : nlohmann::ordered_json()}};
    j["mean_excess_tests"] = rep.mean_final_excess;
    j["mean_test_rate"] = rep.mean_final_test_rate;
    j["runs_count"] = rep.runs;
    j["safety_violations"] = rep.safety_violations;
    j["violation_fraction"] = rep.violation_fraction;
    return j;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace scout
