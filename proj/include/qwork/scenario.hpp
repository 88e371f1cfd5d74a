// scenario.hpp -- configuration, scenario runners, and deterministic output.
//
// A scenario config describes one laboratory setup: the drive protocol
// family, the ramp-duration grid, inverse temperatures (as the dimensionless
// product beta*Z), the integrator step policy, an optional readout model,
// and Monte Carlo settings.  Each runner turns a config into one flat table
// plus a manifest.  Output is bit-reproducible: fixed column order, fixed
// row order (grid index order), %.17g floats, no timestamps.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "qwork/parallel.hpp"
#include "qwork/protocols.hpp"
#include "qwork/readout.hpp"
#include "qwork/sampling.hpp"
#include "qwork/tpm.hpp"
#include "qwork/version.hpp"

namespace qwork {

// ---- configuration model ----

enum class StaMode { Off, On, Both };
enum class OutputFormat { Csv, Json };

struct SamplingConfig {
  std::vector<std::int64_t> n_grid{10, 100, 1000, 10000};
  std::int64_t replicas = 400;
  std::uint64_t seed = 20240817;
};

struct ScenarioConfig {
  DriveProtocol base{};  // z, x_max, and ramp shape; tau/kind set per grid point
  std::vector<double> tau_grid_ms{0.05, 0.1, 0.2, 0.3, 0.8};
  std::vector<double> beta_z{0.6, 0.8};
  StaMode sta = StaMode::Both;
  int n_steps = 0;  // 0 = automatic step rule
  std::optional<ReadoutModel> readout;
  SamplingConfig sampling{};
  std::string out_dir = "out";
  OutputFormat format = OutputFormat::Csv;
};

// Default drive: Z = 5/sqrt(3) kHz, X ramps 0 -> 5 kHz on a cosine
// schedule, five ramp durations, two temperatures, 2x2 confusion matrix.
inline ScenarioConfig default_config() {
  ScenarioConfig cfg;
  cfg.base.tau_ms = 1.0;  // placeholder; scenarios overwrite per grid point
  RealMatrix confusion(2, 2);
  confusion << 0.980, 0.045, 0.020, 0.955;
  cfg.readout.emplace(confusion);
  return cfg;
}

inline DriveProtocol scenario_protocol(const ScenarioConfig& cfg, double tau_ms,
                                       ProtocolKind kind) {
  DriveProtocol p = cfg.base;
  p.tau_ms = tau_ms;
  p.kind = kind;
  return p;
}

// beta in 1/kHz from the dimensionless knob beta*Z.
inline double beta_from_beta_z(const ScenarioConfig& cfg, double beta_z) {
  return beta_z / cfg.base.z_khz;
}

// ---- config parsing ----

namespace detail {

using nlohmann::json;

[[noreturn]] inline void cfg_fail(const std::string& where, const std::string& msg) {
  throw config_error("config: " + where + ": " + msg);
}

inline const json* cfg_find(const json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

inline void expect_object(const json& v, const std::string& where) {
  if (!v.is_object()) cfg_fail(where, "expected an object");
}

inline void expect_keys(const json& obj, const std::string& where,
                        std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known) cfg_fail(where, "unknown key '" + item.key() + "'");
  }
}

inline double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) cfg_fail(where, "expected a number");
  return v.get<double>();
}

inline std::int64_t as_integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) cfg_fail(where, "expected an integer");
  return v.get<std::int64_t>();
}

inline std::uint64_t as_seed(const json& v, const std::string& where) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  cfg_fail(where, "expected a nonnegative integer");
}

inline std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) cfg_fail(where, "expected a string");
  return v.get<std::string>();
}

inline std::vector<double> as_number_array(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) cfg_fail(where, "expected a nonempty array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(as_number(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

inline Schedule parse_schedule(const json& v, const std::string& where) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "cosine") return cosine_ramp();
    cfg_fail(where, "unknown schedule '" + s + "' (expected \"cosine\" or an object)");
  }
  expect_object(v, where);
  expect_keys(v, where, {"shape", "nodes"});
  const json* shape = cfg_find(v, "shape");
  if (!shape) cfg_fail(where, "missing key 'shape'");
  const std::string s = as_string(*shape, where + ".shape");
  if (s == "cosine") {
    if (cfg_find(v, "nodes")) cfg_fail(where, "cosine schedule takes no 'nodes'");
    return cosine_ramp();
  }
  if (s == "piecewise_linear") {
    const json* nodes = cfg_find(v, "nodes");
    if (!nodes) cfg_fail(where, "piecewise_linear schedule needs 'nodes'");
    return piecewise_linear(as_number_array(*nodes, where + ".nodes"));
  }
  cfg_fail(where + ".shape", "unknown shape '" + s + "'");
}

inline ReadoutModel parse_readout(const json& v, const std::string& where) {
  expect_object(v, where);
  expect_keys(v, where, {"confusion"});
  const json* rows = cfg_find(v, "confusion");
  if (!rows) cfg_fail(where, "missing key 'confusion'");
  if (!rows->is_array() || rows->empty()) cfg_fail(where + ".confusion", "expected a matrix");
  const auto d = static_cast<Eigen::Index>(rows->size());
  RealMatrix m(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const json& row = (*rows)[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != d)
      cfg_fail(where + ".confusion", "expected a square matrix");
    for (Eigen::Index j = 0; j < d; ++j)
      m(i, j) = as_number(row[static_cast<std::size_t>(j)],
                          where + ".confusion[" + std::to_string(i) + "][" + std::to_string(j) +
                              "]");
  }
  try {
    return ReadoutModel(std::move(m));
  } catch (const std::invalid_argument& e) {
    cfg_fail(where, e.what());
  }
}

}  // namespace detail

inline ScenarioConfig parse_config(const nlohmann::json& j) {
  using detail::cfg_fail;
  using detail::cfg_find;
  detail::expect_object(j, "$");
  detail::expect_keys(j, "$",
                      {"protocol", "tau_grid_ms", "beta_z", "sta", "n_steps", "readout",
                       "sampling", "output"});
  ScenarioConfig cfg = default_config();

  if (const auto* p = cfg_find(j, "protocol")) {
    detail::expect_object(*p, "protocol");
    detail::expect_keys(*p, "protocol", {"z_khz", "x_max_khz", "schedule"});
    if (const auto* v = cfg_find(*p, "z_khz")) cfg.base.z_khz = detail::as_number(*v, "protocol.z_khz");
    if (const auto* v = cfg_find(*p, "x_max_khz"))
      cfg.base.x_max_khz = detail::as_number(*v, "protocol.x_max_khz");
    if (const auto* v = cfg_find(*p, "schedule"))
      cfg.base.schedule = detail::parse_schedule(*v, "protocol.schedule");
  }

  if (const auto* v = cfg_find(j, "tau_grid_ms")) {
    cfg.tau_grid_ms = detail::as_number_array(*v, "tau_grid_ms");
    for (double t : cfg.tau_grid_ms)
      if (!(t > 0.0) || !std::isfinite(t)) cfg_fail("tau_grid_ms", "durations must be finite and > 0");
  }

  if (const auto* v = cfg_find(j, "beta_z")) {
    cfg.beta_z = detail::as_number_array(*v, "beta_z");
    for (double b : cfg.beta_z)
      if (!(b > 0.0) || !std::isfinite(b)) cfg_fail("beta_z", "values must be finite and > 0");
  }

  if (const auto* v = cfg_find(j, "sta")) {
    const std::string s = detail::as_string(*v, "sta");
    if (s == "off")
      cfg.sta = StaMode::Off;
    else if (s == "on")
      cfg.sta = StaMode::On;
    else if (s == "both")
      cfg.sta = StaMode::Both;
    else
      cfg_fail("sta", "expected \"off\", \"on\", or \"both\"");
  }

  if (const auto* v = cfg_find(j, "n_steps")) {
    const std::int64_t n = detail::as_integer(*v, "n_steps");
    if (n < 0 || n > 50'000'000) cfg_fail("n_steps", "expected 0 (auto) or a step count <= 5e7");
    cfg.n_steps = static_cast<int>(n);
  }

  if (j.contains("readout")) {
    if (j.at("readout").is_null())
      cfg.readout.reset();
    else
      cfg.readout = detail::parse_readout(j.at("readout"), "readout");
  }

  if (const auto* v = cfg_find(j, "sampling")) {
    detail::expect_object(*v, "sampling");
    detail::expect_keys(*v, "sampling", {"n_grid", "replicas", "seed"});
    if (const auto* g = cfg_find(*v, "n_grid")) {
      if (!g->is_array() || g->empty()) cfg_fail("sampling.n_grid", "expected a nonempty array");
      std::vector<std::int64_t> grid;
      for (std::size_t i = 0; i < g->size(); ++i) {
        const std::int64_t n =
            detail::as_integer((*g)[i], "sampling.n_grid[" + std::to_string(i) + "]");
        if (n < 1 || n > 10'000'000)
          cfg_fail("sampling.n_grid", "sample counts must lie in [1, 1e7]");
        if (!grid.empty() && n <= grid.back())
          cfg_fail("sampling.n_grid", "sample counts must be strictly increasing");
        grid.push_back(n);
      }
      cfg.sampling.n_grid = std::move(grid);
    }
    if (const auto* r = cfg_find(*v, "replicas")) {
      const std::int64_t n = detail::as_integer(*r, "sampling.replicas");
      if (n < 2 || n > 10'000'000) cfg_fail("sampling.replicas", "expected a count in [2, 1e7]");
      cfg.sampling.replicas = n;
    }
    if (const auto* s = cfg_find(*v, "seed")) cfg.sampling.seed = detail::as_seed(*s, "sampling.seed");
  }

  if (const auto* v = cfg_find(j, "output")) {
    detail::expect_object(*v, "output");
    detail::expect_keys(*v, "output", {"dir", "format"});
    if (const auto* d = cfg_find(*v, "dir")) {
      cfg.out_dir = detail::as_string(*d, "output.dir");
      if (cfg.out_dir.empty()) cfg_fail("output.dir", "must be nonempty");
    }
    if (const auto* f = cfg_find(*v, "format")) {
      const std::string s = detail::as_string(*f, "output.format");
      if (s == "csv")
        cfg.format = OutputFormat::Csv;
      else if (s == "json")
        cfg.format = OutputFormat::Json;
      else
        cfg_fail("output.format", "expected \"csv\" or \"json\"");
    }
  }

  // Surface protocol-level inconsistencies (e.g. bad schedule nodes) as
  // config diagnostics rather than downstream argument errors.
  try {
    for (double tau : cfg.tau_grid_ms) scenario_protocol(cfg, tau, ProtocolKind::Bare).validate();
  } catch (const std::invalid_argument& e) {
    cfg_fail("protocol", e.what());
  }
  return cfg;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("config: cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  return parse_config(j);
}

// Canonical JSON echo of a config (used in manifests; independent of the
// shorthand used in the input file).
inline nlohmann::json config_to_json(const ScenarioConfig& cfg) {
  nlohmann::json schedule;
  if (cfg.base.schedule.shape == Schedule::Shape::CosineRamp) {
    schedule = {{"shape", "cosine"}};
  } else {
    schedule = {{"shape", "piecewise_linear"}, {"nodes", cfg.base.schedule.nodes}};
  }
  nlohmann::json j{
      {"protocol",
       {{"z_khz", cfg.base.z_khz}, {"x_max_khz", cfg.base.x_max_khz}, {"schedule", schedule}}},
      {"tau_grid_ms", cfg.tau_grid_ms},
      {"beta_z", cfg.beta_z},
      {"sta", cfg.sta == StaMode::Off ? "off" : (cfg.sta == StaMode::On ? "on" : "both")},
      {"n_steps", cfg.n_steps},
      {"sampling",
       {{"n_grid", cfg.sampling.n_grid},
        {"replicas", cfg.sampling.replicas},
        {"seed", cfg.sampling.seed}}},
      {"output",
       {{"dir", cfg.out_dir}, {"format", cfg.format == OutputFormat::Csv ? "csv" : "json"}}}};
  if (cfg.readout) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < cfg.readout->dim(); ++i) {
      std::vector<double> row;
      for (Eigen::Index k = 0; k < cfg.readout->dim(); ++k)
        row.push_back(cfg.readout->matrix()(i, k));
      rows.push_back(std::move(row));
    }
    j["readout"] = {{"confusion", rows}};
  } else {
    j["readout"] = nullptr;
  }
  return j;
}

// ---- flat result tables ----

using Cell = std::variant<std::int64_t, double, std::string>;

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

inline std::string cell_csv(const Cell& c) {
  if (std::holds_alternative<std::int64_t>(c)) return std::to_string(std::get<std::int64_t>(c));
  if (std::holds_alternative<double>(c)) return format_g17(std::get<double>(c));
  return csv_escape(std::get<std::string>(c));
}

inline std::string cell_json(const Cell& c) {
  if (std::holds_alternative<std::int64_t>(c)) return std::to_string(std::get<std::int64_t>(c));
  if (std::holds_alternative<double>(c)) return format_g17(std::get<double>(c));
  return "\"" + json_escape(std::get<std::string>(c)) + "\"";
}

}  // namespace detail

inline std::string table_to_csv(const Table& t) {
  std::string out;
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    if (c) out += ',';
    out += detail::csv_escape(t.columns[c]);
  }
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += detail::cell_csv(row[c]);
    }
    out += '\n';
  }
  return out;
}

inline std::string table_to_json(const Table& t) {
  std::string out = "{\n  \"name\": \"" + detail::json_escape(t.name) + "\",\n  \"columns\": [";
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    if (c) out += ", ";
    out += "\"" + detail::json_escape(t.columns[c]) + "\"";
  }
  out += "],\n  \"rows\": [";
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    out += r ? ",\n    {" : "\n    {";
    for (std::size_t c = 0; c < t.rows[r].size(); ++c) {
      if (c) out += ", ";
      out += "\"" + detail::json_escape(t.columns[c]) + "\": " + detail::cell_json(t.rows[r][c]);
    }
    out += "}";
  }
  out += t.rows.empty() ? "]\n}\n" : "\n  ]\n}\n";
  return out;
}

// ---- per-grid-point evaluation ----

struct ProtocolPoint {
  DriveProtocol protocol;
  int n_steps = 0;
  EigenSystem basis0;
  EigenSystem basis_tau;
  RealMatrix transitions;
  double max_offdiag = 0.0;
};

inline ProtocolPoint evaluate_protocol_point(const DriveProtocol& p, int n_steps_override) {
  p.validate();
  ProtocolPoint pt;
  pt.protocol = p;
  pt.n_steps = n_steps_override > 0 ? n_steps_override : default_step_count(p);
  pt.basis0 = eigendecompose(hamiltonian_at(p, 0.0));
  pt.basis_tau = eigendecompose(hamiltonian_at(p, p.tau_ms));
  pt.transitions = transition_probabilities(propagate(p, pt.n_steps), pt.basis0, pt.basis_tau);
  for (Eigen::Index m = 0; m < pt.transitions.rows(); ++m)
    for (Eigen::Index n = 0; n < pt.transitions.cols(); ++n)
      if (m != n) pt.max_offdiag = std::max(pt.max_offdiag, pt.transitions(m, n));
  return pt;
}

namespace detail {

inline std::vector<ProtocolKind> kinds_for(StaMode sta) {
  switch (sta) {
    case StaMode::Off: return {ProtocolKind::Bare};
    case StaMode::On: return {ProtocolKind::CounterDiabatic};
    default: return {ProtocolKind::Bare, ProtocolKind::CounterDiabatic};
  }
}

inline const char* kind_name(ProtocolKind k) {
  return k == ProtocolKind::Bare ? "bare" : "cd";
}

// Evaluate the (kind, tau) grid in parallel, results in grid order.
inline std::vector<ProtocolPoint> evaluate_points(const ScenarioConfig& cfg,
                                                  const std::vector<ProtocolKind>& kinds) {
  const std::int64_t total =
      static_cast<std::int64_t>(kinds.size()) * static_cast<std::int64_t>(cfg.tau_grid_ms.size());
  std::vector<ProtocolPoint> points(static_cast<std::size_t>(total));
  detail::run_partitioned(total, resolve_workers(0, total), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      const auto k = static_cast<std::size_t>(i) / cfg.tau_grid_ms.size();
      const auto t = static_cast<std::size_t>(i) % cfg.tau_grid_ms.size();
      points[static_cast<std::size_t>(i)] = evaluate_protocol_point(
          scenario_protocol(cfg, cfg.tau_grid_ms[t], kinds[k]), cfg.n_steps);
    }
  });
  return points;
}

}  // namespace detail

// Closed-form endpoint references at one temperature: exact free-energy
// difference and the exponentiated-work variance of the two limit protocols.
struct BetaReference {
  double beta_z;
  double beta;  // 1/kHz
  double delta_f_khz;
  double exp_neg_beta_df;
  double var_adiabatic;
  double var_sudden;
};

inline BetaReference beta_reference(const ScenarioConfig& cfg, double beta_z) {
  const DriveProtocol p = scenario_protocol(cfg, cfg.tau_grid_ms.front(), ProtocolKind::Bare);
  const EigenSystem b0 = eigendecompose(hamiltonian_at(p, 0.0));
  const EigenSystem bt = eigendecompose(hamiltonian_at(p, p.tau_ms));
  const double beta = beta_from_beta_z(cfg, beta_z);
  const ThermalState ts = thermal_populations(b0.values, beta);
  const double df = free_energy_difference(b0.values, bt.values, beta);
  const auto var_of = [&](const RealMatrix& trans) {
    return exp_work_moments(work_distribution(ts, trans, b0.values, bt.values), beta).variance;
  };
  return {beta_z,
          beta,
          df,
          std::exp(-beta * df),
          var_of(adiabatic_transition_matrix(b0.values.size())),
          var_of(sudden_transition_matrix(b0, bt))};
}

// ---- scenario tables ----

// Work-fluctuation sweep over ramp duration: first and second moments of
// e^{-beta w}, the fluctuation-relation residual, the adiabaticity figure,
// and the two closed-form limit variances.
inline Table sweep_tau_table(const ScenarioConfig& cfg) {
  const std::vector<ProtocolKind> kinds = detail::kinds_for(cfg.sta);
  const std::vector<ProtocolPoint> points = detail::evaluate_points(cfg, kinds);

  std::vector<AdiabaticityReport> gamma(cfg.tau_grid_ms.size());
  detail::run_partitioned(static_cast<std::int64_t>(gamma.size()),
                  detail::resolve_workers(0, static_cast<std::int64_t>(gamma.size())),
                  [&](std::int64_t lo, std::int64_t hi) {
                    for (std::int64_t i = lo; i < hi; ++i)
                      gamma[static_cast<std::size_t>(i)] = adiabatic_parameter(
                          scenario_protocol(cfg, cfg.tau_grid_ms[static_cast<std::size_t>(i)],
                                            ProtocolKind::Bare));
                  });

  Table t{"sweep-tau",
          {"tau_ms", "beta_z", "kind", "n_steps", "gamma", "mean_exp_w", "var_exp_w",
           "delta_f_khz", "exp_neg_beta_df", "jarzynski_residual", "var_adiabatic", "var_sudden"},
          {}};
  for (double bz : cfg.beta_z) {
    const BetaReference ref = beta_reference(cfg, bz);
    for (std::size_t k = 0; k < kinds.size(); ++k)
      for (std::size_t i = 0; i < cfg.tau_grid_ms.size(); ++i) {
        const ProtocolPoint& pt = points[k * cfg.tau_grid_ms.size() + i];
        const ThermalState ts = thermal_populations(pt.basis0.values, ref.beta);
        const WorkDistribution wd =
            work_distribution(ts, pt.transitions, pt.basis0.values, pt.basis_tau.values);
        const ExpWorkMoments mom = exp_work_moments(wd, ref.beta);
        const double residual =
            jarzynski_residual(wd, ref.beta, pt.basis0.values, pt.basis_tau.values);
        t.rows.push_back({pt.protocol.tau_ms, bz, std::string(detail::kind_name(kinds[k])),
                          static_cast<std::int64_t>(pt.n_steps), gamma[i].gamma, mom.mean,
                          mom.variance, ref.delta_f_khz, ref.exp_neg_beta_df, residual,
                          ref.var_adiabatic, ref.var_sudden});
      }
  }
  return t;
}

// Side-by-side bare vs. counterdiabatic drive at every grid point; the CD
// rows should reproduce the adiabatic limit at any speed.
inline Table sta_compare_table(const ScenarioConfig& cfg) {
  const std::vector<ProtocolKind> kinds{ProtocolKind::Bare, ProtocolKind::CounterDiabatic};
  const std::vector<ProtocolPoint> points = detail::evaluate_points(cfg, kinds);

  Table t{"sta-compare",
          {"tau_ms", "beta_z", "kind", "n_steps", "max_offdiag_transition", "mean_exp_w",
           "var_exp_w", "var_adiabatic", "delta_f_khz"},
          {}};
  for (double bz : cfg.beta_z) {
    const BetaReference ref = beta_reference(cfg, bz);
    for (std::size_t i = 0; i < cfg.tau_grid_ms.size(); ++i)
      for (std::size_t k = 0; k < kinds.size(); ++k) {
        const ProtocolPoint& pt = points[k * cfg.tau_grid_ms.size() + i];
        const ThermalState ts = thermal_populations(pt.basis0.values, ref.beta);
        const ExpWorkMoments mom = exp_work_moments(
            work_distribution(ts, pt.transitions, pt.basis0.values, pt.basis_tau.values),
            ref.beta);
        t.rows.push_back({pt.protocol.tau_ms, bz, std::string(detail::kind_name(kinds[k])),
                          static_cast<std::int64_t>(pt.n_steps), pt.max_offdiag, mom.mean,
                          mom.variance, ref.var_adiabatic, ref.delta_f_khz});
      }
  }
  return t;
}

// Joint two-point-measurement tables, optionally pushed through the readout
// model and corrected back (ideal / measured / corrected stages).
inline Table joint_probs_table(const ScenarioConfig& cfg) {
  const std::vector<ProtocolKind> kinds = detail::kinds_for(cfg.sta);
  const std::vector<ProtocolPoint> points = detail::evaluate_points(cfg, kinds);

  Table t{"joint-probs",
          {"tau_ms", "beta_z", "kind", "stage", "p00", "p01", "p10", "p11", "clamp_adjustment"},
          {}};
  const auto push = [&t](double tau, double bz, const char* kind, const char* stage,
                         const RealMatrix& joint, double clamp) {
    t.rows.push_back({tau, bz, std::string(kind), std::string(stage), joint(0, 0), joint(0, 1),
                      joint(1, 0), joint(1, 1), clamp});
  };

  for (double bz : cfg.beta_z) {
    const double beta = beta_from_beta_z(cfg, bz);
    for (std::size_t k = 0; k < kinds.size(); ++k)
      for (std::size_t i = 0; i < cfg.tau_grid_ms.size(); ++i) {
        const ProtocolPoint& pt = points[k * cfg.tau_grid_ms.size() + i];
        if (pt.basis0.values.size() != 2)
          throw std::invalid_argument("joint_probs_table: defined for two-level protocols");
        const ThermalState ts = thermal_populations(pt.basis0.values, beta);
        const JointProbabilityTable ideal(ts, pt.transitions);
        const char* kind = detail::kind_name(kinds[k]);
        push(pt.protocol.tau_ms, bz, kind, "ideal", ideal.entries(), 0.0);
        if (cfg.readout) {
          const RealVector p0_obs = apply_readout_noise(RealVector(ts.populations), *cfg.readout);
          const RealMatrix cond_obs =
              apply_readout_noise(RealMatrix(pt.transitions.transpose()), *cfg.readout);
          RealMatrix measured(2, 2);
          for (Eigen::Index m = 0; m < 2; ++m)
            for (Eigen::Index n = 0; n < 2; ++n) measured(m, n) = cond_obs(n, m) * p0_obs[m];
          push(pt.protocol.tau_ms, bz, kind, "measured", measured, 0.0);
          const CorrectedJoint corrected = correct_joint(p0_obs, cond_obs, *cfg.readout);
          push(pt.protocol.tau_ms, bz, kind, "corrected", corrected.table.entries(),
               corrected.clamp_adjustment);
        }
      }
  }
  return t;
}

// Replica convergence of the finite-sample free-energy estimator.
inline Table estimator_table(const ScenarioConfig& cfg) {
  const std::vector<ProtocolKind> kinds = detail::kinds_for(cfg.sta);
  const std::vector<ProtocolPoint> points = detail::evaluate_points(cfg, kinds);
  const SplitStream master(cfg.sampling.seed);

  Table t{"estimator",
          {"tau_ms", "beta_z", "kind", "n_samples", "replicas", "mean_estimate_khz", "bias_khz",
           "rmse_khz", "delta_f_khz"},
          {}};
  std::uint64_t point_index = 0;
  for (double bz : cfg.beta_z) {
    const double beta = beta_from_beta_z(cfg, bz);
    for (std::size_t k = 0; k < kinds.size(); ++k)
      for (std::size_t i = 0; i < cfg.tau_grid_ms.size(); ++i) {
        const ProtocolPoint& pt = points[k * cfg.tau_grid_ms.size() + i];
        const ThermalState ts = thermal_populations(pt.basis0.values, beta);
        const JointProbabilityTable joint(ts, pt.transitions);
        const std::uint64_t point_seed = master.child(point_index++).base();
        const EstimatorSeries series =
            convergence_study(joint, pt.basis0.values, pt.basis_tau.values, beta,
                              cfg.sampling.n_grid, cfg.sampling.replicas, point_seed);
        for (std::size_t g = 0; g < series.n_grid.size(); ++g)
          t.rows.push_back({pt.protocol.tau_ms, bz, std::string(detail::kind_name(kinds[k])),
                            series.n_grid[g], series.replicas, series.mean_estimate[g],
                            series.bias[g], series.rmse[g], series.delta_f});
      }
  }
  return t;
}

// Adiabaticity figure of merit along the ramp-duration grid.
inline Table gamma_table(const ScenarioConfig& cfg) {
  Table t{"gamma", {"tau_ms", "gamma", "argmax_time_ms", "gamma_times_tau"}, {}};
  std::vector<AdiabaticityReport> reports(cfg.tau_grid_ms.size());
  detail::run_partitioned(static_cast<std::int64_t>(reports.size()),
                  detail::resolve_workers(0, static_cast<std::int64_t>(reports.size())),
                  [&](std::int64_t lo, std::int64_t hi) {
                    for (std::int64_t i = lo; i < hi; ++i)
                      reports[static_cast<std::size_t>(i)] = adiabatic_parameter(
                          scenario_protocol(cfg, cfg.tau_grid_ms[static_cast<std::size_t>(i)],
                                            ProtocolKind::Bare));
                  });
  for (std::size_t i = 0; i < cfg.tau_grid_ms.size(); ++i)
    t.rows.push_back({cfg.tau_grid_ms[i], reports[i].gamma, reports[i].argmax_time_ms,
                      reports[i].gamma * cfg.tau_grid_ms[i]});
  return t;
}

// Drive waveforms (Z constant, ramp X, CD amplitude Y) on a uniform grid.
inline Table cd_waveform_table(const ScenarioConfig& cfg, int samples_per_tau = 201) {
  if (samples_per_tau < 2)
    throw std::invalid_argument("cd_waveform_table: samples_per_tau must be >= 2");
  Table t{"cd-waveform", {"tau_ms", "t_ms", "x_khz", "y_khz", "z_khz"}, {}};
  for (double tau : cfg.tau_grid_ms) {
    const DriveProtocol p = scenario_protocol(cfg, tau, ProtocolKind::CounterDiabatic);
    for (int s = 0; s < samples_per_tau; ++s) {
      const double time = tau * static_cast<double>(s) / static_cast<double>(samples_per_tau - 1);
      t.rows.push_back(
          {tau, time, x_schedule(p, time), cd_coefficient(p, time), p.z_khz});
    }
  }
  return t;
}

// ---- running and emission ----

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"sweep-tau", "sta-compare", "joint-probs",
                                              "estimator", "gamma", "cd-waveform"};
  return names;
}

inline Table scenario_table(const ScenarioConfig& cfg, const std::string& scenario) {
  if (scenario == "sweep-tau") return sweep_tau_table(cfg);
  if (scenario == "sta-compare") return sta_compare_table(cfg);
  if (scenario == "joint-probs") return joint_probs_table(cfg);
  if (scenario == "estimator") return estimator_table(cfg);
  if (scenario == "gamma") return gamma_table(cfg);
  if (scenario == "cd-waveform") return cd_waveform_table(cfg);
  throw std::invalid_argument("scenario_table: unknown scenario '" + scenario + "'");
}

struct RunResult {
  std::vector<std::filesystem::path> files;
};

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw config_error("output: cannot open '" + path.string() + "' for writing");
  out << bytes;
  out.flush();
  if (!out) throw config_error("output: failed writing '" + path.string() + "'");
}

}  // namespace detail

// Runs one scenario: writes the table (csv or json) and a manifest with the
// canonical config echo and closed-form endpoint references.  Reruns with
// the same config produce byte-identical files.
inline RunResult run_scenario(const ScenarioConfig& cfg, const std::string& scenario) {
  const Table table = scenario_table(cfg, scenario);
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);

  RunResult result;
  const std::string ext = cfg.format == OutputFormat::Csv ? ".csv" : ".json";
  const std::filesystem::path table_path = dir / (scenario + ext);
  detail::write_file(table_path, cfg.format == OutputFormat::Csv ? table_to_csv(table)
                                                                 : table_to_json(table));
  result.files.push_back(table_path);

  nlohmann::json references = nlohmann::json::array();
  for (double bz : cfg.beta_z) {
    const BetaReference ref = beta_reference(cfg, bz);
    references.push_back({{"beta_z", ref.beta_z},
                          {"beta_per_khz", ref.beta},
                          {"delta_f_khz", ref.delta_f_khz},
                          {"exp_neg_beta_df", ref.exp_neg_beta_df},
                          {"var_adiabatic", ref.var_adiabatic},
                          {"var_sudden", ref.var_sudden}});
  }
  nlohmann::json outputs = nlohmann::json::array();
  outputs.push_back({{"file", table_path.filename().string()},
                     {"rows", table.rows.size()},
                     {"columns", table.columns}});
  const nlohmann::json manifest{{"tool", "qwork"},       {"version", kVersion},
                                {"scenario", scenario},  {"config", config_to_json(cfg)},
                                {"references", references}, {"outputs", outputs}};
  const std::filesystem::path manifest_path = dir / (scenario + ".manifest.json");
  detail::write_file(manifest_path, manifest.dump(2) + "\n");
  result.files.push_back(manifest_path);
  return result;
}

inline RunResult run_all(const ScenarioConfig& cfg) {
  RunResult all;
  for (const std::string& name : scenario_names()) {
    RunResult r = run_scenario(cfg, name);
    all.files.insert(all.files.end(), r.files.begin(), r.files.end());
  }
  return all;
}

// Named entry points, one per scenario.
inline RunResult run_sweep_tau(const ScenarioConfig& cfg) { return run_scenario(cfg, "sweep-tau"); }
inline RunResult run_sta_compare(const ScenarioConfig& cfg) {
  return run_scenario(cfg, "sta-compare");
}
inline RunResult run_joint_probabilities(const ScenarioConfig& cfg) {
  return run_scenario(cfg, "joint-probs");
}
inline RunResult run_estimator_convergence(const ScenarioConfig& cfg) {
  return run_scenario(cfg, "estimator");
}
inline RunResult run_gamma_report(const ScenarioConfig& cfg) { return run_scenario(cfg, "gamma"); }
inline RunResult run_cd_waveform(const ScenarioConfig& cfg) {
  return run_scenario(cfg, "cd-waveform");
}

}  // namespace qwork
