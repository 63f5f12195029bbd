#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <locale>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "labcat/errors.hpp"
#include "labcat/optimizer.hpp"
#include "labcat/test_functions.hpp"

namespace labcat {

/// Regrets are floored here before taking logarithms.
inline constexpr double kRegretFloor = 1e-18;

struct RunOutcome {
  std::int64_t run_id = 0;
  /// Test function name, or a caller-chosen label for other objectives.
  std::string function;
  int dimension = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  Termination termination = Termination::BudgetExhausted;
  int n_restarts = 0;
  std::vector<RunRecord> trace;
  /// best_y - f_min per evaluation, clipped at zero; NaN when f_min is unknown.
  std::vector<double> regret;

  [[nodiscard]] double final_regret() const {
    return regret.empty() ? std::numeric_limits<double>::infinity() : regret.back();
  }
  [[nodiscard]] double wall_seconds() const {
    std::int64_t ns = 0;
    for (const auto& r : trace) ns += r.wall_ns;
    return static_cast<double>(ns) * 1e-9;
  }
};

struct BenchSummary {
  std::string function;
  int n_runs = 0;
  int n_failed = 0;
  /// Mean and population standard deviation of log10(max(final regret, floor)).
  double mean_log10_regret = 0.0;
  double std_log10_regret = 0.0;
  double mean_final_regret = 0.0;
  double median_final_regret = 0.0;
  double mean_wall_seconds = 0.0;
  double std_wall_seconds = 0.0;
};

struct BenchReport {
  LabcatConfig config;
  int budget = 0;
  std::uint64_t base_seed = 0;
  std::vector<std::uint64_t> seeds;
  /// Widest dimension across the benchmarked functions (CSV column count).
  int dim = 0;
  std::vector<RunOutcome> runs;
  std::vector<BenchSummary> summary;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Mean and population standard deviation.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(),
                         std::numeric_limits<double>::quiet_NaN()};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

/// Per-function statistics over the successful runs of `runs`.
inline BenchSummary summarize(const std::string& fn, const std::vector<RunOutcome>& runs) {
  BenchSummary s;
  s.function = fn;
  std::vector<double> finals, logs, walls;
  for (const auto& r : runs) {
    if (r.function != fn) continue;
    ++s.n_runs;
    if (r.failed) {
      ++s.n_failed;
      continue;
    }
    finals.push_back(r.final_regret());
    logs.push_back(std::log10(std::max(r.final_regret(), kRegretFloor)));
    walls.push_back(r.wall_seconds());
  }
  std::tie(s.mean_log10_regret, s.std_log10_regret) = mean_std(logs);
  s.mean_final_regret = mean_std(finals).first;
  s.median_final_regret = median(finals);
  std::tie(s.mean_wall_seconds, s.std_wall_seconds) = mean_std(walls);
  return s;
}

/// One optimization of an arbitrary objective; errors are recorded on the outcome instead of
/// propagating. Pass a NaN `f_min` when the optimum is unknown.
template <class Objective>
RunOutcome run_objective(std::string label, Objective&& objective, const Bounds& bounds,
                         double f_min, LabcatConfig config, std::uint64_t seed,
                         std::int64_t run_id) {
  RunOutcome out;
  out.run_id = run_id;
  out.function = std::move(label);
  out.dimension = bounds.dim();
  out.seed = seed;
  config.seed = seed;
  try {
    OptResult r = minimize(std::forward<Objective>(objective), bounds, config);
    out.termination = r.termination;
    out.n_restarts = r.n_restarts;
    out.trace = std::move(r.trace);
  } catch (const ObjectiveNonFinite& e) {
    out.failed = true;
    out.error = e.what();
    out.trace = e.partial_trace();
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
  }
  out.regret.reserve(out.trace.size());
  for (const auto& rec : out.trace) {
    out.regret.push_back(std::isnan(f_min) ? f_min : std::max(rec.best_y - f_min, 0.0));
  }
  return out;
}

inline RunOutcome run_single(const TestFunction& fn, const LabcatConfig& config,
                             std::uint64_t seed, std::int64_t run_id) {
  return run_objective(
      to_string(fn.name), [&fn](const Eigen::VectorXd& x) { return eval_testfn(fn, x); },
      fn.bounds, fn.f_min, config, seed, run_id);
}

/// Runs every function `n_runs` times with seeds base_seed .. base_seed + n_runs - 1.
/// Run ids are assigned function-major; results are merged by run id, so the report does
/// not depend on `jobs`.
inline BenchReport run_benchmark(const std::vector<TestFunction>& fns, const LabcatConfig& config,
                                 int n_runs, int budget, std::uint64_t base_seed, int jobs = 1) {
  if (n_runs < 1) throw InvalidConfig("n_runs must be at least 1");
  if (budget < 1) throw InvalidConfig("budget must be positive");
  if (jobs < 1) throw InvalidConfig("jobs must be at least 1");
  LabcatConfig cfg = config;
  cfg.max_evals = budget;
  cfg.validate();

  BenchReport report;
  report.config = cfg;
  report.budget = budget;
  report.base_seed = base_seed;
  for (int r = 0; r < n_runs; ++r) report.seeds.push_back(base_seed + static_cast<std::uint64_t>(r));
  for (const auto& fn : fns) report.dim = std::max(report.dim, fn.dimension);

  const std::size_t total = fns.size() * static_cast<std::size_t>(n_runs);
  report.runs.resize(total);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      const auto& fn = fns[i / static_cast<std::size_t>(n_runs)];
      const std::uint64_t seed = report.seeds[i % static_cast<std::size_t>(n_runs)];
      report.runs[i] = run_single(fn, cfg, seed, static_cast<std::int64_t>(i));
    }
  };
  const int n_threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(jobs), total));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& fn : fns) report.summary.push_back(summarize(to_string(fn.name), report.runs));
  return report;
}

/// Wraps already finished runs (e.g. a single `labcat run`) into a report.
inline BenchReport report_from_runs(std::vector<RunOutcome> runs, const LabcatConfig& config) {
  BenchReport report;
  report.config = config;
  report.budget = config.max_evals;
  report.base_seed = runs.empty() ? config.seed : runs.front().seed;
  std::vector<std::string> labels;
  for (const auto& r : runs) {
    report.dim = std::max(report.dim, r.dimension);
    if (std::find(report.seeds.begin(), report.seeds.end(), r.seed) == report.seeds.end()) {
      report.seeds.push_back(r.seed);
    }
    if (std::find(labels.begin(), labels.end(), r.function) == labels.end()) {
      labels.push_back(r.function);
    }
  }
  report.runs = std::move(runs);
  for (const auto& l : labels) report.summary.push_back(summarize(l, report.runs));
  return report;
}

/// Zeroes every wall-time field so reports from identical inputs are byte-identical.
inline void strip_timing(BenchReport& report) {
  for (auto& run : report.runs) {
    for (auto& rec : run.trace) rec.wall_ns = 0;
  }
  for (auto& s : report.summary) {
    s.mean_wall_seconds = 0.0;
    s.std_wall_seconds = 0.0;
  }
}

enum class ReportFormat { Csv, Json };

/// 17 significant digits, '.' separator independent of locale.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline std::string csv_header(int dim) {
  std::string h = "run_id,eval_index";
  for (int k = 0; k < dim; ++k) h += ",x_" + std::to_string(k);
  h += ",y,best_y,regret,wall_ns";
  return h;
}

inline void write_csv(const BenchReport& report, std::ostream& os) {
  os << csv_header(report.dim) << '\n';
  for (const auto& run : report.runs) {
    for (std::size_t i = 0; i < run.trace.size(); ++i) {
      const RunRecord& rec = run.trace[i];
      os << run.run_id << ',' << rec.eval_index;
      for (int k = 0; k < report.dim; ++k) {
        os << ',';
        if (k < rec.x.size()) os << format_double(rec.x(k));
      }
      os << ',' << format_double(rec.y) << ',' << format_double(rec.best_y) << ','
         << format_double(run.regret[i]) << ',' << rec.wall_ns << '\n';
    }
  }
}

inline nlohmann::json config_to_json(const LabcatConfig& c) {
  nlohmann::json j;
  j["beta"] = c.beta;
  j["rho"] = c.rho;
  j["sigma_prior"] = c.sigma_prior;
  j["hyper_steps"] = c.hyper_steps;
  j["doe_size"] = c.doe_size;
  j["max_evals"] = c.max_evals;
  j["target_value"] = c.target_value ? nlohmann::json(*c.target_value) : nlohmann::json(nullptr);
  j["range_tolerance"] = c.range_tolerance;
  j["restarts"] = c.restarts;
  j["rotation_enabled"] = c.ablation.rotation_enabled;
  j["uniform_lengthscale_prior"] = c.ablation.uniform_lengthscale_prior;
  return j;
}

inline nlohmann::json report_to_json(const BenchReport& report) {
  nlohmann::json j;
  j["config"] = config_to_json(report.config);
  j["budget"] = report.budget;
  j["base_seed"] = report.base_seed;
  j["seeds"] = report.seeds;
  auto& summary = j["summary"] = nlohmann::json::array();
  for (const auto& s : report.summary) {
    summary.push_back({{"function", s.function},
                       {"n_runs", s.n_runs},
                       {"n_failed", s.n_failed},
                       {"mean_log10_regret", s.mean_log10_regret},
                       {"std_log10_regret_population", s.std_log10_regret},
                       {"mean_final_regret", s.mean_final_regret},
                       {"median_final_regret", s.median_final_regret},
                       {"mean_wall_seconds", s.mean_wall_seconds},
                       {"std_wall_seconds_population", s.std_wall_seconds}});
  }
  auto& runs = j["runs"] = nlohmann::json::array();
  for (const auto& run : report.runs) {
    nlohmann::json r;
    r["run_id"] = run.run_id;
    r["function"] = run.function;
    r["dimension"] = run.dimension;
    r["seed"] = run.seed;
    r["failed"] = run.failed;
    if (run.failed) r["error"] = run.error;
    r["termination"] = to_string(run.termination);
    r["n_restarts"] = run.n_restarts;
    auto& evals = r["evals"] = nlohmann::json::array();
    for (std::size_t i = 0; i < run.trace.size(); ++i) {
      const RunRecord& rec = run.trace[i];
      evals.push_back({{"eval_index", rec.eval_index},
                       {"x", std::vector<double>(rec.x.data(), rec.x.data() + rec.x.size())},
                       {"y", rec.y},
                       {"best_y", rec.best_y},
                       {"regret", run.regret[i]},
                       {"wall_ns", rec.wall_ns}});
    }
    runs.push_back(std::move(r));
  }
  return j;
}

inline void write_report(const BenchReport& report, const std::string& path, ReportFormat format) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os.imbue(std::locale::classic());
  if (!os) throw IoFailure("cannot open '" + path + "' for writing");
  if (format == ReportFormat::Csv) {
    write_csv(report, os);
  } else {
    os << report_to_json(report).dump(2) << '\n';
  }
  os.flush();
  if (!os) throw IoFailure("failed writing '" + path + "'");
}

struct CsvRow {
  std::int64_t run_id = 0;
  std::int64_t eval_index = 0;
  Eigen::VectorXd x;
  double y = 0.0;
  double best_y = 0.0;
  double regret = 0.0;
  std::int64_t wall_ns = 0;
};

namespace detail {
template <class T>
T parse_field(std::string_view s) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw IoFailure("malformed CSV field '" + std::string(s) + "'");
  }
  return v;
}
}  // namespace detail

/// Reads a report CSV written by `write_report`. Blank x cells (narrower functions in a
/// mixed report) are dropped from the row's x.
inline std::vector<CsvRow> read_report_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoFailure("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw IoFailure("missing CSV header");
  const auto n_cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',') + 1);
  if (n_cols < 6) throw IoFailure("CSV header has too few columns");
  const std::size_t dim = n_cols - 6;
  std::vector<CsvRow> rows;
  while (std::getline(is, line)) {
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (;;) {
      const auto p = rest.find(',');
      f.push_back(rest.substr(0, p));
      if (p == std::string_view::npos) break;
      rest.remove_prefix(p + 1);
    }
    if (f.size() != n_cols) throw IoFailure("CSV row has wrong column count");
    CsvRow row;
    row.run_id = detail::parse_field<std::int64_t>(f[0]);
    row.eval_index = detail::parse_field<std::int64_t>(f[1]);
    std::vector<double> xs;
    for (std::size_t k = 0; k < dim; ++k) {
      if (!f[2 + k].empty()) xs.push_back(detail::parse_field<double>(f[2 + k]));
    }
    row.x = Eigen::Map<Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    row.y = detail::parse_field<double>(f[2 + dim]);
    row.best_y = detail::parse_field<double>(f[3 + dim]);
    row.regret = detail::parse_field<double>(f[4 + dim]);
    row.wall_ns = detail::parse_field<std::int64_t>(f[5 + dim]);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace labcat
