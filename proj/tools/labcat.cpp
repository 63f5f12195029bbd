// labcat: command-line front end for single runs, benchmark batches and self-tests.

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "labcat/labcat.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Options shared by the subcommands. Unset numeric options fall back to library defaults.
struct Options {
  std::vector<std::string> fns;
  std::optional<int> dim;
  std::optional<int> budget;
  int runs = 50;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta;
  std::optional<int> rho;
  std::optional<double> sigma_prior;
  std::optional<int> hyper_steps;
  std::optional<double> target;
  bool no_rotation = false;
  bool uniform_prior = false;
  std::string out;
  std::string format = "csv";
  int jobs = 1;
  std::string cmd;
  std::string bounds;
  double timeout_s = 60.0;
  bool omit_timing = false;
};

labcat::LabcatConfig build_config(const Options& o, int dim) {
  labcat::LabcatConfig c = labcat::LabcatConfig::defaults(dim);
  if (o.beta) c.beta = *o.beta;
  if (o.rho) c.rho = *o.rho;
  if (o.sigma_prior) c.sigma_prior = *o.sigma_prior;
  if (o.hyper_steps) c.hyper_steps = *o.hyper_steps;
  if (o.budget) c.max_evals = *o.budget;
  if (o.target) c.target_value = *o.target;
  c.ablation.rotation_enabled = !o.no_rotation;
  c.ablation.uniform_lengthscale_prior = o.uniform_prior;
  return c;
}

std::uint64_t resolve_seed(const Options& o) {
  if (o.seed) return *o.seed;
  if (const char* env = std::getenv("LABCAT_SEED")) {
    std::uint64_t v = 0;
    const std::string_view s(env);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
      throw UsageError("LABCAT_SEED is not a non-negative integer: '" + std::string(s) + "'");
    }
    return v;
  }
  return 0;
}

labcat::ReportFormat resolve_format(const Options& o) {
  return o.format == "json" ? labcat::ReportFormat::Json : labcat::ReportFormat::Csv;
}

std::vector<labcat::TestFunction> resolve_functions(const Options& o) {
  if (o.fns.empty()) throw UsageError("--fn is required");
  std::vector<labcat::TestFunction> out;
  for (const auto& name : o.fns) {
    const auto parsed = labcat::parse_test_function(name);
    if (!parsed) throw UsageError("unknown test function '" + name + "'");
    const bool fixed2 = *parsed == labcat::TestFunctionName::Booth ||
                        *parsed == labcat::TestFunctionName::Branin;
    const int d = o.dim.value_or(2);
    if (fixed2 && d != 2) throw UsageError(name + " is only defined for --dim 2");
    out.push_back(labcat::make_test_function(*parsed, d));
  }
  return out;
}

/// "lo:hi,lo:hi,..." -> Bounds.
labcat::Bounds parse_bounds(const std::string& text) {
  std::vector<std::pair<double, double>> pairs;
  std::stringstream ss(text);
  std::string item;
  const auto num = [&](std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
      throw UsageError("malformed --bounds entry '" + item + "'");
    }
    return v;
  };
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw UsageError("--bounds entries must look like lo:hi");
    const std::string_view sv(item);
    pairs.emplace_back(num(sv.substr(0, colon)), num(sv.substr(colon + 1)));
  }
  if (pairs.empty()) throw UsageError("--bounds is empty");
  try {
    return labcat::Bounds(pairs);
  } catch (const labcat::InvalidBounds& e) {
    throw UsageError(e.what());
  }
}

void write_out(labcat::BenchReport& report, const Options& o, const std::string& fallback) {
  if (o.omit_timing) labcat::strip_timing(report);
  labcat::write_report(report, o.out.empty() ? fallback : o.out, resolve_format(o));
}

std::string default_out(const Options& o, const std::string& stem) {
  return stem + (o.format == "json" ? ".json" : ".csv");
}

int cmd_run(const Options& o) {
  const std::uint64_t seed = resolve_seed(o);
  labcat::RunOutcome outcome;
  labcat::LabcatConfig cfg;
  if (!o.cmd.empty()) {
    if (!o.fns.empty()) throw UsageError("--fn and --cmd are mutually exclusive");
    if (o.bounds.empty()) throw UsageError("--cmd requires --bounds");
    const labcat::Bounds bounds = parse_bounds(o.bounds);
    if (o.dim && *o.dim != bounds.dim()) throw UsageError("--dim disagrees with --bounds");
    cfg = build_config(o, bounds.dim());
    cfg.validate();
    const labcat::ExternalObjective objective(
        o.cmd, std::chrono::milliseconds(static_cast<std::int64_t>(o.timeout_s * 1000.0)));
    outcome = labcat::run_objective("external", objective, bounds,
                                    std::numeric_limits<double>::quiet_NaN(), cfg, seed, 0);
  } else {
    const auto fns = resolve_functions(o);
    if (fns.size() != 1) throw UsageError("run takes exactly one --fn");
    cfg = build_config(o, fns.front().dimension);
    cfg.validate();
    outcome = labcat::run_single(fns.front(), cfg, seed, 0);
  }
  cfg.seed = seed;

  const std::string path = o.out.empty() ? default_out(o, "labcat_run") : o.out;
  labcat::BenchReport report = labcat::report_from_runs({outcome}, cfg);
  write_out(report, o, path);

  if (outcome.failed) {
    std::cerr << "labcat: run failed after " << outcome.trace.size()
              << " evaluations: " << outcome.error << '\n';
    std::cerr << "trace: " << path << '\n';
    return kExitRuntime;
  }
  const labcat::RunRecord* best = nullptr;
  for (const auto& rec : outcome.trace) {
    if (rec.y == outcome.trace.back().best_y) {
      best = &rec;
      break;
    }
  }
  std::cout << "best_y: " << labcat::format_double(outcome.trace.back().best_y) << '\n';
  std::cout << "best_x:";
  for (Eigen::Index k = 0; k < best->x.size(); ++k) {
    std::cout << ' ' << labcat::format_double(best->x(k));
  }
  std::cout << '\n';
  std::cout << "evaluations: " << outcome.trace.size() << '\n';
  std::cout << "restarts: " << outcome.n_restarts << '\n';
  std::cout << "termination: " << labcat::to_string(outcome.termination) << '\n';
  std::cout << "trace: " << path << '\n';
  return kExitOk;
}

int cmd_bench(const Options& o) {
  const auto fns = resolve_functions(o);
  const int dim = fns.front().dimension;
  const labcat::LabcatConfig cfg = build_config(o, dim);
  cfg.validate();
  if (o.runs < 1) throw UsageError("--runs must be at least 1");
  if (o.jobs < 1) throw UsageError("--jobs must be at least 1");
  labcat::BenchReport report =
      labcat::run_benchmark(fns, cfg, o.runs, cfg.max_evals, resolve_seed(o), o.jobs);
  const std::string path = o.out.empty() ? default_out(o, "labcat_bench") : o.out;
  write_out(report, o, path);

  int failed = 0;
  for (const auto& s : report.summary) {
    failed += s.n_failed;
    std::cout << s.function << ": runs " << s.n_runs << ", failed " << s.n_failed
              << ", median regret " << labcat::format_double(s.median_final_regret)
              << ", log10 regret " << s.mean_log10_regret << " +/- " << s.std_log10_regret
              << " (population std)\n";
  }
  std::cout << "report: " << path << '\n';
  if (failed > 0) {
    std::cerr << "labcat: " << failed << " run(s) failed; see the report\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_selftest(const Options& o) {
  std::vector<labcat::CheckResult> checks = labcat::run_selftests(resolve_seed(o));

  labcat::CheckResult parity{"cli defaults equal library defaults", true, 0.0, 0.0, ""};
  for (int d = 1; d <= 10; ++d) {
    if (!(build_config(Options{}, d) == labcat::LabcatConfig::defaults(d))) {
      parity.passed = false;
      parity.detail = "mismatch at d = " + std::to_string(d);
    }
  }
  checks.push_back(parity);

  bool ok = true;
  for (const auto& c : checks) {
    ok = ok && c.passed;
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  worst " << c.worst << " tol "
              << c.tolerance;
    if (!c.detail.empty()) std::cout << "  (" << c.detail << ')';
    std::cout << '\n';
  }
  return ok ? kExitOk : kExitRuntime;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--dim", o.dim, "Problem dimension (default 2)")->check(CLI::PositiveNumber);
  sub->add_option("--budget", o.budget, "Objective evaluations per run (default 200*dim)");
  sub->add_option("--seed", o.seed, "RNG seed (falls back to $LABCAT_SEED, then 0)");
  sub->add_option("--beta", o.beta, "Trust-region half-width (default clamp(1/dim, 0.1, 1))");
  sub->add_option("--rho", o.rho, "Retained observations per dimension (default 7)");
  sub->add_option("--sigma-prior", o.sigma_prior, "Length-scale prior std (default 0.1)");
  sub->add_option("--hyper-steps", o.hyper_steps, "Newton steps per iteration (default 1)");
  sub->add_option("--target", o.target, "Stop once best_y <= target");
  sub->add_flag("--no-rotation", o.no_rotation, "Disable the principal-component rotation");
  sub->add_flag("--uniform-prior", o.uniform_prior, "Drop the length-scale prior");
  sub->add_option("--out", o.out, "Output file");
  sub->add_option("--format", o.format, "Output format")
      ->check(CLI::IsMember({"csv", "json"}));
  sub->add_flag("--omit-timing", o.omit_timing,
                "Write zero wall times so identical invocations give identical files");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LABCAT trust-region Bayesian optimization"};
  app.name("labcat");
  app.require_subcommand(1);
  Options o;

  CLI::App* run = app.add_subcommand("run", "Optimize one function and write its trace");
  run->add_option("--fn", o.fns, "Test function: sphere quartic booth rosenbrock branin levy");
  run->add_option("--cmd", o.cmd,
                  "External objective: shell command reading x on stdin, printing y");
  run->add_option("--bounds", o.bounds, "Bounds for --cmd, as lo:hi,lo:hi,...");
  run->add_option("--timeout", o.timeout_s, "Seconds per external evaluation (default 60)")
      ->check(CLI::PositiveNumber);
  add_common(run, o);

  CLI::App* bench = app.add_subcommand("bench", "Repeated runs with regret statistics");
  bench->add_option("--fn", o.fns, "Test function(s)")->delimiter(',');
  bench->add_option("--runs", o.runs, "Runs per function (default 50)");
  bench->add_option("--jobs", o.jobs, "Worker threads (default 1)");
  add_common(bench, o);

  CLI::App* selftest = app.add_subcommand("selftest", "Gradient and transform invariant checks");
  selftest->add_option("--seed", o.seed, "RNG seed for the randomized suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "labcat: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (run->parsed()) return cmd_run(o);
    if (bench->parsed()) return cmd_bench(o);
    return cmd_selftest(o);
  } catch (const UsageError& e) {
    CLI::App* sub = run->parsed() ? run : bench->parsed() ? bench : selftest;
    std::cerr << "labcat: " << e.what() << "\n\n" << sub->help();
    return kExitUsage;
  } catch (const labcat::InvalidConfig& e) {
    std::cerr << "labcat: invalid configuration: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "labcat: " << e.what() << '\n';
    return kExitRuntime;
  }
}
