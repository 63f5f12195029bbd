#pragma once

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "labcat/acquisition.hpp"
#include "labcat/bounds.hpp"
#include "labcat/doe.hpp"
#include "labcat/errors.hpp"
#include "labcat/gp.hpp"
#include "labcat/transform.hpp"

namespace labcat {

struct Ablation {
  bool rotation_enabled = true;
  bool uniform_lengthscale_prior = false;

  friend bool operator==(const Ablation&, const Ablation&) = default;
};

struct LabcatConfig {
  double beta = 0.5;
  int rho = 7;
  double sigma_prior = 0.1;
  int hyper_steps = 1;
  int doe_size = 5;
  int max_evals = 400;
  std::optional<double> target_value;
  double range_tolerance = 1e-12;
  std::uint64_t seed = 0;
  /// Restart with the remaining budget after a range collapse or Cholesky failure.
  bool restarts = true;
  Ablation ablation;

  /// Library defaults for a d-dimensional problem.
  static LabcatConfig defaults(int dim) {
    LabcatConfig c;
    c.beta = default_beta(dim);
    c.doe_size = 2 * dim + 1;
    c.max_evals = 200 * dim;
    return c;
  }

  /// Prior width actually used; infinite under the uniform-prior ablation.
  [[nodiscard]] double effective_sigma_prior() const {
    return ablation.uniform_lengthscale_prior ? std::numeric_limits<double>::infinity()
                                              : sigma_prior;
  }

  void validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidConfig("beta must be positive");
    if (rho < 1) throw InvalidConfig("rho must be a positive integer");
    if (!(sigma_prior > 0.0)) throw InvalidConfig("sigma_prior must be positive");
    if (hyper_steps < 1) throw InvalidConfig("hyper_steps must be a positive integer");
    if (doe_size < 2) throw InvalidConfig("doe_size must be at least 2");
    if (max_evals < 1) throw InvalidConfig("max_evals must be positive");
    if (!(range_tolerance >= 0.0)) throw InvalidConfig("range_tolerance must be non-negative");
  }

  friend bool operator==(const LabcatConfig&, const LabcatConfig&) = default;
};

enum class Termination { TargetReached, RangeCollapsed, BudgetExhausted };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::TargetReached: return "target_reached";
    case Termination::RangeCollapsed: return "range_collapsed";
    case Termination::BudgetExhausted: return "budget_exhausted";
  }
  return "unknown";
}

struct RunRecord {
  std::int64_t eval_index = 0;
  Eigen::VectorXd x;
  double y = 0.0;
  double best_y = 0.0;
  std::int64_t wall_ns = 0;
};

/// Everything except wall time, compared bitwise.
inline bool same_evaluations(const std::vector<RunRecord>& a, const std::vector<RunRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].eval_index != b[i].eval_index || a[i].x.size() != b[i].x.size()) return false;
    for (Eigen::Index k = 0; k < a[i].x.size(); ++k) {
      if (std::bit_cast<std::uint64_t>(a[i].x(k)) != std::bit_cast<std::uint64_t>(b[i].x(k))) {
        return false;
      }
    }
    if (std::bit_cast<std::uint64_t>(a[i].y) != std::bit_cast<std::uint64_t>(b[i].y) ||
        std::bit_cast<std::uint64_t>(a[i].best_y) != std::bit_cast<std::uint64_t>(b[i].best_y)) {
      return false;
    }
  }
  return true;
}

struct OptResult {
  Eigen::VectorXd best_x;
  double best_y = std::numeric_limits<double>::infinity();
  std::int64_t n_evals = 0;
  int n_restarts = 0;
  std::vector<RunRecord> trace;
  Termination termination = Termination::BudgetExhausted;
};

/// The objective returned NaN or an infinity. Carries the trace up to (excluding) the
/// offending evaluation.
class ObjectiveNonFinite : public Error {
 public:
  ObjectiveNonFinite(const std::string& what, std::vector<RunRecord> partial)
      : Error(what), partial_trace_(std::move(partial)) {}
  explicit ObjectiveNonFinite(const std::string& what) : Error(what) {}

  [[nodiscard]] const std::vector<RunRecord>& partial_trace() const { return partial_trace_; }

 private:
  std::vector<RunRecord> partial_trace_;
};

struct TerminationState {
  double best_y = std::numeric_limits<double>::infinity();
  std::int64_t n_evals = 0;
  /// Output transform (a, b); absent before the transform has been initialized.
  std::optional<double> out_scale;
  double out_offset = 0.0;
};

/// Target is inclusive; the range test is relative: a < tol * max(1, |b|).
inline std::optional<Termination> check_termination(const TerminationState& s,
                                                    const LabcatConfig& config) {
  if (config.target_value && s.best_y <= *config.target_value) return Termination::TargetReached;
  if (s.out_scale &&
      *s.out_scale < config.range_tolerance * std::max(1.0, std::abs(s.out_offset))) {
    return Termination::RangeCollapsed;
  }
  if (s.n_evals >= config.max_evals) return Termination::BudgetExhausted;
  return std::nullopt;
}

/// Stateful ask/tell driver. `ask` yields the Latin hypercube design first, then one
/// trust-region proposal per call; every `tell` must echo the preceding `ask`. The next
/// point is prepared eagerly at the end of `tell`, so `finished()` is always current.
class AskTellSession {
 public:
  AskTellSession(Bounds bounds, LabcatConfig config)
      : bounds_(std::move(bounds)), config_(std::move(config)), rng_(config_.seed) {
    config_.validate();
    mark_ = std::chrono::steady_clock::now();
    start_design();
    prepare_next();
  }

  /// Next point to evaluate, in objective space.
  Eigen::VectorXd ask() {
    if (finished()) throw ProtocolViolation("ask after the session finished");
    if (pending_) throw ProtocolViolation("ask while a previous point awaits tell");
    pending_ = true;
    return next_x_;
  }

  void tell(const Eigen::Ref<const Eigen::VectorXd>& x, double y) {
    if (!pending_) throw ProtocolViolation("tell without a pending ask");
    if (x.size() != next_x_.size() || x != next_x_) {
      throw ProtocolViolation("tell does not echo the most recent ask");
    }
    if (!std::isfinite(y)) {
      throw ObjectiveNonFinite("objective returned a non-finite value at evaluation " +
                                   std::to_string(trace_.size()),
                               trace_);
    }
    pending_ = false;

    const auto now = std::chrono::steady_clock::now();
    if (y < best_y_) {
      best_y_ = y;
      best_x_ = next_x_;
    }
    RunRecord rec;
    rec.eval_index = static_cast<std::int64_t>(trace_.size());
    rec.x = next_x_;
    rec.y = y;
    rec.best_y = best_y_;
    rec.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(now - mark_).count();
    trace_.push_back(std::move(rec));

    if (in_design_) {
      design_y_(design_next_) = y;
      ++design_next_;
    } else {
      obs_.append(*next_x_prime_, output_from_objective(state_, y), next_age_++);
    }

    TerminationState ts;
    ts.best_y = best_y_;
    ts.n_evals = static_cast<std::int64_t>(trace_.size());
    if (auto t = check_termination(ts, config_)) {
      termination_ = *t;
      return;
    }
    mark_ = now;
    prepare_next();
  }

  [[nodiscard]] bool finished() const { return termination_.has_value(); }
  [[nodiscard]] std::optional<Termination> termination() const { return termination_; }
  [[nodiscard]] bool awaiting_tell() const { return pending_; }

  [[nodiscard]] const Eigen::VectorXd& best_x() const {
    if (trace_.empty()) throw ProtocolViolation("no observations yet");
    return best_x_;
  }
  [[nodiscard]] double best_y() const {
    if (trace_.empty()) throw ProtocolViolation("no observations yet");
    return best_y_;
  }

  [[nodiscard]] const std::vector<RunRecord>& trace() const { return trace_; }
  [[nodiscard]] int n_restarts() const { return n_restarts_; }
  /// Completed trust-region iterations (proposals made), across restarts.
  [[nodiscard]] std::int64_t iterations() const { return iterations_; }
  [[nodiscard]] bool in_design() const { return in_design_; }
  [[nodiscard]] const Bounds& bounds() const { return bounds_; }
  [[nodiscard]] const LabcatConfig& config() const { return config_; }
  [[nodiscard]] const TransformState& transform() const { return state_; }
  [[nodiscard]] const ObservationSet& observations() const { return obs_; }
  /// Observation count right after the most recent discard step.
  [[nodiscard]] Eigen::Index stored_after_discard() const { return stored_after_discard_; }
  /// Most likely length-scales found in the most recent iteration.
  [[nodiscard]] const Eigen::VectorXd& last_lengthscales() const { return last_lengthscales_; }

  [[nodiscard]] OptResult result() const {
    OptResult r;
    r.best_x = best_x_;
    r.best_y = best_y_;
    r.n_evals = static_cast<std::int64_t>(trace_.size());
    r.n_restarts = n_restarts_;
    r.trace = trace_;
    r.termination = termination_.value_or(Termination::BudgetExhausted);
    return r;
  }

 private:
  void start_design() {
    design_ = latin_hypercube(bounds_, config_.doe_size, rng_);
    design_y_ = Eigen::VectorXd::Zero(config_.doe_size);
    design_next_ = 0;
    in_design_ = true;
    obs_ = ObservationSet{};
    state_ = TransformState::identity(bounds_.dim());
  }

  void prepare_next() {
    if (in_design_) {
      if (design_next_ < design_.cols()) {
        next_x_ = design_.col(design_next_);
        next_x_prime_.reset();
        return;
      }
      try {
        std::tie(obs_, state_) = init_from_bounds(design_, design_y_, bounds_);
      } catch (const DegenerateOutputs&) {
        termination_ = Termination::RangeCollapsed;
        return;
      }
      next_age_ = static_cast<std::uint64_t>(design_.cols());
      in_design_ = false;
    }
    iterate();
  }

  /// One pass of the main loop, up to and including the proposal.
  void iterate() {
    const int d = bounds_.dim();
    try {
      normalize_outputs(state_, obs_);
    } catch (const DegenerateOutputs&) {
      collapse();
      return;
    }
    TerminationState ts;
    ts.best_y = best_y_;
    ts.n_evals = static_cast<std::int64_t>(trace_.size());
    ts.out_scale = state_.out_scale;
    ts.out_offset = state_.out_offset;
    if (check_termination(ts, config_) == Termination::RangeCollapsed) {
      collapse();
      return;
    }

    recenter(state_, obs_);
    if (config_.ablation.rotation_enabled) rotate(state_, obs_);

    const double sigma_prior = config_.effective_sigma_prior();
    const Eigen::VectorXd unit = Eigen::VectorXd::Ones(d);
    try {
      const GpSurrogate gp = GpSurrogate::fit(obs_.inputs, obs_.outputs, unit);
      last_lengthscales_ = hyperparameter_step(gp, sigma_prior, config_.hyper_steps);
      rescale(state_, obs_, last_lengthscales_);
      const TrustRegion tr{config_.beta};
      discard(obs_, tr, config_.rho, d);
      stored_after_discard_ = obs_.size();
      const GpSurrogate local = GpSurrogate::fit(obs_.inputs, obs_.outputs, unit);
      Proposal p = propose(local, tr, state_, bounds_, rng_);
      next_x_ = std::move(p.x_objective);
      next_x_prime_ = std::move(p.x_prime);
      ++iterations_;
    } catch (const CholeskyFailure&) {
      collapse();
    }
  }

  /// Internal termination: restart from a fresh design, or stop when restarts are off.
  void collapse() {
    if (!config_.restarts) {
      termination_ = Termination::RangeCollapsed;
      return;
    }
    ++n_restarts_;
    start_design();
    prepare_next();
  }

  Bounds bounds_;
  LabcatConfig config_;
  std::mt19937_64 rng_;

  Eigen::MatrixXd design_;
  Eigen::VectorXd design_y_;
  Eigen::Index design_next_ = 0;
  bool in_design_ = true;

  ObservationSet obs_;
  TransformState state_;
  std::uint64_t next_age_ = 0;
  Eigen::Index stored_after_discard_ = 0;
  Eigen::VectorXd last_lengthscales_;

  bool pending_ = false;
  Eigen::VectorXd next_x_;
  std::optional<Eigen::VectorXd> next_x_prime_;
  std::chrono::steady_clock::time_point mark_;

  std::vector<RunRecord> trace_;
  Eigen::VectorXd best_x_;
  double best_y_ = std::numeric_limits<double>::infinity();
  int n_restarts_ = 0;
  std::int64_t iterations_ = 0;
  std::optional<Termination> termination_;
};

/// Minimizes `objective` over `bounds`. The callable takes a const Eigen::VectorXd& and
/// returns a double; it is invoked synchronously.
template <class Objective>
OptResult minimize(Objective&& objective, const Bounds& bounds, const LabcatConfig& config) {
  AskTellSession session(bounds, config);
  while (!session.finished()) {
    const Eigen::VectorXd x = session.ask();
    double y = 0.0;
    try {
      y = objective(static_cast<const Eigen::VectorXd&>(x));
    } catch (const ObjectiveNonFinite& e) {
      throw ObjectiveNonFinite(e.what(), session.trace());
    }
    session.tell(x, y);
  }
  return session.result();
}

}  // namespace labcat
