#pragma once

#include <cmath>
#include <initializer_list>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "labcat/errors.hpp"

namespace labcat {

/// Axis-aligned box constraint on the objective domain.
class Bounds {
 public:
  Bounds() = default;

  Bounds(Eigen::VectorXd lower, Eigen::VectorXd upper)
      : lower_(std::move(lower)), upper_(std::move(upper)) {
    validate();
  }

  explicit Bounds(const std::vector<std::pair<double, double>>& pairs)
      : lower_(static_cast<Eigen::Index>(pairs.size())),
        upper_(static_cast<Eigen::Index>(pairs.size())) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      lower_(static_cast<Eigen::Index>(i)) = pairs[i].first;
      upper_(static_cast<Eigen::Index>(i)) = pairs[i].second;
    }
    validate();
  }

  Bounds(std::initializer_list<std::pair<double, double>> pairs)
      : Bounds(std::vector<std::pair<double, double>>(pairs)) {}

  static Bounds uniform(int dim, double lo, double hi) {
    return {Eigen::VectorXd::Constant(dim, lo), Eigen::VectorXd::Constant(dim, hi)};
  }

  [[nodiscard]] int dim() const { return static_cast<int>(lower_.size()); }
  [[nodiscard]] const Eigen::VectorXd& lower() const { return lower_; }
  [[nodiscard]] const Eigen::VectorXd& upper() const { return upper_; }
  [[nodiscard]] Eigen::VectorXd midpoint() const { return 0.5 * (lower_ + upper_); }
  [[nodiscard]] Eigen::VectorXd half_widths() const { return 0.5 * (upper_ - lower_); }

  /// Inclusive containment test with zero tolerance.
  [[nodiscard]] bool contains(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != lower_.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (!(x(i) >= lower_(i) && x(i) <= upper_(i))) return false;
    }
    return true;
  }

  [[nodiscard]] Eigen::VectorXd clamp(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return x.cwiseMax(lower_).cwiseMin(upper_);
  }

 private:
  void validate() const {
    if (lower_.size() == 0 || lower_.size() != upper_.size()) {
      throw InvalidBounds("bounds must be non-empty with matching lower/upper dimension");
    }
    for (Eigen::Index i = 0; i < lower_.size(); ++i) {
      if (!std::isfinite(lower_(i)) || !std::isfinite(upper_(i)) || !(lower_(i) < upper_(i))) {
        throw InvalidBounds("bounds must be finite with lower < upper in every dimension");
      }
    }
  }

  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
};

}  // namespace labcat
