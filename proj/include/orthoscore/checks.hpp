#pragma once

#include "orthoscore/ortho.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace orthoscore::checks {

enum class Target { late, plr, qte };

std::string_view target_label(Target t);
Target parse_target(std::string_view label);

struct CheckCase {
  std::string score;
  std::string nuisance;
  std::string direction;
  bool orthogonal = true;  // false for the control case
  OrthogonalityCheck result;

  double ratio() const { return result.std_error > 0.0 ? std::abs(result.derivative) / result.std_error : 0.0; }
};

struct CheckReport {
  Target target = Target::late;
  std::vector<CheckCase> cases;

  /// Orthogonal cases within `multiple` SE and every control outside it.
  bool passed(double multiple = 3.0) const;
  /// Smallest |derivative| / SE over the control cases.
  double weakest_control() const;
};

/// Finite-difference Gateaux derivatives of each score at the target's
/// synthetic truth, for every nuisance and the directions 1, x₁ and
/// tanh(x₁ + x₁x₂).
CheckReport run_suite(Target target, const OrthogonalityOptions& options);

}  // namespace orthoscore::checks
