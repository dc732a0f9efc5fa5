#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>

#include "scal/diffcore/tape.hpp"

namespace scal::diff {

class OracleFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Evaluates the loss at `params`; when `grads` is non-null the closure
/// also fills the analytic gradient.
using LossClosure = std::function<double(const ParameterSet& params, GradientMap* grads)>;

struct FdReport {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::string worst_coordinate;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Central-difference check over up to `max_coordinates` coordinates drawn
/// uniformly (all of them when the model is smaller). Relative error per
/// coordinate is |a - n| / (|a| + |n| + 1e-12).
FdReport finite_difference_check(const LossClosure& closure, ParameterSet params, double eps,
                                 std::size_t max_coordinates = 200, std::uint64_t seed = 0);

}  // namespace scal::diff
