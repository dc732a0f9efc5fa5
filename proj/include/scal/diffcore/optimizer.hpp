#pragma once

#include <cstdint>

#include "scal/diffcore/tape.hpp"

namespace scal::diff {

enum class Direction { Ascent, Descent };
enum class OptimizerKind { Sgd, Adam };

/// Plain SGD is the reference update (p += lr * g for ascent). Adam is
/// opt-in and keeps per-parameter first/second moments.
struct OptimizerState {
  explicit OptimizerState(double learning_rate, OptimizerKind kind = OptimizerKind::Sgd);

  double lr;
  OptimizerKind kind;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  GradientMap first_moment;
  GradientMap second_moment;
};

/// Updates every parameter of `params` from `grads`. Throws if a
/// parameter has no gradient entry or shapes disagree.
void optimizer_step(OptimizerState& state, ParameterSet& params, const GradientMap& grads,
                    Direction direction);

}  // namespace scal::diff
