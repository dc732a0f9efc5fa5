#include "scal/diffcore/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace scal::diff {

OptimizerState::OptimizerState(double learning_rate, OptimizerKind k) : lr(learning_rate), kind(k) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("optimizer: learning rate must be > 0");
}

void optimizer_step(OptimizerState& state, ParameterSet& params, const GradientMap& grads,
                    Direction direction) {
  if (params.frozen()) throw std::logic_error("optimizer_step: parameter set is frozen");
  for (const auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw std::invalid_argument("optimizer_step: missing gradient for '" + name + "'");
    if (!it->second.same_shape(p)) {
      throw ShapeError("optimizer_step '" + name + "': param " + shape_string(p) + ", grad " +
                       shape_string(it->second));
    }
  }
  ++state.step;
  const double sign = direction == Direction::Ascent ? 1.0 : -1.0;
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    if (state.kind == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] += sign * state.lr * g[i];
      continue;
    }
    auto [m_it, _m] = state.first_moment.try_emplace(name, p.rows(), p.cols());
    auto [v_it, _v] = state.second_moment.try_emplace(name, p.rows(), p.cols());
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      p[i] += sign * state.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.epsilon);
    }
  }
}

}  // namespace scal::diff
