#include "scal/diffcore/fdcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace scal::diff {

FdReport finite_difference_check(const LossClosure& closure, ParameterSet params, double eps,
                                 std::size_t max_coordinates, std::uint64_t seed) {
  if (eps < 1e-7 || eps > 1e-3) throw std::invalid_argument("finite_difference_check: eps outside [1e-7, 1e-3]");

  GradientMap analytic;
  const double base = closure(params, &analytic);
  const double again = closure(params, nullptr);
  if (base != again) {
    throw OracleFailure("finite_difference_check: closure is not deterministic (" +
                        std::to_string(base) + " vs " + std::to_string(again) + ")");
  }

  struct Coord {
    std::string name;
    std::size_t index;
  };
  std::vector<Coord> coords;
  for (const auto& [name, t] : params) {
    for (std::size_t i = 0; i < t.size(); ++i) coords.push_back({name, i});
  }
  if (coords.size() > max_coordinates) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coordinates);
  }

  FdReport report;
  for (const Coord& c : coords) {
    Tensor& p = params.get(c.name);
    const double orig = p[c.index];
    p[c.index] = orig + eps;
    const double plus = closure(params, nullptr);
    p[c.index] = orig - eps;
    const double minus = closure(params, nullptr);
    p[c.index] = orig;

    const double numeric = (plus - minus) / (2.0 * eps);
    auto it = analytic.find(c.name);
    const double a = it == analytic.end() ? 0.0 : it->second[c.index];
    const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
    ++report.coordinates_checked;
    if (rel > report.max_relative_error || report.worst_coordinate.empty()) {
      report.max_relative_error = std::max(report.max_relative_error, rel);
      report.worst_coordinate = c.name + "[" + std::to_string(c.index) + "]";
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace scal::diff
