#include "scal/trainer/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace scal::trainer {

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Improving: return "improving";
    case Verdict::Converged: return "converged";
    case Verdict::Diverging: return "diverging";
  }
  return "unknown";
}

double CycleRecord::mean_reward() const {
  if (receiver_rewards.empty()) return encoder_reward;
  return std::accumulate(receiver_rewards.begin(), receiver_rewards.end(), 0.0) /
         static_cast<double>(receiver_rewards.size());
}

ConvergenceMonitor::ConvergenceMonitor(MonitorSettings settings) : settings_(settings) {
  if (settings_.window < 10) throw std::invalid_argument("convergence monitor: window must be >= 10 cycles");
}

void ConvergenceMonitor::record(CycleRecord rec) { records_.push_back(std::move(rec)); }

std::vector<double> ConvergenceMonitor::mean_rewards() const {
  std::vector<double> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.mean_reward());
  return out;
}

std::vector<double> ConvergenceMonitor::encoder_rewards() const {
  std::vector<double> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.encoder_reward);
  return out;
}

Verdict ConvergenceMonitor::verdict() const {
  if (!ready()) {
    throw std::logic_error("convergence monitor: " + std::to_string(records_.size()) + " cycles recorded, need " +
                           std::to_string(settings_.window));
  }
  return classify(mean_rewards(), settings_);
}

double least_squares_slope(const std::vector<double>& y) {
  const std::size_t n = y.size();
  if (n < 2) return 0.0;
  const double xbar = static_cast<double>(n - 1) / 2.0;
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) - xbar;
    num += dx * (y[i] - ybar);
    den += dx * dx;
  }
  return num / den;
}

std::vector<double> moving_average(const std::vector<double>& y, std::size_t w) {
  if (w == 0) throw std::invalid_argument("moving_average: window must be > 0");
  std::vector<double> out;
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    acc += y[i];
    if (i >= w) acc -= y[i - w];
    if (i + 1 >= w) out.push_back(acc / static_cast<double>(w));
  }
  return out;
}

Verdict classify(const std::vector<double>& series, const MonitorSettings& s) {
  if (series.size() < s.window) throw std::logic_error("classify: series shorter than window");
  const double running_max = *std::max_element(series.begin(), series.end());
  const std::vector<double> tail(series.end() - static_cast<std::ptrdiff_t>(s.window), series.end());
  const double mean = std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(tail.size());
  double var = 0.0;
  for (double v : tail) var += (v - mean) * (v - mean);
  var /= static_cast<double>(tail.size());
  const double slope = least_squares_slope(tail);

  if (series.back() < s.divergence_fraction * running_max || slope < -s.slope_tolerance) {
    return Verdict::Diverging;
  }
  if (std::abs(slope) < s.slope_tolerance && var < s.variance_tolerance) return Verdict::Converged;
  return Verdict::Improving;
}

DivergenceGuard::DivergenceGuard(double fraction, std::size_t cycles)
    : fraction_(fraction), cycles_(cycles), running_max_(-std::numeric_limits<double>::infinity()) {
  if (fraction < 0.0 || fraction > 1.0) throw std::invalid_argument("divergence guard: fraction must be in [0, 1]");
  if (cycles == 0) throw std::invalid_argument("divergence guard: cycles must be > 0");
}

bool DivergenceGuard::update(double reward) {
  running_max_ = std::max(running_max_, reward);
  below_ = reward < fraction_ * running_max_ ? below_ + 1 : 0;
  return tripped();
}

}  // namespace scal::trainer
