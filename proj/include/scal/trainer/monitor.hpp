#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace scal::trainer {

enum class Verdict { Improving, Converged, Diverging };

std::string to_string(Verdict v);

struct MonitorSettings {
  std::size_t window = 10;
  double slope_tolerance = 1e-3;     // |least-squares slope| per cycle
  double variance_tolerance = 1e-3;  // window variance
  double divergence_fraction = 0.5;  // of the running max
};

/// One update cycle: mean decoder-phase reward per receiver and the mean
/// reward seen by the encoder step.
struct CycleRecord {
  std::size_t cycle = 0;
  std::vector<double> receiver_rewards;
  double encoder_reward = 0.0;

  double mean_reward() const;
};

class ConvergenceMonitor {
 public:
  explicit ConvergenceMonitor(MonitorSettings settings = {});

  void record(CycleRecord rec);
  const std::vector<CycleRecord>& records() const { return records_; }
  const MonitorSettings& settings() const { return settings_; }
  bool ready() const { return records_.size() >= settings_.window; }

  /// Throws std::logic_error before `window` cycles are recorded.
  Verdict verdict() const;

  /// Series of CycleRecord::mean_reward().
  std::vector<double> mean_rewards() const;
  std::vector<double> encoder_rewards() const;

 private:
  MonitorSettings settings_;
  std::vector<CycleRecord> records_;
};

/// Trips after the reward stays below `fraction` of its running max for
/// `cycles` consecutive updates.
class DivergenceGuard {
 public:
  DivergenceGuard(double fraction, std::size_t cycles);
  /// Records one cycle reward; returns true once the guard has tripped.
  bool update(double reward);
  bool tripped() const { return below_ >= cycles_; }
  double running_max() const { return running_max_; }
  std::size_t consecutive_below() const { return below_; }

 private:
  double fraction_;
  std::size_t cycles_;
  double running_max_;
  std::size_t below_ = 0;
};

/// Verdict over an arbitrary series (the monitor applies it to the
/// per-cycle mean reward).
Verdict classify(const std::vector<double>& series, const MonitorSettings& settings);

/// Ordinary least-squares slope of y against 0, 1, 2, ...
double least_squares_slope(const std::vector<double>& y);

/// Trailing moving average; element i averages y[i-w+1..i] (i >= w-1).
std::vector<double> moving_average(const std::vector<double>& y, std::size_t w);

}  // namespace scal::trainer
