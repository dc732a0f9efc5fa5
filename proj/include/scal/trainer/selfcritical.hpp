#pragma once

#include <functional>
#include <span>
#include <vector>

#include "scal/diffcore/tape.hpp"

namespace scal::trainer {

using diff::GradientMap;
using diff::Tape;
using diff::Tensor;
using diff::Var;

/// Rewards of K parallel samples and their leave-one-out advantages
/// A_i = r_i - mean_{k != i} r_k.
struct AdvantageRecord {
  std::vector<double> rewards;
  std::vector<double> advantages;

  double advantage_sum() const;
  bool all_zero() const;
};

/// Rejects fewer than two rewards.
AdvantageRecord leave_one_out(std::span<const double> rewards);

/// Builds log pi(trajectory i) on the given tape.
using LogProbBuilder = std::function<Var(Tape& tape, std::size_t sample)>;

/// Self-critical decoder gradient for one source:
///   (1/K) sum_i A_i * grad log pi(trajectory_i).
/// Samples with zero advantage are not built. Returns an empty map when
/// every advantage is zero.
GradientMap selfcritical_policy_gradient(const AdvantageRecord& record, const LogProbBuilder& log_prob);

/// Self-critical encoder gradient for one source:
///   (1/N)(1/K) sum_n sum_i (x_i - mu)^T Sigma^{-1} (d mu / d theta) A_{n,i}
/// `records[n]` holds receiver n's rewards over the K samples. Runs
/// backward on `tape`, which must hold `mean`.
GradientMap selfcritical_encoder_gradient(Tape& tape, Var mean, std::span<const Tensor> samples,
                                          std::span<const AdvantageRecord> records, double sigma);

}  // namespace scal::trainer
