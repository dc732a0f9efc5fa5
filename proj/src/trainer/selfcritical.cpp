#include "scal/trainer/selfcritical.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "scal/codec/model.hpp"

namespace scal::trainer {

double AdvantageRecord::advantage_sum() const {
  double s = 0.0;
  for (double a : advantages) s += a;
  return s;
}

bool AdvantageRecord::all_zero() const {
  for (double a : advantages) {
    if (a != 0.0) return false;
  }
  return true;
}

AdvantageRecord leave_one_out(std::span<const double> rewards) {
  const std::size_t k = rewards.size();
  if (k < 2) throw std::invalid_argument("leave_one_out: need K >= 2 rewards, got " + std::to_string(k));
  AdvantageRecord rec;
  rec.rewards.assign(rewards.begin(), rewards.end());
  rec.advantages.resize(k);
  bool all_equal = true;
  double total = 0.0;
  for (double r : rewards) {
    total += r;
    all_equal = all_equal && r == rewards[0];
  }
  for (std::size_t i = 0; i < k; ++i) {
    // exact zeros when every peer agrees
    rec.advantages[i] = all_equal ? 0.0 : rewards[i] - (total - rewards[i]) / static_cast<double>(k - 1);
  }
  return rec;
}

GradientMap selfcritical_policy_gradient(const AdvantageRecord& record, const LogProbBuilder& log_prob) {
  if (record.all_zero()) return {};
  const double k = static_cast<double>(record.advantages.size());
  Tape tape;
  std::optional<Var> surrogate;
  for (std::size_t i = 0; i < record.advantages.size(); ++i) {
    const double a = record.advantages[i];
    if (a == 0.0) continue;
    const Var term = tape.scale(log_prob(tape, i), a / k);
    surrogate = surrogate ? tape.add(*surrogate, term) : term;
  }
  return tape.backward(*surrogate);
}

GradientMap selfcritical_encoder_gradient(Tape& tape, Var mean, std::span<const Tensor> samples,
                                          std::span<const AdvantageRecord> records, double sigma) {
  if (records.empty()) throw std::invalid_argument("selfcritical_encoder_gradient: no receivers");
  if (!(sigma > 0.0)) throw std::invalid_argument("selfcritical_encoder_gradient: sigma must be > 0");
  const double n = static_cast<double>(records.size());
  const double k = static_cast<double>(samples.size());
  // fold every (n, i) weight into one residual per sample before touching the tape
  Tensor cotangent_weights(1, samples.size());
  for (const auto& rec : records) {
    if (rec.advantages.size() != samples.size()) {
      throw std::invalid_argument("selfcritical_encoder_gradient: " + std::to_string(rec.advantages.size()) +
                                  " advantages for " + std::to_string(samples.size()) + " samples");
    }
    for (std::size_t i = 0; i < samples.size(); ++i) cotangent_weights[i] += rec.advantages[i] / (n * k);
  }
  std::optional<Var> surrogate;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (cotangent_weights[i] == 0.0) continue;
    const Var term = codec::gaussian_score_surrogate(tape, mean, samples[i], sigma, cotangent_weights[i]);
    surrogate = surrogate ? tape.add(*surrogate, term) : term;
  }
  if (!surrogate) surrogate = tape.scale(tape.sum(mean), 0.0);
  return tape.backward(*surrogate);
}

}  // namespace scal::trainer
