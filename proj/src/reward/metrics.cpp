#include "scal/reward/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace scal::reward {

namespace {

std::map<std::vector<int>, int> ngram_counts(Tokens tokens, int n) {
  std::map<std::vector<int>, int> counts;
  const auto len = static_cast<int>(tokens.size());
  for (int i = 0; i + n <= len; ++i) {
    ++counts[std::vector<int>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

struct NgramStats {
  int matched = 0;
  int total = 0;
};

NgramStats clipped_matches(Tokens candidate, Tokens reference, int n) {
  if (n < 1 || n > 4) throw std::invalid_argument("n-gram order must be in [1, 4]");
  NgramStats s;
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  for (const auto& [gram, count] : cand) {
    s.total += count;
    auto it = ref.find(gram);
    if (it != ref.end()) s.matched += std::min(count, it->second);
  }
  return s;
}

}  // namespace

double bleu_ngram_precision(Tokens candidate, Tokens reference, int n) {
  const NgramStats s = clipped_matches(candidate, reference, n);
  return s.total == 0 ? 0.0 : static_cast<double>(s.matched) / s.total;
}

double brevity_penalty(std::size_t candidate_len, std::size_t reference_len) {
  if (candidate_len == 0) return 0.0;
  if (candidate_len >= reference_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(reference_len) / static_cast<double>(candidate_len));
}

double combined_bleu(Tokens candidate, Tokens reference) {
  const double bp = brevity_penalty(candidate.size(), reference.size());
  if (bp == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    const NgramStats s = clipped_matches(candidate, reference, n);
    double p = s.total == 0 ? 0.0 : static_cast<double>(s.matched) / s.total;
    if (p == 0.0) p = 1.0 / (2.0 * std::max(s.total, 1));
    log_sum += 0.25 * std::log(p);
  }
  return bp * std::exp(log_sum);
}

double bleu_n(Tokens candidate, Tokens reference, int n) {
  if (n < 1 || n > 4) throw std::invalid_argument("bleu_n: order must be in [1, 4]");
  const double bp = brevity_penalty(candidate.size(), reference.size());
  double log_sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    const double p = bleu_ngram_precision(candidate, reference, k);
    if (p == 0.0) return 0.0;
    log_sum += std::log(p) / n;
  }
  return bp * std::exp(log_sum);
}

double war(Tokens candidate, Tokens reference) {
  if (reference.empty()) return candidate.empty() ? 1.0 : 0.0;
  const std::size_t n = std::min(candidate.size(), reference.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += candidate[i] == reference[i];
  return static_cast<double>(hits) / static_cast<double>(reference.size());
}

MetricRegistry::MetricRegistry() {
  metrics_.emplace("bleu", [](Tokens c, Tokens r) { return combined_bleu(c, r); });
  metrics_.emplace("war", [](Tokens c, Tokens r) { return war(c, r); });
}

void MetricRegistry::add(const std::string& name, SimilarityMetric metric) {
  metrics_[name] = std::move(metric);
}

const SimilarityMetric& MetricRegistry::get(const std::string& name) const {
  auto it = metrics_.find(name);
  if (it == metrics_.end()) throw std::invalid_argument("unknown similarity metric '" + name + "'");
  return it->second;
}

const MetricRegistry& default_registry() {
  static const MetricRegistry registry;
  return registry;
}

RewardRecord sparse_rewards(double theta, std::size_t decoded_steps, double gamma) {
  if (decoded_steps == 0) throw std::invalid_argument("sparse_rewards: no decoding steps");
  RewardRecord rec;
  rec.rewards.assign(decoded_steps, 0.0);
  rec.rewards.back() = theta;
  rec.gamma = gamma;
  return rec;
}

double return_of(const RewardRecord& record, std::size_t t) {
  const std::size_t T = record.rewards.size();
  if (t >= T) throw std::out_of_range("return_of: t=" + std::to_string(t) + " with T=" + std::to_string(T));
  double g = 0.0;
  double discount = 1.0;
  for (std::size_t k = t + 1; k <= T; ++k) {
    g += discount * record.rewards[k - 1];
    discount *= record.gamma;
  }
  return g;
}

}  // namespace scal::reward
