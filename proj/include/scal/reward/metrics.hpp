#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace scal::reward {

using Tokens = std::span<const int>;

/// Clipped n-gram precision: matches clipped by reference multiplicity
/// over candidate n-gram count. 0 when the candidate has no n-grams.
double bleu_ngram_precision(Tokens candidate, Tokens reference, int n);

/// 1 if candidate_len >= reference_len, exp(1 - r/c) otherwise, 0 for an
/// empty candidate.
double brevity_penalty(std::size_t candidate_len, std::size_t reference_len);

/// Equal-weight (0.25) geometric mean of BLEU-1..4 times the brevity
/// penalty. A zero precision p_n is floored at 1/(2 * candidate n-gram
/// count); with no candidate n-grams of order n the floor is 1/2.
double combined_bleu(Tokens candidate, Tokens reference);

/// Cumulative BLEU-n as reported in evaluation tables: BP times the
/// geometric mean of unsmoothed p_1..p_n.
double bleu_n(Tokens candidate, Tokens reference, int n);

/// Position-wise matches over the reference length.
double war(Tokens candidate, Tokens reference);

/// Pluggable sentence similarity Theta(candidate, reference) in [0, 1].
using SimilarityMetric = std::function<double(Tokens candidate, Tokens reference)>;

/// Name-indexed metric registry. "bleu" and "war" are built in.
class MetricRegistry {
 public:
  MetricRegistry();
  void add(const std::string& name, SimilarityMetric metric);
  const SimilarityMetric& get(const std::string& name) const;
  bool contains(const std::string& name) const { return metrics_.contains(name); }

 private:
  std::map<std::string, SimilarityMetric> metrics_;
};

const MetricRegistry& default_registry();

/// Per-step rewards of one decoded sentence: zero everywhere except the
/// terminal step, which carries Theta.
struct RewardRecord {
  std::vector<double> rewards;
  double gamma = 1.0;
};

/// `decoded_steps` is the number of decoding actions (including EOS).
RewardRecord sparse_rewards(double theta, std::size_t decoded_steps, double gamma = 1.0);

/// G(t) = sum_{k>t} gamma^(k-t-1) r(k), with steps indexed 1..T and
/// 0 <= t < T.
double return_of(const RewardRecord& record, std::size_t t);

}  // namespace scal::reward
