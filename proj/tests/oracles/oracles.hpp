#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace scal::oracles {

struct OracleResult {
  int criterion = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// ---------------------------------------------------------------------------
// Micro-MDP: V = 3, two decoding steps, tabular softmax policy with logits
// t1 (first step) and t2[a1] (second step, conditioned on the first action).
// 12 logits in total; coordinate order is t1[0..2] then t2 row-major.

inline constexpr int kMdpActions = 3;
inline constexpr int kMdpCoords = 12;
using MdpVector = std::array<double, kMdpCoords>;

struct MicroMdp {
  std::array<double, 3> t1{};
  std::array<std::array<double, 3>, 3> t2{};
  std::array<std::array<double, 3>, 3> reward{};  // reward[a1][a2]
};

MicroMdp default_mdp();

/// grad E[reward] by enumerating all 9 trajectories with closed-form
/// softmax score functions.
MdpVector exact_policy_gradient(const MicroMdp& mdp);

struct EstimatorStats {
  MdpVector mean{};
  MdpVector variance{};  // per-coordinate sample variance of one estimate
  MdpVector standard_error{};
  std::size_t draws = 0;
};

enum class EstimatorTerm {
  /// (1/K) sum_i A_i grad log pi_i with leave-one-out advantages.
  Full,
  /// (1/K) sum_i b_i grad log pi_i with b_i the mean of the peers' rewards.
  BaselineOnly,
};

/// Statistics of `draws` independent estimates, each from K sampled
/// trajectories, computed through the trainer's self-critical gradient.
EstimatorStats micro_mdp_estimator(const MicroMdp& mdp, std::size_t k, std::size_t draws, std::uint64_t seed,
                                   EstimatorTerm term = EstimatorTerm::Full);

// ---------------------------------------------------------------------------
// Acceptance oracles. Each is deterministic under its pinned seed.

OracleResult gradient_correctness();   // 1
OracleResult theorem1_estimator();     // 2
OracleResult theorem2_estimator();     // 3
OracleResult advantage_identity();     // 4
OracleResult variance_vs_k();          // 5
OracleResult channel_statistics();     // 6
OracleResult bleu_oracle();            // 7

std::vector<OracleResult> run_all();

/// "PASS [n] name: detail (t s)" / "FAIL ...".
std::string format(const OracleResult& r);

}  // namespace scal::oracles
