#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "scal/channel/channel.hpp"
#include "scal/codec/model.hpp"
#include "scal/diffcore/fdcheck.hpp"
#include "scal/reward/metrics.hpp"
#include "scal/trainer/selfcritical.hpp"

namespace scal::oracles {

using diff::GradientMap;
using diff::ParameterSet;
using diff::Tape;
using diff::Tensor;
using diff::Var;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Welford accumulator over fixed-size vectors.
template <std::size_t N>
struct Moments {
  std::size_t n = 0;
  std::array<double, N> mean{};
  std::array<double, N> m2{};

  void add(const std::array<double, N>& x) {
    ++n;
    for (std::size_t j = 0; j < N; ++j) {
      const double d = x[j] - mean[j];
      mean[j] += d / static_cast<double>(n);
      m2[j] += d * (x[j] - mean[j]);
    }
  }
  double variance(std::size_t j) const { return n > 1 ? m2[j] / static_cast<double>(n - 1) : 0.0; }
  double standard_error(std::size_t j) const { return std::sqrt(variance(j) / static_cast<double>(n)); }
};

std::array<double, 3> softmax3(const std::array<double, 3>& z) {
  const double m = std::max({z[0], z[1], z[2]});
  std::array<double, 3> p{};
  double s = 0.0;
  for (int a = 0; a < 3; ++a) s += p[a] = std::exp(z[a] - m);
  for (double& v : p) v /= s;
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Micro-MDP

MicroMdp default_mdp() {
  MicroMdp m;
  m.t1 = {0.3, -0.2, 0.1};
  m.t2 = {{{0.5, -0.4, 0.0}, {-0.1, 0.2, 0.6}, {0.0, 0.3, -0.5}}};
  m.reward = {{{1.0, 0.2, 0.5}, {0.0, 0.8, 0.3}, {0.6, 0.1, 0.9}}};
  return m;
}

MdpVector exact_policy_gradient(const MicroMdp& mdp) {
  // grad J = sum_tau p(tau) R(tau) grad log p(tau);
  // d log softmax(z)_a / d z_j = [a == j] - p_j.
  MdpVector g{};
  const auto p1 = softmax3(mdp.t1);
  for (int a1 = 0; a1 < 3; ++a1) {
    const auto p2 = softmax3(mdp.t2[a1]);
    for (int a2 = 0; a2 < 3; ++a2) {
      const double w = p1[a1] * p2[a2] * mdp.reward[a1][a2];
      for (int j = 0; j < 3; ++j) {
        g[j] += w * ((a1 == j ? 1.0 : 0.0) - p1[j]);
        g[3 + 3 * a1 + j] += w * ((a2 == j ? 1.0 : 0.0) - p2[j]);
      }
    }
  }
  return g;
}

EstimatorStats micro_mdp_estimator(const MicroMdp& mdp, std::size_t k, std::size_t draws, std::uint64_t seed,
                                   EstimatorTerm term) {
  ParameterSet params;
  params.add("t1", Tensor(1, 3, std::vector<double>(mdp.t1.begin(), mdp.t1.end())));
  std::vector<double> t2;
  for (const auto& row : mdp.t2) t2.insert(t2.end(), row.begin(), row.end());
  params.add("t2", Tensor(3, 3, t2));

  const auto p1 = softmax3(mdp.t1);
  std::array<std::array<double, 3>, 3> p2{};
  for (int a = 0; a < 3; ++a) p2[a] = softmax3(mdp.t2[a]);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto draw = [&](const std::array<double, 3>& p) {
    const double x = u(rng);
    return x < p[0] ? 0 : (x < p[0] + p[1] ? 1 : 2);
  };

  Moments<kMdpCoords> acc;
  std::vector<std::array<int, 2>> actions(k);
  std::vector<double> rewards(k);
  for (std::size_t d = 0; d < draws; ++d) {
    for (std::size_t i = 0; i < k; ++i) {
      const int a1 = draw(p1);
      const int a2 = draw(p2[a1]);
      actions[i] = {a1, a2};
      rewards[i] = mdp.reward[a1][a2];
    }
    trainer::AdvantageRecord rec = trainer::leave_one_out(rewards);
    if (term == EstimatorTerm::BaselineOnly) {
      for (std::size_t i = 0; i < k; ++i) rec.advantages[i] = rec.rewards[i] - rec.advantages[i];
    }
    const GradientMap g = trainer::selfcritical_policy_gradient(rec, [&](Tape& tape, std::size_t i) {
      const Var t1v = tape.parameter(params, "t1");
      const Var t2v = tape.parameter(params, "t2");
      const int a1[] = {actions[i][0]};
      const int a2[] = {actions[i][1]};
      const Var first = tape.pick(tape.log_softmax(t1v), a1);
      const Var second = tape.pick(tape.log_softmax(tape.slice(t2v, static_cast<std::size_t>(a1[0]), 1, 0, 3)), a2);
      return tape.add(first, second);
    });
    MdpVector x{};
    if (!g.empty()) {
      const Tensor& g1 = g.at("t1");
      const Tensor& g2 = g.at("t2");
      for (std::size_t j = 0; j < 3; ++j) x[j] = g1[j];
      for (std::size_t j = 0; j < 9; ++j) x[3 + j] = g2[j];
    }
    acc.add(x);
  }
  EstimatorStats s;
  s.draws = draws;
  for (std::size_t j = 0; j < kMdpCoords; ++j) {
    s.mean[j] = acc.mean[j];
    s.variance[j] = acc.variance(j);
    s.standard_error[j] = acc.standard_error(j);
  }
  return s;
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

OracleResult gradient_correctness() {
  const auto t0 = Clock::now();
  OracleResult r{1, "gradient correctness (finite differences)", true, {}, 0.0};
  constexpr double kTolerance = 1e-4;
  constexpr double kEps = 1e-5;
  constexpr std::size_t kCoordinates = 250;

  codec::ModelConfig cfg;
  cfg.vocab_size = 9;
  cfg.model_width = 8;
  cfg.code_dim = 6;
  cfg.bits = 5;
  cfg.dequant_width = 6;
  cfg.ffn_width = 12;
  cfg.max_len = 8;
  std::mt19937_64 rng(2024);
  const codec::Encoder enc0 = codec::Encoder::init(cfg, rng);
  const codec::Decoder dec0 = codec::Decoder::init(cfg, rng);
  const std::vector<int> sentence = {3, 7, 4, 8, 5};
  const std::size_t rows = sentence.size() + 1;

  std::normal_distribution<double> n01(0.0, 1.0);
  auto random_tensor = [&](std::size_t r_, std::size_t c_) {
    Tensor t(r_, c_);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = n01(rng);
    return t;
  };
  const Tensor w_code = random_tensor(rows, cfg.code_dim);
  const Tensor w_bits = random_tensor(rows, cfg.bits);
  const Tensor signal = random_tensor(rows, cfg.bits);
  const Tensor x_sample = random_tensor(rows, cfg.code_dim);
  constexpr double kSigma = 0.7;

  struct Case {
    std::string name;
    diff::LossClosure closure;
    ParameterSet params;
  };
  std::vector<Case> cases;

  cases.push_back({"encoder", [&](const ParameterSet& p, GradientMap* g) {
                     Tape tape(g != nullptr);
                     const codec::Encoder enc{cfg, p};
                     const Var loss = tape.sum(tape.mul(codec::encode(tape, enc, sentence), tape.constant(w_code)));
                     const double v = tape.value(loss).item();
                     if (g) *g = tape.backward(loss);
                     return v;
                   },
                   enc0.params});

  cases.push_back({"decoder", [&](const ParameterSet& p, GradientMap* g) {
                     Tape tape(g != nullptr);
                     const codec::Decoder dec{cfg, p};
                     const Var memory = codec::decoder_memory(tape, dec, tape.constant(signal), {1.0});
                     const Var loss = codec::cross_entropy(tape, dec, memory, sentence);
                     const double v = tape.value(loss).item();
                     if (g) *g = tape.backward(loss);
                     return v;
                   },
                   dec0.params});

  // Straight-through gradient against differences of the identity surrogate.
  cases.push_back({"quantizer surrogate", [&](const ParameterSet& p, GradientMap* g) {
                     const codec::Encoder enc{cfg, p};
                     double v = 0.0;
                     {
                       Tape tape(false);
                       const Var pre = codec::quantizer_preactivation(tape, enc, codec::encode(tape, enc, sentence));
                       v = tape.value(tape.sum(tape.mul(pre, tape.constant(w_bits)))).item();
                     }
                     if (g) {
                       Tape tape;
                       const Var bits = codec::quantize_straight_through(tape, enc, codec::encode(tape, enc, sentence));
                       *g = tape.backward(tape.sum(tape.mul(bits, tape.constant(w_bits))));
                     }
                     return v;
                   },
                   enc0.params});

  cases.push_back({"gaussian log-density", [&](const ParameterSet& p, GradientMap* g) {
                     Tape tape(g != nullptr);
                     const codec::Encoder enc{cfg, p};
                     const Var loss =
                         codec::gaussian_log_density(tape, codec::encode(tape, enc, sentence), x_sample, kSigma);
                     const double v = tape.value(loss).item();
                     if (g) *g = tape.backward(loss);
                     return v;
                   },
                   enc0.params});

  std::ostringstream detail;
  std::size_t seed = 11;
  for (auto& c : cases) {
    const diff::FdReport rep = diff::finite_difference_check(c.closure, c.params, kEps, kCoordinates, seed++);
    const bool ok = rep.max_relative_error < kTolerance && rep.coordinates_checked >= 200;
    r.passed = r.passed && ok;
    detail << c.name << " " << rep.coordinates_checked << " coords max rel err "
           << fmt("%.2e", rep.max_relative_error) << (ok ? "" : " at " + rep.worst_coordinate) << "; ";
  }
  r.detail = detail.str() + fmt("tolerance %.0e", kTolerance);
  r.seconds = seconds_since(t0);
  r.passed = r.passed && r.seconds < 60.0;
  return r;
}

// ---------------------------------------------------------------------------
// 2. Theorem-1 estimator (decoder)

OracleResult theorem1_estimator() {
  const auto t0 = Clock::now();
  OracleResult r{2, "decoder self-critical estimator vs enumerated gradient", true, {}, 0.0};
  constexpr std::size_t kDraws = 100000;
  constexpr std::size_t kK = 5;
  constexpr double kSe = 3.0;
  const MicroMdp mdp = default_mdp();
  const MdpVector exact = exact_policy_gradient(mdp);
  const EstimatorStats full = micro_mdp_estimator(mdp, kK, kDraws, 101, EstimatorTerm::Full);
  const EstimatorStats base = micro_mdp_estimator(mdp, kK, kDraws, 202, EstimatorTerm::BaselineOnly);
  double worst_full = 0.0;
  double worst_base = 0.0;
  for (std::size_t j = 0; j < kMdpCoords; ++j) {
    worst_full = std::max(worst_full, std::abs(full.mean[j] - exact[j]) / full.standard_error[j]);
    worst_base = std::max(worst_base, std::abs(base.mean[j]) / base.standard_error[j]);
  }
  r.passed = worst_full <= kSe && worst_base <= kSe;
  r.seconds = seconds_since(t0);
  r.detail = fmt("%zu draws K=%zu, max |mean-exact|/SE = %.2f, max |baseline term|/SE = %.2f (limit %.0f)", kDraws,
                 kK, worst_full, worst_base, kSe);
  r.passed = r.passed && r.seconds < 120.0;
  return r;
}

// ---------------------------------------------------------------------------
// 3. Theorem-2 estimator (encoder)

namespace {

// Two-parameter mean mu(theta) = theta A + c over 4 code entries. Bits are
// thresholded at zero; bit pairs index a lookup table of tokens.
struct EncoderToy {
  std::array<double, 2> theta{0.3, -0.2};
  std::array<std::array<double, 4>, 2> a{{{1.0, -0.5, 0.8, 0.3}, {0.4, 1.0, -0.6, 0.9}}};
  std::array<double, 4> c{0.1, -0.1, 0.05, 0.0};
  std::array<int, 4> lookup{3, 4, 5, 6};
  std::vector<int> reference{5, 4};
  double sigma = 0.5;

  std::array<double, 4> mean(const std::array<double, 2>& th) const {
    std::array<double, 4> mu{};
    for (int j = 0; j < 4; ++j) mu[j] = th[0] * a[0][j] + th[1] * a[1][j] + c[j];
    return mu;
  }

  double reward_of(const std::array<double, 4>& x) const {
    const int b0 = x[0] > 0.0;
    const int b1 = x[1] > 0.0;
    const int b2 = x[2] > 0.0;
    const int b3 = x[3] > 0.0;
    const std::vector<int> decoded = {lookup[2 * b0 + b1], lookup[2 * b2 + b3]};
    int hits = 0;
    for (std::size_t i = 0; i < 2; ++i) hits += decoded[i] == reference[i];
    return hits / 2.0;
  }
};

}  // namespace

OracleResult theorem2_estimator() {
  const auto t0 = Clock::now();
  OracleResult r{3, "encoder self-critical estimator vs CRN finite difference", true, {}, 0.0};
  constexpr std::size_t kDraws = 100000;
  constexpr std::size_t kK = 5;
  constexpr std::size_t kFdSamples = 100000;
  constexpr double kStep = 0.05;
  constexpr double kSe = 3.0;
  const EncoderToy toy;

  ParameterSet params;
  params.add("theta", Tensor(1, 2, {toy.theta[0], toy.theta[1]}));
  Tensor a_mat(2, 4);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 4; ++j) a_mat(i, j) = toy.a[i][j];
  }
  const Tensor c_row(1, 4, std::vector<double>(toy.c.begin(), toy.c.end()));

  // Estimator: module code for the Gaussian policy, advantages and gradient.
  std::mt19937_64 rng(303);
  Moments<2> est;
  for (std::size_t d = 0; d < kDraws; ++d) {
    Tape tape;
    const Var mean = tape.add(tape.matmul(tape.parameter(params, "theta"), tape.constant_ref(a_mat)),
                              tape.constant_ref(c_row));
    const auto policy = codec::sample_encoder_policy(tape.value(mean), toy.sigma, kK, rng);
    std::vector<Tensor> samples;
    std::vector<double> rewards;
    for (const auto& s : policy) {
      samples.push_back(s.sample);
      const Tensor bits = codec::threshold_bits(s.sample);
      std::array<double, 4> x{};
      for (std::size_t j = 0; j < 4; ++j) x[j] = bits[j] > 0.5 ? 1.0 : -1.0;
      rewards.push_back(toy.reward_of(x));
    }
    const trainer::AdvantageRecord rec = trainer::leave_one_out(rewards);
    const GradientMap g = trainer::selfcritical_encoder_gradient(tape, mean, samples, {&rec, 1}, toy.sigma);
    const Tensor& gt = g.at("theta");
    est.add({gt[0], gt[1]});
  }

  // Oracle: central difference of the sampled expectation with common noise.
  std::mt19937_64 noise_rng(404);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<std::array<double, 4>> eps(kFdSamples);
  for (auto& e : eps) {
    for (double& v : e) v = n01(noise_rng);
  }
  std::array<double, 2> fd{};
  std::array<double, 2> fd_se{};
  for (std::size_t coord = 0; coord < 2; ++coord) {
    auto plus = toy.theta;
    auto minus = toy.theta;
    plus[coord] += kStep;
    minus[coord] -= kStep;
    const auto mu_p = toy.mean(plus);
    const auto mu_m = toy.mean(minus);
    Moments<1> diff;
    for (const auto& e : eps) {
      std::array<double, 4> xp{};
      std::array<double, 4> xm{};
      for (int j = 0; j < 4; ++j) {
        xp[j] = mu_p[j] + toy.sigma * e[j];
        xm[j] = mu_m[j] + toy.sigma * e[j];
      }
      diff.add({(toy.reward_of(xp) - toy.reward_of(xm)) / (2.0 * kStep)});
    }
    fd[coord] = diff.mean[0];
    fd_se[coord] = diff.standard_error(0);
  }

  std::ostringstream detail;
  double worst = 0.0;
  for (std::size_t j = 0; j < 2; ++j) {
    const double pooled = std::sqrt(est.standard_error(j) * est.standard_error(j) + fd_se[j] * fd_se[j]);
    const double z = std::abs(est.mean[j] - fd[j]) / pooled;
    worst = std::max(worst, z);
    detail << fmt("theta%zu est %.4f fd %.4f pooled SE %.4f; ", j, est.mean[j], fd[j], pooled);
  }
  r.passed = worst <= kSe;
  r.seconds = seconds_since(t0);
  r.detail = detail.str() + fmt("max z %.2f (limit %.0f)", worst, kSe);
  r.passed = r.passed && r.seconds < 120.0;
  return r;
}

// ---------------------------------------------------------------------------
// 4. Advantage identity

OracleResult advantage_identity() {
  const auto t0 = Clock::now();
  OracleResult r{4, "leave-one-out advantages sum to zero", true, {}, 0.0};
  constexpr std::size_t kRecords = 10000;
  constexpr double kTolerance = 1e-9;
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<std::size_t> k_dist(2, 32);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> coarse(0, 4);
  double worst = 0.0;
  for (std::size_t n = 0; n < kRecords; ++n) {
    std::vector<double> rewards(k_dist(rng));
    // every third record uses tied rewards so the all-equal case is covered
    for (double& v : rewards) v = n % 3 == 0 ? coarse(rng) / 4.0 : unit(rng);
    worst = std::max(worst, std::abs(trainer::leave_one_out(rewards).advantage_sum()));
  }
  r.passed = worst <= kTolerance;
  r.seconds = seconds_since(t0);
  r.detail = fmt("%zu records, max |sum A| = %.2e (limit %.0e)", kRecords, worst, kTolerance);
  return r;
}

// ---------------------------------------------------------------------------
// 5. Variance vs K

OracleResult variance_vs_k() {
  const auto t0 = Clock::now();
  OracleResult r{5, "estimator variance K=10 vs K=2", true, {}, 0.0};
  constexpr std::size_t kDraws = 10000;
  constexpr double kRequiredReduction = 0.2;
  const MicroMdp mdp = default_mdp();
  const EstimatorStats k2 = micro_mdp_estimator(mdp, 2, kDraws, 505);
  const EstimatorStats k10 = micro_mdp_estimator(mdp, 10, kDraws, 606);
  double worst_ratio = 0.0;
  double sum2 = 0.0;
  double sum10 = 0.0;
  for (std::size_t j = 0; j < kMdpCoords; ++j) {
    worst_ratio = std::max(worst_ratio, k10.variance[j] / k2.variance[j]);
    sum2 += k2.variance[j];
    sum10 += k10.variance[j];
  }
  r.passed = worst_ratio <= 1.0 - kRequiredReduction;
  r.seconds = seconds_since(t0);
  r.detail = fmt("%zu estimates each, worst per-coordinate var(K=10)/var(K=2) = %.3f, mean ratio %.3f (limit %.2f)",
                 kDraws, worst_ratio, sum10 / sum2, 1.0 - kRequiredReduction);
  r.passed = r.passed && r.seconds < 120.0;
  return r;
}

// ---------------------------------------------------------------------------
// 6. Channel statistics

OracleResult channel_statistics() {
  const auto t0 = Clock::now();
  OracleResult r{6, "AWGN noise variance and Rayleigh power", true, {}, 0.0};
  constexpr std::size_t kSide = 1000;  // 10^6 symbols
  constexpr double kTolerance = 0.02;
  std::mt19937_64 bit_rng(606);
  Tensor bits(kSide, kSide);
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = static_cast<double>(bit_rng() & 1U);
  const Tensor symbols = channel::modulate(bits);
  std::ostringstream detail;
  std::uint64_t stream = 1;
  for (double snr : {0.0, 10.0, 20.0}) {
    channel::Rng rng = channel::make_stream(77, stream++);
    const Tensor y = channel::transmit_awgn(symbols, snr, rng);
    double ss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) ss += (y[i] - symbols[i]) * (y[i] - symbols[i]);
    const double empirical = ss / static_cast<double>(y.size());
    const double target = std::pow(10.0, -snr / 10.0);
    const double rel = std::abs(empirical - target) / target;
    r.passed = r.passed && rel <= kTolerance;
    detail << fmt("%g dB var %.5f vs %.5f (%.2f%%); ", snr, empirical, target, 100.0 * rel);
  }
  channel::Rng rng = channel::make_stream(77, stream);
  const channel::ReceivedFrame frame = channel::transmit_rayleigh(symbols, 20.0, rng, true);
  double power = 0.0;
  for (double h : frame.realization.gain) power += h * h;
  power /= static_cast<double>(frame.realization.gain.size());
  const double rel = std::abs(power - 1.0);
  r.passed = r.passed && rel <= kTolerance && frame.realization.gain.size() == symbols.size();
  detail << fmt("Rayleigh E|h|^2 %.5f over %zu gains (%.2f%%); tolerance %.0f%%", power,
                frame.realization.gain.size(), 100.0 * rel, 100.0 * kTolerance);
  r.detail = detail.str();
  r.seconds = seconds_since(t0);
  return r;
}

// ---------------------------------------------------------------------------
// 7. BLEU

namespace {

// Brute force: list every n-gram, count occurrences by linear scan.
struct BruteNgrams {
  long matched = 0;
  long total = 0;
};

BruteNgrams brute_clipped(const std::vector<int>& cand, const std::vector<int>& ref, int n) {
  auto grams = [n](const std::vector<int>& s) {
    std::vector<std::vector<int>> out;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i) {
      out.emplace_back(s.begin() + static_cast<long>(i), s.begin() + static_cast<long>(i) + n);
    }
    return out;
  };
  const auto cg = grams(cand);
  const auto rg = grams(ref);
  BruteNgrams b;
  b.total = static_cast<long>(cg.size());
  std::vector<std::vector<int>> seen;
  for (const auto& g : cg) {
    if (std::find(seen.begin(), seen.end(), g) != seen.end()) continue;
    seen.push_back(g);
    const long in_c = std::count(cg.begin(), cg.end(), g);
    const long in_r = std::count(rg.begin(), rg.end(), g);
    b.matched += std::min(in_c, in_r);
  }
  return b;
}

double brute_combined(const std::vector<int>& cand, const std::vector<int>& ref) {
  if (cand.empty()) return 0.0;
  const double bp = cand.size() >= ref.size()
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(cand.size()));
  double log_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    const BruteNgrams b = brute_clipped(cand, ref, n);
    double p = b.total == 0 ? 0.0 : static_cast<double>(b.matched) / static_cast<double>(b.total);
    if (p == 0.0) p = 1.0 / (2.0 * static_cast<double>(std::max<long>(b.total, 1)));
    log_sum += 0.25 * std::log(p);
  }
  return bp * std::exp(log_sum);
}

}  // namespace

OracleResult bleu_oracle() {
  const auto t0 = Clock::now();
  OracleResult r{7, "BLEU vs brute-force n-gram counter", true, {}, 0.0};
  constexpr std::size_t kPairs = 500;
  constexpr std::size_t kSelf = 100;
  std::mt19937_64 rng(707);
  std::uniform_int_distribution<std::size_t> len(0, 14);
  std::uniform_int_distribution<int> tok(3, 8);  // few ids so n-grams collide
  auto sentence = [&](std::size_t n) {
    std::vector<int> s(n);
    for (int& t : s) t = tok(rng);
    return s;
  };
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < kPairs; ++i) {
    const auto c = sentence(len(rng));
    const auto ref = sentence(std::max<std::size_t>(1, len(rng)));
    for (int n = 1; n <= 4; ++n) {
      const BruteNgrams b = brute_clipped(c, ref, n);
      const double expected = b.total == 0 ? 0.0 : static_cast<double>(b.matched) / static_cast<double>(b.total);
      if (reward::bleu_ngram_precision(c, ref, n) != expected) ++mismatches;
    }
    if (reward::combined_bleu(c, ref) != brute_combined(c, ref)) ++mismatches;
  }
  std::size_t self_failures = 0;
  std::uniform_int_distribution<std::size_t> valid_len(4, 30);
  for (std::size_t i = 0; i < kSelf; ++i) {
    const auto m = sentence(valid_len(rng));
    if (reward::combined_bleu(m, m) != 1.0) ++self_failures;
  }
  r.passed = mismatches == 0 && self_failures == 0;
  r.seconds = seconds_since(t0);
  r.detail = fmt("%zu pairs: %zu mismatches (exact equality); combined_bleu(m,m)!=1 for %zu of %zu sentences",
                 kPairs, mismatches, self_failures, kSelf);
  return r;
}

std::vector<OracleResult> run_all() {
  return {gradient_correctness(), theorem1_estimator(), theorem2_estimator(), advantage_identity(),
          variance_vs_k(),        channel_statistics(), bleu_oracle()};
}

std::string format(const OracleResult& r) {
  return fmt("%s [%d] %s: %s (%.1f s)", r.passed ? "PASS" : "FAIL", r.criterion, r.name.c_str(), r.detail.c_str(),
             r.seconds);
}

}  // namespace scal::oracles
