#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "scal/diffcore/tensor.hpp"

namespace scal::channel {

using diff::Tensor;
using Rng = std::mt19937_64;

enum class ChannelKind { Awgn, Rayleigh };

inline constexpr double kMinSnrDb = -10.0;
inline constexpr double kMaxSnrDb = 40.0;

struct ChannelConfig {
  ChannelKind kind = ChannelKind::Awgn;
  double mu_snr_db = 10.0;
  double delta_snr_db = 1.0;
  int receiver_id = 0;
  /// One fading gain per frame by default; per-symbol when set.
  bool per_symbol_fading = false;

  void validate() const;
};

struct ChannelRealization {
  double snr_db = 0.0;
  /// Fading magnitudes: one entry for block fading, one per symbol
  /// otherwise. {1.0} for AWGN.
  std::vector<double> gain{1.0};
  double noise_variance = 0.0;
};

struct ReceivedFrame {
  Tensor signal;
  ChannelRealization realization;
};

/// snr ~ Normal(mu, delta^2) clamped to [-10, 40] dB.
double sample_snr(const ChannelConfig& config, Rng& rng);

/// Noise variance for unit signal power: 10^(-snr_db / 10).
double noise_variance(double snr_db);

/// BPSK: 0 -> -1, 1 -> +1. Rejects anything that is not exactly 0 or 1.
Tensor modulate(const Tensor& bits);

/// Hard decision by sign; inverse of modulate on noiseless symbols.
Tensor demodulate_hard(const Tensor& symbols);

Tensor transmit_awgn(const Tensor& symbols, double snr_db, Rng& rng);

/// Returns the received frame together with the realized fading gain(s).
/// `forced_gain` replaces the Rayleigh draw (test hook; 1.0 gives AWGN).
ReceivedFrame transmit_rayleigh(const Tensor& symbols, double snr_db, Rng& rng,
                                bool per_symbol = false,
                                std::optional<double> forced_gain = std::nullopt);

/// One realization through a configured channel: draws the SNR, then
/// transmits with the configured kind.
ReceivedFrame transmit(const Tensor& symbols, const ChannelConfig& config, Rng& rng);

/// Same frame to every receiver; receiver n uses rngs[n] only.
std::vector<ReceivedFrame> broadcast(const Tensor& bits, std::span<const ChannelConfig> configs,
                                     std::span<Rng> rngs);

/// Derives an independent generator for (seed, stream) pairs.
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

}  // namespace scal::channel
