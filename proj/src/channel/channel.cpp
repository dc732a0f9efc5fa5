#include "scal/channel/channel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace scal::channel {

void ChannelConfig::validate() const {
  if (!(delta_snr_db >= 0.0)) {
    throw std::invalid_argument("channel config for receiver " + std::to_string(receiver_id) +
                                ": delta_snr_db must be >= 0");
  }
  if (!std::isfinite(mu_snr_db)) {
    throw std::invalid_argument("channel config for receiver " + std::to_string(receiver_id) +
                                ": mu_snr_db must be finite");
  }
}

double sample_snr(const ChannelConfig& config, Rng& rng) {
  double snr = config.mu_snr_db;
  if (config.delta_snr_db > 0.0) {
    std::normal_distribution<double> dist(config.mu_snr_db, config.delta_snr_db);
    snr = dist(rng);
  }
  return std::clamp(snr, kMinSnrDb, kMaxSnrDb);
}

double noise_variance(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

Tensor modulate(const Tensor& bits) {
  Tensor out(bits.rows(), bits.cols());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] == 0.0) {
      out[i] = -1.0;
    } else if (bits[i] == 1.0) {
      out[i] = 1.0;
    } else {
      throw std::invalid_argument("modulate: non-binary entry " + std::to_string(bits[i]) +
                                  " at index " + std::to_string(i));
    }
  }
  return out;
}

Tensor demodulate_hard(const Tensor& symbols) {
  Tensor out(symbols.rows(), symbols.cols());
  for (std::size_t i = 0; i < symbols.size(); ++i) out[i] = symbols[i] > 0.0 ? 1.0 : 0.0;
  return out;
}

namespace {

void add_noise(Tensor& y, double variance, Rng& rng) {
  std::normal_distribution<double> noise(0.0, std::sqrt(variance));
  for (double& v : y.values()) v += noise(rng);
}

// Unit mean-square Rayleigh magnitude: |h| with h ~ CN(0, 1).
double draw_rayleigh(Rng& rng) {
  std::normal_distribution<double> g(0.0, std::sqrt(0.5));
  const double re = g(rng);
  const double im = g(rng);
  return std::sqrt(re * re + im * im);
}

}  // namespace

Tensor transmit_awgn(const Tensor& symbols, double snr_db, Rng& rng) {
  if (!symbols.all_finite()) throw std::invalid_argument("transmit_awgn: non-finite symbols");
  Tensor y = symbols;
  add_noise(y, noise_variance(snr_db), rng);
  return y;
}

ReceivedFrame transmit_rayleigh(const Tensor& symbols, double snr_db, Rng& rng, bool per_symbol,
                                std::optional<double> forced_gain) {
  if (!symbols.all_finite()) throw std::invalid_argument("transmit_rayleigh: non-finite symbols");
  ReceivedFrame out;
  out.realization.snr_db = snr_db;
  out.realization.noise_variance = noise_variance(snr_db);
  out.signal = symbols;
  if (per_symbol) {
    out.realization.gain.resize(symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      const double h = forced_gain ? *forced_gain : draw_rayleigh(rng);
      out.realization.gain[i] = h;
      out.signal[i] *= h;
    }
  } else {
    const double h = forced_gain ? *forced_gain : draw_rayleigh(rng);
    out.realization.gain = {h};
    out.signal *= h;
  }
  add_noise(out.signal, out.realization.noise_variance, rng);
  return out;
}

ReceivedFrame transmit(const Tensor& symbols, const ChannelConfig& config, Rng& rng) {
  const double snr = sample_snr(config, rng);
  if (config.kind == ChannelKind::Rayleigh) {
    return transmit_rayleigh(symbols, snr, rng, config.per_symbol_fading);
  }
  ReceivedFrame out;
  out.realization.snr_db = snr;
  out.realization.noise_variance = noise_variance(snr);
  out.signal = transmit_awgn(symbols, snr, rng);
  return out;
}

std::vector<ReceivedFrame> broadcast(const Tensor& bits, std::span<const ChannelConfig> configs,
                                     std::span<Rng> rngs) {
  if (configs.empty()) throw std::invalid_argument("broadcast: need at least one receiver");
  if (rngs.size() != configs.size()) {
    throw std::invalid_argument("broadcast: " + std::to_string(configs.size()) + " receivers but " +
                                std::to_string(rngs.size()) + " rng streams");
  }
  const Tensor symbols = modulate(bits);
  std::vector<ReceivedFrame> out;
  out.reserve(configs.size());
  for (std::size_t n = 0; n < configs.size(); ++n) out.push_back(transmit(symbols, configs[n], rngs[n]));
  return out;
}

Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x5ca1u};
  return Rng(seq);
}

}  // namespace scal::channel
