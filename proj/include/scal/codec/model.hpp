#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "scal/codec/vocabulary.hpp"
#include "scal/diffcore/tape.hpp"

namespace scal::codec {

using diff::ParameterSet;
using diff::Tape;
using diff::Tensor;
using diff::Var;
using Rng = std::mt19937_64;

/// Shared architecture of the transmitter and every receiver.
struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t model_width = 32;    // transformer width
  std::size_t code_dim = 32;       // D: continuous code width per token
  std::size_t bits = 16;           // B: bits per token row
  std::size_t dequant_width = 16;  // dense layer right after the channel
  std::size_t ffn_width = 64;
  std::size_t encoder_blocks = 1;
  std::size_t decoder_blocks = 1;
  std::size_t max_len = kDefaultMaxLength;
  /// Concatenate fading gains to the dequantizer input (Rayleigh CSI).
  bool use_csi = false;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Transmitter parameters theta: "enc.*" (embedding, blocks, code dense)
/// and "quant.*" (quantizer dense).
struct Encoder {
  ModelConfig config;
  ParameterSet params;

  static Encoder init(const ModelConfig& config, Rng& rng);
};

/// Receiver parameters phi_n: "dq.*" (dequantizer) and "dec.*".
struct Decoder {
  ModelConfig config;
  ParameterSet params;

  static Decoder init(const ModelConfig& config, Rng& rng);
};

/// Source ids followed by EOS: the rows fed to the encoder.
std::vector<int> with_eos(std::span<const int> sentence);

// ---------------------------------------------------------------------------
// Transmitter

/// Continuous code x = F_TX(m), shape (|m|+1) x D. Rejects ids that are
/// not content tokens and sentences longer than max_len.
Var encode(Tape& tape, const Encoder& enc, std::span<const int> sentence);
Tensor encode(const Encoder& enc, std::span<const int> sentence);

/// Dense projection of the code to T x B quantizer pre-activations.
Var quantizer_preactivation(Tape& tape, const Encoder& enc, Var code);

/// Bits in {0, 1}: threshold of the pre-activations at 0.
Tensor quantize(const Encoder& enc, const Tensor& code);
Tensor threshold_bits(const Tensor& preactivation);

/// Straight-through quantization: forward emits bits, backward passes the
/// pre-activation gradient through unchanged.
Var quantize_straight_through(Tape& tape, const Encoder& enc, Var code);

// ---------------------------------------------------------------------------
// Receiver

/// Channel observation handed to a receiver: soft values y (T x B) and,
/// with CSI enabled, the fading gains (one per frame or one per entry).
struct ReceivedCode {
  Tensor signal;
  std::vector<double> gain{1.0};
};

/// Dequantizer features, T x dequant_width.
Var dequantize(Tape& tape, const Decoder& dec, Var signal, const std::vector<double>& gain);

/// Cross-attention memory (T x model_width) built from the received code.
Var decoder_memory(Tape& tape, const Decoder& dec, Var signal, const std::vector<double>& gain);

/// Teacher-forced logits: row t predicts the token after inputs[0..t].
Var decoder_logits(Tape& tape, const Decoder& dec, Var memory, std::span<const int> inputs);

/// Logits (1 x V) for the token following `prefix` (which starts with SOS).
Tensor next_token_logits(Tape& tape, const Decoder& dec, Var memory, std::span<const int> prefix);

struct DecodeResult {
  Sentence tokens;            // content tokens, EOS excluded
  std::vector<int> actions;   // every emitted id, EOS included when emitted
  bool terminated = false;    // EOS emitted before the cap
};

/// Argmax decoding from SOS until EOS or max_len content tokens. Ties go
/// to the lowest id. At most max_len + 1 actions are taken.
DecodeResult decode_greedy(const Decoder& dec, const ReceivedCode& received, std::size_t max_len);

struct Trajectory {
  DecodeResult decoded;
  std::vector<double> step_log_probs;  // log pi(action_t | state_t), each <= 0
  std::optional<double> reward;        // set once the trajectory is scored

  double log_prob() const;
};

/// K independent samples of the multinomial decoding policy.
struct TrajectoryBundle {
  std::vector<Trajectory> samples;
};

TrajectoryBundle decode_sample(const Decoder& dec, const ReceivedCode& received, std::size_t k,
                               std::size_t max_len, Rng& rng);

/// Sum of log pi over the recorded actions of a trajectory, on the tape
/// (teacher forcing reproduces the sampled states exactly).
Var trajectory_log_prob(Tape& tape, const Decoder& dec, Var memory, std::span<const int> actions);

/// Teacher-forced cross-entropy (sum over steps) of `sentence` + EOS.
Var cross_entropy(Tape& tape, const Decoder& dec, Var memory, std::span<const int> sentence);

// ---------------------------------------------------------------------------
// Gaussian encoder policy

struct EncoderPolicySample {
  Tensor sample;  // x~ = mu + sigma * noise
  Tensor mean;    // mu
  double sigma = 0.0;
};

/// K draws around `mean`. Rejects sigma <= 0 and k < 2.
std::vector<EncoderPolicySample> sample_encoder_policy(const Tensor& mean, double sigma,
                                                       std::size_t k, Rng& rng);

/// log N(x; mu, sigma^2 I).
double gaussian_log_density(const Tensor& x, const Tensor& mean, double sigma);
Var gaussian_log_density(Tape& tape, Var mean, const Tensor& x, double sigma);

/// Scalar surrogate whose gradient w.r.t. the parameters behind `mean` is
/// weight * (x - mu)^T Sigma^{-1} d mu / d theta with Sigma = sigma^2 I.
Var gaussian_score_surrogate(Tape& tape, Var mean, const Tensor& sample, double sigma,
                             double weight = 1.0);

/// Gradient contribution of one sample: runs backward on a fresh surrogate.
diff::GradientMap gaussian_score(Tape& tape, Var mean, const Tensor& sample, double sigma);

}  // namespace scal::codec
