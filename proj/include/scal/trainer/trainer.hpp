#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "scal/channel/channel.hpp"
#include "scal/codec/model.hpp"
#include "scal/diffcore/optimizer.hpp"
#include "scal/reward/metrics.hpp"
#include "scal/trainer/monitor.hpp"
#include "scal/trainer/selfcritical.hpp"

namespace scal::trainer {

using codec::Decoder;
using codec::Encoder;
using codec::Sentence;
using Rng = std::mt19937_64;

enum class ScheduleVariant {
  /// kappa consecutive decoder batches, then one encoder batch.
  Cycle,
  /// Batch i trains decoders while i mod kappa != 0, else the encoder.
  BatchModulo,
};

enum class EncoderDecoding { Greedy, Sampled };

struct TrainConfig {
  std::size_t batch_size = 64;
  double lr = 1e-5;
  /// Per-stage overrides of `lr`; unset means `lr`.
  std::optional<double> pretrain_lr;
  std::optional<double> decoder_lr;
  std::optional<double> encoder_lr;
  diff::OptimizerKind optimizer = diff::OptimizerKind::Sgd;
  diff::OptimizerKind pretrain_optimizer = diff::OptimizerKind::Adam;
  std::size_t k = 5;
  std::size_t kappa = 1000;
  std::size_t pretrain_epochs = 50;   // E_p
  std::size_t end_epoch = 180;        // E_e
  std::size_t batches_per_epoch = 0;  // E_b; 0 derives it from the dataset
  std::size_t receivers = 1;          // N
  double sigma = 0.1;
  double gamma = 1.0;
  std::uint64_t seed = 1;
  ScheduleVariant schedule = ScheduleVariant::Cycle;
  EncoderDecoding encoder_decoding = EncoderDecoding::Greedy;
  std::string metric = "bleu";
  /// Abort when the cycle mean reward stays below this fraction of its
  /// running max for `guard_cycles` consecutive cycles.
  double guard_fraction = 0.5;
  std::size_t guard_cycles = 20;
  MonitorSettings monitor;

  void validate() const;
  double pretrain_rate() const { return pretrain_lr.value_or(lr); }
  double decoder_rate() const { return decoder_lr.value_or(lr); }
  double encoder_rate() const { return encoder_lr.value_or(lr); }
};

/// Channel used during CE pre-training: identity (no noise) or a draw from
/// the receivers' configured channels, cycling through them.
struct PretrainChannel {
  bool noiseless = false;
  std::vector<channel::ChannelConfig> configs;
};

struct StepStats {
  double mean_reward = 0.0;
  double loss = 0.0;  // CE for pre-training, negative surrogate otherwise
  std::array<double, 4> bleu{};
  double war = 0.0;
  std::size_t samples = 0;
};

/// Teacher-forced CE through encoder -> straight-through quantizer ->
/// BPSK -> channel -> shared decoder; one descent step on both. Returns
/// the mean per-sentence CE before the update.
double pretrain_step(std::span<const Sentence> batch, Encoder& encoder, Decoder& decoder,
                     diff::OptimizerState& enc_opt, diff::OptimizerState& dec_opt,
                     const PretrainChannel& channel, Rng& rng);

/// Mean teacher-forced CE of `sentence` with a noiseless channel.
double pretrain_loss(const Encoder& encoder, const Decoder& decoder, std::span<const int> sentence);

/// Gradient of the batch-mean pre-training loss (noiseless channel) w.r.t.
/// the encoder and decoder parameters.
diff::GradientMap pretrain_gradient(std::span<const Sentence> batch, const Encoder& encoder,
                                    const Decoder& decoder);

/// Self-critical update of receiver n with the encoder frozen. Advantages
/// are leave-one-out over K sampled decodings of a single channel draw.
StepStats decoder_selfcritical_step(std::span<const Sentence> batch, const Encoder& encoder,
                                    Decoder& decoder, const channel::ChannelConfig& channel,
                                    diff::OptimizerState& opt, const TrainConfig& config,
                                    Rng& channel_rng, Rng& sample_rng);

/// The batch-mean decoder gradient without applying it.
diff::GradientMap decoder_selfcritical_gradient(std::span<const Sentence> batch, const Encoder& encoder,
                                                const Decoder& decoder, const channel::ChannelConfig& channel,
                                                const TrainConfig& config, Rng& channel_rng,
                                                Rng& sample_rng, StepStats* stats = nullptr);

/// Self-critical update of the encoder with every decoder frozen. K
/// Gaussian samples of the code are quantized and broadcast; receiver n
/// decodes each and scores it.
StepStats encoder_selfcritical_step(std::span<const Sentence> batch, Encoder& encoder,
                                    std::span<const Decoder> decoders,
                                    std::span<const channel::ChannelConfig> channels,
                                    diff::OptimizerState& opt, const TrainConfig& config,
                                    std::span<Rng> channel_rngs, Rng& sample_rng);

diff::GradientMap encoder_selfcritical_gradient(std::span<const Sentence> batch, const Encoder& encoder,
                                                std::span<const Decoder> decoders,
                                                std::span<const channel::ChannelConfig> channels,
                                                const TrainConfig& config, std::span<Rng> channel_rngs,
                                                Rng& sample_rng, StepStats* stats = nullptr);

enum class UpdateKind { Decoder, Encoder };

/// One row of the training log.
struct LogRow {
  std::string phase;  // "pretrain", "decoder" or "encoder"
  std::size_t cycle = 0;
  int receiver = -1;  // -1 for the transmitter / shared pre-training
  StepStats stats;
  double wall_seconds = 0.0;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  Encoder encoder;
  std::vector<Decoder> decoders;
  ConvergenceMonitor monitor;
  std::vector<LogRow> log;
  std::vector<UpdateKind> updates;
  std::size_t decoder_steps = 0;  // batches; each trains all N receivers
  std::size_t encoder_steps = 0;
  std::size_t cycles = 0;
  bool aborted = false;
  std::string abort_reason;
};

struct Schedule {
  std::size_t cycles = 0;
  std::size_t decoder_batches_per_cycle = 0;
};

/// Cycle layout for the alternate stage from E_p, E_e, E_b and kappa.
Schedule plan_schedule(const TrainConfig& config, std::size_t batches_per_epoch);

/// Pre-training for E_p epochs; returns the shared decoder.
Decoder pretrain(std::span<const Sentence> train, Encoder& encoder, Decoder decoder, const TrainConfig& config,
                 const PretrainChannel& channel, std::vector<LogRow>* log = nullptr);

/// Alternate self-critical learning from a pre-trained system. Every
/// decoder starts from `pretrained_decoder`. A divergence-guard abort is
/// reported through TrainResult::aborted (logs are kept).
TrainResult run_alternate_schedule(std::span<const Sentence> train, Encoder encoder,
                                   const Decoder& pretrained_decoder,
                                   std::span<const channel::ChannelConfig> channels, const TrainConfig& config,
                                   const std::function<void(const LogRow&)>& on_row = {});

/// Named independent random stream for this run.
Rng stream(const TrainConfig& config, std::uint64_t purpose, std::uint64_t index = 0);

namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kPretrainChannel = 3;
inline constexpr std::uint64_t kDecoderChannel = 4;
inline constexpr std::uint64_t kDecoderSampling = 5;
inline constexpr std::uint64_t kEncoderChannel = 6;
inline constexpr std::uint64_t kEncoderSampling = 7;
inline constexpr std::uint64_t kEvaluation = 8;
}  // namespace streams

}  // namespace scal::trainer
