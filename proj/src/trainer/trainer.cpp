#include "scal/trainer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace scal::trainer {

using channel::ChannelConfig;
using channel::ChannelKind;
using diff::GradientMap;
using diff::OptimizerState;

void TrainConfig::validate() const {
  if (k < 2) throw std::invalid_argument("train config: K must be >= 2");
  if (kappa < 1) throw std::invalid_argument("train config: kappa must be >= 1");
  if (pretrain_epochs >= end_epoch) throw std::invalid_argument("train config: E_p must be < E_e");
  if (batch_size == 0) throw std::invalid_argument("train config: batch size must be > 0");
  if (receivers == 0) throw std::invalid_argument("train config: need at least one receiver");
  if (!(sigma > 0.0)) throw std::invalid_argument("train config: sigma must be > 0");
  for (double rate : {lr, pretrain_rate(), decoder_rate(), encoder_rate()}) {
    if (!(rate > 0.0)) throw std::invalid_argument("train config: learning rates must be > 0");
  }
  if (guard_fraction < 0.0 || guard_fraction > 1.0) {
    throw std::invalid_argument("train config: guard fraction must be in [0, 1]");
  }
  reward::default_registry().get(metric);
}

Rng stream(const TrainConfig& config, std::uint64_t purpose, std::uint64_t index) {
  return channel::make_stream(config.seed, (purpose << 32) | index);
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void add_metrics(StepStats& s, std::span<const int> candidate, std::span<const int> reference, double theta) {
  s.mean_reward += theta;
  for (int n = 1; n <= 4; ++n) s.bleu[static_cast<std::size_t>(n - 1)] += reward::bleu_n(candidate, reference, n);
  s.war += reward::war(candidate, reference);
  ++s.samples;
}

void finish_metrics(StepStats& s) {
  if (s.samples == 0) return;
  const double n = static_cast<double>(s.samples);
  s.mean_reward /= n;
  for (double& b : s.bleu) b /= n;
  s.war /= n;
}

// Running average of several StepStats, weighted by sample count.
void merge(StepStats& into, const StepStats& from, std::size_t& steps) {
  const double w_old = static_cast<double>(steps);
  const double w = w_old + 1.0;
  into.mean_reward = (into.mean_reward * w_old + from.mean_reward) / w;
  into.loss = (into.loss * w_old + from.loss) / w;
  for (std::size_t i = 0; i < 4; ++i) into.bleu[i] = (into.bleu[i] * w_old + from.bleu[i]) / w;
  into.war = (into.war * w_old + from.war) / w;
  into.samples += from.samples;
  ++steps;
}

// Transmit a frame of bits through a configured channel and package it for
// the receiver.
codec::ReceivedCode through_channel(const Tensor& bits, const ChannelConfig& cfg, Rng& rng) {
  channel::ReceivedFrame frame = channel::transmit(channel::modulate(bits), cfg, rng);
  return codec::ReceivedCode{std::move(frame.signal), std::move(frame.realization.gain)};
}

}  // namespace

// ---------------------------------------------------------------------------
// Pre-training

namespace {

Var pretrain_sentence_loss(Tape& tape, const Encoder& encoder, const Decoder& decoder,
                           std::span<const int> sentence, const PretrainChannel& channel, Rng& rng) {
  const Var code = codec::encode(tape, encoder, sentence);
  const Var bits = codec::quantize_straight_through(tape, encoder, code);
  const Tensor& bv = tape.value(bits);
  Var symbols = tape.add(tape.scale(bits, 2.0), tape.constant(Tensor(1, bv.cols(), -1.0)));
  std::vector<double> gain{1.0};
  if (!channel.noiseless && !channel.configs.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, channel.configs.size() - 1);
    const ChannelConfig& cfg = channel.configs[pick(rng)];
    const double snr = channel::sample_snr(cfg, rng);
    if (cfg.kind == ChannelKind::Rayleigh) {
      const Tensor ones(bv.rows(), bv.cols(), 1.0);
      const channel::ReceivedFrame faded = channel::transmit_rayleigh(ones, snr, rng, cfg.per_symbol_fading);
      // faded = h + n on a frame of ones; separate the gain from the noise
      Tensor h(bv.rows(), bv.cols());
      Tensor noise(bv.rows(), bv.cols());
      for (std::size_t i = 0; i < h.size(); ++i) {
        h[i] = faded.realization.gain.size() == 1 ? faded.realization.gain[0] : faded.realization.gain[i];
        noise[i] = faded.signal[i] - h[i];
      }
      symbols = tape.add(tape.mul(symbols, tape.constant(std::move(h))), tape.constant(std::move(noise)));
      gain = faded.realization.gain;
    } else {
      const Tensor zeros(bv.rows(), bv.cols());
      symbols = tape.add(symbols, tape.constant(channel::transmit_awgn(zeros, snr, rng)));
    }
  }
  const Var memory = codec::decoder_memory(tape, decoder, symbols, gain);
  return codec::cross_entropy(tape, decoder, memory, sentence);
}

}  // namespace

double pretrain_step(std::span<const Sentence> batch, Encoder& encoder, Decoder& decoder, OptimizerState& enc_opt,
                     OptimizerState& dec_opt, const PretrainChannel& channel, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("pretrain_step: empty batch");
  GradientMap grads = diff::zero_gradients(encoder.params);
  accumulate(grads, diff::zero_gradients(decoder.params));
  double total = 0.0;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const Sentence& s : batch) {
    Tape tape;
    const Var loss = pretrain_sentence_loss(tape, encoder, decoder, s, channel, rng);
    total += tape.value(loss).item();
    diff::accumulate(grads, tape.backward(loss), w);
  }
  diff::optimizer_step(enc_opt, encoder.params, grads, diff::Direction::Descent);
  diff::optimizer_step(dec_opt, decoder.params, grads, diff::Direction::Descent);
  return total * w;
}

double pretrain_loss(const Encoder& encoder, const Decoder& decoder, std::span<const int> sentence) {
  Tape tape(false);
  Rng unused;
  return tape.value(pretrain_sentence_loss(tape, encoder, decoder, sentence, PretrainChannel{true, {}}, unused)).item();
}

GradientMap pretrain_gradient(std::span<const Sentence> batch, const Encoder& encoder, const Decoder& decoder) {
  GradientMap grads = diff::zero_gradients(encoder.params);
  accumulate(grads, diff::zero_gradients(decoder.params));
  Rng unused;
  for (const Sentence& s : batch) {
    Tape tape;
    const Var loss = pretrain_sentence_loss(tape, encoder, decoder, s, PretrainChannel{true, {}}, unused);
    diff::accumulate(grads, tape.backward(loss), 1.0 / static_cast<double>(batch.size()));
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Self-critical steps

GradientMap decoder_selfcritical_gradient(std::span<const Sentence> batch, const Encoder& encoder,
                                          const Decoder& decoder, const ChannelConfig& channel,
                                          const TrainConfig& config, Rng& channel_rng, Rng& sample_rng,
                                          StepStats* stats) {
  if (config.k < 2) throw std::invalid_argument("decoder step: K must be >= 2");
  const auto& metric = reward::default_registry().get(config.metric);
  GradientMap grads = diff::zero_gradients(decoder.params);
  StepStats local;
  double surrogate = 0.0;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const Sentence& s : batch) {
    const Tensor bits = codec::quantize(encoder, codec::encode(encoder, s));
    const codec::ReceivedCode received = through_channel(bits, channel, channel_rng);
    codec::TrajectoryBundle bundle =
        codec::decode_sample(decoder, received, config.k, decoder.config.max_len, sample_rng);

    std::vector<double> rewards;
    rewards.reserve(config.k);
    for (auto& traj : bundle.samples) {
      traj.reward = metric(traj.decoded.tokens, s);
      rewards.push_back(*traj.reward);
      add_metrics(local, traj.decoded.tokens, s, *traj.reward);
    }
    const AdvantageRecord adv = leave_one_out(rewards);
    for (std::size_t i = 0; i < config.k; ++i) {
      surrogate += w * adv.advantages[i] * bundle.samples[i].log_prob() / static_cast<double>(config.k);
    }

    std::optional<Var> memory;
    const GradientMap g = selfcritical_policy_gradient(adv, [&](Tape& tape, std::size_t i) {
      if (!memory) memory = codec::decoder_memory(tape, decoder, tape.constant_ref(received.signal), received.gain);
      return codec::trajectory_log_prob(tape, decoder, *memory, bundle.samples[i].decoded.actions);
    });
    diff::accumulate(grads, g, w);
  }
  finish_metrics(local);
  local.loss = -surrogate;
  if (stats) *stats = local;
  return grads;
}

StepStats decoder_selfcritical_step(std::span<const Sentence> batch, const Encoder& encoder, Decoder& decoder,
                                    const ChannelConfig& channel, OptimizerState& opt, const TrainConfig& config,
                                    Rng& channel_rng, Rng& sample_rng) {
  StepStats stats;
  const GradientMap grads =
      decoder_selfcritical_gradient(batch, encoder, decoder, channel, config, channel_rng, sample_rng, &stats);
  diff::optimizer_step(opt, decoder.params, grads, diff::Direction::Ascent);
  return stats;
}

GradientMap encoder_selfcritical_gradient(std::span<const Sentence> batch, const Encoder& encoder,
                                          std::span<const Decoder> decoders, std::span<const ChannelConfig> channels,
                                          const TrainConfig& config, std::span<Rng> channel_rngs, Rng& sample_rng,
                                          StepStats* stats) {
  if (decoders.size() != channels.size() || channel_rngs.size() != channels.size()) {
    throw std::invalid_argument("encoder step: decoders, channels and rng streams must match in count");
  }
  if (encoder.params.frozen()) throw std::logic_error("encoder step: encoder parameters are frozen");
  const auto& metric = reward::default_registry().get(config.metric);
  GradientMap grads = diff::zero_gradients(encoder.params);
  StepStats local;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const Sentence& s : batch) {
    Tape tape;
    const Var mean = codec::encode(tape, encoder, s);
    const auto policy = codec::sample_encoder_policy(tape.value(mean), config.sigma, config.k, sample_rng);

    std::vector<Tensor> samples;
    samples.reserve(config.k);
    std::vector<std::vector<double>> rewards(channels.size(), std::vector<double>(config.k));
    for (std::size_t i = 0; i < config.k; ++i) {
      samples.push_back(policy[i].sample);
      const Tensor bits = codec::quantize(encoder, policy[i].sample);
      for (std::size_t n = 0; n < channels.size(); ++n) {
        const codec::ReceivedCode received = through_channel(bits, channels[n], channel_rngs[n]);
        Sentence decoded;
        if (config.encoder_decoding == EncoderDecoding::Greedy) {
          decoded = codec::decode_greedy(decoders[n], received, decoders[n].config.max_len).tokens;
        } else {
          // one multinomial draw; decode_sample needs K >= 2
          decoded = codec::decode_sample(decoders[n], received, 2, decoders[n].config.max_len, sample_rng)
                        .samples.front()
                        .decoded.tokens;
        }
        rewards[n][i] = metric(decoded, s);
        add_metrics(local, decoded, s, rewards[n][i]);
      }
    }
    std::vector<AdvantageRecord> records;
    records.reserve(channels.size());
    for (const auto& r : rewards) records.push_back(leave_one_out(r));
    diff::accumulate(grads, selfcritical_encoder_gradient(tape, mean, samples, records, config.sigma), w);
  }
  finish_metrics(local);
  local.loss = -local.mean_reward;
  if (stats) *stats = local;
  return grads;
}

StepStats encoder_selfcritical_step(std::span<const Sentence> batch, Encoder& encoder,
                                    std::span<const Decoder> decoders, std::span<const ChannelConfig> channels,
                                    OptimizerState& opt, const TrainConfig& config, std::span<Rng> channel_rngs,
                                    Rng& sample_rng) {
  StepStats stats;
  const GradientMap grads =
      encoder_selfcritical_gradient(batch, encoder, decoders, channels, config, channel_rngs, sample_rng, &stats);
  diff::optimizer_step(opt, encoder.params, grads, diff::Direction::Ascent);
  return stats;
}

// ---------------------------------------------------------------------------
// Schedules

namespace {

// Endless shuffled pass over the training set.
class BatchStream {
 public:
  BatchStream(std::span<const Sentence> data, std::size_t batch_size, Rng rng)
      : data_(data), batch_size_(std::min(batch_size, data.size())), rng_(std::move(rng)), order_(data.size()) {
    if (data.empty()) throw std::invalid_argument("training set is empty");
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
  }

  std::vector<Sentence> next() {
    std::vector<Sentence> batch;
    batch.reserve(batch_size_);
    while (batch.size() < batch_size_) {
      if (pos_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
      }
      batch.push_back(data_[order_[pos_++]]);
    }
    return batch;
  }

 private:
  std::span<const Sentence> data_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

std::size_t resolve_batches_per_epoch(const TrainConfig& config, std::size_t dataset_size) {
  if (config.batches_per_epoch > 0) return config.batches_per_epoch;
  return std::max<std::size_t>(1, (dataset_size + config.batch_size - 1) / config.batch_size);
}

}  // namespace

Schedule plan_schedule(const TrainConfig& config, std::size_t batches_per_epoch) {
  const std::size_t epochs = config.end_epoch - config.pretrain_epochs;
  Schedule s;
  if (config.schedule == ScheduleVariant::Cycle) {
    const std::size_t per_epoch = batches_per_epoch / config.kappa;
    if (per_epoch == 0) {
      throw std::invalid_argument("schedule: kappa=" + std::to_string(config.kappa) +
                                  " exceeds the batches per epoch (" + std::to_string(batches_per_epoch) + ")");
    }
    s.cycles = epochs * per_epoch;
    s.decoder_batches_per_cycle = config.kappa;
  } else {
    // batch i (1-based) trains decoders while i mod kappa != 0
    const std::size_t per_epoch = batches_per_epoch / config.kappa;
    s.cycles = epochs * per_epoch;
    s.decoder_batches_per_cycle = config.kappa - 1;
  }
  return s;
}

Decoder pretrain(std::span<const Sentence> train, Encoder& encoder, Decoder decoder, const TrainConfig& config,
                 const PretrainChannel& channel, std::vector<LogRow>* log) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t batches = resolve_batches_per_epoch(config, train.size());
  BatchStream data(train, config.batch_size, stream(config, streams::kShuffle, 0));
  Rng channel_rng = stream(config, streams::kPretrainChannel);
  OptimizerState enc_opt(config.pretrain_rate(), config.pretrain_optimizer);
  OptimizerState dec_opt(config.pretrain_rate(), config.pretrain_optimizer);
  for (std::size_t epoch = 1; epoch <= config.pretrain_epochs; ++epoch) {
    double loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const auto batch = data.next();
      loss += pretrain_step(batch, encoder, decoder, enc_opt, dec_opt, channel, channel_rng);
    }
    if (log) {
      LogRow row{"pretrain", epoch, -1, {}, seconds_since(start)};
      row.stats.loss = loss / static_cast<double>(batches);
      log->push_back(row);
    }
  }
  return decoder;
}

TrainResult run_alternate_schedule(std::span<const Sentence> train, Encoder encoder, const Decoder& pretrained_decoder,
                                   std::span<const ChannelConfig> channels, const TrainConfig& config,
                                   const std::function<void(const LogRow&)>& on_row) {
  config.validate();
  if (channels.size() != config.receivers) {
    throw std::invalid_argument("alternate schedule: " + std::to_string(config.receivers) + " receivers but " +
                                std::to_string(channels.size()) + " channel configs");
  }
  for (const auto& c : channels) c.validate();

  const auto start = std::chrono::steady_clock::now();
  const std::size_t n_rx = channels.size();
  TrainResult result{std::move(encoder), std::vector<Decoder>(n_rx, pretrained_decoder),
                     ConvergenceMonitor(config.monitor), {}, {}, 0, 0, 0, false, {}};

  BatchStream data(train, config.batch_size, stream(config, streams::kShuffle, 1));
  std::vector<Rng> dec_channel_rngs;
  std::vector<Rng> dec_sample_rngs;
  std::vector<Rng> enc_channel_rngs;
  std::vector<OptimizerState> dec_opts;
  for (std::size_t n = 0; n < n_rx; ++n) {
    dec_channel_rngs.push_back(stream(config, streams::kDecoderChannel, n));
    dec_sample_rngs.push_back(stream(config, streams::kDecoderSampling, n));
    enc_channel_rngs.push_back(stream(config, streams::kEncoderChannel, n));
    dec_opts.emplace_back(config.decoder_rate(), config.optimizer);
  }
  Rng enc_sample_rng = stream(config, streams::kEncoderSampling);
  OptimizerState enc_opt(config.encoder_rate(), config.optimizer);

  const Schedule plan = plan_schedule(config, resolve_batches_per_epoch(config, train.size()));
  DivergenceGuard guard(config.guard_fraction, config.guard_cycles);

  auto emit = [&](LogRow row) {
    row.wall_seconds = seconds_since(start);
    if (on_row) on_row(row);
    result.log.push_back(std::move(row));
  };

  for (std::size_t cycle = 1; cycle <= plan.cycles; ++cycle) {
    // decoders: kappa local updates each, encoder frozen
    std::vector<StepStats> rx_stats(n_rx);
    std::vector<std::size_t> rx_steps(n_rx, 0);
    for (std::size_t b = 0; b < plan.decoder_batches_per_cycle; ++b) {
      const auto batch = data.next();
      for (std::size_t n = 0; n < n_rx; ++n) {
        const StepStats s = decoder_selfcritical_step(batch, result.encoder, result.decoders[n], channels[n],
                                                      dec_opts[n], config, dec_channel_rngs[n], dec_sample_rngs[n]);
        merge(rx_stats[n], s, rx_steps[n]);
      }
      ++result.decoder_steps;
      result.updates.push_back(UpdateKind::Decoder);
    }

    // encoder: one update, every decoder frozen
    for (auto& d : result.decoders) d.params.set_frozen(true);
    const auto batch = data.next();
    const StepStats enc_stats = encoder_selfcritical_step(batch, result.encoder, result.decoders, channels, enc_opt,
                                                          config, enc_channel_rngs, enc_sample_rng);
    for (auto& d : result.decoders) d.params.set_frozen(false);
    ++result.encoder_steps;
    result.updates.push_back(UpdateKind::Encoder);
    result.cycles = cycle;

    CycleRecord rec;
    rec.cycle = cycle;
    rec.encoder_reward = enc_stats.mean_reward;
    for (std::size_t n = 0; n < n_rx; ++n) {
      if (rx_steps[n] > 0) rec.receiver_rewards.push_back(rx_stats[n].mean_reward);
      if (rx_steps[n] > 0) emit(LogRow{"decoder", cycle, static_cast<int>(n), rx_stats[n], 0.0});
    }
    emit(LogRow{"encoder", cycle, -1, enc_stats, 0.0});
    const double cycle_reward = rec.mean_reward();
    result.monitor.record(std::move(rec));

    if (guard.update(cycle_reward)) {
      result.aborted = true;
      result.abort_reason = "divergence guard: cycle mean reward below " + std::to_string(config.guard_fraction) +
                            " of its running max (" + std::to_string(guard.running_max()) + ") for " +
                            std::to_string(guard.consecutive_below()) + " consecutive cycles at cycle " + std::to_string(cycle);
      break;
    }
  }
  return result;
}

}  // namespace scal::trainer
