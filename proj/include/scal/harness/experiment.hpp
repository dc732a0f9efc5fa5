#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "scal/channel/channel.hpp"
#include "scal/codec/checkpoint.hpp"
#include "scal/codec/model.hpp"
#include "scal/harness/corpus.hpp"
#include "scal/trainer/trainer.hpp"

namespace scal::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EvalSplit { Train, Test };

struct ExperimentConfig {
  CorpusSource corpus;
  IngestOptions ingest;
  /// vocab_size and max_len are filled from the dataset and ingest bounds.
  codec::ModelConfig model;
  trainer::TrainConfig train;
  /// One entry per receiver; train.receivers follows this count.
  std::vector<channel::ChannelConfig> channels;
  /// CE pre-training without channel noise; otherwise the receivers'
  /// channels are sampled per sentence.
  bool pretrain_noiseless = false;
  std::vector<double> snr_grid;
  std::size_t eval_realizations = 20;
  EvalSplit eval_split = EvalSplit::Test;
  /// Evaluate on the first n sentences of the split; 0 means all.
  std::size_t eval_sentences = 0;
  std::uint64_t seed = 1;

  /// Every default pre-filled: three AWGN receivers, grid 0..20 step 2.
  static ExperimentConfig defaults();
  void validate() const;
};

/// Flat YAML mapping; unknown keys are rejected. Missing keys keep
/// `base`'s values.
ExperimentConfig parse_config(const std::string& text, const ExperimentConfig& base = ExperimentConfig::defaults());
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every key, in a stable order; parse_config(emit_config(c)) == c.
std::string emit_config(const ExperimentConfig& config);
std::uint64_t config_hash(const ExperimentConfig& config);

/// "0,2,4" or "0:20:2" (inclusive start:stop:step). Rejects an empty or
/// unsorted grid.
std::vector<double> parse_snr_grid(const std::string& text);

struct ReportRow {
  int receiver = 0;
  double snr_db = 0.0;
  std::array<double, 4> bleu{};
  double war = 0.0;
  double mean_reward = 0.0;
};

struct EvaluationReport {
  std::vector<ReportRow> rows;  // receiver-major, grid order within
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::string version;

  const ReportRow& at(int receiver, double snr_db) const;
};

/// Greedy decoding of every sentence through receiver n's channel kind at
/// each grid SNR (no SNR jitter), averaged over `realizations` draws.
EvaluationReport evaluate(const codec::Encoder& encoder, std::span<const codec::Decoder> decoders,
                          std::span<const channel::ChannelConfig> channels, std::span<const Sentence> sentences,
                          std::span<const double> snr_grid, std::size_t realizations, const std::string& metric,
                          std::uint64_t seed);

struct ExperimentResult {
  Dataset dataset;
  trainer::TrainResult training;
  EvaluationReport report;
};

using ProgressFn = std::function<void(const trainer::LogRow&)>;

/// Pre-training, alternate learning, checkpoint, evaluation. Writes
/// checkpoint.bin, training_log.csv, report.csv, config_resolved.txt and
/// plots/ under `out` (created if needed; empty path writes nothing). A
/// divergence-guard abort writes the partial training log, then throws
/// trainer::DivergenceError.
ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out,
                                const ProgressFn& progress = {});

/// Evaluates a saved checkpoint on the config's corpus and evaluation split.
/// Rejects a checkpoint built on another vocabulary and an empty grid.
EvaluationReport sweep_snr(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                           std::span<const double> snr_grid, const std::filesystem::path& out);

struct RxCountRow {
  std::size_t receivers = 0;
  std::array<double, 4> bleu{};  // averaged over the grid and receivers
  double war = 0.0;
};

/// One experiment per count with the same seed and corpus. Receiver n
/// of a run with count c uses base.channels[n % base.channels.size()].
std::vector<RxCountRow> compare_rx_counts(const ExperimentConfig& base, std::span<const std::size_t> counts,
                                          const std::filesystem::path& out, const ProgressFn& progress = {});

void write_report_csv(const EvaluationReport& report, std::ostream& os);
void write_training_log_csv(std::span<const trainer::LogRow> log, std::ostream& os);
void write_rx_table_csv(std::span<const RxCountRow> rows, std::ostream& os);
/// One SVG per metric (bleu1..bleu4, war): metric vs SNR, a line per receiver.
void write_plots(const EvaluationReport& report, const std::filesystem::path& dir);

std::string version_string();

}  // namespace scal::harness
