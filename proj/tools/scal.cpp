#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "oracles.hpp"
#include "scal/harness/corpus.hpp"
#include "scal/harness/experiment.hpp"

namespace fs = std::filesystem;
using namespace scal;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string checkpoint;
  std::string snr_grid;
};

harness::ExperimentConfig resolve(const CommonOptions& o) {
  harness::ExperimentConfig c = o.config.empty() ? harness::ExperimentConfig::defaults() : harness::load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.snr_grid.empty()) c.snr_grid = harness::parse_snr_grid(o.snr_grid);
  c.train.seed = c.seed;
  return c;
}

void print_progress(const trainer::LogRow& r) {
  if (r.phase == "pretrain") {
    if (r.cycle % 10 == 0) std::fprintf(stderr, "pretrain epoch %zu  CE %.4f  (%.0f s)\n", r.cycle, r.stats.loss, r.wall_seconds);
  } else if (r.phase == "encoder") {
    std::fprintf(stderr, "cycle %zu  encoder reward %.4f  (%.0f s)\n", r.cycle, r.stats.mean_reward, r.wall_seconds);
  }
}

void print_report(const harness::EvaluationReport& rep) {
  std::printf("receiver  snr_db  bleu1   bleu2   bleu3   bleu4   war\n");
  for (const auto& r : rep.rows) {
    std::printf("%8d  %6g  %.4f  %.4f  %.4f  %.4f  %.4f\n", r.receiver + 1, r.snr_db, r.bleu[0], r.bleu[1], r.bleu[2],
                r.bleu[3], r.war);
  }
}

void write_lines(const fs::path& path, const harness::Dataset& ds, const std::vector<codec::Sentence>& split) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  for (const auto& s : split) os << ds.vocab.render(s) << "\n";
}

int cmd_ingest(const CommonOptions& o) {
  const harness::ExperimentConfig c = resolve(o);
  harness::IngestOptions opts = c.ingest;
  opts.seed = c.seed;
  const harness::Dataset ds = harness::ingest_corpus(c.corpus, opts);
  fs::create_directories(o.out);
  {
    std::ofstream os(fs::path(o.out) / "vocab.txt");
    for (const auto& w : ds.vocab.tokens()) os << w << "\n";
  }
  write_lines(fs::path(o.out) / "train.txt", ds, ds.train);
  write_lines(fs::path(o.out) / "test.txt", ds, ds.test);
  std::printf("read %zu  too_short %zu  too_long %zu  out_of_vocabulary %zu  kept %zu\n", ds.counts.read,
              ds.counts.too_short, ds.counts.too_long, ds.counts.out_of_vocabulary, ds.counts.kept);
  std::printf("vocabulary %zu (incl. specials)  train %zu  test %zu  -> %s\n", ds.vocab.size(), ds.train.size(),
              ds.test.size(), o.out.c_str());
  return 0;
}

int cmd_train(const CommonOptions& o) {
  const harness::ExperimentConfig c = resolve(o);
  const harness::ExperimentResult r = harness::run_experiment(c, o.out, print_progress);
  if (!o.checkpoint.empty()) fs::copy_file(fs::path(o.out) / "checkpoint.bin", o.checkpoint, fs::copy_options::overwrite_existing);
  print_report(r.report);
  std::printf("outputs in %s\n", o.out.c_str());
  return 0;
}

int cmd_sweep(const CommonOptions& o) {
  if (o.checkpoint.empty()) throw std::invalid_argument("sweep: --checkpoint is required");
  const harness::ExperimentConfig c = resolve(o);
  const harness::EvaluationReport rep = harness::sweep_snr(c, o.checkpoint, c.snr_grid, o.out);
  print_report(rep);
  return 0;
}

int cmd_compare_rx(const CommonOptions& o, const std::vector<std::size_t>& counts) {
  const harness::ExperimentConfig c = resolve(o);
  const auto table = harness::compare_rx_counts(c, counts, o.out, print_progress);
  std::printf("receivers  bleu1   bleu2   bleu3   bleu4   war\n");
  for (const auto& r : table) {
    std::printf("%9zu  %.4f  %.4f  %.4f  %.4f  %.4f\n", r.receivers, r.bleu[0], r.bleu[1], r.bleu[2], r.bleu[3], r.war);
  }
  return 0;
}

int cmd_oracles() {
  bool ok = true;
  for (const auto& r : oracles::run_all()) {
    std::printf("%s\n", oracles::format(r).c_str());
    std::fflush(stdout);
    ok = ok && r.passed;
  }
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-critical semantic broadcast codec: training and evaluation"};
  app.require_subcommand(1);
  CommonOptions o;
  std::vector<std::size_t> rx_counts{1, 3, 5, 7};

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (YAML key: value)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override the config seed");
    sub->add_option("--out", o.out, "Output directory")->capture_default_str();
  };

  auto* ingest = app.add_subcommand("ingest", "Ingest or synthesize the corpus and write the split");
  add_common(ingest);
  auto* train = app.add_subcommand("train", "Pre-train, run alternate learning, evaluate");
  add_common(train);
  train->add_option("--snr-grid", o.snr_grid, "Evaluation grid, e.g. 0:20:2 or 0,5,10");
  train->add_option("--checkpoint", o.checkpoint, "Also copy the checkpoint here");
  auto* sweep = app.add_subcommand("sweep", "Evaluate a checkpoint over an SNR grid");
  add_common(sweep);
  sweep->add_option("--snr-grid", o.snr_grid, "Evaluation grid, e.g. 0:20:2 or 0,5,10");
  sweep->add_option("--checkpoint", o.checkpoint, "Checkpoint to evaluate")->required();
  auto* compare = app.add_subcommand("compare-rx", "Train once per receiver count and tabulate");
  add_common(compare);
  compare->add_option("--snr-grid", o.snr_grid, "Evaluation grid, e.g. 0:20:2 or 0,5,10");
  compare->add_option("--rx-counts", rx_counts, "Receiver counts")->delimiter(',')->capture_default_str();
  app.add_subcommand("oracle-tests", "Run the estimator, gradient, channel and BLEU oracles");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return cmd_ingest(o);
    if (*train) return cmd_train(o);
    if (*sweep) return cmd_sweep(o);
    if (*compare) return cmd_compare_rx(o, rx_counts);
    return cmd_oracles();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
