#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "scal/harness/corpus.hpp"
#include "scal/harness/experiment.hpp"

using namespace scal;
using namespace scal::harness;

namespace fs = std::filesystem;

namespace {

std::vector<std::vector<std::string>> numbered_sentences(std::size_t n) {
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"w" + std::to_string(i % 7), "x" + std::to_string(i % 5), "y" + std::to_string(i % 3),
                   "s" + std::to_string(i)});
  }
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("scal_test_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Drops the trailing wall_seconds column of every line.
std::string without_wall_time(const std::string& csv) {
  std::istringstream is(csv);
  std::string line, out;
  while (std::getline(is, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

ExperimentConfig tiny_experiment() {
  ExperimentConfig c = ExperimentConfig::defaults();
  c.corpus.synthetic = {10, 60, 2, 4};
  c.ingest.min_len = 2;
  c.ingest.max_len = 4;
  const auto m = test::tiny_config();
  c.model.model_width = m.model_width;
  c.model.code_dim = m.code_dim;
  c.model.bits = m.bits;
  c.model.dequant_width = m.dequant_width;
  c.model.ffn_width = m.ffn_width;
  c.train.batch_size = 4;
  c.train.k = 2;
  c.train.kappa = 1;
  c.train.pretrain_epochs = 1;
  c.train.end_epoch = 2;
  c.train.batches_per_epoch = 3;
  c.train.lr = 1e-3;
  c.snr_grid = {0.0, 20.0};
  c.eval_realizations = 2;
  c.eval_sentences = 5;
  c.channels.resize(2);
  return c;
}

}  // namespace

TEST_CASE("tokenizer lowercases and keeps apostrophes") {
  CHECK(tokenize("Hello, World! It's  fine.") == std::vector<std::string>{"hello", "world", "it's", "fine"});
  CHECK(tokenize("   ").empty());
}

TEST_CASE("ingest splits 500 sentences into 400 and 100") {
  IngestOptions o;
  const Dataset ds = ingest_sentences(numbered_sentences(500), o);
  CHECK(ds.counts.read == 500);
  CHECK(ds.counts.kept == 500);
  CHECK(ds.train.size() == 400);
  CHECK(ds.test.size() == 100);
  for (const auto& s : ds.train) CHECK_NOTHROW(codec::validate_sentence(s, ds.vocab.size(), o.max_len));
}

TEST_CASE("length and vocabulary filters are counted") {
  auto sentences = numbered_sentences(20);
  sentences.push_back(std::vector<std::string>(31, "w1"));
  sentences.push_back({"w1", "x1"});
  IngestOptions o;
  const Dataset ds = ingest_sentences(sentences, o);
  CHECK(ds.counts.read == 22);
  CHECK(ds.counts.too_long == 1);
  CHECK(ds.counts.too_short == 1);
  CHECK(ds.counts.kept == 20);

  std::vector<std::vector<std::string>> mixed;
  for (int i = 0; i < 10; ++i) mixed.push_back({"a", "b", "c", "d"});
  for (int i = 0; i < 4; ++i) mixed.push_back({"a", "b", "c", "rare" + std::to_string(i)});
  IngestOptions capped;
  capped.vocab_cap = 4;
  const Dataset small = ingest_sentences(mixed, capped);
  CHECK(small.counts.out_of_vocabulary == 4);
  CHECK(small.counts.kept == 10);
  CHECK(small.vocab.size() == 4 + 3);
}

TEST_CASE("the split is seeded") {
  IngestOptions a;
  a.seed = 3;
  IngestOptions b = a;
  b.seed = 4;
  const auto s = numbered_sentences(50);
  CHECK(ingest_sentences(s, a).train == ingest_sentences(s, a).train);
  CHECK(ingest_sentences(s, a).test != ingest_sentences(s, b).test);
}

TEST_CASE("an empty result is an error naming the counts") {
  IngestOptions o;
  o.min_len = 10;
  try {
    ingest_sentences(numbered_sentences(5), o);
    FAIL("expected CorpusError");
  } catch (const CorpusError& e) {
    CHECK(std::string(e.what()).find("too short") != std::string::npos);
  }
}

TEST_CASE("synthetic corpus respects its spec") {
  const SyntheticSpec spec{30, 200, 4, 8};
  const auto s = generate_synthetic(spec, 5);
  CHECK(s.size() == 200);
  std::set<std::vector<std::string>> unique(s.begin(), s.end());
  CHECK(unique.size() == 200);
  for (const auto& x : s) {
    CHECK(x.size() >= 4);
    CHECK(x.size() <= 8);
  }
  CHECK(generate_synthetic(spec, 5) == s);
}

TEST_CASE("pad_batch appends eos and pads") {
  const auto p = pad_batch({{3, 4, 5}, {6}});
  CHECK(p[0] == std::vector<int>{3, 4, 5, Vocabulary::kEos});
  CHECK(p[1] == std::vector<int>{6, Vocabulary::kEos, Vocabulary::kPad, Vocabulary::kPad});
}

TEST_CASE("snr grids parse from lists and ranges") {
  CHECK(parse_snr_grid("0:20:5") == std::vector<double>{0, 5, 10, 15, 20});
  CHECK(parse_snr_grid("0,2.5,10") == std::vector<double>{0, 2.5, 10});
  CHECK(parse_snr_grid("0:20:2").size() == 11);
  CHECK_THROWS_AS(parse_snr_grid(""), ConfigError);
  CHECK_THROWS_AS(parse_snr_grid("10,5"), ConfigError);
  CHECK_THROWS_AS(parse_snr_grid("0:10:0"), ConfigError);
}

TEST_CASE("config text round-trips and rejects unknown keys") {
  const ExperimentConfig d = ExperimentConfig::defaults();
  CHECK(d.channels.size() == 3);
  CHECK(d.snr_grid.size() == 11);
  const ExperimentConfig c = parse_config(
      "seed: 7\nkappa: 20\ndecoder_lr: 3.0e-4\noptimizer: adam\nsnr_grid: \"0:10:5\"\n"
      "receivers:\n  - {kind: rayleigh, mu_snr_db: 4, delta_snr_db: 0.5, per_symbol_fading: true}\n");
  CHECK(c.seed == 7);
  CHECK(c.train.kappa == 20);
  CHECK(c.train.decoder_lr.value() == doctest::Approx(3e-4));
  CHECK(c.snr_grid == std::vector<double>{0, 5, 10});
  REQUIRE(c.channels.size() == 1);
  CHECK(c.channels[0].kind == channel::ChannelKind::Rayleigh);
  CHECK(c.channels[0].per_symbol_fading);
  const std::string text = emit_config(c);
  CHECK(emit_config(parse_config(text)) == text);
  CHECK(config_hash(parse_config(text)) == config_hash(c));
  CHECK(config_hash(c) != config_hash(d));
  CHECK_THROWS_AS(parse_config("sead: 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("optimizer: rmsprop\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("receivers:\n  - {kind: awgn, snr: 3}\n"), ConfigError);
}

TEST_CASE("evaluating a perfect reconstruction scores one") {
  auto cfg = test::tiny_config(9, 1);
  std::mt19937_64 rng(1);
  const codec::Encoder enc = codec::Encoder::init(cfg, rng);
  std::vector<codec::Decoder> decs{codec::Decoder::init(cfg, rng)};
  for (double& v : decs[0].params.get("dec.out.w").values()) v = 0.0;
  auto& b = decs[0].params.get("dec.out.b");
  for (double& v : b.values()) v = 0.0;
  b[3] = 100.0;
  const std::vector<channel::ChannelConfig> chans(1);
  const std::vector<Sentence> sentences{{3}, {3}};
  const std::vector<double> grid{30.0, 40.0};
  const EvaluationReport rep = evaluate(enc, decs, chans, sentences, grid, 3, "bleu", 1);
  REQUIRE(rep.rows.size() == 2);
  for (const auto& r : rep.rows) {
    CHECK(r.bleu[0] == doctest::Approx(1.0));
    CHECK(r.war == doctest::Approx(1.0));
  }
  CHECK(rep.at(0, 40.0).snr_db == 40.0);
  CHECK_THROWS(rep.at(1, 40.0));
}

TEST_CASE("a full tiny experiment writes complete, reproducible outputs") {
  const ExperimentConfig c = tiny_experiment();
  const fs::path a = scratch("run_a");
  const fs::path b = scratch("run_b");
  const ExperimentResult ra = run_experiment(c, a);
  run_experiment(c, b);

  for (const char* f : {"report.csv", "training_log.csv", "checkpoint.bin", "config_resolved.txt",
                        "plots/bleu1.svg", "plots/bleu4.svg", "plots/war.svg"}) {
    CHECK_MESSAGE(fs::exists(a / f), f);
  }
  CHECK(ra.report.rows.size() == c.channels.size() * c.snr_grid.size());
  for (const auto& r : ra.report.rows) {
    CHECK(r.bleu[0] >= 0.0);
    CHECK(r.bleu[0] <= 1.0);
    CHECK(r.war <= 1.0);
  }
  CHECK(ra.report.config_hash == config_hash(parse_config(slurp(a / "config_resolved.txt"))));
  CHECK(ra.training.cycles == 3);

  CHECK(slurp(a / "report.csv") == slurp(b / "report.csv"));
  CHECK(slurp(a / "checkpoint.bin") == slurp(b / "checkpoint.bin"));
  CHECK(slurp(a / "config_resolved.txt") == slurp(b / "config_resolved.txt"));
  CHECK(without_wall_time(slurp(a / "training_log.csv")) == without_wall_time(slurp(b / "training_log.csv")));
  const std::string report = slurp(a / "report.csv");
  CHECK(report.rfind("receiver,snr_db,bleu1,bleu2,bleu3,bleu4,war,mean_reward,seed,config_hash,version", 0) == 0);

  SUBCASE("sweep reproduces the report and guards the vocabulary") {
    const auto rep = sweep_snr(c, a / "checkpoint.bin", c.snr_grid, scratch("sweep"));
    REQUIRE(rep.rows.size() == ra.report.rows.size());
    for (std::size_t i = 0; i < rep.rows.size(); ++i) CHECK(rep.rows[i].bleu == ra.report.rows[i].bleu);
    ExperimentConfig other = c;
    other.corpus.synthetic.vocab_size = 12;
    CHECK_THROWS_AS(sweep_snr(other, a / "checkpoint.bin", c.snr_grid, {}), codec::CheckpointError);
    ExperimentConfig fewer = c;
    fewer.channels.resize(1);
    CHECK_THROWS_AS(sweep_snr(fewer, a / "checkpoint.bin", c.snr_grid, {}), ConfigError);
    CHECK_THROWS_AS(sweep_snr(c, a / "checkpoint.bin", std::vector<double>{}, {}), ConfigError);
  }
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(scratch("sweep"));
}

TEST_CASE("a single receiver run works") {
  ExperimentConfig c = tiny_experiment();
  c.channels.resize(1);
  const ExperimentResult r = run_experiment(c, {});
  CHECK(r.training.decoders.size() == 1);
  CHECK(r.report.rows.size() == 2);
}

TEST_CASE("compare-rx tabulates one row per count") {
  ExperimentConfig c = tiny_experiment();
  const fs::path out = scratch("rx");
  const std::vector<std::size_t> counts{1, 3};
  const auto table = compare_rx_counts(c, counts, out);
  REQUIRE(table.size() == 2);
  CHECK(table[0].receivers == 1);
  CHECK(table[1].receivers == 3);
  CHECK(fs::exists(out / "rx1" / "report.csv"));
  CHECK(fs::exists(out / "rx3" / "report.csv"));
  CHECK(fs::exists(out / "rx_compare.csv"));
  fs::remove_all(out);
}

TEST_CASE("a divergence abort keeps the training log") {
  ExperimentConfig c = tiny_experiment();
  c.train.guard_fraction = 1.0;
  c.train.guard_cycles = 1;
  c.train.end_epoch = 6;
  const fs::path out = scratch("diverge");
  CHECK_THROWS_AS(run_experiment(c, out), trainer::DivergenceError);
  CHECK(fs::exists(out / "training_log.csv"));
  CHECK(fs::exists(out / "config_resolved.txt"));
  CHECK_FALSE(fs::exists(out / "checkpoint.bin"));
  CHECK(slurp(out / "training_log.csv").find("encoder") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("invalid experiment configs are rejected") {
  ExperimentConfig c = tiny_experiment();
  c.channels.clear();
  CHECK_THROWS(c.validate());
  ExperimentConfig d = tiny_experiment();
  d.eval_realizations = 0;
  CHECK_THROWS(d.validate());
}
