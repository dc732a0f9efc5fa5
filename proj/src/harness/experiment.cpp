#include "scal/harness/experiment.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#ifndef SCAL_VERSION
#define SCAL_VERSION "unknown"
#endif

namespace scal::harness {

using channel::ChannelConfig;
using channel::ChannelKind;
using trainer::EncoderDecoding;
using trainer::ScheduleVariant;

std::string version_string() { return SCAL_VERSION; }

// ---------------------------------------------------------------------------
// Config

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.ingest.min_len = 4;
  c.ingest.max_len = 30;
  c.model.max_len = 30;
  ChannelConfig rx;
  rx.mu_snr_db = 6.0;
  rx.delta_snr_db = 1.0;
  c.channels.push_back(rx);
  rx.mu_snr_db = 10.0;
  c.channels.push_back(rx);
  rx.delta_snr_db = 2.0;
  c.channels.push_back(rx);
  for (std::size_t n = 0; n < c.channels.size(); ++n) c.channels[n].receiver_id = static_cast<int>(n);
  c.train.receivers = c.channels.size();
  for (int snr = 0; snr <= 20; snr += 2) c.snr_grid.push_back(snr);
  return c;
}

void ExperimentConfig::validate() const {
  if (ingest.min_len < 1 || ingest.max_len > 64 || ingest.min_len > ingest.max_len) {
    throw ConfigError("config: length bounds must satisfy 1 <= min_len <= max_len <= 64");
  }
  if (channels.empty()) throw ConfigError("config: at least one receiver is required");
  if (train.receivers != channels.size()) {
    throw ConfigError("config: " + std::to_string(train.receivers) + " receivers but " +
                      std::to_string(channels.size()) + " channel configs");
  }
  for (const auto& ch : channels) {
    try {
      ch.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: receiver ") + std::to_string(ch.receiver_id) + ": " + e.what());
    }
  }
  if (snr_grid.empty()) throw ConfigError("config: SNR grid is empty");
  if (!std::is_sorted(snr_grid.begin(), snr_grid.end())) throw ConfigError("config: SNR grid must be ascending");
  if (eval_realizations == 0) throw ConfigError("config: eval_realizations must be > 0");
  try {
    train.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string optimizer_name(diff::OptimizerKind k) { return k == diff::OptimizerKind::Adam ? "adam" : "sgd"; }

diff::OptimizerKind parse_optimizer(const std::string& s) {
  const std::string v = lower(s);
  if (v == "adam") return diff::OptimizerKind::Adam;
  if (v == "sgd") return diff::OptimizerKind::Sgd;
  throw ConfigError("config: unknown optimizer '" + s + "' (sgd, adam)");
}

std::string kind_name(ChannelKind k) { return k == ChannelKind::Rayleigh ? "rayleigh" : "awgn"; }

ChannelKind parse_kind(const std::string& s) {
  const std::string v = lower(s);
  if (v == "awgn") return ChannelKind::Awgn;
  if (v == "rayleigh") return ChannelKind::Rayleigh;
  throw ConfigError("config: unknown channel kind '" + s + "' (awgn, rayleigh)");
}

// Shortest decimal that round-trips, so emit/parse is lossless.
// Shortest text that parses back to exactly `v`.
std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Key -> (reader, writer) over an ExperimentConfig.
struct Field {
  std::function<void(ExperimentConfig&, const YAML::Node&)> read;
  std::function<void(const ExperimentConfig&, YAML::Emitter&)> write;
};

template <typename T>
Field scalar(T ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, const YAML::Node& n) { c.*member = n.as<T>(); },
          [member](const ExperimentConfig& c, YAML::Emitter& e) { e << c.*member; }};
}

template <typename Get>
Field size_field(Get get) {
  return {[get](ExperimentConfig& c, const YAML::Node& n) { get(c) = n.as<std::size_t>(); },
          [get](const ExperimentConfig& c, YAML::Emitter& e) {
            e << static_cast<std::uint64_t>(get(c));
          }};
}

template <typename Get>
Field double_field(Get get) {
  return {[get](ExperimentConfig& c, const YAML::Node& n) { get(c) = n.as<double>(); },
          [get](const ExperimentConfig& c, YAML::Emitter& e) {
            e << fmt_double(get(c));
          }};
}

template <typename Get>
Field bool_field(Get get) {
  return {[get](ExperimentConfig& c, const YAML::Node& n) { get(c) = n.as<bool>(); },
          [get](const ExperimentConfig& c, YAML::Emitter& e) { e << get(c); }};
}

template <typename Get>
Field optional_double_field(Get get) {
  return {[get](ExperimentConfig& c, const YAML::Node& n) {
            if (n.IsNull() || lower(n.as<std::string>()) == "none") {
              get(c).reset();
            } else {
              get(c) = n.as<double>();
            }
          },
          [get](const ExperimentConfig& c, YAML::Emitter& e) {
            const auto& v = get(c);
            if (v) {
              e << fmt_double(*v);
            } else {
              e << "none";
            }
          }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  using C = ExperimentConfig;
  static const std::vector<std::pair<std::string, Field>> f = {
      {"seed", scalar(&C::seed)},
      {"corpus_path",
       {[](C& c, const YAML::Node& n) { c.corpus.path = n.IsNull() ? std::string() : n.as<std::string>(); },
        [](const C& c, YAML::Emitter& e) { e << YAML::DoubleQuoted << c.corpus.path.string(); }}},
      {"synthetic_vocab", size_field([](auto& c) -> auto& { return c.corpus.synthetic.vocab_size; })},
      {"synthetic_sentences", size_field([](auto& c) -> auto& { return c.corpus.synthetic.sentences; })},
      {"synthetic_min_len", size_field([](auto& c) -> auto& { return c.corpus.synthetic.min_len; })},
      {"synthetic_max_len", size_field([](auto& c) -> auto& { return c.corpus.synthetic.max_len; })},
      {"min_len", size_field([](auto& c) -> auto& { return c.ingest.min_len; })},
      {"max_len", size_field([](auto& c) -> auto& { return c.ingest.max_len; })},
      {"vocab_cap", size_field([](auto& c) -> auto& { return c.ingest.vocab_cap; })},
      {"model_width", size_field([](auto& c) -> auto& { return c.model.model_width; })},
      {"code_dim", size_field([](auto& c) -> auto& { return c.model.code_dim; })},
      {"bits", size_field([](auto& c) -> auto& { return c.model.bits; })},
      {"dequant_width", size_field([](auto& c) -> auto& { return c.model.dequant_width; })},
      {"ffn_width", size_field([](auto& c) -> auto& { return c.model.ffn_width; })},
      {"encoder_blocks", size_field([](auto& c) -> auto& { return c.model.encoder_blocks; })},
      {"decoder_blocks", size_field([](auto& c) -> auto& { return c.model.decoder_blocks; })},
      {"use_csi", bool_field([](auto& c) -> auto& { return c.model.use_csi; })},
      {"batch_size", size_field([](auto& c) -> auto& { return c.train.batch_size; })},
      {"lr", double_field([](auto& c) -> auto& { return c.train.lr; })},
      {"pretrain_lr", optional_double_field([](auto& c) -> auto& { return c.train.pretrain_lr; })},
      {"decoder_lr", optional_double_field([](auto& c) -> auto& { return c.train.decoder_lr; })},
      {"encoder_lr", optional_double_field([](auto& c) -> auto& { return c.train.encoder_lr; })},
      {"optimizer",
       {[](C& c, const YAML::Node& n) { c.train.optimizer = parse_optimizer(n.as<std::string>()); },
        [](const C& c, YAML::Emitter& e) { e << optimizer_name(c.train.optimizer); }}},
      {"pretrain_optimizer",
       {[](C& c, const YAML::Node& n) { c.train.pretrain_optimizer = parse_optimizer(n.as<std::string>()); },
        [](const C& c, YAML::Emitter& e) { e << optimizer_name(c.train.pretrain_optimizer); }}},
      {"k", size_field([](auto& c) -> auto& { return c.train.k; })},
      {"kappa", size_field([](auto& c) -> auto& { return c.train.kappa; })},
      {"pretrain_epochs", size_field([](auto& c) -> auto& { return c.train.pretrain_epochs; })},
      {"end_epoch", size_field([](auto& c) -> auto& { return c.train.end_epoch; })},
      {"batches_per_epoch", size_field([](auto& c) -> auto& { return c.train.batches_per_epoch; })},
      {"sigma", double_field([](auto& c) -> auto& { return c.train.sigma; })},
      {"gamma", double_field([](auto& c) -> auto& { return c.train.gamma; })},
      {"schedule",
       {[](C& c, const YAML::Node& n) {
          const std::string v = lower(n.as<std::string>());
          if (v == "cycle") {
            c.train.schedule = ScheduleVariant::Cycle;
          } else if (v == "batch_modulo") {
            c.train.schedule = ScheduleVariant::BatchModulo;
          } else {
            throw ConfigError("config: unknown schedule '" + v + "' (cycle, batch_modulo)");
          }
        },
        [](const C& c, YAML::Emitter& e) {
          e << (c.train.schedule == ScheduleVariant::Cycle ? "cycle" : "batch_modulo");
        }}},
      {"encoder_decoding",
       {[](C& c, const YAML::Node& n) {
          const std::string v = lower(n.as<std::string>());
          if (v == "greedy") {
            c.train.encoder_decoding = EncoderDecoding::Greedy;
          } else if (v == "sampled") {
            c.train.encoder_decoding = EncoderDecoding::Sampled;
          } else {
            throw ConfigError("config: unknown encoder_decoding '" + v + "' (greedy, sampled)");
          }
        },
        [](const C& c, YAML::Emitter& e) {
          e << (c.train.encoder_decoding == EncoderDecoding::Greedy ? "greedy" : "sampled");
        }}},
      {"metric",
       {[](C& c, const YAML::Node& n) { c.train.metric = n.as<std::string>(); },
        [](const C& c, YAML::Emitter& e) { e << c.train.metric; }}},
      {"guard_fraction", double_field([](auto& c) -> auto& { return c.train.guard_fraction; })},
      {"guard_cycles", size_field([](auto& c) -> auto& { return c.train.guard_cycles; })},
      {"monitor_window", size_field([](auto& c) -> auto& { return c.train.monitor.window; })},
      {"monitor_slope_tolerance", double_field([](auto& c) -> auto& { return c.train.monitor.slope_tolerance; })},
      {"monitor_variance_tolerance",
       double_field([](auto& c) -> auto& { return c.train.monitor.variance_tolerance; })},
      {"pretrain_noiseless", bool_field([](auto& c) -> auto& { return c.pretrain_noiseless; })},
      {"receivers",
       {[](C& c, const YAML::Node& n) {
          if (!n.IsSequence()) throw ConfigError("config: receivers must be a list");
          c.channels.clear();
          for (const auto& item : n) {
            ChannelConfig ch;
            for (const auto& kv : item) {
              const std::string key = kv.first.as<std::string>();
              if (key == "kind") {
                ch.kind = parse_kind(kv.second.as<std::string>());
              } else if (key == "mu_snr_db") {
                ch.mu_snr_db = kv.second.as<double>();
              } else if (key == "delta_snr_db") {
                ch.delta_snr_db = kv.second.as<double>();
              } else if (key == "per_symbol_fading") {
                ch.per_symbol_fading = kv.second.as<bool>();
              } else {
                throw ConfigError("config: unknown receiver key '" + key + "'");
              }
            }
            ch.receiver_id = static_cast<int>(c.channels.size());
            c.channels.push_back(ch);
          }
          c.train.receivers = c.channels.size();
        },
        [](const C& c, YAML::Emitter& e) {
          e << YAML::BeginSeq;
          for (const auto& ch : c.channels) {
            e << YAML::Flow << YAML::BeginMap << YAML::Key << "kind" << YAML::Value << kind_name(ch.kind)
              << YAML::Key << "mu_snr_db" << YAML::Value << fmt_double(ch.mu_snr_db) << YAML::Key
              << "delta_snr_db" << YAML::Value << fmt_double(ch.delta_snr_db) << YAML::Key << "per_symbol_fading"
              << YAML::Value << ch.per_symbol_fading << YAML::EndMap;
          }
          e << YAML::EndSeq;
        }}},
      {"snr_grid",
       {[](C& c, const YAML::Node& n) {
          if (n.IsSequence()) {
            c.snr_grid = n.as<std::vector<double>>();
          } else {
            c.snr_grid = parse_snr_grid(n.as<std::string>());
          }
        },
        [](const C& c, YAML::Emitter& e) {
          e << YAML::Flow << YAML::BeginSeq;
          for (double v : c.snr_grid) e << fmt_double(v);
          e << YAML::EndSeq;
        }}},
      {"eval_realizations", size_field([](auto& c) -> auto& { return c.eval_realizations; })},
      {"eval_split",
       {[](C& c, const YAML::Node& n) {
          const std::string v = lower(n.as<std::string>());
          if (v == "train") {
            c.eval_split = EvalSplit::Train;
          } else if (v == "test") {
            c.eval_split = EvalSplit::Test;
          } else {
            throw ConfigError("config: unknown eval_split '" + v + "' (train, test)");
          }
        },
        [](const C& c, YAML::Emitter& e) { e << (c.eval_split == EvalSplit::Train ? "train" : "test"); }}},
      {"eval_sentences", size_field([](auto& c) -> auto& { return c.eval_sentences; })},
  };
  return f;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const ExperimentConfig& base) {
  ExperimentConfig c = base;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (root.IsNull()) return c;
  if (!root.IsMap()) throw ConfigError("config: expected a key: value mapping");
  std::map<std::string, const Field*> by_name;
  for (const auto& [name, field] : fields()) by_name[name] = &field;
  for (const auto& kv : root) {
    const std::string key = kv.first.as<std::string>();
    const auto it = by_name.find(key);
    if (it == by_name.end()) throw ConfigError("config: unknown key '" + key + "'");
    try {
      it->second->read(c, kv.second);
    } catch (const YAML::Exception& e) {
      throw ConfigError("config: bad value for '" + key + "': " + e.what());
    }
  }
  c.model.max_len = c.ingest.max_len;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string emit_config(const ExperimentConfig& config) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  for (const auto& [name, field] : fields()) {
    e << YAML::Key << name << YAML::Value;
    field.write(config, e);
  }
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : emit_config(config)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<double> parse_snr_grid(const std::string& text) {
  std::vector<double> grid;
  auto to_double = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw ConfigError("snr grid: cannot parse '" + s + "'");
    }
    if (used != s.size()) throw ConfigError("snr grid: cannot parse '" + s + "'");
    return v;
  };
  std::string trimmed;
  for (char ch : text) {
    if (!std::isspace(static_cast<unsigned char>(ch))) trimmed += ch;
  }
  if (trimmed.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::stringstream ss(trimmed);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(to_double(p));
    if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
      throw ConfigError("snr grid: range must be start:stop:step with step > 0 and stop >= start");
    }
    const auto steps = static_cast<std::size_t>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
    for (std::size_t i = 0; i <= steps; ++i) grid.push_back(parts[0] + static_cast<double>(i) * parts[2]);
  } else {
    std::stringstream ss(trimmed);
    for (std::string p; std::getline(ss, p, ',');) {
      if (!p.empty()) grid.push_back(to_double(p));
    }
  }
  if (grid.empty()) throw ConfigError("snr grid: empty");
  if (!std::is_sorted(grid.begin(), grid.end())) throw ConfigError("snr grid: must be ascending");
  return grid;
}

// ---------------------------------------------------------------------------
// Evaluation

const ReportRow& EvaluationReport::at(int receiver, double snr_db) const {
  for (const auto& r : rows) {
    if (r.receiver == receiver && r.snr_db == snr_db) return r;
  }
  throw std::out_of_range("report: no row for receiver " + std::to_string(receiver) + " at " +
                          fmt_double(snr_db) + " dB");
}

EvaluationReport evaluate(const codec::Encoder& encoder, std::span<const codec::Decoder> decoders,
                          std::span<const ChannelConfig> channels, std::span<const Sentence> sentences,
                          std::span<const double> snr_grid, std::size_t realizations, const std::string& metric,
                          std::uint64_t seed) {
  if (decoders.size() != channels.size()) throw std::invalid_argument("evaluate: decoder/channel count mismatch");
  if (snr_grid.empty()) throw std::invalid_argument("evaluate: SNR grid is empty");
  if (sentences.empty()) throw std::invalid_argument("evaluate: no sentences");
  if (realizations == 0) throw std::invalid_argument("evaluate: realizations must be > 0");
  const auto& score = reward::default_registry().get(metric);

  std::vector<diff::Tensor> symbols;
  symbols.reserve(sentences.size());
  for (const auto& s : sentences) symbols.push_back(channel::modulate(codec::quantize(encoder, codec::encode(encoder, s))));

  EvaluationReport report;
  report.seed = seed;
  report.version = version_string();
  for (std::size_t n = 0; n < decoders.size(); ++n) {
    for (std::size_t g = 0; g < snr_grid.size(); ++g) {
      ChannelConfig fixed = channels[n];
      fixed.mu_snr_db = snr_grid[g];
      fixed.delta_snr_db = 0.0;
      channel::Rng rng = channel::make_stream(seed, (std::uint64_t{9} << 32) | (n << 16) | g);
      ReportRow row;
      row.receiver = static_cast<int>(n);
      row.snr_db = snr_grid[g];
      double count = 0.0;
      for (std::size_t i = 0; i < sentences.size(); ++i) {
        for (std::size_t r = 0; r < realizations; ++r) {
          const channel::ReceivedFrame frame = channel::transmit(symbols[i], fixed, rng);
          const codec::DecodeResult out =
              codec::decode_greedy(decoders[n], {frame.signal, frame.realization.gain}, decoders[n].config.max_len);
          for (int k = 1; k <= 4; ++k) {
            row.bleu[static_cast<std::size_t>(k - 1)] += reward::bleu_n(out.tokens, sentences[i], k);
          }
          row.war += reward::war(out.tokens, sentences[i]);
          row.mean_reward += score(out.tokens, sentences[i]);
          count += 1.0;
        }
      }
      for (double& b : row.bleu) b /= count;
      row.war /= count;
      row.mean_reward /= count;
      report.rows.push_back(row);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Output

void write_report_csv(const EvaluationReport& report, std::ostream& os) {
  os << "receiver,snr_db,bleu1,bleu2,bleu3,bleu4,war,mean_reward,seed,config_hash,version\n";
  char buf[256];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%d,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%llu,%016llx,", r.receiver,
                  fmt_double(r.snr_db).c_str(), r.bleu[0], r.bleu[1], r.bleu[2], r.bleu[3], r.war, r.mean_reward,
                  static_cast<unsigned long long>(report.seed), static_cast<unsigned long long>(report.config_hash));
    os << buf << report.version << "\n";
  }
}

void write_training_log_csv(std::span<const trainer::LogRow> log, std::ostream& os) {
  os << "phase,cycle,receiver,mean_reward,bleu1,bleu2,bleu3,bleu4,war,loss,samples,wall_seconds\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%zu,%.3f\n", r.phase.c_str(),
                  r.cycle, r.receiver, r.stats.mean_reward, r.stats.bleu[0], r.stats.bleu[1], r.stats.bleu[2],
                  r.stats.bleu[3], r.stats.war, r.stats.loss, r.stats.samples, r.wall_seconds);
    os << buf;
  }
}

void write_rx_table_csv(std::span<const RxCountRow> rows, std::ostream& os) {
  os << "receivers,bleu1,bleu2,bleu3,bleu4,war\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.receivers, r.bleu[0], r.bleu[1], r.bleu[2],
                  r.bleu[3], r.war);
    os << buf;
  }
}

namespace {

void write_svg(const std::filesystem::path& path, const std::string& title, const std::string& y_label,
               const std::vector<double>& x, const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 130, kTop = 40, kBottom = 50;
  const double x0 = x.front();
  const double x1 = x.size() > 1 ? x.back() : x.front() + 1.0;
  auto px = [&](double v) { return kLeft + (v - x0) / (x1 - x0) * (kW - kLeft - kRight); };
  auto py = [&](double v) { return kH - kBottom - std::clamp(v, 0.0, 1.0) * (kH - kTop - kBottom); };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" font-family=\"sans-serif\" "
                "font-size=\"12\">\n",
                kW, kH);
  os << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/><text x=\"%.1f\" "
                  "y=\"%.1f\" text-anchor=\"end\">%.1f</text>\n",
                  kLeft, py(v), kW - kRight, py(v), kLeft - 6, py(v) + 4, v);
    os << buf;
  }
  for (double v : x) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%s</text>\n", px(v),
                  kH - kBottom + 18, fmt_double(v).c_str());
    os << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">SNR (dB)</text>\n<text x=\"16\" y=\"%.1f\" "
                "transform=\"rotate(-90 16 %.1f)\" text-anchor=\"middle\">",
                (kLeft + kW - kRight) / 2, kH - 12, kH / 2, kH / 2);
  os << buf << y_label << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % std::size(kColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < x.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px(x[i]), py(series[s].second[i]));
      os << buf;
    }
    os << "\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" fill=\"%s\">", kW - kRight + 10,
                  kTop + 18.0 * static_cast<double>(s), color);
    os << buf << series[s].first << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace

void write_plots(const EvaluationReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::set<int> receivers;
  std::vector<double> grid;
  for (const auto& r : report.rows) {
    receivers.insert(r.receiver);
    if (std::find(grid.begin(), grid.end(), r.snr_db) == grid.end()) grid.push_back(r.snr_db);
  }
  std::sort(grid.begin(), grid.end());
  const std::vector<std::pair<std::string, std::function<double(const ReportRow&)>>> metrics = {
      {"bleu1", [](const ReportRow& r) { return r.bleu[0]; }}, {"bleu2", [](const ReportRow& r) { return r.bleu[1]; }},
      {"bleu3", [](const ReportRow& r) { return r.bleu[2]; }}, {"bleu4", [](const ReportRow& r) { return r.bleu[3]; }},
      {"war", [](const ReportRow& r) { return r.war; }},
  };
  for (const auto& [name, get] : metrics) {
    std::vector<std::pair<std::string, std::vector<double>>> series;
    for (int n : receivers) {
      std::vector<double> ys;
      for (double snr : grid) ys.push_back(get(report.at(n, snr)));
      series.emplace_back("RX " + std::to_string(n + 1), std::move(ys));
    }
    std::string upper = name;
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    write_svg(dir / (name + ".svg"), upper + " vs SNR", upper, grid, series);
  }
}

// ---------------------------------------------------------------------------
// Experiments

namespace {

std::span<const Sentence> eval_sentences(const ExperimentConfig& config, const Dataset& ds) {
  const auto& split = config.eval_split == EvalSplit::Train ? ds.train : ds.test;
  if (split.empty()) throw CorpusError("evaluation split is empty");
  const std::size_t n = config.eval_sentences == 0 ? split.size() : std::min(config.eval_sentences, split.size());
  return std::span<const Sentence>(split.data(), n);
}

Dataset load_dataset(const ExperimentConfig& config) {
  IngestOptions opts = config.ingest;
  opts.seed = config.seed;
  return ingest_corpus(config.corpus, opts);
}

void write_text(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  body(os);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config_in, const std::filesystem::path& out,
                                const ProgressFn& progress) {
  ExperimentConfig config = config_in;
  config.train.seed = config.seed;
  config.train.receivers = config.channels.size();
  config.model.max_len = config.ingest.max_len;
  config.validate();
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    write_text(out / "config_resolved.txt", [&](std::ostream& os) { os << emit_config(config); });
  }

  Dataset ds = load_dataset(config);
  config.model.vocab_size = ds.vocab.size();

  codec::Rng init = trainer::stream(config.train, trainer::streams::kInit);
  codec::Encoder encoder = codec::Encoder::init(config.model, init);
  codec::Decoder decoder = codec::Decoder::init(config.model, init);

  std::vector<trainer::LogRow> pre_log;
  const trainer::PretrainChannel pc{config.pretrain_noiseless, config.channels};
  decoder = trainer::pretrain(ds.train, encoder, std::move(decoder), config.train, pc, &pre_log);
  if (progress) {
    for (const auto& r : pre_log) progress(r);
  }

  trainer::TrainResult training =
      trainer::run_alternate_schedule(ds.train, std::move(encoder), decoder, config.channels, config.train, progress);
  pre_log.insert(pre_log.end(), training.log.begin(), training.log.end());
  training.log = std::move(pre_log);
  ExperimentResult result{std::move(ds), std::move(training), {}};

  if (!out.empty()) {
    write_text(out / "training_log.csv", [&](std::ostream& os) { write_training_log_csv(result.training.log, os); });
  }
  if (result.training.aborted) throw trainer::DivergenceError(result.training.abort_reason);

  if (!out.empty()) {
    codec::save_checkpoint({result.dataset.vocab.hash(), result.training.encoder, result.training.decoders},
                           out / "checkpoint.bin");
  }
  result.report = evaluate(result.training.encoder, result.training.decoders, config.channels,
                           eval_sentences(config, result.dataset), config.snr_grid, config.eval_realizations,
                           config.train.metric, config.seed);
  result.report.config_hash = config_hash(config);
  if (!out.empty()) {
    write_text(out / "report.csv", [&](std::ostream& os) { write_report_csv(result.report, os); });
    write_plots(result.report, out / "plots");
  }
  return result;
}

EvaluationReport sweep_snr(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                           std::span<const double> snr_grid, const std::filesystem::path& out) {
  if (snr_grid.empty()) throw ConfigError("sweep: SNR grid is empty");
  if (!std::is_sorted(snr_grid.begin(), snr_grid.end())) throw ConfigError("sweep: SNR grid must be ascending");
  const Dataset ds = load_dataset(config);
  const codec::Checkpoint ckpt = codec::load_checkpoint(checkpoint, ds.vocab.hash());
  if (ckpt.decoders.size() != config.channels.size()) {
    throw ConfigError("sweep: checkpoint has " + std::to_string(ckpt.decoders.size()) + " receivers, config has " +
                      std::to_string(config.channels.size()));
  }
  EvaluationReport report = evaluate(ckpt.encoder, ckpt.decoders, config.channels, eval_sentences(config, ds),
                                     snr_grid, config.eval_realizations, config.train.metric, config.seed);
  report.config_hash = config_hash(config);
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    write_text(out / "report.csv", [&](std::ostream& os) { write_report_csv(report, os); });
    write_plots(report, out / "plots");
  }
  return report;
}

std::vector<RxCountRow> compare_rx_counts(const ExperimentConfig& base, std::span<const std::size_t> counts,
                                          const std::filesystem::path& out, const ProgressFn& progress) {
  if (base.channels.empty()) throw ConfigError("compare-rx: base config has no receivers");
  std::vector<RxCountRow> table;
  for (std::size_t count : counts) {
    if (count == 0) throw ConfigError("compare-rx: receiver counts must be positive");
    ExperimentConfig c = base;
    c.channels.clear();
    for (std::size_t n = 0; n < count; ++n) {
      ChannelConfig ch = base.channels[n % base.channels.size()];
      ch.receiver_id = static_cast<int>(n);
      c.channels.push_back(ch);
    }
    c.train.receivers = count;
    const std::filesystem::path sub = out.empty() ? out : out / ("rx" + std::to_string(count));
    const ExperimentResult r = run_experiment(c, sub, progress);
    RxCountRow row;
    row.receivers = count;
    for (const auto& rr : r.report.rows) {
      for (std::size_t k = 0; k < 4; ++k) row.bleu[k] += rr.bleu[k];
      row.war += rr.war;
    }
    const double cells = static_cast<double>(r.report.rows.size());
    for (double& b : row.bleu) b /= cells;
    row.war /= cells;
    table.push_back(row);
  }
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    write_text(out / "rx_compare.csv", [&](std::ostream& os) { write_rx_table_csv(table, os); });
  }
  return table;
}

}  // namespace scal::harness
