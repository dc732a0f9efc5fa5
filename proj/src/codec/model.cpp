#include "scal/codec/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace scal::codec {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string("model config: ") + name + " must be > 0");
  };
  positive(model_width, "model_width");
  positive(code_dim, "code_dim");
  positive(bits, "bits");
  positive(dequant_width, "dequant_width");
  positive(ffn_width, "ffn_width");
  positive(encoder_blocks, "encoder_blocks");
  positive(decoder_blocks, "decoder_blocks");
  positive(max_len, "max_len");
  if (vocab_size <= static_cast<std::size_t>(Vocabulary::kFirstContentId)) {
    throw std::invalid_argument("model config: vocabulary has no content tokens");
  }
}

namespace {

Tensor gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(rows, cols);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

void add_dense(ParameterSet& p, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  p.add(name + ".w", gaussian_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng));
  p.add(name + ".b", Tensor(1, out));
}

void add_norm(ParameterSet& p, const std::string& name, std::size_t width) {
  p.add(name + ".g", Tensor(1, width, 1.0));
  p.add(name + ".b", Tensor(1, width));
}

void add_attention(ParameterSet& p, const std::string& name, std::size_t width, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(width));
  for (const char* proj : {".q", ".k", ".v", ".o"}) {
    p.add(name + proj, gaussian_matrix(width, width, s, rng));
  }
}

void add_ffn(ParameterSet& p, const std::string& name, std::size_t width, std::size_t hidden, Rng& rng) {
  add_dense(p, name + ".in", width, hidden, rng);
  add_dense(p, name + ".out", hidden, width, rng);
}

Tensor positional_table(std::size_t rows, std::size_t width) {
  Tensor t(rows, width);
  for (std::size_t pos = 0; pos < rows; ++pos) {
    for (std::size_t i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) * rate;
      t(pos, i) = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return t;
}

Var dense(Tape& t, const ParameterSet& p, const std::string& name, Var x) {
  return t.add(t.matmul(x, t.parameter(p, name + ".w")), t.parameter(p, name + ".b"));
}

Var norm(Tape& t, const ParameterSet& p, const std::string& name, Var x) {
  return t.layer_norm(x, t.parameter(p, name + ".g"), t.parameter(p, name + ".b"));
}

Var attention(Tape& t, const ParameterSet& p, const std::string& name, Var query_in, Var kv_in,
              std::optional<std::size_t> causal) {
  const Var q = t.matmul(query_in, t.parameter(p, name + ".q"));
  const Var k = t.matmul(kv_in, t.parameter(p, name + ".k"));
  const Var v = t.matmul(kv_in, t.parameter(p, name + ".v"));
  const double width = static_cast<double>(t.value(q).cols());
  const Var scores = t.scale(t.matmul(q, k, /*transpose_b=*/true), 1.0 / std::sqrt(width));
  const Var weights = t.softmax(scores, causal);
  return t.matmul(t.matmul(weights, v), t.parameter(p, name + ".o"));
}

Var feed_forward(Tape& t, const ParameterSet& p, const std::string& name, Var x) {
  return dense(t, p, name + ".out", t.relu(dense(t, p, name + ".in", x)));
}

Var add_positions(Tape& t, Var x) {
  const Tensor& v = t.value(x);
  return t.add(x, t.constant(positional_table(v.rows(), v.cols())));
}

std::string block(const char* prefix, std::size_t i) { return std::string(prefix) + ".b" + std::to_string(i); }

}  // namespace

Encoder Encoder::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  Encoder e{config, {}};
  auto& p = e.params;
  const std::size_t d = config.model_width;
  p.add("enc.embed", gaussian_matrix(config.vocab_size, d, 1.0, rng));
  for (std::size_t i = 0; i < config.encoder_blocks; ++i) {
    const std::string b = block("enc", i);
    add_norm(p, b + ".ln1", d);
    add_attention(p, b + ".attn", d, rng);
    add_norm(p, b + ".ln2", d);
    add_ffn(p, b + ".ffn", d, config.ffn_width, rng);
  }
  add_norm(p, "enc.ln", d);
  add_dense(p, "enc.code", d, config.code_dim, rng);
  add_dense(p, "quant", config.code_dim, config.bits, rng);
  return e;
}

Decoder Decoder::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  Decoder dd{config, {}};
  auto& p = dd.params;
  const std::size_t d = config.model_width;
  add_dense(p, "dq", config.use_csi ? 2 * config.bits : config.bits, config.dequant_width, rng);
  add_dense(p, "dec.mem", config.dequant_width, d, rng);
  p.add("dec.embed", gaussian_matrix(config.vocab_size, d, 1.0, rng));
  for (std::size_t i = 0; i < config.decoder_blocks; ++i) {
    const std::string b = block("dec", i);
    add_norm(p, b + ".ln1", d);
    add_attention(p, b + ".self", d, rng);
    add_norm(p, b + ".ln2", d);
    add_attention(p, b + ".cross", d, rng);
    add_norm(p, b + ".ln3", d);
    add_ffn(p, b + ".ffn", d, config.ffn_width, rng);
  }
  add_norm(p, "dec.ln", d);
  add_dense(p, "dec.out", d, config.vocab_size, rng);
  return dd;
}

std::vector<int> with_eos(std::span<const int> sentence) {
  std::vector<int> ids(sentence.begin(), sentence.end());
  ids.push_back(Vocabulary::kEos);
  return ids;
}

// ---------------------------------------------------------------------------

Var encode(Tape& t, const Encoder& enc, std::span<const int> sentence) {
  validate_sentence(sentence, enc.config.vocab_size, enc.config.max_len);
  const auto& p = enc.params;
  const std::vector<int> ids = with_eos(sentence);
  Var h = add_positions(t, t.embedding(t.parameter(p, "enc.embed"), ids));
  for (std::size_t i = 0; i < enc.config.encoder_blocks; ++i) {
    const std::string b = block("enc", i);
    const Var a_in = norm(t, p, b + ".ln1", h);
    h = t.add(h, attention(t, p, b + ".attn", a_in, a_in, std::nullopt));
    h = t.add(h, feed_forward(t, p, b + ".ffn", norm(t, p, b + ".ln2", h)));
  }
  return t.relu(dense(t, p, "enc.code", norm(t, p, "enc.ln", h)));
}

Tensor encode(const Encoder& enc, std::span<const int> sentence) {
  Tape t(false);
  return t.value(encode(t, enc, sentence));
}

Var quantizer_preactivation(Tape& t, const Encoder& enc, Var code) {
  const Tensor& x = t.value(code);
  if (x.cols() != enc.config.code_dim) {
    throw diff::ShapeError("quantize: code " + diff::shape_string(x) + " but code_dim is " +
                           std::to_string(enc.config.code_dim));
  }
  return dense(t, enc.params, "quant", code);
}

Tensor threshold_bits(const Tensor& preactivation) {
  Tensor bits(preactivation.rows(), preactivation.cols());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = preactivation[i] > 0.0 ? 1.0 : 0.0;
  return bits;
}

Tensor quantize(const Encoder& enc, const Tensor& code) {
  if (!code.all_finite()) throw std::invalid_argument("quantize: non-finite code");
  Tape t(false);
  return threshold_bits(t.value(quantizer_preactivation(t, enc, t.constant_ref(code))));
}

Var quantize_straight_through(Tape& t, const Encoder& enc, Var code) {
  return t.straight_through_threshold(quantizer_preactivation(t, enc, code));
}

// ---------------------------------------------------------------------------

Var dequantize(Tape& t, const Decoder& dec, Var signal, const std::vector<double>& gain) {
  const Tensor& y = t.value(signal);
  if (y.cols() != dec.config.bits || y.rows() == 0) {
    throw diff::ShapeError("dequantize: received " + diff::shape_string(y) + " but bits is " +
                           std::to_string(dec.config.bits));
  }
  Var input = signal;
  if (dec.config.use_csi) {
    Tensor csi(y.rows(), y.cols());
    if (gain.size() == 1) {
      for (double& v : csi.values()) v = gain[0];
    } else if (gain.size() == y.size()) {
      std::copy(gain.begin(), gain.end(), csi.values().begin());
    } else {
      throw diff::ShapeError("dequantize: " + std::to_string(gain.size()) + " CSI gains for " +
                             diff::shape_string(y));
    }
    input = t.concat(signal, t.constant(std::move(csi)));
  }
  return t.relu(dense(t, dec.params, "dq", input));
}

Var decoder_memory(Tape& t, const Decoder& dec, Var signal, const std::vector<double>& gain) {
  const Var features = dequantize(t, dec, signal, gain);
  return add_positions(t, t.relu(dense(t, dec.params, "dec.mem", features)));
}

namespace {

Var decoder_hidden(Tape& t, const Decoder& dec, Var memory, std::span<const int> inputs) {
  const auto& p = dec.params;
  Var h = add_positions(t, t.embedding(t.parameter(p, "dec.embed"), inputs));
  for (std::size_t i = 0; i < dec.config.decoder_blocks; ++i) {
    const std::string b = block("dec", i);
    const Var s_in = norm(t, p, b + ".ln1", h);
    h = t.add(h, attention(t, p, b + ".self", s_in, s_in, std::size_t{0}));
    h = t.add(h, attention(t, p, b + ".cross", norm(t, p, b + ".ln2", h), memory, std::nullopt));
    h = t.add(h, feed_forward(t, p, b + ".ffn", norm(t, p, b + ".ln3", h)));
  }
  return norm(t, p, "dec.ln", h);
}

}  // namespace

Var decoder_logits(Tape& t, const Decoder& dec, Var memory, std::span<const int> inputs) {
  return dense(t, dec.params, "dec.out", decoder_hidden(t, dec, memory, inputs));
}

Tensor next_token_logits(Tape& t, const Decoder& dec, Var memory, std::span<const int> prefix) {
  // layer norm is row-wise, so projecting only the last row is exact
  const Var h = decoder_hidden(t, dec, memory, prefix);
  const Tensor& hv = t.value(h);
  return t.value(dense(t, dec.params, "dec.out", t.slice(h, hv.rows() - 1, 1, 0, hv.cols())));
}

namespace {

std::vector<double> log_softmax_row(const Tensor& logits) {
  double mx = logits[0];
  for (double v : logits.values()) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits.values()) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

}  // namespace

DecodeResult decode_greedy(const Decoder& dec, const ReceivedCode& received, std::size_t max_len) {
  Tape t(false);
  const Var memory = decoder_memory(t, dec, t.constant_ref(received.signal), received.gain);
  DecodeResult out;
  std::vector<int> prefix{Vocabulary::kSos};
  for (std::size_t step = 0; step <= max_len; ++step) {
    const Tensor logits = next_token_logits(t, dec, memory, prefix);
    // first maximum wins: lowest id on ties
    const auto it = std::max_element(logits.values().begin(), logits.values().end());
    const int id = static_cast<int>(it - logits.values().begin());
    out.actions.push_back(id);
    if (id == Vocabulary::kEos) {
      out.terminated = true;
      break;
    }
    if (step == max_len) break;
    out.tokens.push_back(id);
    prefix.push_back(id);
  }
  return out;
}

double Trajectory::log_prob() const {
  double s = 0.0;
  for (double v : step_log_probs) s += v;
  return s;
}

TrajectoryBundle decode_sample(const Decoder& dec, const ReceivedCode& received, std::size_t k,
                               std::size_t max_len, Rng& rng) {
  if (k < 2) throw std::invalid_argument("decode_sample: K must be >= 2, got " + std::to_string(k));
  Tape t(false);
  const Var memory = decoder_memory(t, dec, t.constant_ref(received.signal), received.gain);
  TrajectoryBundle bundle;
  bundle.samples.resize(k);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (auto& traj : bundle.samples) {
    std::vector<int> prefix{Vocabulary::kSos};
    for (std::size_t step = 0; step <= max_len; ++step) {
      const std::vector<double> logp = log_softmax_row(next_token_logits(t, dec, memory, prefix));
      // inverse-CDF draw over the categorical distribution
      const double u = unif(rng);
      double acc = 0.0;
      int id = static_cast<int>(logp.size()) - 1;
      for (std::size_t j = 0; j < logp.size(); ++j) {
        acc += std::exp(logp[j]);
        if (u < acc) {
          id = static_cast<int>(j);
          break;
        }
      }
      traj.decoded.actions.push_back(id);
      traj.step_log_probs.push_back(logp[static_cast<std::size_t>(id)]);
      if (id == Vocabulary::kEos) {
        traj.decoded.terminated = true;
        break;
      }
      if (step == max_len) break;
      traj.decoded.tokens.push_back(id);
      prefix.push_back(id);
    }
  }
  return bundle;
}

Var trajectory_log_prob(Tape& t, const Decoder& dec, Var memory, std::span<const int> actions) {
  if (actions.empty()) throw std::invalid_argument("trajectory_log_prob: empty trajectory");
  std::vector<int> inputs{Vocabulary::kSos};
  inputs.insert(inputs.end(), actions.begin(), actions.end() - 1);
  const Var logp = t.log_softmax(decoder_logits(t, dec, memory, inputs));
  return t.sum(t.pick(logp, actions));
}

Var cross_entropy(Tape& t, const Decoder& dec, Var memory, std::span<const int> sentence) {
  const std::vector<int> targets = with_eos(sentence);
  return t.scale(trajectory_log_prob(t, dec, memory, targets), -1.0);
}

// ---------------------------------------------------------------------------

std::vector<EncoderPolicySample> sample_encoder_policy(const Tensor& mean, double sigma,
                                                       std::size_t k, Rng& rng) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sample_encoder_policy: sigma must be > 0");
  if (k < 2) throw std::invalid_argument("sample_encoder_policy: K must be >= 2, got " + std::to_string(k));
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<EncoderPolicySample> out(k);
  for (auto& s : out) {
    s.mean = mean;
    s.sigma = sigma;
    s.sample = mean;
    for (double& v : s.sample.values()) v += sigma * noise(rng);
  }
  return out;
}

double gaussian_log_density(const Tensor& x, const Tensor& mean, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_log_density: sigma must be > 0");
  if (!x.same_shape(mean)) {
    throw diff::ShapeError("gaussian_log_density: " + diff::shape_string(x) + " vs " + diff::shape_string(mean));
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - mean[i]) * (x[i] - mean[i]);
  const double n = static_cast<double>(x.size());
  return -0.5 * sq / (sigma * sigma) - 0.5 * n * std::log(2.0 * std::numbers::pi * sigma * sigma);
}

Var gaussian_log_density(Tape& t, Var mean, const Tensor& x, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_log_density: sigma must be > 0");
  const Var diff = t.sub(t.constant(x), mean);
  const double n = static_cast<double>(x.size());
  const Var quad = t.scale(t.sum(t.mul(diff, diff)), -0.5 / (sigma * sigma));
  return t.add(quad, t.constant(Tensor::scalar(-0.5 * n * std::log(2.0 * std::numbers::pi * sigma * sigma))));
}

Var gaussian_score_surrogate(Tape& t, Var mean, const Tensor& sample, double sigma, double weight) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_score: sigma must be > 0");
  const Tensor& mu = t.value(mean);
  if (!mu.same_shape(sample)) {
    throw diff::ShapeError("gaussian_score: sample " + diff::shape_string(sample) + " vs mean " +
                           diff::shape_string(mu));
  }
  Tensor cotangent(mu.rows(), mu.cols());
  const double inv_var = weight / (sigma * sigma);
  for (std::size_t i = 0; i < mu.size(); ++i) cotangent[i] = inv_var * (sample[i] - mu[i]);
  return t.sum(t.mul(t.constant(std::move(cotangent)), mean));
}

diff::GradientMap gaussian_score(Tape& t, Var mean, const Tensor& sample, double sigma) {
  return t.backward(gaussian_score_surrogate(t, mean, sample, sigma));
}

}  // namespace scal::codec
