#include "scal/codec/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace scal::codec {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'A', 'L', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError("checkpoint: truncated file");
  return v;
}

void put_config(std::ostream& os, const ModelConfig& c) {
  for (std::uint64_t v : {c.vocab_size, c.model_width, c.code_dim, c.bits, c.dequant_width, c.ffn_width,
                          c.encoder_blocks, c.decoder_blocks, c.max_len}) {
    put(os, v);
  }
  put<std::uint8_t>(os, c.use_csi ? 1 : 0);
}

ModelConfig get_config(std::istream& is) {
  ModelConfig c;
  for (std::size_t* field : {&c.vocab_size, &c.model_width, &c.code_dim, &c.bits, &c.dequant_width,
                             &c.ffn_width, &c.encoder_blocks, &c.decoder_blocks, &c.max_len}) {
    *field = static_cast<std::size_t>(get<std::uint64_t>(is));
  }
  c.use_csi = get<std::uint8_t>(is) != 0;
  return c;
}

void put_params(std::ostream& os, const ParameterSet& p) {
  put<std::uint64_t>(os, p.count());
  for (const auto& [name, t] : p) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(os, t.rows());
    put<std::uint64_t>(os, t.cols());
    os.write(reinterpret_cast<const char*>(t.values().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

ParameterSet get_params(std::istream& is) {
  ParameterSet p;
  const auto count = get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(is);
    if (len > 4096) throw CheckpointError("checkpoint: implausible parameter name length");
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto rows = get<std::uint64_t>(is);
    const auto cols = get<std::uint64_t>(is);
    if (rows * cols > (1ull << 32)) throw CheckpointError("checkpoint: implausible tensor size for '" + name + "'");
    std::vector<double> values(rows * cols);
    is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!is) throw CheckpointError("checkpoint: truncated tensor '" + name + "'");
    p.add(name, Tensor(rows, cols, std::move(values)));
  }
  return p;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("checkpoint: cannot open '" + path.string() + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  put(os, kCheckpointVersion);
  put(os, ckpt.vocab_hash);
  put_config(os, ckpt.encoder.config);
  put_params(os, ckpt.encoder.params);
  put<std::uint64_t>(os, ckpt.decoders.size());
  for (const auto& d : ckpt.decoders) put_params(os, d.params);
  if (!os) throw CheckpointError("checkpoint: write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t expected_vocab_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint: cannot open '" + path.string() + "'");
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("checkpoint: '" + path.string() + "' is not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.vocab_hash = get<std::uint64_t>(is);
  if (ckpt.vocab_hash != expected_vocab_hash) {
    std::ostringstream msg;
    msg << "checkpoint: vocabulary hash mismatch (file " << std::hex << ckpt.vocab_hash << ", current "
        << expected_vocab_hash << ")";
    throw CheckpointError(msg.str());
  }
  const ModelConfig config = get_config(is);
  ckpt.encoder = Encoder{config, get_params(is)};
  const auto n = get<std::uint64_t>(is);
  if (n > 4096) throw CheckpointError("checkpoint: implausible receiver count");
  for (std::uint64_t i = 0; i < n; ++i) ckpt.decoders.push_back(Decoder{config, get_params(is)});
  return ckpt;
}

}  // namespace scal::codec
