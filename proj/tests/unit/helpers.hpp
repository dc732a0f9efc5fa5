#pragma once

#include <random>

#include "scal/codec/model.hpp"

namespace scal::test {

inline codec::ModelConfig tiny_config(std::size_t vocab_size = 9, std::size_t max_len = 8) {
  codec::ModelConfig c;
  c.vocab_size = vocab_size;
  c.model_width = 8;
  c.code_dim = 6;
  c.bits = 5;
  c.dequant_width = 6;
  c.ffn_width = 12;
  c.max_len = max_len;
  return c;
}

inline diff::Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  diff::Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

}  // namespace scal::test
