#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "scal/codec/vocabulary.hpp"

namespace scal::harness {

using codec::Sentence;
using codec::Vocabulary;

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Template-grammar generator: content words are split into classes
/// (determiners, adjectives, nouns, verbs, adverbs, prepositions) and
/// sentences are instances of fixed part-of-speech templates.
struct SyntheticSpec {
  std::size_t vocab_size = 50;  // content words
  std::size_t sentences = 1000;
  std::size_t min_len = 4;
  std::size_t max_len = 8;
};

struct CorpusSource {
  /// Plain text, one sentence per line. Empty means synthetic.
  std::filesystem::path path;
  SyntheticSpec synthetic;
};

struct FilterCounts {
  std::size_t read = 0;
  std::size_t too_short = 0;
  std::size_t too_long = 0;
  std::size_t out_of_vocabulary = 0;
  std::size_t kept = 0;
};

struct Dataset {
  Vocabulary vocab;
  std::vector<Sentence> train;
  std::vector<Sentence> test;
  FilterCounts counts;
};

struct IngestOptions {
  std::size_t min_len = 4;
  std::size_t max_len = 30;
  /// Most frequent words kept; 0 keeps all. Sentences with dropped words
  /// are excluded and counted.
  std::size_t vocab_cap = 0;
  std::uint64_t seed = 1;
};

/// Lowercases, strips punctuation other than apostrophes, splits on
/// whitespace.
std::vector<std::string> tokenize(const std::string& line);

std::vector<std::vector<std::string>> generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Tokenizes, filters to [min_len, max_len], builds the vocabulary and
/// splits 4:1 into train/test with a seeded shuffle. Throws CorpusError
/// (with the filter counts) when nothing survives.
Dataset ingest_sentences(const std::vector<std::vector<std::string>>& sentences, const IngestOptions& options);
Dataset ingest_corpus(const CorpusSource& source, const IngestOptions& options);

/// Rows padded with Vocabulary::kPad (0) to the longest sentence + EOS.
std::vector<std::vector<int>> pad_batch(const std::vector<Sentence>& batch);

}  // namespace scal::harness
