#include "scal/harness/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace scal::harness {

std::vector<std::string> tokenize(const std::string& line) {
  std::string cleaned;
  cleaned.reserve(line.size());
  for (unsigned char c : line) {
    if (std::isalnum(c) || c == '\'') {
      cleaned += static_cast<char>(std::tolower(c));
    } else {
      cleaned += ' ';
    }
  }
  std::istringstream in(cleaned);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

namespace {

enum WordClass { kDet, kAdj, kNoun, kVerb, kAdv, kPrep, kClassCount };

constexpr const char* kClassNames[kClassCount] = {"det", "adj", "noun", "verb", "adv", "prep"};
// share of the content vocabulary per class
constexpr double kClassShare[kClassCount] = {0.06, 0.22, 0.34, 0.22, 0.08, 0.08};

const std::vector<std::vector<WordClass>>& templates() {
  static const std::vector<std::vector<WordClass>> t = {
      {kDet, kNoun, kVerb, kAdv},
      {kNoun, kVerb, kDet, kNoun},
      {kDet, kNoun, kVerb, kDet, kNoun},
      {kDet, kAdj, kNoun, kVerb, kAdv},
      {kDet, kAdj, kNoun, kVerb, kDet, kNoun},
      {kDet, kNoun, kVerb, kPrep, kDet, kNoun},
      {kDet, kAdj, kNoun, kVerb, kDet, kAdj, kNoun},
      {kDet, kNoun, kAdv, kVerb, kPrep, kDet, kNoun},
      {kDet, kAdj, kNoun, kVerb, kPrep, kDet, kAdj, kNoun},
      {kDet, kNoun, kVerb, kDet, kAdj, kNoun, kPrep, kNoun},
      {kDet, kAdj, kAdj, kNoun, kVerb, kDet, kNoun, kAdv},
  };
  return t;
}

}  // namespace

std::vector<std::vector<std::string>> generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.vocab_size < kClassCount) {
    throw CorpusError("synthetic corpus: vocab_size must be >= " + std::to_string(kClassCount));
  }
  if (spec.min_len > spec.max_len) throw CorpusError("synthetic corpus: min_len > max_len");

  std::vector<std::vector<std::string>> words(kClassCount);
  std::size_t assigned = 0;
  for (int c = 0; c < kClassCount; ++c) {
    std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(kClassShare[c] * static_cast<double>(spec.vocab_size)));
    if (c == kClassCount - 1) n = std::max<std::size_t>(1, spec.vocab_size - std::min(assigned, spec.vocab_size - 1));
    for (std::size_t i = 0; i < n; ++i) words[c].push_back(std::string(kClassNames[c]) + std::to_string(i));
    assigned += n;
  }

  std::vector<const std::vector<WordClass>*> usable;
  for (const auto& t : templates()) {
    if (t.size() >= spec.min_len && t.size() <= spec.max_len) usable.push_back(&t);
  }
  if (usable.empty()) {
    throw CorpusError("synthetic corpus: no template with length in [" + std::to_string(spec.min_len) + ", " +
                      std::to_string(spec.max_len) + "]");
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_template(0, usable.size() - 1);
  std::set<std::vector<std::string>> seen;
  std::vector<std::vector<std::string>> out;
  out.reserve(spec.sentences);
  // duplicates are redrawn a bounded number of times, then accepted
  std::size_t attempts = 0;
  while (out.size() < spec.sentences) {
    const auto& tmpl = *usable[pick_template(rng)];
    std::vector<std::string> sentence;
    for (WordClass c : tmpl) {
      std::uniform_int_distribution<std::size_t> pick(0, words[c].size() - 1);
      sentence.push_back(words[c][pick(rng)]);
    }
    ++attempts;
    if (!seen.insert(sentence).second && attempts < 20 * spec.sentences) continue;
    out.push_back(std::move(sentence));
  }
  return out;
}

Dataset ingest_sentences(const std::vector<std::vector<std::string>>& sentences, const IngestOptions& options) {
  if (options.min_len < 1 || options.max_len > 64 || options.min_len > options.max_len) {
    throw CorpusError("ingest: length bounds must satisfy 1 <= min <= max <= 64");
  }
  Dataset ds;
  std::vector<const std::vector<std::string>*> kept;
  for (const auto& s : sentences) {
    ++ds.counts.read;
    if (s.size() < options.min_len) {
      ++ds.counts.too_short;
    } else if (s.size() > options.max_len) {
      ++ds.counts.too_long;
    } else {
      kept.push_back(&s);
    }
  }

  std::set<std::string> allowed;
  if (options.vocab_cap > 0) {
    std::map<std::string, std::size_t> freq;
    for (const auto* s : kept) {
      for (const auto& w : *s) ++freq[w];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (std::size_t i = 0; i < ranked.size() && i < options.vocab_cap; ++i) allowed.insert(ranked[i].first);
  }

  std::vector<const std::vector<std::string>*> in_vocab;
  for (const auto* s : kept) {
    const bool ok = options.vocab_cap == 0 ||
                    std::all_of(s->begin(), s->end(), [&](const std::string& w) { return allowed.contains(w); });
    if (ok) {
      in_vocab.push_back(s);
    } else {
      ++ds.counts.out_of_vocabulary;
    }
  }
  ds.counts.kept = in_vocab.size();
  if (in_vocab.empty()) {
    throw CorpusError("ingest: corpus is empty after filtering (read " + std::to_string(ds.counts.read) +
                      ", too short " + std::to_string(ds.counts.too_short) + ", too long " +
                      std::to_string(ds.counts.too_long) + ", out of vocabulary " +
                      std::to_string(ds.counts.out_of_vocabulary) + ")");
  }

  for (const auto* s : in_vocab) {
    for (const auto& w : *s) ds.vocab.add(w);
  }

  std::vector<std::size_t> order(in_vocab.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = in_vocab.size() * 4 / 5;
  for (std::size_t i = 0; i < order.size(); ++i) {
    Sentence s = ds.vocab.encode_words(*in_vocab[order[i]]);
    (i < n_train ? ds.train : ds.test).push_back(std::move(s));
  }
  return ds;
}

Dataset ingest_corpus(const CorpusSource& source, const IngestOptions& options) {
  if (source.path.empty()) return ingest_sentences(generate_synthetic(source.synthetic, options.seed), options);
  std::ifstream in(source.path);
  if (!in) throw CorpusError("ingest: cannot open '" + source.path.string() + "'");
  std::vector<std::vector<std::string>> sentences;
  for (std::string line; std::getline(in, line);) {
    auto words = tokenize(line);
    if (!words.empty()) sentences.push_back(std::move(words));
  }
  return ingest_sentences(sentences, options);
}

std::vector<std::vector<int>> pad_batch(const std::vector<Sentence>& batch) {
  std::size_t width = 0;
  for (const auto& s : batch) width = std::max(width, s.size() + 1);
  std::vector<std::vector<int>> rows;
  rows.reserve(batch.size());
  for (const auto& s : batch) {
    std::vector<int> r(s.begin(), s.end());
    r.push_back(Vocabulary::kEos);
    r.resize(width, Vocabulary::kPad);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace scal::harness
