#include "scal/codec/vocabulary.hpp"

#include <stdexcept>

namespace scal::codec {

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<sos>");
  add("<eos>");
}

Vocabulary::Vocabulary(std::span<const std::string> words) : Vocabulary() {
  for (const auto& w : words) add(w);
}

int Vocabulary::add(const std::string& word) {
  auto it = index_.find(word);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(word);
  index_.emplace(word, id);
  return id;
}

int Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) throw std::out_of_range("vocabulary: unknown word '" + word + "'");
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("vocabulary: id " + std::to_string(id) + " outside 0.." +
                            std::to_string(tokens_.size() - 1));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

Sentence Vocabulary::encode_words(std::span<const std::string> words) const {
  Sentence s;
  s.reserve(words.size());
  for (const auto& w : words) s.push_back(id(w));
  return s;
}

std::string Vocabulary::render(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0xffu;
    h *= 1099511628211ull;
  }
  return h;
}

void validate_sentence(std::span<const int> sentence, std::size_t vocab_size, std::size_t max_len) {
  if (sentence.empty() || sentence.size() > max_len) {
    throw std::invalid_argument("sentence length " + std::to_string(sentence.size()) +
                                " outside [1, " + std::to_string(max_len) + "]");
  }
  for (int id : sentence) {
    if (id < Vocabulary::kFirstContentId || static_cast<std::size_t>(id) >= vocab_size) {
      throw std::out_of_range("token id " + std::to_string(id) + " is not a content id of a " +
                              std::to_string(vocab_size) + "-word vocabulary");
    }
  }
}

}  // namespace scal::codec
