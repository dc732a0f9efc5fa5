#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace scal::codec {

/// Content token ids of one sentence, without SOS/EOS/PAD.
using Sentence = std::vector<int>;

inline constexpr std::size_t kDefaultMaxLength = 30;

/// Dense ids 0..V-1; ids 0, 1, 2 are PAD, SOS and EOS.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kFirstContentId = 3;

  Vocabulary();
  /// Adds words in order of first appearance; duplicates are ignored.
  explicit Vocabulary(std::span<const std::string> words);

  int add(const std::string& word);
  int id(const std::string& word) const;
  bool contains(const std::string& word) const { return index_.contains(word); }
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool is_content(int id) const {
    return id >= kFirstContentId && static_cast<std::size_t>(id) < tokens_.size();
  }

  Sentence encode_words(std::span<const std::string> words) const;
  std::string render(std::span<const int> ids) const;

  /// FNV-1a over the ordered token list. Checkpoints record it.
  std::uint64_t hash() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Throws unless every id is a content token and 1 <= size <= max_len.
void validate_sentence(std::span<const int> sentence, std::size_t vocab_size, std::size_t max_len);

}  // namespace scal::codec
