#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace textcond {

using TokenId = std::size_t;

inline constexpr TokenId kStartId = 0;
inline constexpr TokenId kStopId = 1;
inline constexpr TokenId kUnkId = 2;
inline constexpr TokenId kNumReserved = 3;

inline constexpr std::string_view kStartWord = "<start>";
inline constexpr std::string_view kStopWord = "<stop>";
inline constexpr std::string_view kUnkWord = "UNK";

/// Characters stripped from the ends of each whitespace-separated piece:
/// the 32 ASCII punctuation characters.
inline constexpr std::string_view kPunctuation = R"(!"#$%&'()*+,-./:;<=>?@[\]^_`{|}~)";

/// Lowercases, splits on whitespace, strips leading/trailing ASCII
/// punctuation from each piece and drops pieces that end up empty.
std::vector<std::string> tokenize(std::string_view text);

/// Word <-> id mapping. Ids 0, 1, 2 are START, STOP and UNK; regular words
/// occupy 3..size()-1. Looking up a word that is not present yields UNK,
/// including the reserved surface forms themselves.
class Vocabulary {
 public:
  Vocabulary();
  /// Builds a vocabulary whose regular words are `words` in order.
  /// Throws std::invalid_argument on duplicates or empty words.
  explicit Vocabulary(std::span<const std::string> words);

  std::size_t size() const { return id_to_word_.size(); }
  TokenId lookup(std::string_view word) const;
  bool contains(std::string_view word) const;
  const std::string& word(TokenId id) const;
  /// Regular words only, in id order.
  std::vector<std::string> words() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.id_to_word_ == b.id_to_word_;
  }

 private:
  TokenId add(const std::string& word);

  std::unordered_map<std::string, TokenId> word_to_id_;
  std::vector<std::string> id_to_word_;
};

/// Words whose corpus frequency is >= min_count, numbered in order of first
/// appearance. Throws std::invalid_argument on an empty corpus or min_count 0.
Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus, std::size_t min_count);

/// [START] + ids + [STOP]; unknown words become UNK.
std::vector<TokenId> encode_caption(const Vocabulary& vocab, std::span<const std::string> tokens);

/// Surface forms of the ids between START and STOP (both dropped if present).
std::vector<std::string> decode_caption(const Vocabulary& vocab, std::span<const TokenId> ids);

std::string join_words(std::span<const std::string> words);

}  // namespace textcond
