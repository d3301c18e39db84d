#include "textcond/vocab.hpp"

#include <cctype>
#include <stdexcept>

namespace textcond {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    std::size_t end = pos;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;

    std::string_view piece = text.substr(pos, end - pos);
    const auto first = piece.find_first_not_of(kPunctuation);
    if (first != std::string_view::npos) {
      const auto last = piece.find_last_not_of(kPunctuation);
      std::string token(piece.substr(first, last - first + 1));
      for (auto& ch : token) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      tokens.push_back(std::move(token));
    }
    pos = end;
  }
  return tokens;
}

Vocabulary::Vocabulary()
    : id_to_word_{std::string(kStartWord), std::string(kStopWord), std::string(kUnkWord)} {}

Vocabulary::Vocabulary(std::span<const std::string> words) : Vocabulary() {
  for (const auto& w : words) {
    if (w.empty()) throw std::invalid_argument("Vocabulary: empty word");
    if (w == kStartWord || w == kStopWord || w == kUnkWord) {
      throw std::invalid_argument("Vocabulary: '" + w + "' is a reserved surface form");
    }
    if (word_to_id_.contains(w)) throw std::invalid_argument("Vocabulary: duplicate word '" + w + "'");
    add(w);
  }
}

TokenId Vocabulary::add(const std::string& word) {
  const TokenId id = id_to_word_.size();
  id_to_word_.push_back(word);
  word_to_id_.emplace(word, id);
  return id;
}

TokenId Vocabulary::lookup(std::string_view word) const {
  const auto it = word_to_id_.find(std::string(word));
  return it == word_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view word) const {
  return word_to_id_.contains(std::string(word));
}

const std::string& Vocabulary::word(TokenId id) const {
  if (id >= id_to_word_.size()) throw std::invalid_argument("Vocabulary::word: id out of range");
  return id_to_word_[id];
}

std::vector<std::string> Vocabulary::words() const {
  return {id_to_word_.begin() + kNumReserved, id_to_word_.end()};
}

Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus, std::size_t min_count) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  if (min_count < 1) throw std::invalid_argument("build_vocab: min_count must be >= 1");

  std::unordered_map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  for (const auto& caption : corpus) {
    for (const auto& w : caption) {
      if (counts[w]++ == 0) order.push_back(w);
    }
  }
  std::vector<std::string> kept;
  for (const auto& w : order) {
    if (counts[w] >= min_count) kept.push_back(w);
  }
  return Vocabulary(kept);
}

std::vector<TokenId> encode_caption(const Vocabulary& vocab, std::span<const std::string> tokens) {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size() + 2);
  ids.push_back(kStartId);
  for (const auto& t : tokens) ids.push_back(vocab.lookup(t));
  ids.push_back(kStopId);
  return ids;
}

std::vector<std::string> decode_caption(const Vocabulary& vocab, std::span<const TokenId> ids) {
  std::size_t begin = 0;
  std::size_t end = ids.size();
  if (begin < end && ids[begin] == kStartId) ++begin;
  if (end > begin && ids[end - 1] == kStopId) --end;
  std::vector<std::string> words;
  for (std::size_t i = begin; i < end; ++i) words.push_back(vocab.word(ids[i]));
  return words;
}

std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace textcond
