#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dvcr/document.hpp"

namespace dvcr {

using TokenId = std::int32_t;

// Lowercased words; every ASCII punctuation character is its own token.
std::vector<std::string> split_tokens(std::string_view s);

// Joins tokens with single spaces.
std::string detokenize(std::span<const std::string> tokens);

class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kSep = 2;
  static constexpr TokenId kCls = 3;
  static constexpr std::size_t kReserved = 4;

  Vocab();

  // Tokens with count >= min_count, ordered by (-count, token).
  static Vocab build(std::span<const std::string> texts, std::size_t min_count);

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }

  // One token per line, line number = id.
  std::string serialize() const;
  static Vocab parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

std::vector<TokenId> tokenize(std::string_view s, const Vocab& v);

// Every string the models see for a corpus: instructions, element texts,
// rendered gt actions (history), plus the operation names.
std::vector<std::string> corpus_texts(std::span<const Task> corpus);

Vocab build_vocab(std::span<const Task> corpus, std::size_t min_count);

}  // namespace dvcr
