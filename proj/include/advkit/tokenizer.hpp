#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "advkit/json_io.hpp"

namespace advkit {

using TokenId = std::int32_t;

// Half-open [start, end) range of code-point indices.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - start; }
  bool empty() const noexcept { return start == end; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct TokenSeq {
  std::vector<TokenId> ids;
  // When present, one span per id; spans tile the encoded text in order.
  std::optional<std::vector<Span>> offsets;

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }
};

enum class Pretokenizer { none, whitespace };

std::string_view to_string(Pretokenizer p);

class EncodeError : public std::runtime_error {
 public:
  EncodeError(char32_t character, std::size_t position);
  char32_t character() const noexcept { return character_; }
  std::size_t position() const noexcept { return position_; }

 private:
  char32_t character_;
  std::size_t position_;
};

class DecodeError : public std::runtime_error {
 public:
  DecodeError(TokenId id, std::size_t index);
  TokenId id() const noexcept { return id_; }
  std::size_t index() const noexcept { return index_; }

 private:
  TokenId id_;
  std::size_t index_;
};

// Character-level BPE model. Immutable after construction, so every member
// function is safe to call concurrently.
class TokenizerModel {
 public:
  // Strict loader for the tokenizer-spec document. Errors are DocumentError
  // carrying the offending field path.
  static TokenizerModel from_json(const json& doc);
  static TokenizerModel from_text(std::string_view text);
  static TokenizerModel from_file(const std::filesystem::path& path);

  // Encodes content text. Special-token strings are treated as ordinary
  // characters and never produce special ids.
  TokenSeq encode(std::string_view utf8) const;
  TokenSeq encode(std::u32string_view text) const;

  std::string decode(std::span<const TokenId> ids) const;
  std::u32string decode_u32(std::span<const TokenId> ids) const;

  bool contains(TokenId id) const { return id_to_piece_.count(id) != 0; }
  bool is_special(TokenId id) const { return special_ids_.count(id) != 0; }
  std::optional<TokenId> id_of(std::u32string_view piece) const;
  // Throws DecodeError(id, 0) for unknown ids.
  const std::u32string& piece(TokenId id) const;

  Pretokenizer pretokenizer() const noexcept { return pretokenizer_; }
  std::size_t vocab_size() const noexcept { return id_to_piece_.size(); }
  std::size_t merge_count() const noexcept { return merges_.size(); }
  // Special token strings, longest first.
  const std::vector<std::u32string>& special_pieces() const noexcept { return special_pieces_; }
  // Ids of single-character, non-special vocab entries (the content alphabet).
  std::vector<TokenId> alphabet_ids() const;

  json to_json() const;

 private:
  struct MergeRule {
    std::size_t rank;
    TokenId result;
  };
  struct Symbol {
    TokenId id;
    std::size_t start;
    std::size_t end;
  };

  static std::uint64_t pair_key(TokenId left, TokenId right) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(left)) << 32) |
           static_cast<std::uint32_t>(right);
  }

  void encode_piece(std::u32string_view text, std::size_t base, std::vector<Symbol>& scratch,
                    TokenSeq& out) const;

  std::unordered_map<TokenId, std::u32string> id_to_piece_;
  std::unordered_map<std::u32string, TokenId> piece_to_id_;
  std::unordered_map<char32_t, TokenId> char_to_id_;
  std::vector<std::pair<TokenId, TokenId>> merges_;
  std::unordered_map<std::uint64_t, MergeRule> merge_rules_;
  std::unordered_set<TokenId> special_ids_;
  std::vector<std::u32string> special_pieces_;
  Pretokenizer pretokenizer_ = Pretokenizer::none;
};

inline TokenizerModel load_tokenizer(const json& doc) { return TokenizerModel::from_json(doc); }
inline TokenSeq encode(const TokenizerModel& tok, std::string_view text) { return tok.encode(text); }
inline std::string decode(const TokenizerModel& tok, std::span<const TokenId> ids) {
  return tok.decode(ids);
}

}  // namespace advkit
