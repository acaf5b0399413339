#include "advkit/tokenizer.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>

#include "advkit/text.hpp"

namespace advkit {

namespace {

std::string describe_char(char32_t c) {
  std::string out = "'" + to_utf8(c) + "'";
  char buf[16];
  std::snprintf(buf, sizeof buf, " (U+%04X)", static_cast<unsigned>(c));
  return out + buf;
}

std::u32string checked_u32(const std::string& s, const std::string& path) {
  try {
    return to_u32(s);
  } catch (const TextError& e) {
    throw DocumentError(path, e.what());
  }
}

}  // namespace

std::string_view to_string(Pretokenizer p) {
  switch (p) {
    case Pretokenizer::none:
      return "none";
    case Pretokenizer::whitespace:
      return "whitespace";
  }
  return "none";
}

EncodeError::EncodeError(char32_t character, std::size_t position)
    : std::runtime_error("no vocabulary entry for character " + describe_char(character) +
                         " at position " + std::to_string(position)),
      character_(character),
      position_(position) {}

DecodeError::DecodeError(TokenId id, std::size_t index)
    : std::runtime_error("unknown token id " + std::to_string(id) + " at index " +
                         std::to_string(index)),
      id_(id),
      index_(index) {}

TokenizerModel TokenizerModel::from_text(std::string_view text) {
  return from_json(parse_json_text(text));
}

TokenizerModel TokenizerModel::from_file(const std::filesystem::path& path) {
  return from_text(read_file(path));
}

TokenizerModel TokenizerModel::from_json(const json& doc) {
  if (!doc.is_object()) throw DocumentError("", "tokenizer spec must be an object");
  require_known_keys(doc, {"vocab", "merges", "special_tokens", "pretokenizer"}, "");

  TokenizerModel tok;

  if (!doc.contains("vocab")) throw DocumentError("vocab", "required field missing");
  const auto& vocab = doc.at("vocab");
  if (!vocab.is_object()) throw DocumentError("vocab", "must be an object");
  std::map<TokenId, std::string> seen_ids;
  for (const auto& [key, value] : vocab.items()) {
    const std::string path = join_path("vocab", key);
    if (key.empty()) throw DocumentError(path, "empty token string");
    if (!value.is_number_integer()) throw DocumentError(path, "id must be an integer");
    const auto raw = value.get<std::int64_t>();
    if (raw < 0 || raw > std::numeric_limits<TokenId>::max()) {
      throw DocumentError(path, "id out of range");
    }
    const auto id = static_cast<TokenId>(raw);
    if (auto it = seen_ids.find(id); it != seen_ids.end()) {
      throw DocumentError(path, "duplicate id " + std::to_string(id) + " (also used by '" +
                                    it->second + "')");
    }
    seen_ids.emplace(id, key);
    auto piece = checked_u32(key, path);
    tok.id_to_piece_.emplace(id, piece);
    tok.piece_to_id_.emplace(std::move(piece), id);
  }

  if (doc.contains("special_tokens")) {
    const auto& specials = doc.at("special_tokens");
    if (!specials.is_array()) throw DocumentError("special_tokens", "must be an array");
    for (std::size_t i = 0; i < specials.size(); ++i) {
      const std::string path = index_path("special_tokens", i);
      if (!specials[i].is_string()) throw DocumentError(path, "must be a string");
      const auto piece = checked_u32(specials[i].get<std::string>(), path);
      auto it = tok.piece_to_id_.find(piece);
      if (it == tok.piece_to_id_.end()) throw DocumentError(path, "special token not in vocab");
      if (!tok.special_ids_.insert(it->second).second) {
        throw DocumentError(path, "duplicate special token");
      }
      tok.special_pieces_.push_back(piece);
    }
  }
  std::stable_sort(tok.special_pieces_.begin(), tok.special_pieces_.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });

  if (!doc.contains("merges")) throw DocumentError("merges", "required field missing");
  const auto& merges = doc.at("merges");
  if (!merges.is_array()) throw DocumentError("merges", "must be an array");
  for (std::size_t rank = 0; rank < merges.size(); ++rank) {
    const std::string path = index_path("merges", rank);
    const auto& m = merges[rank];
    if (!m.is_array() || m.size() != 2 || !m[0].is_string() || !m[1].is_string()) {
      throw DocumentError(path, "merge must be a list of two strings");
    }
    const auto left = checked_u32(m[0].get<std::string>(), path);
    const auto right = checked_u32(m[1].get<std::string>(), path);
    auto lookup = [&](const std::u32string& piece) {
      auto it = tok.piece_to_id_.find(piece);
      if (it == tok.piece_to_id_.end()) {
        throw DocumentError(path, "merge references unknown token '" + to_utf8(piece) + "'");
      }
      if (tok.special_ids_.count(it->second)) {
        throw DocumentError(path, "merge references special token '" + to_utf8(piece) + "'");
      }
      return it->second;
    };
    const TokenId left_id = lookup(left);
    const TokenId right_id = lookup(right);
    const auto merged = left + right;
    auto out = tok.piece_to_id_.find(merged);
    if (out == tok.piece_to_id_.end()) {
      throw DocumentError(path, "merge result '" + to_utf8(merged) + "' not in vocab");
    }
    for (const auto& special : tok.special_pieces_) {
      if (merged.find(special) != std::u32string::npos) {
        throw DocumentError(path, "merge result '" + to_utf8(merged) +
                                      "' produces special token '" + to_utf8(special) + "'");
      }
    }
    const auto key = pair_key(left_id, right_id);
    if (!tok.merge_rules_.emplace(key, MergeRule{rank, out->second}).second) {
      throw DocumentError(path, "duplicate merge");
    }
    tok.merges_.emplace_back(left_id, right_id);
  }

  if (doc.contains("pretokenizer")) {
    const auto& p = doc.at("pretokenizer");
    if (!p.is_string()) throw DocumentError("pretokenizer", "must be a string");
    const auto name = p.get<std::string>();
    if (name == "none") {
      tok.pretokenizer_ = Pretokenizer::none;
    } else if (name == "whitespace") {
      tok.pretokenizer_ = Pretokenizer::whitespace;
    } else {
      throw DocumentError("pretokenizer", "expected \"none\" or \"whitespace\", got \"" + name + "\"");
    }
  }

  for (const auto& [id, piece] : tok.id_to_piece_) {
    if (piece.size() == 1 && !tok.special_ids_.count(id)) tok.char_to_id_.emplace(piece[0], id);
  }
  return tok;
}

std::optional<TokenId> TokenizerModel::id_of(std::u32string_view piece) const {
  auto it = piece_to_id_.find(std::u32string(piece));
  if (it == piece_to_id_.end()) return std::nullopt;
  return it->second;
}

const std::u32string& TokenizerModel::piece(TokenId id) const {
  auto it = id_to_piece_.find(id);
  if (it == id_to_piece_.end()) throw DecodeError(id, 0);
  return it->second;
}

std::vector<TokenId> TokenizerModel::alphabet_ids() const {
  std::vector<TokenId> ids;
  for (const auto& [c, id] : char_to_id_) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

TokenSeq TokenizerModel::encode(std::string_view utf8) const { return encode(to_u32(utf8)); }

TokenSeq TokenizerModel::encode(std::u32string_view text) const {
  TokenSeq out;
  out.offsets.emplace();
  std::vector<Symbol> scratch;
  if (pretokenizer_ == Pretokenizer::none) {
    encode_piece(text, 0, scratch, out);
    return out;
  }
  // A piece is an optional run of spaces followed by non-space characters;
  // trailing spaces form a piece of their own.
  std::size_t start = 0;
  for (std::size_t i = 1; i < text.size(); ++i) {
    if (text[i] == U' ' && text[i - 1] != U' ') {
      encode_piece(text.substr(start, i - start), start, scratch, out);
      start = i;
    }
  }
  if (start < text.size()) encode_piece(text.substr(start), start, scratch, out);
  return out;
}

void TokenizerModel::encode_piece(std::u32string_view text, std::size_t base,
                                  std::vector<Symbol>& symbols, TokenSeq& out) const {
  symbols.clear();
  for (std::size_t i = 0; i < text.size(); ++i) {
    auto it = char_to_id_.find(text[i]);
    if (it == char_to_id_.end()) throw EncodeError(text[i], base + i);
    symbols.push_back(Symbol{it->second, base + i, base + i + 1});
  }
  // Apply the lowest-rank applicable merge, leftmost on ties, until none applies.
  while (symbols.size() > 1) {
    std::size_t best_pos = symbols.size();
    const MergeRule* best = nullptr;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = merge_rules_.find(pair_key(symbols[i].id, symbols[i + 1].id));
      if (it != merge_rules_.end() && (best == nullptr || it->second.rank < best->rank)) {
        best = &it->second;
        best_pos = i;
      }
    }
    if (best == nullptr) break;
    symbols[best_pos] = Symbol{best->result, symbols[best_pos].start, symbols[best_pos + 1].end};
    symbols.erase(symbols.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
  }
  for (const auto& s : symbols) {
    out.ids.push_back(s.id);
    out.offsets->push_back(Span{s.start, s.end});
  }
}

std::u32string TokenizerModel::decode_u32(std::span<const TokenId> ids) const {
  std::u32string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = id_to_piece_.find(ids[i]);
    if (it == id_to_piece_.end()) throw DecodeError(ids[i], i);
    out += it->second;
  }
  return out;
}

std::string TokenizerModel::decode(std::span<const TokenId> ids) const {
  return to_utf8(decode_u32(ids));
}

json TokenizerModel::to_json() const {
  json doc;
  std::vector<std::pair<TokenId, std::u32string>> entries(id_to_piece_.begin(), id_to_piece_.end());
  std::sort(entries.begin(), entries.end());
  json vocab = json::object();
  for (const auto& [id, piece] : entries) vocab[to_utf8(piece)] = id;
  doc["vocab"] = std::move(vocab);
  json merges = json::array();
  for (const auto& [l, r] : merges_) {
    merges.push_back(json::array({to_utf8(id_to_piece_.at(l)), to_utf8(id_to_piece_.at(r))}));
  }
  doc["merges"] = std::move(merges);
  std::vector<TokenId> specials(special_ids_.begin(), special_ids_.end());
  std::sort(specials.begin(), specials.end());
  json special_tokens = json::array();
  for (TokenId id : specials) special_tokens.push_back(to_utf8(id_to_piece_.at(id)));
  doc["special_tokens"] = std::move(special_tokens);
  doc["pretokenizer"] = std::string(to_string(pretokenizer_));
  return doc;
}

}  // namespace advkit
