#pragma once

#include <filesystem>
#include <string>

#include "advkit/conversation.hpp"
#include "advkit/json_io.hpp"
#include "advkit/tokenizer.hpp"

namespace advkit::testing {

inline std::filesystem::path data_path(const std::string& rel) {
  return std::filesystem::path(ADVKIT_TEST_DATA) / rel;
}

// vocab a→0, b→1, c→2, ab→3, abc→4; merges (a,b), (ab,c).
inline const TokenizerModel& t1() {
  static const TokenizerModel tok = TokenizerModel::from_file(data_path("t1/tokenizer.json"));
  return tok;
}

// t1 plus special tokens <u>→6, </u>→7.
inline const TokenizerModel& t1_specials() {
  static const TokenizerModel tok = TokenizerModel::from_file(data_path("t1/tokenizer_specials.json"));
  return tok;
}

inline Conversation user_says(std::string content) {
  return Conversation{{Message{Role::user, std::move(content)}}};
}

inline TemplateSpec user_affixes(std::string prefix, std::string suffix) {
  TemplateSpec tpl;
  tpl.prefix[static_cast<std::size_t>(Role::user)] = std::move(prefix);
  tpl.suffix[static_cast<std::size_t>(Role::user)] = std::move(suffix);
  return tpl;
}

inline const SegmentLabel kContent0{SegmentKind::content, 0};

}  // namespace advkit::testing
