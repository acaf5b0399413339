#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "advkit/json_io.hpp"
#include "advkit/tokenizer.hpp"

namespace advkit {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);
// Throws DocumentError at `path` for anything but system/user/assistant.
Role parse_role(std::string_view name, const std::string& path = "role");

struct Message {
  Role role = Role::user;
  std::string content;
};

// Non-empty; at most one system message, and only in first position.
struct Conversation {
  std::vector<Message> messages;
};

// Throws DocumentError describing the first violated invariant.
void validate(const Conversation& conv);

// Strict parser for the [{"role": ..., "content": ...}, ...] document.
Conversation conversation_from_json(const json& doc, const std::string& path = "");
json to_json(const Conversation& conv);
Conversation load_conversation(const std::filesystem::path& path);

// Static chat template. Empty strings stand for absent pieces.
struct TemplateSpec {
  std::array<std::string, 3> prefix;
  std::array<std::string, 3> suffix;
  std::string bos;
  std::string generation_prompt;

  const std::string& prefix_for(Role r) const { return prefix[static_cast<std::size_t>(r)]; }
  const std::string& suffix_for(Role r) const { return suffix[static_cast<std::size_t>(r)]; }
};

TemplateSpec template_from_json(const json& doc);
json to_json(const TemplateSpec& tpl);
TemplateSpec load_template(const std::filesystem::path& path);

// Checks that the template's bos (when set) is one of the tokenizer's
// special tokens. Throws DocumentError("bos", ...) otherwise.
void check_template(const TemplateSpec& tpl, const TokenizerModel& tok);

enum class SegmentKind { bos, prefix, content, suffix, generation_prompt };

struct SegmentLabel {
  SegmentKind kind = SegmentKind::content;
  std::size_t message = 0;  // ignored for bos and generation_prompt

  // "bos", "prefix0", "content2", "suffix1", "generation_prompt"
  std::string str() const;
  static SegmentLabel parse(std::string_view text);
  bool is_template() const noexcept { return kind != SegmentKind::content; }
  friend bool operator==(const SegmentLabel& a, const SegmentLabel& b) {
    if (a.kind != b.kind) return false;
    return a.kind == SegmentKind::bos || a.kind == SegmentKind::generation_prompt ||
           a.message == b.message;
  }
};

struct Segment {
  SegmentLabel label;
  Span span;
};

struct RenderedConversation {
  std::string text;      // UTF-8
  std::u32string chars;  // the same text as code points
  std::vector<Segment> segments;

  const Segment* segment_at(std::size_t position) const;
};

// bos + Σ(prefix[role] + content + suffix[role]) + generation_prompt.
// Per-message pieces are always emitted (possibly zero-width); bos and
// generation_prompt segments only when non-empty.
RenderedConversation render(const Conversation& conv, const TemplateSpec& tpl);

class SegmentEncodeError : public std::runtime_error {
 public:
  SegmentEncodeError(SegmentLabel label, const EncodeError& cause);
  const SegmentLabel& label() const noexcept { return label_; }
  char32_t character() const noexcept { return character_; }
  std::size_t position() const noexcept { return position_; }

 private:
  SegmentLabel label_;
  char32_t character_;
  std::size_t position_;
};

class SlotError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tokenizes the rendered conversation in one pass. Special-token strings
// inside template segments become their special ids; inside message content
// they are plain characters. Offsets refer to `rendered.chars`.
TokenSeq encode_rendered(const TokenizerModel& tok, const RenderedConversation& rendered);

struct TokenAssignment {
  std::size_t segment = 0;  // index into SegmentMap::segments
  bool boundary_merged = false;
};

struct SegmentMap {
  RenderedConversation rendered;
  TokenSeq tokens;
  std::vector<TokenAssignment> assignment;

  const std::vector<Segment>& segments() const noexcept { return rendered.segments; }
  std::size_t boundary_merge_count() const;
  // Number of tokens assigned to each segment, in segment order.
  std::vector<std::size_t> tokens_per_segment() const;
  json to_json(const TokenizerModel& tok) const;
};

SegmentMap tokenize_and_split(const TokenizerModel& tok, const Conversation& conv,
                              const TemplateSpec& tpl);

struct ExpectedSequence {
  std::vector<TokenId> ids;
  std::size_t slot_offset = 0;  // index in `ids` where the candidate starts
};

// The sequence a token-space attack believes it submits: every segment
// tokenized on its own, with `candidate` spliced verbatim into `slot`.
ExpectedSequence expected_sequence(const TokenizerModel& tok, const Conversation& conv,
                                   const TemplateSpec& tpl, const SegmentLabel& slot,
                                   std::span<const TokenId> candidate);

std::vector<TokenId> expected_tokens(const TokenizerModel& tok, const Conversation& conv,
                                     const TemplateSpec& tpl, const SegmentLabel& slot,
                                     std::span<const TokenId> candidate);

// Throws SlotError unless `slot` names a content segment of `conv`.
void check_slot(const Conversation& conv, const SegmentLabel& slot);

}  // namespace advkit
