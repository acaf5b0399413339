#include "advkit/conversation.hpp"

#include <algorithm>
#include <charconv>

#include "advkit/text.hpp"

namespace advkit {

namespace {

constexpr std::array<Role, 3> kRoles = {Role::system, Role::user, Role::assistant};

std::string checked_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw DocumentError(path, "must be a string");
  auto s = v.get<std::string>();
  try {
    (void)to_u32(s);
  } catch (const TextError& e) {
    throw DocumentError(path, e.what());
  }
  return s;
}

void read_affixes(const json& doc, std::string_view key, std::array<std::string, 3>& out) {
  if (!doc.contains(key)) return;
  const std::string path(key);
  const auto& obj = doc.at(key);
  if (!obj.is_object()) throw DocumentError(path, "must be an object keyed by role");
  for (const auto& [name, value] : obj.items()) {
    const auto role = parse_role(name, join_path(path, name));
    out[static_cast<std::size_t>(role)] = checked_string(value, join_path(path, name));
  }
}

// Atomic special-token occurrences inside template segments of `range`.
struct AtomicToken {
  Span span;
  TokenId id;
};

std::vector<AtomicToken> find_template_specials(const TokenizerModel& tok,
                                                const RenderedConversation& rendered, Span range) {
  std::vector<AtomicToken> found;
  const auto& specials = tok.special_pieces();
  if (specials.empty()) return found;
  for (const auto& seg : rendered.segments) {
    if (!seg.label.is_template()) continue;
    const std::size_t lo = std::max(seg.span.start, range.start);
    const std::size_t hi = std::min(seg.span.end, range.end);
    std::size_t p = lo;
    while (p < hi) {
      bool matched = false;
      for (const auto& piece : specials) {
        if (piece.size() <= hi - p &&
            std::u32string_view(rendered.chars).substr(p, piece.size()) == piece) {
          found.push_back(AtomicToken{Span{p, p + piece.size()}, *tok.id_of(piece)});
          p += piece.size();
          matched = true;
          break;
        }
      }
      if (!matched) ++p;
    }
  }
  return found;
}

void append_encoded(const TokenizerModel& tok, const RenderedConversation& rendered, Span run,
                    TokenSeq& out) {
  if (run.empty()) return;
  TokenSeq part;
  try {
    part = tok.encode(std::u32string_view(rendered.chars).substr(run.start, run.size()));
  } catch (const EncodeError& e) {
    const EncodeError shifted(e.character(), e.position() + run.start);
    const Segment* seg = rendered.segment_at(shifted.position());
    throw SegmentEncodeError(seg ? seg->label : SegmentLabel{}, shifted);
  }
  for (std::size_t i = 0; i < part.ids.size(); ++i) {
    out.ids.push_back(part.ids[i]);
    const Span s = (*part.offsets)[i];
    out.offsets->push_back(Span{s.start + run.start, s.end + run.start});
  }
}

// Encodes rendered.chars[range] with template specials kept atomic.
TokenSeq encode_range(const TokenizerModel& tok, const RenderedConversation& rendered, Span range) {
  TokenSeq out;
  out.offsets.emplace();
  std::size_t cursor = range.start;
  for (const auto& atomic : find_template_specials(tok, rendered, range)) {
    append_encoded(tok, rendered, Span{cursor, atomic.span.start}, out);
    out.ids.push_back(atomic.id);
    out.offsets->push_back(atomic.span);
    cursor = atomic.span.end;
  }
  append_encoded(tok, rendered, Span{cursor, range.end}, out);
  return out;
}

std::size_t parse_index(std::string_view digits, std::string_view text) {
  std::size_t value = 0;
  const auto* end = digits.data() + digits.size();
  auto [ptr, ec] = std::from_chars(digits.data(), end, value);
  if (digits.empty() || ec != std::errc{} || ptr != end) {
    throw SlotError("invalid segment label '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system:
      return "system";
    case Role::user:
      return "user";
    case Role::assistant:
      return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view name, const std::string& path) {
  for (Role r : kRoles) {
    if (to_string(r) == name) return r;
  }
  throw DocumentError(path, "unknown role \"" + std::string(name) + "\"");
}

void validate(const Conversation& conv) {
  if (conv.messages.empty()) throw DocumentError("", "conversation must not be empty");
  for (std::size_t i = 0; i < conv.messages.size(); ++i) {
    if (conv.messages[i].role == Role::system && i != 0) {
      throw DocumentError(index_path("", i) + ".role",
                          "system message allowed only once, in first position");
    }
  }
}

Conversation conversation_from_json(const json& doc, const std::string& path) {
  if (!doc.is_array()) throw DocumentError(path, "conversation must be an array of messages");
  Conversation conv;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto item_path = index_path(path, i);
    const auto& item = doc[i];
    if (!item.is_object()) throw DocumentError(item_path, "message must be an object");
    require_known_keys(item, {"role", "content"}, item_path);
    if (!item.contains("role")) throw DocumentError(join_path(item_path, "role"), "required field missing");
    if (!item.contains("content")) {
      throw DocumentError(join_path(item_path, "content"), "required field missing");
    }
    const auto role_path = join_path(item_path, "role");
    conv.messages.push_back(Message{parse_role(checked_string(item["role"], role_path), role_path),
                                    checked_string(item["content"], join_path(item_path, "content"))});
  }
  try {
    validate(conv);
  } catch (const DocumentError& e) {
    throw DocumentError(path + e.path(), e.what());
  }
  return conv;
}

json to_json(const Conversation& conv) {
  json out = json::array();
  for (const auto& m : conv.messages) {
    out.push_back(json{{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  return out;
}

Conversation load_conversation(const std::filesystem::path& path) {
  return conversation_from_json(parse_json_text(read_file(path)));
}

TemplateSpec template_from_json(const json& doc) {
  if (!doc.is_object()) throw DocumentError("", "template must be an object");
  require_known_keys(doc, {"bos", "prefix", "suffix", "generation_prompt"}, "");
  TemplateSpec tpl;
  read_affixes(doc, "prefix", tpl.prefix);
  read_affixes(doc, "suffix", tpl.suffix);
  if (doc.contains("bos") && !doc["bos"].is_null()) tpl.bos = checked_string(doc["bos"], "bos");
  if (doc.contains("generation_prompt")) {
    tpl.generation_prompt = checked_string(doc["generation_prompt"], "generation_prompt");
  }
  return tpl;
}

json to_json(const TemplateSpec& tpl) {
  json out = json::object();
  if (!tpl.bos.empty()) out["bos"] = tpl.bos;
  json prefix = json::object();
  json suffix = json::object();
  for (Role r : kRoles) {
    if (!tpl.prefix_for(r).empty()) prefix[std::string(to_string(r))] = tpl.prefix_for(r);
    if (!tpl.suffix_for(r).empty()) suffix[std::string(to_string(r))] = tpl.suffix_for(r);
  }
  out["prefix"] = std::move(prefix);
  out["suffix"] = std::move(suffix);
  out["generation_prompt"] = tpl.generation_prompt;
  return out;
}

TemplateSpec load_template(const std::filesystem::path& path) {
  return template_from_json(parse_json_text(read_file(path)));
}

void check_template(const TemplateSpec& tpl, const TokenizerModel& tok) {
  if (tpl.bos.empty()) return;
  const auto id = tok.id_of(to_u32(tpl.bos));
  if (!id || !tok.is_special(*id)) {
    throw DocumentError("bos", "\"" + tpl.bos + "\" is not a special token of the tokenizer");
  }
}

std::string SegmentLabel::str() const {
  switch (kind) {
    case SegmentKind::bos:
      return "bos";
    case SegmentKind::prefix:
      return "prefix" + std::to_string(message);
    case SegmentKind::content:
      return "content" + std::to_string(message);
    case SegmentKind::suffix:
      return "suffix" + std::to_string(message);
    case SegmentKind::generation_prompt:
      return "generation_prompt";
  }
  return {};
}

SegmentLabel SegmentLabel::parse(std::string_view text) {
  if (text == "bos") return {SegmentKind::bos, 0};
  if (text == "generation_prompt") return {SegmentKind::generation_prompt, 0};
  static constexpr std::pair<std::string_view, SegmentKind> kIndexed[] = {
      {"prefix", SegmentKind::prefix},
      {"content", SegmentKind::content},
      {"suffix", SegmentKind::suffix},
  };
  for (const auto& [name, kind] : kIndexed) {
    if (text.substr(0, name.size()) == name) {
      return {kind, parse_index(text.substr(name.size()), text)};
    }
  }
  throw SlotError("invalid segment label '" + std::string(text) + "'");
}

const Segment* RenderedConversation::segment_at(std::size_t position) const {
  for (const auto& seg : segments) {
    if (seg.span.start <= position && position < seg.span.end) return &seg;
  }
  return nullptr;
}

RenderedConversation render(const Conversation& conv, const TemplateSpec& tpl) {
  validate(conv);
  RenderedConversation out;
  auto push = [&out](SegmentLabel label, std::string_view utf8) {
    const std::size_t start = out.chars.size();
    out.chars += to_u32(utf8);
    out.segments.push_back(Segment{label, Span{start, out.chars.size()}});
  };
  if (!tpl.bos.empty()) push({SegmentKind::bos, 0}, tpl.bos);
  for (std::size_t i = 0; i < conv.messages.size(); ++i) {
    const auto& m = conv.messages[i];
    push({SegmentKind::prefix, i}, tpl.prefix_for(m.role));
    push({SegmentKind::content, i}, m.content);
    push({SegmentKind::suffix, i}, tpl.suffix_for(m.role));
  }
  if (!tpl.generation_prompt.empty()) push({SegmentKind::generation_prompt, 0}, tpl.generation_prompt);
  out.text = to_utf8(out.chars);
  return out;
}

SegmentEncodeError::SegmentEncodeError(SegmentLabel label, const EncodeError& cause)
    : std::runtime_error("segment " + label.str() + ": " + cause.what()),
      label_(label),
      character_(cause.character()),
      position_(cause.position()) {}

TokenSeq encode_rendered(const TokenizerModel& tok, const RenderedConversation& rendered) {
  return encode_range(tok, rendered, Span{0, rendered.chars.size()});
}

std::size_t SegmentMap::boundary_merge_count() const {
  return static_cast<std::size_t>(std::count_if(assignment.begin(), assignment.end(),
                                                [](const auto& a) { return a.boundary_merged; }));
}

std::vector<std::size_t> SegmentMap::tokens_per_segment() const {
  std::vector<std::size_t> counts(rendered.segments.size(), 0);
  for (const auto& a : assignment) ++counts[a.segment];
  return counts;
}

json SegmentMap::to_json(const TokenizerModel& tok) const {
  json out;
  out["text"] = rendered.text;
  json segs = json::array();
  const auto counts = tokens_per_segment();
  for (std::size_t i = 0; i < rendered.segments.size(); ++i) {
    const auto& s = rendered.segments[i];
    segs.push_back(json{{"label", s.label.str()},
                        {"start", s.span.start},
                        {"end", s.span.end},
                        {"token_count", counts[i]}});
  }
  out["segments"] = std::move(segs);
  json tokens = json::array();
  for (std::size_t i = 0; i < this->tokens.ids.size(); ++i) {
    const Span span = (*this->tokens.offsets)[i];
    tokens.push_back(json{{"id", this->tokens.ids[i]},
                          {"piece", to_utf8(tok.piece(this->tokens.ids[i]))},
                          {"start", span.start},
                          {"end", span.end},
                          {"segment", rendered.segments[assignment[i].segment].label.str()},
                          {"boundary_merged", assignment[i].boundary_merged}});
  }
  out["tokens"] = std::move(tokens);
  out["boundary_merged_count"] = boundary_merge_count();
  return out;
}

SegmentMap tokenize_and_split(const TokenizerModel& tok, const Conversation& conv,
                              const TemplateSpec& tpl) {
  SegmentMap map;
  map.rendered = render(conv, tpl);
  map.tokens = encode_rendered(tok, map.rendered);
  const auto& segs = map.rendered.segments;
  map.assignment.reserve(map.tokens.ids.size());
  for (const Span span : *map.tokens.offsets) {
    TokenAssignment a;
    std::size_t overlapping = 0;
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const Span seg = segs[s].span;
      if (seg.start <= span.start && span.start < seg.end) a.segment = s;
      if (std::max(seg.start, span.start) < std::min(seg.end, span.end)) ++overlapping;
    }
    a.boundary_merged = overlapping >= 2;
    map.assignment.push_back(a);
  }
  return map;
}

void check_slot(const Conversation& conv, const SegmentLabel& slot) {
  if (slot.kind != SegmentKind::content || slot.message >= conv.messages.size()) {
    throw SlotError("unknown slot '" + slot.str() + "': not a content segment of the conversation");
  }
}

ExpectedSequence expected_sequence(const TokenizerModel& tok, const Conversation& conv,
                                   const TemplateSpec& tpl, const SegmentLabel& slot,
                                   std::span<const TokenId> candidate) {
  check_slot(conv, slot);
  const auto rendered = render(conv, tpl);
  ExpectedSequence out;
  for (const auto& seg : rendered.segments) {
    if (seg.label == slot) {
      out.slot_offset = out.ids.size();
      out.ids.insert(out.ids.end(), candidate.begin(), candidate.end());
      continue;
    }
    const auto part = encode_range(tok, rendered, seg.span);
    out.ids.insert(out.ids.end(), part.ids.begin(), part.ids.end());
  }
  return out;
}

std::vector<TokenId> expected_tokens(const TokenizerModel& tok, const Conversation& conv,
                                     const TemplateSpec& tpl, const SegmentLabel& slot,
                                     std::span<const TokenId> candidate) {
  return expected_sequence(tok, conv, tpl, slot, candidate).ids;
}

}  // namespace advkit
