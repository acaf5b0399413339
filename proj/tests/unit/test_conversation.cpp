#include <doctest.h>

#include "advkit/conversation.hpp"
#include "advkit/corpus.hpp"
#include "advkit/text.hpp"
#include "fixtures.hpp"

using namespace advkit;
using namespace advkit::testing;
using Ids = std::vector<TokenId>;

namespace {

std::vector<std::string> labels(const RenderedConversation& r) {
  std::vector<std::string> out;
  for (const auto& s : r.segments) out.push_back(s.label.str());
  return out;
}

std::vector<std::string> assigned_labels(const SegmentMap& m) {
  std::vector<std::string> out;
  for (const auto& a : m.assignment) out.push_back(m.segments()[a.segment].label.str());
  return out;
}

}  // namespace

TEST_CASE("render flattens messages with spans") {
  const auto r = render(user_says("abc"), user_affixes("<u>", "</u>"));
  CHECK(r.text == "<u>abc</u>");
  CHECK(labels(r) == std::vector<std::string>{"prefix0", "content0", "suffix0"});
  CHECK(r.segments[0].span == Span{0, 3});
  CHECK(r.segments[1].span == Span{3, 6});
  CHECK(r.segments[2].span == Span{6, 10});
}

TEST_CASE("render keeps zero-width content segments") {
  const auto r = render(user_says(""), user_affixes("<u>", "</u>"));
  CHECK(r.segments[1].span == Span{3, 3});
  CHECK(r.segments[1].label.str() == "content0");
}

TEST_CASE("render orders system before user") {
  TemplateSpec tpl = user_affixes("U:", ";");
  tpl.prefix[static_cast<std::size_t>(Role::system)] = "S:";
  tpl.bos = "<s>";
  tpl.generation_prompt = "A:";
  const Conversation conv{{Message{Role::system, "s"}, Message{Role::user, "a"}}};
  const auto r = render(conv, tpl);
  CHECK(r.text == "<s>S:sU:a;A:");
  CHECK(labels(r) == std::vector<std::string>{"bos", "prefix0", "content0", "suffix0", "prefix1",
                                              "content1", "suffix1", "generation_prompt"});
}

TEST_CASE("conversation invariants") {
  CHECK_THROWS_AS(validate(Conversation{}), DocumentError);
  const Conversation late_system{{Message{Role::user, "a"}, Message{Role::system, "s"}}};
  CHECK_THROWS_AS(validate(late_system), DocumentError);
  CHECK_THROWS_AS(render(late_system, TemplateSpec{}), DocumentError);

  const auto parse_path = [](const std::string& text) -> std::string {
    try {
      (void)conversation_from_json(json::parse(text));
    } catch (const DocumentError& e) {
      return e.path();
    }
    return "<ok>";
  };
  CHECK(parse_path(R"([{"role": "user", "content": "x"}])") == "<ok>");
  CHECK(parse_path(R"([{"role": "tool", "content": "x"}])") == "[0].role");
  CHECK(parse_path(R"([{"role": "user"}])") == "[0].content");
  CHECK(parse_path(R"([{"role": "user", "content": "x", "name": "n"}])") == "[0].name");
  CHECK(parse_path(R"([{"role": "user", "content": "x"}, {"role": "system", "content": "y"}])") ==
        "[1].role");
  CHECK(parse_path("[]") == "");
}

TEST_CASE("template documents are strict") {
  const auto tpl = template_from_json(
      json::parse(R"({"bos": "<s>", "prefix": {"user": "<u>"}, "suffix": {"assistant": "!"}, "generation_prompt": "A"})"));
  CHECK(tpl.bos == "<s>");
  CHECK(tpl.prefix_for(Role::user) == "<u>");
  CHECK(tpl.suffix_for(Role::assistant) == "!");
  CHECK(template_from_json(to_json(tpl)).prefix == tpl.prefix);
  CHECK_THROWS_AS(template_from_json(json::parse(R"({"prefix": {"tool": "x"}})")), DocumentError);
  CHECK_THROWS_AS(template_from_json(json::parse(R"({"eos": "x"})")), DocumentError);

  TemplateSpec bad_bos;
  bad_bos.bos = "ab";
  CHECK_THROWS_AS(check_template(bad_bos, t1()), DocumentError);
  bad_bos.bos = "<u>";
  CHECK_NOTHROW(check_template(bad_bos, t1_specials()));
}

TEST_CASE("segment labels round-trip through text") {
  for (const auto* text : {"bos", "prefix0", "content12", "suffix3", "generation_prompt"}) {
    CHECK(SegmentLabel::parse(text).str() == text);
  }
  CHECK_THROWS_AS(SegmentLabel::parse("content"), SlotError);
  CHECK_THROWS_AS(SegmentLabel::parse("contentx"), SlotError);
  CHECK_THROWS_AS(SegmentLabel::parse("body0"), SlotError);
}

TEST_CASE("tokenize_and_split with atomic special affixes") {
  const auto m = tokenize_and_split(t1_specials(), user_says("abc"), user_affixes("<u>", "</u>"));
  CHECK(m.tokens.ids == Ids{6, 4, 7});
  CHECK(assigned_labels(m) == std::vector<std::string>{"prefix0", "content0", "suffix0"});
  CHECK(m.boundary_merge_count() == 0);
}

TEST_CASE("tokenize_and_split flags a merge across the content/suffix boundary") {
  const auto m = tokenize_and_split(t1(), user_says("ab"), user_affixes("", "c"));
  CHECK(m.rendered.text == "abc");
  CHECK(m.tokens.ids == Ids{4});
  CHECK(assigned_labels(m) == std::vector<std::string>{"content0"});
  CHECK(m.assignment[0].boundary_merged);
  CHECK(m.boundary_merge_count() == 1);
}

TEST_CASE("empty content gets zero tokens") {
  const auto m = tokenize_and_split(t1_specials(), user_says(""), user_affixes("<u>", "</u>"));
  CHECK(m.tokens.ids == Ids{6, 7});
  CHECK(m.tokens_per_segment() == std::vector<std::size_t>{1, 0, 1});
}

TEST_CASE("special strings inside content do not become control tokens") {
  const auto tok = TokenizerModel::from_text(R"({
    "vocab": {"<": 0, "u": 1, ">": 2, "a": 3, "<u>": 4},
    "merges": [], "special_tokens": ["<u>"]})");
  const auto m = tokenize_and_split(tok, user_says("<u>"), user_affixes("<u>", ""));
  CHECK(m.tokens.ids == Ids{4, 0, 1, 2});
}

TEST_CASE("encode failures name the segment") {
  try {
    (void)tokenize_and_split(t1(), user_says("abz"), user_affixes("a", ""));
    FAIL("expected SegmentEncodeError");
  } catch (const SegmentEncodeError& e) {
    CHECK(e.label().str() == "content0");
    CHECK(e.position() == 3);
    CHECK(e.character() == U'z');
  }
  try {
    (void)tokenize_and_split(t1(), user_says("ab"), user_affixes("", "<x>"));
    FAIL("expected SegmentEncodeError");
  } catch (const SegmentEncodeError& e) {
    CHECK(e.label().str() == "suffix0");
  }
}

TEST_CASE("expected_tokens splices the candidate into the slot") {
  const auto tpl = user_affixes("<u>", "</u>");
  const auto conv = user_says("");
  CHECK(expected_tokens(t1_specials(), conv, tpl, kContent0, Ids{3}) == Ids{6, 3, 7});
  CHECK(expected_tokens(t1_specials(), conv, tpl, kContent0, Ids{}) == Ids{6, 7});
  CHECK(expected_tokens(t1_specials(), conv, tpl, kContent0, Ids{4}) == Ids{6, 4, 7});
  CHECK(expected_sequence(t1_specials(), conv, tpl, kContent0, Ids{4}).slot_offset == 1);
  // Other segments are encoded on their own, never merged with the slot.
  CHECK(expected_tokens(t1(), conv, user_affixes("", "c"), kContent0, Ids{3}) == Ids{3, 2});
}

TEST_CASE("expected_tokens rejects unknown slots") {
  const auto conv = user_says("");
  CHECK_THROWS_AS(expected_tokens(t1(), conv, {}, SegmentLabel{SegmentKind::content, 1}, Ids{}), SlotError);
  CHECK_THROWS_AS(expected_tokens(t1(), conv, {}, SegmentLabel{SegmentKind::prefix, 0}, Ids{}), SlotError);
}

TEST_CASE("property: segmentation annotates without changing the token stream") {
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    const auto inst = generate_instance(seed);
    const auto& tok = inst.tokenizer;
    const auto m = tokenize_and_split(tok, inst.conversation, inst.tpl);
    const auto& segs = m.segments();

    // Spans tile the rendered string and their substrings concatenate back to it.
    std::size_t cursor = 0;
    std::u32string rebuilt;
    for (const auto& s : segs) {
      REQUIRE(s.span.start == cursor);
      rebuilt += m.rendered.chars.substr(s.span.start, s.span.size());
      cursor = s.span.end;
    }
    REQUIRE(cursor == m.rendered.chars.size());
    REQUIRE(rebuilt == m.rendered.chars);
    REQUIRE(to_u32(m.rendered.text) == m.rendered.chars);

    // The split carries exactly the full-conversation encoding.
    REQUIRE(m.tokens.ids == encode_rendered(tok, m.rendered).ids);
    REQUIRE(tok.decode_u32(m.tokens.ids) == m.rendered.chars);
    if (tok.special_pieces().empty()) REQUIRE(m.tokens.ids == tok.encode(m.rendered.chars).ids);

    // Per-segment counts sum to the total; flags match span overlap.
    std::size_t total = 0;
    for (auto n : m.tokens_per_segment()) total += n;
    REQUIRE(total == m.tokens.ids.size());
    for (std::size_t i = 0; i < m.assignment.size(); ++i) {
      const Span span = (*m.tokens.offsets)[i];
      std::size_t overlapping = 0;
      for (const auto& s : segs) {
        if (std::max(s.span.start, span.start) < std::min(s.span.end, span.end)) ++overlapping;
      }
      REQUIRE(m.assignment[i].boundary_merged == (overlapping >= 2));
      const Span seg = segs[m.assignment[i].segment].span;
      REQUIRE((seg.start <= span.start && span.start < seg.end));
    }
  }
}

TEST_CASE("property: all-special affixes never produce boundary merges") {
  for (std::uint64_t seed = 0; seed < 80; ++seed) {
    auto inst = generate_instance(seed);
    if (inst.tokenizer.special_pieces().empty()) continue;
    TemplateSpec tpl;
    for (std::size_t r = 0; r < 3; ++r) {
      tpl.prefix[r] = "<u>";
      tpl.suffix[r] = "</u>";
    }
    const auto m = tokenize_and_split(inst.tokenizer, inst.conversation, tpl);
    REQUIRE(m.boundary_merge_count() == 0);
  }
}
