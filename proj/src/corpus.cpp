#include "advkit/corpus.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "advkit/reachability.hpp"
#include "advkit/text.hpp"

namespace advkit {

namespace {

// Bounded draws straight from mt19937_64 so corpora are identical on every
// standard library.
class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  std::size_t below(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(rng_() % n); }
  std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }
  bool chance(std::size_t num, std::size_t den) { return below(den) < num; }

  std::u32string text(const std::u32string& alphabet, std::size_t lo, std::size_t hi) {
    std::u32string s(between(lo, hi), U'\0');
    for (auto& c : s) c = alphabet[below(alphabet.size())];
    return s;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

ReachInstance generate_instance(std::uint64_t seed, const CorpusLimits& limits) {
  Draw d(seed);
  const bool whitespace = d.chance(1, 4);
  const std::size_t alphabet_size =
      std::max<std::size_t>(2, std::min<std::size_t>(limits.max_alphabet, d.between(2, 3)));
  std::u32string alphabet = U"abc";
  alphabet.resize(alphabet_size);
  if (whitespace) alphabet.back() = U' ';
  std::sort(alphabet.begin(), alphabet.end());

  std::vector<std::u32string> pieces;
  for (char32_t c : alphabet) pieces.emplace_back(1, c);

  std::vector<std::u32string> specials;
  if (d.chance(1, 2)) specials = {U"<u>", U"</u>"};
  if (!specials.empty() && d.chance(1, 3)) specials.push_back(U"<s>");

  std::vector<std::pair<std::u32string, std::u32string>> merges;
  std::set<std::pair<std::u32string, std::u32string>> merged_pairs;
  const std::size_t target_merges = d.below(limits.max_merges + 1);
  const std::size_t vocab_cap = limits.max_vocab - specials.size();
  for (std::size_t attempt = 0; attempt < 400 && merges.size() < target_merges; ++attempt) {
    const auto& left = pieces[d.below(pieces.size())];
    const auto& right = pieces[d.below(pieces.size())];
    auto merged = left + right;
    if (merged.size() > 6 || merged_pairs.count({left, right})) continue;
    const bool exists = std::find(pieces.begin(), pieces.end(), merged) != pieces.end();
    if (!exists && pieces.size() >= vocab_cap) continue;
    if (exists && !d.chance(1, 3)) continue;
    merged_pairs.insert({left, right});
    merges.emplace_back(left, right);
    if (!exists) pieces.push_back(std::move(merged));
  }

  json doc;
  json vocab = json::object();
  TokenId next_id = 0;
  for (const auto& p : pieces) vocab[to_utf8(p)] = next_id++;
  for (const auto& s : specials) vocab[to_utf8(s)] = next_id++;
  doc["vocab"] = std::move(vocab);
  json merge_list = json::array();
  for (const auto& [l, r] : merges) merge_list.push_back(json::array({to_utf8(l), to_utf8(r)}));
  doc["merges"] = std::move(merge_list);
  json special_list = json::array();
  for (const auto& s : specials) special_list.push_back(to_utf8(s));
  doc["special_tokens"] = std::move(special_list);
  doc["pretokenizer"] = whitespace ? "whitespace" : "none";

  ReachInstance inst{doc, TokenizerModel::from_json(doc), {}, {}, {}, alphabet, {}};

  auto affix = [&](bool opening) {
    const std::u32string special = specials.empty() ? U"" : (opening ? U"<u>" : U"</u>");
    switch (d.below(4)) {
      case 0:
        return std::u32string();
      case 1:
        return special;
      case 2:
        return d.text(alphabet, 1, 2);
      default:
        return opening ? special + d.text(alphabet, 0, 1) : d.text(alphabet, 0, 1) + special;
    }
  };
  for (std::size_t r = 0; r < 3; ++r) {
    inst.tpl.prefix[r] = to_utf8(affix(true));
    inst.tpl.suffix[r] = to_utf8(affix(false));
  }
  if (specials.size() == 3 && d.chance(1, 2)) inst.tpl.bos = "<s>";
  if (d.chance(1, 2)) inst.tpl.generation_prompt = to_utf8(d.text(alphabet, 1, 2));

  auto& msgs = inst.conversation.messages;
  if (d.chance(1, 3)) msgs.push_back(Message{Role::system, to_utf8(d.text(alphabet, 0, 3))});
  msgs.push_back(Message{Role::user, to_utf8(d.text(alphabet, 0, 3))});
  if (d.chance(1, 3)) {
    msgs.push_back(Message{Role::assistant, to_utf8(d.text(alphabet, 0, 3))});
    msgs.push_back(Message{Role::user, to_utf8(d.text(alphabet, 0, 3))});
  }
  std::vector<std::size_t> user_turns;
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    if (msgs[i].role == Role::user) user_turns.push_back(i);
  }
  inst.slot = SegmentLabel{SegmentKind::content, user_turns[d.below(user_turns.size())]};

  std::vector<TokenId> content_ids;
  for (TokenId id = 0; id < static_cast<TokenId>(pieces.size()); ++id) content_ids.push_back(id);
  for (std::size_t c = 0; c < limits.candidates; ++c) {
    std::vector<TokenId> cand;
    const std::size_t kind = d.below(10);
    if (kind < 5) {
      cand.resize(d.below(limits.max_candidate_len + 1));
      for (auto& id : cand) id = content_ids[d.below(content_ids.size())];
    } else if (kind < 9) {
      // Reachable in isolation by construction.
      cand = inst.tokenizer.encode(d.text(alphabet, 0, 6)).ids;
      if (cand.size() > limits.max_candidate_len) cand.resize(limits.max_candidate_len);
    } else {
      cand.resize(d.between(1, limits.max_candidate_len));
      for (auto& id : cand) id = content_ids[d.below(content_ids.size())];
      if (!specials.empty()) {
        cand[d.below(cand.size())] = static_cast<TokenId>(pieces.size() + d.below(specials.size()));
      }
    }
    inst.candidates.push_back(std::move(cand));
  }
  return inst;
}

void write_instance(const ReachInstance& inst, std::uint64_t seed, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "tokenizer.json", inst.tokenizer_doc.dump(2) + "\n");
  write_file_atomic(dir / "template.json", to_json(inst.tpl).dump(2) + "\n");
  write_file_atomic(dir / "conversation.json", to_json(inst.conversation).dump(2) + "\n");
  write_file_atomic(dir / "candidates.txt", format_candidates(inst.candidates));
  json meta{{"seed", seed}, {"slot", inst.slot.str()}, {"alphabet", to_utf8(inst.alphabet)}};
  write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

std::vector<std::vector<TokenId>> generate_prompts(std::uint64_t seed, std::size_t count,
                                                   std::size_t min_len, std::size_t max_len,
                                                   std::size_t vocab) {
  Draw d(seed);
  std::vector<std::vector<TokenId>> out(count);
  for (auto& seq : out) {
    seq.resize(d.between(min_len, max_len));
    for (auto& id : seq) id = static_cast<TokenId>(1 + d.below(vocab - 1));
  }
  return out;
}

}  // namespace advkit
