#include "advkit/reachability.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "advkit/text.hpp"

namespace advkit {

namespace {

std::optional<TokenId> at(std::span<const TokenId> ids, std::size_t i) {
  if (i < ids.size()) return ids[i];
  return std::nullopt;
}

std::size_t common_prefix(std::span<const TokenId> a, std::span<const TokenId> b) {
  const auto n = std::min(a.size(), b.size());
  std::size_t i = 0;
  while (i < n && a[i] == b[i]) ++i;
  return i;
}

// nullopt when the streams are equal.
std::optional<Mismatch> first_divergence(std::span<const TokenId> expected,
                                         std::span<const TokenId> actual) {
  const auto i = common_prefix(expected, actual);
  if (i == expected.size() && i == actual.size()) return std::nullopt;
  return Mismatch{i, at(expected, i), at(actual, i)};
}

// Rejects unknown and special ids; `base` shifts the reported index.
std::optional<ReachabilityVerdict> screen_ids(const TokenizerModel& tok,
                                              std::span<const TokenId> candidate, std::size_t base) {
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    if (!tok.contains(candidate[i])) {
      return ReachabilityVerdict::reject(RejectReason::unknown_id,
                                         Mismatch{base + i, candidate[i], std::nullopt});
    }
    if (tok.is_special(candidate[i])) {
      return ReachabilityVerdict::reject(RejectReason::special_token,
                                         Mismatch{base + i, candidate[i], std::nullopt});
    }
  }
  return std::nullopt;
}

// Index of the candidate token whose decoded text covers `char_pos`.
std::size_t covering_token(const TokenizerModel& tok, std::span<const TokenId> candidate,
                           std::size_t char_pos) {
  std::size_t end = 0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    end += tok.piece(candidate[i]).size();
    if (char_pos < end) return i;
  }
  return candidate.empty() ? 0 : candidate.size() - 1;
}

Conversation with_slot_content(const Conversation& conv, const SegmentLabel& slot,
                               std::string content) {
  Conversation out = conv;
  out.messages[slot.message].content = std::move(content);
  return out;
}

}  // namespace

std::string_view to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::none:
      return "none";
    case RejectReason::special_token:
      return "special_token";
    case RejectReason::unknown_id:
      return "unknown_id";
    case RejectReason::unencodable:
      return "unencodable";
    case RejectReason::round_trip:
      return "round_trip";
    case RejectReason::boundary_merge:
      return "boundary_merge";
    case RejectReason::not_found:
      return "not_found";
  }
  return "none";
}

ReachabilityVerdict ReachabilityVerdict::accept(std::string witness) {
  ReachabilityVerdict v;
  v.reachable = true;
  v.witness = std::move(witness);
  return v;
}

ReachabilityVerdict ReachabilityVerdict::reject(RejectReason reason, Mismatch mismatch) {
  ReachabilityVerdict v;
  v.reason = reason;
  v.mismatch = mismatch;
  return v;
}

json to_json(const ReachabilityVerdict& v) {
  json out;
  out["reachable"] = v.reachable;
  out["reason"] = std::string(to_string(v.reason));
  if (v.witness) out["witness"] = *v.witness;
  if (v.mismatch) {
    auto id_or_null = [](const std::optional<TokenId>& id) { return id ? json(*id) : json(nullptr); };
    out["mismatch"] = json{{"index", v.mismatch->index},
                           {"expected", id_or_null(v.mismatch->expected)},
                           {"actual", id_or_null(v.mismatch->actual)}};
  }
  if (v.bound_limited) out["bound_limited"] = true;
  return out;
}

ReachabilityVerdict is_reachable_isolated(const TokenizerModel& tok,
                                          std::span<const TokenId> candidate) {
  if (auto rejected = screen_ids(tok, candidate, 0)) return *rejected;
  const auto text = tok.decode_u32(candidate);
  TokenSeq reencoded;
  try {
    reencoded = tok.encode(text);
  } catch (const EncodeError& e) {
    const auto i = covering_token(tok, candidate, e.position());
    return ReachabilityVerdict::reject(RejectReason::unencodable,
                                       Mismatch{i, candidate[i], std::nullopt});
  }
  if (auto mismatch = first_divergence(candidate, reencoded.ids)) {
    return ReachabilityVerdict::reject(RejectReason::round_trip, *mismatch);
  }
  return ReachabilityVerdict::accept(to_utf8(text));
}

ReachabilityVerdict is_reachable_in_context(const TokenizerModel& tok, const Conversation& conv,
                                            const TemplateSpec& tpl, const SegmentLabel& slot,
                                            std::span<const TokenId> candidate) {
  check_slot(conv, slot);
  const auto expected = expected_sequence(tok, conv, tpl, slot, candidate);
  if (auto rejected = screen_ids(tok, candidate, expected.slot_offset)) return *rejected;

  const auto witness = tok.decode(candidate);
  const auto rendered = render(with_slot_content(conv, slot, witness), tpl);
  TokenSeq actual;
  try {
    actual = encode_rendered(tok, rendered);
  } catch (const SegmentEncodeError& e) {
    // Every other segment encoded on its own, so the failure is in the slot.
    const Segment* seg = rendered.segment_at(e.position());
    const std::size_t local = seg ? e.position() - seg->span.start : 0;
    const auto i = covering_token(tok, candidate, local);
    return ReachabilityVerdict::reject(
        RejectReason::unencodable,
        Mismatch{expected.slot_offset + i, candidate.empty() ? std::nullopt : at(candidate, i),
                 std::nullopt});
  }
  if (auto mismatch = first_divergence(expected.ids, actual.ids)) {
    const bool alone_ok = is_reachable_isolated(tok, candidate).reachable;
    return ReachabilityVerdict::reject(alone_ok ? RejectReason::boundary_merge
                                                : RejectReason::round_trip,
                                       *mismatch);
  }
  return ReachabilityVerdict::accept(witness);
}

std::size_t BruteForceOracle::VectorHash::operator()(const std::vector<TokenId>& v) const noexcept {
  std::uint64_t h = 1469598103934665603ull;
  for (TokenId id : v) {
    h ^= static_cast<std::uint32_t>(id);
    h *= 1099511628211ull;
  }
  return static_cast<std::size_t>(h);
}

void BruteForceOracle::check_bound(std::size_t alphabet_size, std::size_t max_len) {
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < max_len; ++i) {
    if (alphabet_size != 0 && count > kMaxOracleStrings / alphabet_size + 1) {
      count = kMaxOracleStrings + 1;
      break;
    }
    count *= alphabet_size;
  }
  if (count > kMaxOracleStrings) {
    throw EnumerationLimitError("oracle enumeration of " + std::to_string(alphabet_size) + "^" +
                                std::to_string(max_len) + " strings exceeds the limit of " +
                                std::to_string(kMaxOracleStrings));
  }
}

BruteForceOracle::BruteForceOracle(const TokenizerModel& tok, const Conversation& conv,
                                   const TemplateSpec& tpl, const SegmentLabel& slot,
                                   std::u32string_view alphabet, std::size_t max_len)
    : max_len_(max_len) {
  check_slot(conv, slot);
  std::u32string symbols(alphabet);
  std::sort(symbols.begin(), symbols.end());
  symbols.erase(std::unique(symbols.begin(), symbols.end()), symbols.end());
  check_bound(symbols.size(), max_len);

  Conversation probe = conv;
  auto visit = [&](const std::u32string& text) {
    ++enumerated_;
    probe.messages[slot.message].content = to_utf8(text);
    TokenSeq encoded;
    try {
      encoded = encode_rendered(tok, render(probe, tpl));
    } catch (const SegmentEncodeError&) {
      return;
    }
    if (index_.emplace(encoded.ids, encodings_.size()).second) {
      encodings_.emplace_back(std::move(encoded.ids), text);
    }
  };

  // Odometer over symbol indices, per length: shortest first, lexicographic.
  const std::size_t longest = symbols.empty() ? 0 : max_len;
  for (std::size_t len = 0; len <= longest; ++len) {
    std::vector<std::size_t> digits(len, 0);
    std::u32string text(len, U'\0');
    bool done = false;
    while (!done) {
      for (std::size_t i = 0; i < len; ++i) text[i] = symbols[digits[i]];
      visit(text);
      done = true;
      for (std::size_t pos = len; pos > 0; --pos) {
        if (++digits[pos - 1] < symbols.size()) {
          done = false;
          break;
        }
        digits[pos - 1] = 0;
      }
    }
  }
}

ReachabilityVerdict BruteForceOracle::query(std::span<const TokenId> target_full) const {
  const std::vector<TokenId> key(target_full.begin(), target_full.end());
  if (auto it = index_.find(key); it != index_.end()) {
    return ReachabilityVerdict::accept(to_utf8(encodings_[it->second].second));
  }
  // Report divergence against the enumerated encoding sharing the longest
  // prefix with the target (first in enumeration order on ties).
  const std::vector<TokenId>* best = nullptr;
  std::size_t best_len = 0;
  for (const auto& [ids, text] : encodings_) {
    const auto len = common_prefix(target_full, ids);
    if (best == nullptr || len > best_len) {
      best = &ids;
      best_len = len;
    }
  }
  Mismatch m{best_len, at(target_full, best_len),
             best ? at(*best, best_len) : std::optional<TokenId>{}};
  auto v = ReachabilityVerdict::reject(RejectReason::not_found, m);
  v.bound_limited = true;
  return v;
}

ReachabilityVerdict brute_force_reachable(const TokenizerModel& tok, const Conversation& conv,
                                          const TemplateSpec& tpl, const SegmentLabel& slot,
                                          std::span<const TokenId> target_full,
                                          std::u32string_view alphabet, std::size_t max_len) {
  return BruteForceOracle(tok, conv, tpl, slot, alphabet, max_len).query(target_full);
}

std::string_view to_string(FilterMode mode) {
  return mode == FilterMode::isolated ? "isolated" : "full";
}

FilterMode parse_filter_mode(std::string_view name) {
  if (name == "isolated") return FilterMode::isolated;
  if (name == "full") return FilterMode::full;
  throw std::invalid_argument("unknown filter mode '" + std::string(name) + "'");
}

json FilterReport::to_json(std::span<const std::vector<TokenId>> candidates) const {
  json out;
  out["mode"] = std::string(to_string(mode));
  if (slot) out["slot"] = slot->str();
  out["totals"] = json{{"candidates", total},
                       {"kept", kept.size()},
                       {"rejected", rejected.size()},
                       {"rejection_fraction", rejection_fraction()}};
  out["kept"] = kept;
  json rej = json::array();
  for (const auto& [index, verdict] : rejected) {
    json item{{"index", index}};
    if (index < candidates.size()) item["candidate"] = candidates[index];
    item["verdict"] = advkit::to_json(verdict);
    rej.push_back(std::move(item));
  }
  out["rejected"] = std::move(rej);
  return out;
}

FilterReport filter_candidates(const TokenizerModel& tok, const Conversation& conv,
                               const TemplateSpec& tpl, const SegmentLabel& slot,
                               std::span<const std::vector<TokenId>> candidates, FilterMode mode,
                               unsigned workers) {
  if (mode == FilterMode::full) {
    // Surface template/slot problems once, before fanning out.
    (void)expected_sequence(tok, conv, tpl, slot, {});
  }
  std::vector<ReachabilityVerdict> verdicts(candidates.size());
  auto check = [&](std::size_t i) {
    verdicts[i] = mode == FilterMode::isolated
                      ? is_reachable_isolated(tok, candidates[i])
                      : is_reachable_in_context(tok, conv, tpl, slot, candidates[i]);
  };

  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(candidates.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < candidates.size(); ++i) check(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (auto i = next.fetch_add(1); i < candidates.size(); i = next.fetch_add(1)) {
            try {
              check(i);
            } catch (...) {
              std::lock_guard lock(failure_mutex);
              if (!failure) failure = std::current_exception();
            }
          }
        });
      }
    }
    if (failure) std::rethrow_exception(failure);
  }

  FilterReport report;
  report.mode = mode;
  if (mode == FilterMode::full) report.slot = slot;
  report.total = candidates.size();
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    if (verdicts[i].reachable) {
      report.kept.push_back(i);
    } else {
      report.rejected.emplace_back(i, std::move(verdicts[i]));
    }
  }
  return report;
}

std::vector<std::vector<TokenId>> parse_candidates(std::string_view text) {
  std::vector<std::vector<TokenId>> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    ++line_no;
    pos = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string path = "line " + std::to_string(line_no);
    json parsed;
    try {
      parsed = json::parse(line);
    } catch (const json::parse_error&) {
      throw DocumentError(path, "not a JSON array of token ids");
    }
    if (!parsed.is_array()) throw DocumentError(path, "not a JSON array of token ids");
    std::vector<TokenId> ids;
    for (const auto& v : parsed) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0 ||
          v.get<std::int64_t>() > std::numeric_limits<TokenId>::max()) {
        throw DocumentError(path, "token ids must be non-negative integers");
      }
      ids.push_back(static_cast<TokenId>(v.get<std::int64_t>()));
    }
    out.push_back(std::move(ids));
  }
  return out;
}

std::string format_candidates(std::span<const std::vector<TokenId>> candidates) {
  std::string out;
  for (const auto& c : candidates) {
    out += json(c).dump();
    out += '\n';
  }
  return out;
}

}  // namespace advkit
