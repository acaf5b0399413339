#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "advkit/conversation.hpp"
#include "advkit/json_io.hpp"
#include "advkit/tokenizer.hpp"

namespace advkit {

enum class RejectReason {
  none,
  special_token,   // candidate contains a control-token id
  unknown_id,      // id absent from the vocabulary
  unencodable,     // decoded text contains a character with no vocab entry
  round_trip,      // re-encoding the decoded candidate changes it
  boundary_merge,  // candidate round-trips alone but merges with its context
  not_found,       // oracle: no witness within the enumeration bound
};

std::string_view to_string(RejectReason reason);

// First position where the expected and actual token streams diverge. A
// missing id means that stream ended before `index`.
struct Mismatch {
  std::size_t index = 0;
  std::optional<TokenId> expected;
  std::optional<TokenId> actual;

  friend bool operator==(const Mismatch&, const Mismatch&) = default;
};

struct ReachabilityVerdict {
  bool reachable = false;
  RejectReason reason = RejectReason::none;
  std::optional<std::string> witness;  // set iff reachable
  std::optional<Mismatch> mismatch;    // set iff not reachable
  bool bound_limited = false;          // oracle verdicts only

  static ReachabilityVerdict accept(std::string witness);
  static ReachabilityVerdict reject(RejectReason reason, Mismatch mismatch);
};

json to_json(const ReachabilityVerdict& v);

// Legacy check: round-trips the candidate on its own, ignoring context.
ReachabilityVerdict is_reachable_isolated(const TokenizerModel& tok,
                                          std::span<const TokenId> candidate);

// Full-conversation check: substitutes decode(candidate) into `slot`, encodes
// the whole rendered conversation, and compares it with expected_tokens().
// Mismatch indices refer to the full sequence.
ReachabilityVerdict is_reachable_in_context(const TokenizerModel& tok, const Conversation& conv,
                                            const TemplateSpec& tpl, const SegmentLabel& slot,
                                            std::span<const TokenId> candidate);

inline constexpr std::uint64_t kMaxOracleStrings = 10'000'000;

class EnumerationLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exhaustive ground truth: enumerates every slot string over `alphabet` up to
// `max_len` characters (shortest first, then lexicographic), and records the
// first string producing each full-conversation encoding.
class BruteForceOracle {
 public:
  BruteForceOracle(const TokenizerModel& tok, const Conversation& conv, const TemplateSpec& tpl,
                   const SegmentLabel& slot, std::u32string_view alphabet, std::size_t max_len);

  ReachabilityVerdict query(std::span<const TokenId> target_full) const;

  std::uint64_t strings_enumerated() const noexcept { return enumerated_; }
  std::size_t distinct_encodings() const noexcept { return encodings_.size(); }
  std::size_t max_len() const noexcept { return max_len_; }

  // Throws EnumerationLimitError when |alphabet|^max_len exceeds kMaxOracleStrings.
  static void check_bound(std::size_t alphabet_size, std::size_t max_len);

 private:
  struct VectorHash {
    std::size_t operator()(const std::vector<TokenId>& v) const noexcept;
  };

  std::vector<std::pair<std::vector<TokenId>, std::u32string>> encodings_;
  std::unordered_map<std::vector<TokenId>, std::size_t, VectorHash> index_;
  std::uint64_t enumerated_ = 0;
  std::size_t max_len_ = 0;
};

ReachabilityVerdict brute_force_reachable(const TokenizerModel& tok, const Conversation& conv,
                                          const TemplateSpec& tpl, const SegmentLabel& slot,
                                          std::span<const TokenId> target_full,
                                          std::u32string_view alphabet, std::size_t max_len);

enum class FilterMode { isolated, full };

std::string_view to_string(FilterMode mode);
FilterMode parse_filter_mode(std::string_view name);

struct FilterReport {
  FilterMode mode = FilterMode::full;
  std::optional<SegmentLabel> slot;  // full mode only
  std::vector<std::size_t> kept;
  std::vector<std::pair<std::size_t, ReachabilityVerdict>> rejected;
  std::size_t total = 0;

  double rejection_fraction() const {
    return total == 0 ? 0.0 : static_cast<double>(rejected.size()) / static_cast<double>(total);
  }
  json to_json(std::span<const std::vector<TokenId>> candidates) const;
};

// Checks every candidate and reports in input order. `workers` only affects
// scheduling; the report is identical for any worker count.
FilterReport filter_candidates(const TokenizerModel& tok, const Conversation& conv,
                               const TemplateSpec& tpl, const SegmentLabel& slot,
                               std::span<const std::vector<TokenId>> candidates, FilterMode mode,
                               unsigned workers = 1);

// One JSON array of token ids per line; blank lines are skipped. Errors are
// DocumentError with path "line N".
std::vector<std::vector<TokenId>> parse_candidates(std::string_view text);
std::string format_candidates(std::span<const std::vector<TokenId>> candidates);

}  // namespace advkit
