#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "advkit/json_io.hpp"
#include "advkit/tokenizer.hpp"

namespace advkit {

using Position = std::int32_t;

// Left-padded B×T batch. Rows are stored individually; every row has the
// same width.
struct RaggedBatchLayout {
  std::vector<std::vector<TokenId>> ids;
  std::vector<std::vector<std::uint8_t>> mask;  // 1 = real token
  std::vector<std::vector<Position>> positions;  // 0 at pads
  TokenId pad_id = 0;

  std::size_t batch() const noexcept { return ids.size(); }
  std::size_t width() const noexcept { return ids.empty() ? 0 : ids.front().size(); }
};

// Throws std::invalid_argument for an empty batch or an empty sequence.
// `extra_pad_columns` prepends that many additional masked pad columns.
RaggedBatchLayout build_layout(std::span<const std::vector<TokenId>> seqs, TokenId pad_id,
                               std::size_t extra_pad_columns = 0);

// Makes every column visible, pads included. Used to reproduce the class of
// batching bug where padding leaks into attention.
void corrupt_mask(RaggedBatchLayout& layout);

// Greedy next-token scorer over one row. Implementations must depend only on
// the columns whose mask is set, and on their ids and positions.
class NextTokenModel {
 public:
  virtual ~NextTokenModel() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual TokenId next_token(std::span<const TokenId> ids, std::span<const std::uint8_t> mask,
                             std::span<const Position> positions) const = 0;
};

// Integer mix of the visible (id, position) pairs; any layout error changes
// its output.
class ExactHashModel final : public NextTokenModel {
 public:
  explicit ExactHashModel(std::size_t vocab, std::uint64_t seed = 0);
  std::size_t vocab_size() const override { return vocab_; }
  TokenId next_token(std::span<const TokenId> ids, std::span<const std::uint8_t> mask,
                     std::span<const Position> positions) const override;

 private:
  std::size_t vocab_;
  std::uint64_t seed_;
};

// One-layer, single-head dot-product attention with seeded float weights.
class TinyFloatAttention final : public NextTokenModel {
 public:
  TinyFloatAttention(std::size_t vocab, std::size_t dim, std::uint64_t seed);
  std::size_t vocab_size() const override { return vocab_; }
  TokenId next_token(std::span<const TokenId> ids, std::span<const std::uint8_t> mask,
                     std::span<const Position> positions) const override;

 private:
  std::vector<float> embed(TokenId id, Position pos) const;

  std::size_t vocab_;
  std::size_t dim_;
  std::vector<float> embedding_;  // vocab × dim
  std::vector<float> wq_, wk_, wv_;  // dim × dim
  std::vector<float> out_;        // vocab × dim
};

// Greedy decoding; returns only the generated tokens, one list per row.
std::vector<std::vector<TokenId>> generate_batched(const NextTokenModel& model,
                                                   RaggedBatchLayout layout, std::size_t steps);
std::vector<TokenId> generate_unbatched(const NextTokenModel& model, std::span<const TokenId> seq,
                                        std::size_t steps);

std::size_t common_prefix_length(std::span<const TokenId> a, std::span<const TokenId> b);

struct EquivalenceOptions {
  bool corrupt_mask = false;
  TokenId pad_id = 0;
  std::size_t extra_pad_columns = 0;
};

struct EquivalenceRow {
  std::size_t batch_size = 0;
  std::size_t sequences = 0;
  std::size_t exact_matches = 0;
  double match_fraction = 0.0;
  double mean_common_prefix = 0.0;
};

struct EquivalenceReport {
  std::size_t steps = 0;
  bool corrupt_mask = false;
  std::vector<EquivalenceRow> rows;

  json to_json() const;
};

// Compares batched generation against the unbatched greedy baseline for each
// batch size. Sequences are grouped into consecutive batches in input order.
EquivalenceReport equivalence_report(const NextTokenModel& model,
                                     std::span<const std::vector<TokenId>> seqs, std::size_t steps,
                                     std::span<const std::size_t> batch_sizes,
                                     const EquivalenceOptions& options = {});

}  // namespace advkit
