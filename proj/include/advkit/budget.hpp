#pragma once

#include <array>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "advkit/json_io.hpp"

namespace advkit {

// FLOP totals for large models and long attacks exceed 64 bits.
using FlopCount = unsigned __int128;

std::string to_string(FlopCount value);
// JSON number when the value fits in 64 bits, decimal string otherwise.
json flop_json(FlopCount value);

struct ModelShape {
  std::int64_t layers = 0;
  std::int64_t d_model = 0;
  std::int64_t n_heads = 0;
  std::int64_t d_ff = 0;
  std::int64_t vocab = 0;
  std::int64_t context = 0;

  // Layers may be zero; everything else must be positive and n_heads must
  // divide d_model. Throws DocumentError naming the field.
  void validate() const;
};

ModelShape shape_from_json(const json& doc);
ModelShape load_shape(const std::filesystem::path& path);

// Embedding table + per layer (4·d² attention projections + 2·d·d_ff MLP)
// + untied output head. Biases and norms are not counted.
FlopCount param_count(const ModelShape& shape);

// Parameters touched by matrix multiplies per token: everything except the
// embedding lookup table.
FlopCount matmul_params(const ModelShape& shape);

struct FlopBreakdown {
  FlopCount linear = 0;     // 2 · matmul_params per token
  FlopCount attention = 0;  // 4 · layers · d_model · n per token at context n
  FlopCount total() const { return linear + attention; }
};

// Estimate for processing `new_tokens` tokens, the first at running context
// `context_len` and each following one a position later. Requires
// context_len ≥ 1, new_tokens ≥ 1, and the last position within
// shape.context.
FlopBreakdown forward_breakdown(const ModelShape& shape, std::uint64_t context_len,
                                std::uint64_t new_tokens);
FlopCount forward_flops(const ModelShape& shape, std::uint64_t context_len, std::uint64_t new_tokens);
// 2 × forward.
FlopCount backward_flops(const ModelShape& shape, std::uint64_t context_len,
                         std::uint64_t new_tokens);

enum class Phase { optimization, sampling };
enum class Metric { queries, wall_seconds, flops };

std::string_view to_string(Phase p);
std::string_view to_string(Metric m);

struct BudgetTotals {
  // [phase][metric]; wall time is held in whole microseconds so sums stay exact.
  std::array<std::array<FlopCount, 3>, 2> values{};

  FlopCount get(Phase p, Metric m) const {
    return values[static_cast<std::size_t>(p)][static_cast<std::size_t>(m)];
  }
  double seconds(Phase p) const;
  BudgetTotals& operator+=(const BudgetTotals& other);
  friend bool operator==(const BudgetTotals&, const BudgetTotals&) = default;
  json to_json() const;
};

// Append-only effort ledger. One writer per ledger; combine per-worker
// ledgers with merge().
class BudgetLedger {
 public:
  struct Entry {
    Phase phase;
    Metric metric;
    FlopCount amount;  // microseconds for wall_seconds
    std::string label;
  };

  // Integer amounts are counts (whole seconds for wall_seconds); floating
  // amounts are only accepted for wall_seconds and are rounded to the
  // microsecond. Negative amounts throw std::invalid_argument.
  template <typename T>
    requires(std::is_arithmetic_v<T> || std::same_as<T, FlopCount>)
  void record(Phase phase, Metric metric, T amount, std::string label = {}) {
    if constexpr (std::is_floating_point_v<T>) {
      record_seconds(phase, metric, static_cast<double>(amount), std::move(label));
    } else if constexpr (std::same_as<T, FlopCount>) {
      record_count(phase, metric, amount, std::move(label));
    } else {
      if constexpr (std::is_signed_v<T>) {
        if (amount < 0) throw std::invalid_argument("ledger amounts must be non-negative");
      }
      record_count(phase, metric, static_cast<FlopCount>(amount), std::move(label));
    }
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  BudgetTotals report() const;

  static BudgetLedger merge(std::span<const BudgetLedger> ledgers);

 private:
  void record_count(Phase phase, Metric metric, FlopCount amount, std::string label);
  void record_seconds(Phase phase, Metric metric, double seconds, std::string label);

  std::vector<Entry> entries_;
};

}  // namespace advkit
