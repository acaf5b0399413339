#include "advkit/budget.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace advkit {

namespace {

FlopCount checked_mul(FlopCount a, FlopCount b) {
  FlopCount out;
  if (__builtin_mul_overflow(a, b, &out)) throw std::overflow_error("FLOP count overflow");
  return out;
}

FlopCount checked_add(FlopCount a, FlopCount b) {
  FlopCount out;
  if (__builtin_add_overflow(a, b, &out)) throw std::overflow_error("FLOP count overflow");
  return out;
}

FlopCount u(std::int64_t v) { return static_cast<FlopCount>(v); }

std::int64_t read_dim(const json& doc, const char* key) {
  if (!doc.contains(key)) throw DocumentError(key, "required field missing");
  const auto& v = doc.at(key);
  if (!v.is_number_integer()) throw DocumentError(key, "must be an integer");
  return v.get<std::int64_t>();
}

}  // namespace

std::string to_string(FlopCount value) {
  if (value == 0) return "0";
  std::string digits;
  while (value > 0) {
    digits.push_back(static_cast<char>('0' + static_cast<int>(value % 10)));
    value /= 10;
  }
  std::reverse(digits.begin(), digits.end());
  return digits;
}

json flop_json(FlopCount value) {
  if (value <= std::numeric_limits<std::uint64_t>::max()) return static_cast<std::uint64_t>(value);
  return to_string(value);
}

void ModelShape::validate() const {
  if (layers < 0) throw DocumentError("layers", "must be non-negative");
  const std::pair<const char*, std::int64_t> positive[] = {
      {"d_model", d_model}, {"n_heads", n_heads}, {"d_ff", d_ff}, {"vocab", vocab}, {"context", context}};
  for (const auto& [name, value] : positive) {
    if (value <= 0) throw DocumentError(name, "must be positive");
  }
  if (d_model % n_heads != 0) throw DocumentError("n_heads", "must divide d_model");
}

ModelShape shape_from_json(const json& doc) {
  if (!doc.is_object()) throw DocumentError("", "model shape must be an object");
  require_known_keys(doc, {"layers", "d_model", "n_heads", "d_ff", "vocab", "context"}, "");
  ModelShape s;
  s.layers = read_dim(doc, "layers");
  s.d_model = read_dim(doc, "d_model");
  s.n_heads = read_dim(doc, "n_heads");
  s.d_ff = read_dim(doc, "d_ff");
  s.vocab = read_dim(doc, "vocab");
  s.context = read_dim(doc, "context");
  s.validate();
  return s;
}

ModelShape load_shape(const std::filesystem::path& path) {
  return shape_from_json(parse_json_text(read_file(path)));
}

FlopCount matmul_params(const ModelShape& shape) {
  shape.validate();
  const FlopCount d = u(shape.d_model);
  const FlopCount per_layer =
      checked_add(checked_mul(4 * d, d), checked_mul(2 * d, u(shape.d_ff)));
  return checked_add(checked_mul(u(shape.layers), per_layer), checked_mul(d, u(shape.vocab)));
}

FlopCount param_count(const ModelShape& shape) {
  return checked_add(matmul_params(shape), checked_mul(u(shape.vocab), u(shape.d_model)));
}

FlopBreakdown forward_breakdown(const ModelShape& shape, std::uint64_t context_len,
                                std::uint64_t new_tokens) {
  if (context_len < 1) throw std::invalid_argument("context_len must be at least 1");
  if (new_tokens < 1) throw std::invalid_argument("new_tokens must be at least 1");
  const FlopCount k = new_tokens;
  const FlopCount last = checked_add(context_len, k - 1);
  if (last > u(shape.context)) {
    throw std::invalid_argument("running context " + to_string(last) +
                                " exceeds the model context " + std::to_string(shape.context));
  }
  FlopBreakdown out;
  out.linear = checked_mul(checked_mul(2, matmul_params(shape)), k);
  // Σ_{n=c}^{c+k-1} n = k·c + k(k-1)/2
  const FlopCount position_sum = checked_add(checked_mul(k, context_len), k * (k - 1) / 2);
  const FlopCount per_position = checked_mul(checked_mul(4, u(shape.layers)), u(shape.d_model));
  out.attention = checked_mul(per_position, position_sum);
  (void)checked_add(out.linear, out.attention);
  return out;
}

FlopCount forward_flops(const ModelShape& shape, std::uint64_t context_len,
                        std::uint64_t new_tokens) {
  return forward_breakdown(shape, context_len, new_tokens).total();
}

FlopCount backward_flops(const ModelShape& shape, std::uint64_t context_len,
                         std::uint64_t new_tokens) {
  return checked_mul(2, forward_flops(shape, context_len, new_tokens));
}

std::string_view to_string(Phase p) {
  return p == Phase::optimization ? "optimization" : "sampling";
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::queries:
      return "queries";
    case Metric::wall_seconds:
      return "wall_seconds";
    case Metric::flops:
      return "flops";
  }
  return "queries";
}

double BudgetTotals::seconds(Phase p) const {
  return static_cast<double>(get(p, Metric::wall_seconds)) / 1e6;
}

BudgetTotals& BudgetTotals::operator+=(const BudgetTotals& other) {
  for (std::size_t p = 0; p < values.size(); ++p) {
    for (std::size_t m = 0; m < values[p].size(); ++m) {
      values[p][m] = checked_add(values[p][m], other.values[p][m]);
    }
  }
  return *this;
}

json BudgetTotals::to_json() const {
  json out;
  for (Phase p : {Phase::optimization, Phase::sampling}) {
    out[std::string(to_string(p))] = json{{"queries", flop_json(get(p, Metric::queries))},
                                          {"wall_seconds", seconds(p)},
                                          {"flops", flop_json(get(p, Metric::flops))}};
  }
  return out;
}

void BudgetLedger::record_count(Phase phase, Metric metric, FlopCount amount, std::string label) {
  if (metric == Metric::wall_seconds) amount = checked_mul(amount, 1'000'000);
  entries_.push_back(Entry{phase, metric, amount, std::move(label)});
}

void BudgetLedger::record_seconds(Phase phase, Metric metric, double seconds, std::string label) {
  if (metric != Metric::wall_seconds) {
    throw std::invalid_argument(std::string(to_string(metric)) + " amounts must be integers");
  }
  if (!std::isfinite(seconds) || seconds < 0) {
    throw std::invalid_argument("ledger amounts must be non-negative");
  }
  const auto micros = static_cast<FlopCount>(std::llround(seconds * 1e6));
  entries_.push_back(Entry{phase, metric, micros, std::move(label)});
}

BudgetTotals BudgetLedger::report() const {
  BudgetTotals totals;
  for (const auto& e : entries_) {
    auto& slot = totals.values[static_cast<std::size_t>(e.phase)][static_cast<std::size_t>(e.metric)];
    slot = checked_add(slot, e.amount);
  }
  return totals;
}

BudgetLedger BudgetLedger::merge(std::span<const BudgetLedger> ledgers) {
  BudgetLedger out;
  for (const auto& l : ledgers) out.entries_.insert(out.entries_.end(), l.entries_.begin(), l.entries_.end());
  return out;
}

}  // namespace advkit
