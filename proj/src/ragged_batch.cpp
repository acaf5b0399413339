#include "advkit/ragged_batch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace advkit {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Portable uniform draw in [-1, 1); std distributions differ across
// standard libraries, mt19937_64 does not.
float uniform_pm1(std::mt19937_64& rng) {
  const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return static_cast<float>(2.0 * unit - 1.0);
}

std::vector<float> random_matrix(std::mt19937_64& rng, std::size_t n, float scale) {
  std::vector<float> m(n);
  for (auto& v : m) v = uniform_pm1(rng) * scale;
  return m;
}

}  // namespace

RaggedBatchLayout build_layout(std::span<const std::vector<TokenId>> seqs, TokenId pad_id,
                               std::size_t extra_pad_columns) {
  if (seqs.empty()) throw std::invalid_argument("build_layout: empty batch");
  std::size_t longest = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    if (seqs[i].empty()) {
      throw std::invalid_argument("build_layout: sequence " + std::to_string(i) + " is empty");
    }
    longest = std::max(longest, seqs[i].size());
  }
  const std::size_t width = longest + extra_pad_columns;
  RaggedBatchLayout layout;
  layout.pad_id = pad_id;
  for (const auto& seq : seqs) {
    const std::size_t pad = width - seq.size();
    std::vector<TokenId> ids(pad, pad_id);
    ids.insert(ids.end(), seq.begin(), seq.end());
    std::vector<std::uint8_t> mask(width, 0);
    std::fill(mask.begin() + static_cast<std::ptrdiff_t>(pad), mask.end(), 1);
    std::vector<Position> positions(width, 0);
    for (std::size_t j = pad; j < width; ++j) positions[j] = static_cast<Position>(j - pad);
    layout.ids.push_back(std::move(ids));
    layout.mask.push_back(std::move(mask));
    layout.positions.push_back(std::move(positions));
  }
  return layout;
}

void corrupt_mask(RaggedBatchLayout& layout) {
  for (auto& row : layout.mask) std::fill(row.begin(), row.end(), 1);
}

ExactHashModel::ExactHashModel(std::size_t vocab, std::uint64_t seed) : vocab_(vocab), seed_(seed) {
  if (vocab == 0) throw std::invalid_argument("ExactHashModel: vocab must be positive");
}

TokenId ExactHashModel::next_token(std::span<const TokenId> ids, std::span<const std::uint8_t> mask,
                                   std::span<const Position> positions) const {
  std::uint64_t h = splitmix64(seed_);
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (!mask[j]) continue;
    const std::uint64_t pair = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(ids[j])) << 32) |
                               static_cast<std::uint32_t>(positions[j]);
    h = splitmix64(h ^ pair);
  }
  return static_cast<TokenId>(h % vocab_);
}

TinyFloatAttention::TinyFloatAttention(std::size_t vocab, std::size_t dim, std::uint64_t seed)
    : vocab_(vocab), dim_(dim) {
  if (vocab == 0 || dim == 0) throw std::invalid_argument("TinyFloatAttention: empty shape");
  std::mt19937_64 rng(seed);
  const float scale = 1.0f / std::sqrt(static_cast<float>(dim));
  embedding_ = random_matrix(rng, vocab * dim, 1.0f);
  wq_ = random_matrix(rng, dim * dim, scale);
  wk_ = random_matrix(rng, dim * dim, scale);
  wv_ = random_matrix(rng, dim * dim, scale);
  out_ = random_matrix(rng, vocab * dim, scale);
}

std::vector<float> TinyFloatAttention::embed(TokenId id, Position pos) const {
  const auto row = static_cast<std::size_t>(id) % vocab_;
  std::vector<float> x(embedding_.begin() + static_cast<std::ptrdiff_t>(row * dim_),
                       embedding_.begin() + static_cast<std::ptrdiff_t>((row + 1) * dim_));
  for (std::size_t k = 0; k < dim_; ++k) {
    const double freq = std::pow(10000.0, -static_cast<double>(k / 2 * 2) / static_cast<double>(dim_));
    const double angle = static_cast<double>(pos) * freq;
    x[k] += static_cast<float>(k % 2 == 0 ? std::sin(angle) : std::cos(angle));
  }
  return x;
}

TokenId TinyFloatAttention::next_token(std::span<const TokenId> ids,
                                       std::span<const std::uint8_t> mask,
                                       std::span<const Position> positions) const {
  auto matvec = [this](const std::vector<float>& m, const std::vector<float>& x, std::size_t rows) {
    std::vector<float> y(rows, 0.0f);
    for (std::size_t r = 0; r < rows; ++r) {
      float acc = 0.0f;
      for (std::size_t k = 0; k < dim_; ++k) acc += m[r * dim_ + k] * x[k];
      y[r] = acc;
    }
    return y;
  };

  std::size_t last = ids.size();
  for (std::size_t j = ids.size(); j > 0; --j) {
    if (mask[j - 1]) {
      last = j - 1;
      break;
    }
  }
  if (last == ids.size()) return 0;

  const auto x_last = embed(ids[last], positions[last]);
  const auto q = matvec(wq_, x_last, dim_);
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dim_));

  std::vector<float> scores;
  std::vector<std::vector<float>> values;
  float max_score = -std::numeric_limits<float>::infinity();
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (!mask[j]) continue;
    const auto x = embed(ids[j], positions[j]);
    const auto k = matvec(wk_, x, dim_);
    float s = 0.0f;
    for (std::size_t d = 0; d < dim_; ++d) s += q[d] * k[d];
    s *= inv_sqrt;
    max_score = std::max(max_score, s);
    scores.push_back(s);
    values.push_back(matvec(wv_, x, dim_));
  }
  float denom = 0.0f;
  for (auto& s : scores) {
    s = std::exp(s - max_score);
    denom += s;
  }
  std::vector<float> hidden = x_last;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    const float w = scores[j] / denom;
    for (std::size_t d = 0; d < dim_; ++d) hidden[d] += w * values[j][d];
  }
  const auto logits = matvec(out_, hidden, vocab_);
  return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

std::vector<std::vector<TokenId>> generate_batched(const NextTokenModel& model,
                                                   RaggedBatchLayout layout, std::size_t steps) {
  std::vector<std::vector<TokenId>> generated(layout.batch());
  for (std::size_t step = 0; step < steps; ++step) {
    for (std::size_t r = 0; r < layout.batch(); ++r) {
      const TokenId next = model.next_token(layout.ids[r], layout.mask[r], layout.positions[r]);
      generated[r].push_back(next);
    }
    for (std::size_t r = 0; r < layout.batch(); ++r) {
      const Position next_pos = layout.positions[r].back() + 1;
      layout.ids[r].push_back(generated[r].back());
      layout.mask[r].push_back(1);
      layout.positions[r].push_back(next_pos);
    }
  }
  return generated;
}

std::vector<TokenId> generate_unbatched(const NextTokenModel& model, std::span<const TokenId> seq,
                                        std::size_t steps) {
  const std::vector<std::vector<TokenId>> one{std::vector<TokenId>(seq.begin(), seq.end())};
  return generate_batched(model, build_layout(one, 0), steps).front();
}

std::size_t common_prefix_length(std::span<const TokenId> a, std::span<const TokenId> b) {
  const auto n = std::min(a.size(), b.size());
  std::size_t i = 0;
  while (i < n && a[i] == b[i]) ++i;
  return i;
}

EquivalenceReport equivalence_report(const NextTokenModel& model,
                                     std::span<const std::vector<TokenId>> seqs, std::size_t steps,
                                     std::span<const std::size_t> batch_sizes,
                                     const EquivalenceOptions& options) {
  if (seqs.empty()) throw std::invalid_argument("equivalence_report: no sequences");
  for (auto b : batch_sizes) {
    if (b == 0) throw std::invalid_argument("equivalence_report: batch size must be positive");
  }
  std::vector<std::vector<TokenId>> baseline;
  baseline.reserve(seqs.size());
  for (const auto& s : seqs) baseline.push_back(generate_unbatched(model, s, steps));

  EquivalenceReport report;
  report.steps = steps;
  report.corrupt_mask = options.corrupt_mask;
  for (const std::size_t b : batch_sizes) {
    EquivalenceRow row;
    row.batch_size = b;
    row.sequences = seqs.size();
    std::size_t prefix_sum = 0;
    for (std::size_t start = 0; start < seqs.size(); start += b) {
      const auto chunk = seqs.subspan(start, std::min(b, seqs.size() - start));
      auto layout = build_layout(chunk, options.pad_id, options.extra_pad_columns);
      if (options.corrupt_mask) corrupt_mask(layout);
      const auto out = generate_batched(model, std::move(layout), steps);
      for (std::size_t r = 0; r < out.size(); ++r) {
        const auto& ref = baseline[start + r];
        const auto prefix = common_prefix_length(out[r], ref);
        prefix_sum += prefix;
        if (out[r] == ref) ++row.exact_matches;
      }
    }
    row.match_fraction = static_cast<double>(row.exact_matches) / static_cast<double>(seqs.size());
    row.mean_common_prefix = static_cast<double>(prefix_sum) / static_cast<double>(seqs.size());
    report.rows.push_back(row);
  }
  return report;
}

json EquivalenceReport::to_json() const {
  json out;
  out["steps"] = steps;
  out["corrupt_mask"] = corrupt_mask;
  json table = json::array();
  for (const auto& r : rows) {
    table.push_back(json{{"batch_size", r.batch_size},
                         {"sequences", r.sequences},
                         {"exact_matches", r.exact_matches},
                         {"match_fraction", r.match_fraction},
                         {"mean_common_prefix", r.mean_common_prefix}});
  }
  out["rows"] = std::move(table);
  return out;
}

}  // namespace advkit
