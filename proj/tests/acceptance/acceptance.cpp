// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "advkit/artifact.hpp"
#include "advkit/budget.hpp"
#include "advkit/cli.hpp"
#include "advkit/corpus.hpp"
#include "advkit/ragged_batch.hpp"
#include "advkit/reachability.hpp"
#include "advkit/text.hpp"
#include "fixtures.hpp"

using namespace advkit;
using advkit::testing::data_path;
namespace fs = std::filesystem;
using Ids = std::vector<TokenId>;

namespace {

// Pinned thresholds.
constexpr std::size_t kOracleInstances = 200;
constexpr std::size_t kMinCandidatesPerInstance = 20;
constexpr std::size_t kOracleMaxLen = 8;
constexpr double kOracleSecondsLimit = 120.0;
constexpr std::size_t kRoundTripStrings = 10'000;
constexpr std::size_t kRoundTripMaxLen = 24;
constexpr std::size_t kBatches = 100;
constexpr std::size_t kGenSteps = 64;
constexpr std::size_t kFlopShapes = 1000;

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Check {
 public:
  explicit Check(Outcome& o) : o_(o) {}
  // Records the first failure only so the detail points at the root cause.
  void require(bool cond, const std::string& what) {
    if (!cond && o_.pass) {
      o_.pass = false;
      o_.detail = what;
    }
  }

 private:
  Outcome& o_;
};

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string d(const std::string& rel) { return data_path(rel).string(); }

std::string ids_str(std::span<const TokenId> ids) { return json(std::vector<TokenId>(ids.begin(), ids.end())).dump(); }

Outcome oracle_agreement() {
  Outcome o;
  Check c(o);
  const auto start = std::chrono::steady_clock::now();
  const CorpusLimits limits;
  std::size_t compared = 0, reachable = 0, skipped = 0;
  for (std::uint64_t seed = 0; seed < kOracleInstances; ++seed) {
    const auto inst = generate_instance(seed, limits);
    const auto& tok = inst.tokenizer;
    c.require(tok.vocab_size() <= 40 && tok.merge_count() <= 30 && inst.alphabet.size() <= 3,
              "seed " + std::to_string(seed) + " exceeds instance limits");
    c.require(inst.candidates.size() >= kMinCandidatesPerInstance,
              "seed " + std::to_string(seed) + " has too few candidates");
    const BruteForceOracle oracle(tok, inst.conversation, inst.tpl, inst.slot, inst.alphabet, kOracleMaxLen);
    for (const auto& cand : inst.candidates) {
      c.require(cand.size() <= 4, "candidate longer than 4");
      if (!std::all_of(cand.begin(), cand.end(), [&](TokenId id) { return tok.contains(id); })) {
        ++skipped;  // no decoded text to bound
        continue;
      }
      if (tok.decode_u32(cand).size() > kOracleMaxLen) {
        ++skipped;
        continue;
      }
      const auto fast = is_reachable_in_context(tok, inst.conversation, inst.tpl, inst.slot, cand);
      const auto target = expected_tokens(tok, inst.conversation, inst.tpl, inst.slot, cand);
      const auto truth = oracle.query(target);
      ++compared;
      if (fast.reachable) ++reachable;
      c.require(fast.reachable == truth.reachable,
                "seed " + std::to_string(seed) + " candidate " + ids_str(cand) + ": check says " +
                    (fast.reachable ? "reachable" : "unreachable") + ", oracle disagrees");
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  c.require(secs < kOracleSecondsLimit, "took " + std::to_string(secs) + " s");
  c.require(compared >= kOracleInstances * kMinCandidatesPerInstance / 2, "too few in-bound cases");
  if (o.pass) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%zu instances, %zu in-bound cases (%zu reachable), %zu out of bound, %.1f s",
                  kOracleInstances, compared, reachable, skipped, secs);
    o.detail = buf;
  }
  return o;
}

Outcome boundary_merge_regression() {
  Outcome o;
  Check c(o);
  const std::vector<std::string> inputs{d("boundary_merge/tokenizer.json"), d("boundary_merge/template.json"),
                                        d("boundary_merge/conversation.json"), d("boundary_merge/candidates.txt")};
  auto args = [&](const std::string& mode) {
    std::vector<std::string> a{"reach"};
    a.insert(a.end(), inputs.begin(), inputs.end());
    a.insert(a.end(), {"--mode", mode});
    return a;
  };
  const auto full = run_cli(args("full"));
  const auto iso = run_cli(args("isolated"));
  c.require(full.code == cli::kFailuresFound, "full mode exit " + std::to_string(full.code));
  c.require(iso.code == cli::kOk, "isolated mode exit " + std::to_string(iso.code));
  c.require(full.out == read_file(d("boundary_merge/expected_full.json")), "full report differs from golden");
  c.require(iso.out == read_file(d("boundary_merge/expected_isolated.json")), "isolated report differs from golden");
  const auto j = json::parse(full.out);
  c.require(j["rejected"].size() == 1 && j["rejected"][0]["candidate"] == json{3} &&
                j["rejected"][0]["verdict"]["reason"] == "boundary_merge",
            "[3] not rejected as boundary merge");
  c.require(j["rejected"][0]["verdict"]["mismatch"] == json{{"index", 0}, {"expected", 3}, {"actual", 4}},
            "mismatch does not locate the merged boundary token");
  c.require(json::parse(iso.out)["kept"] == json{0, 1}, "isolated mode does not keep [3]");
  if (o.pass) o.detail = "isolated keeps [3], full rejects it: expected 3, actual 4 at index 0";
  return o;
}

Outcome round_trip() {
  Outcome o;
  Check c(o);
  std::size_t strings = 0;
  for (std::uint64_t seed = 0; seed < kOracleInstances; ++seed) {
    const auto inst = generate_instance(seed);
    const auto& tok = inst.tokenizer;
    std::mt19937_64 rng(seed ^ 0x5eedULL);
    for (std::size_t i = 0; i < kRoundTripStrings && o.pass; ++i) {
      std::u32string s(rng() % (kRoundTripMaxLen + 1), U'a');
      for (auto& ch : s) ch = inst.alphabet[rng() % inst.alphabet.size()];
      const auto ids = tok.encode(s).ids;
      c.require(tok.decode_u32(ids) == s, "seed " + std::to_string(seed) + ": decode(encode(\"" + to_utf8(s) +
                                              "\")) differs");
      const auto v = is_reachable_isolated(tok, ids);
      c.require(v.reachable && v.witness == to_utf8(s),
                "seed " + std::to_string(seed) + ": encode(\"" + to_utf8(s) + "\") judged unreachable");
      ++strings;
    }
  }
  if (o.pass) o.detail = std::to_string(strings) + " strings over " + std::to_string(kOracleInstances) + " tokenizers";
  return o;
}

Outcome batch_invariance() {
  Outcome o;
  Check c(o);
  const ExactHashModel model(32000, 1);
  std::mt19937_64 rng(404);
  for (std::size_t b = 0; b < kBatches; ++b) {
    const std::size_t rows = 2 + rng() % 15;
    std::vector<Ids> seqs(rows);
    for (auto& s : seqs) {
      s.resize(1 + rng() % 32);
      for (auto& t : s) t = static_cast<TokenId>(rng() % 32000);
    }
    const std::vector<std::size_t> sizes{rows};
    EquivalenceOptions plain;
    EquivalenceOptions padded;
    padded.pad_id = static_cast<TokenId>(1 + rng() % 31999);
    padded.extra_pad_columns = 1 + rng() % 8;
    for (const auto& opts : {plain, padded}) {
      const auto rep = equivalence_report(model, seqs, kGenSteps, sizes, opts);
      const auto& row = rep.rows.at(0);
      c.require(row.match_fraction == 1.0 && row.mean_common_prefix == static_cast<double>(kGenSteps),
                "batch " + std::to_string(b) + (opts.extra_pad_columns ? " (extra padding)" : "") +
                    ": match fraction " + std::to_string(row.match_fraction));
    }
  }
  if (o.pass) o.detail = std::to_string(kBatches) + " batches, match fraction 1.0, mean prefix 64, pad variant 1.0";
  return o;
}

Outcome mask_sensitivity() {
  Outcome o;
  Check c(o);
  const auto seqs = parse_candidates(read_file(d("batchsim/fixture_seqs.txt")));
  const TinyFloatAttention model(256, 16, 0);
  const std::vector<std::size_t> sizes{2, 4, 8, seqs.size()};
  EquivalenceOptions corrupt;
  corrupt.corrupt_mask = true;
  const auto bad = equivalence_report(model, seqs, kGenSteps, sizes, corrupt);
  std::size_t matches = 0, total = 0;
  for (const auto& row : bad.rows) {
    matches += row.exact_matches;
    total += row.sequences;
  }
  const double fraction = static_cast<double>(matches) / static_cast<double>(total);
  c.require(fraction < 1.0, "corrupted mask still matches the baseline everywhere");
  const auto good = equivalence_report(model, seqs, kGenSteps, sizes);
  for (const auto& row : good.rows) c.require(row.match_fraction == 1.0, "correct mask diverges");
  if (o.pass) o.detail = "corrupted match fraction " + std::to_string(fraction) + " < 1.0 (correct mask 1.0)";
  return o;
}

Outcome flops_arithmetic() {
  Outcome o;
  Check c(o);
  const ModelShape worked{2, 8, 2, 16, 32, 64};
  c.require(forward_flops(worked, 4, 1) == 2816, "forward " + to_string(forward_flops(worked, 4, 1)));
  c.require(backward_flops(worked, 4, 1) == 5632, "backward " + to_string(backward_flops(worked, 4, 1)));
  std::mt19937_64 rng(6);
  for (std::size_t i = 0; i < kFlopShapes; ++i) {
    const std::int64_t heads = 1 + static_cast<std::int64_t>(rng() % 32);
    const ModelShape s{static_cast<std::int64_t>(rng() % 96), heads * static_cast<std::int64_t>(1 + rng() % 256),
                       heads, static_cast<std::int64_t>(1 + rng() % 65536),
                       static_cast<std::int64_t>(1 + rng() % 256000), 1 << 20};
    const std::uint64_t ctx = 1 + rng() % 100000;
    const std::uint64_t k = 1 + rng() % 200;
    FlopCount sum = 0;
    for (std::uint64_t t = 0; t < k; ++t) sum += forward_flops(s, ctx + t, 1);
    c.require(forward_flops(s, ctx, k) == sum, "shape " + std::to_string(i) + ": sum of singles differs");
    c.require(backward_flops(s, ctx, k) == 2 * sum, "shape " + std::to_string(i) + ": backward not 2x");
  }
  if (o.pass) o.detail = "2816 / 5632; sum-of-singles exact on " + std::to_string(kFlopShapes) + " shapes";
  return o;
}

Outcome artifact_schema() {
  Outcome o;
  Check c(o);
  const auto golden = read_file(d("artifacts/golden_valid.json"));
  c.require(write_artifact(read_artifact(golden)) == golden, "golden document does not rewrite byte-identically");

  const auto manifest = json::parse(read_file(d("artifacts/invalid/expected_errors.json")));
  c.require(manifest.size() == 12, "expected 12 invalid documents");
  for (const auto& [file, path] : manifest.items()) {
    const auto r = validate(parse_artifact_text(read_file(d("artifacts/invalid/" + file))));
    c.require(r.errors.size() == 1 && r.errors[0].path == path.get<std::string>(),
              file + ": expected one error at '" + path.get<std::string>() + "', got " + r.to_json()["errors"].dump());
  }

  // Every optional step field toggled on and off, alone and in combination.
  const auto base = json::parse(read_file(d("artifacts/base_valid.json")));
  const char* optional[] = {"loss", "model_input", "model_input_tokens", "model_input_embeddings"};
  const json values[] = {0.5, json::parse(R"([{"role": "user", "content": "hi"}])"), json{1},
                         "emb/step0.safetensors"};
  for (unsigned mask = 0; mask < 16; ++mask) {
    auto doc = base;
    auto& step = doc["runs"][0]["steps"][0];
    for (auto* f : optional) step.erase(f);
    for (unsigned b = 0; b < 4; ++b) {
      if (mask & (1u << b)) step[optional[b]] = values[b];
    }
    const bool one_encoding = ((mask >> 2) & 1u) != ((mask >> 3) & 1u);
    const auto r = validate(doc);
    c.require(r.ok() == one_encoding, "optional field combination " + std::to_string(mask) + " misjudged");
    if (one_encoding) {
      const auto text = write_artifact(from_json(doc));
      c.require(write_artifact(read_artifact(text)) == text, "combination " + std::to_string(mask) + " unstable");
      c.require(json::parse(text)["runs"][0]["steps"][0] == step,
                "combination " + std::to_string(mask) + " lost a field");
    }
  }
  if (o.pass) o.detail = "golden byte-identical, 12/12 invalid documents, 16 optional-field combinations";
  return o;
}

Outcome determinism() {
  Outcome o;
  Check c(o);
  const fs::path dir = fs::temp_directory_path() / ("advkit_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  for (const char* mode : {"full", "isolated"}) {
    std::vector<std::string> outs;
    for (const char* workers : {"1", "8"}) {
      const auto out = (dir / (std::string(mode) + "_" + workers + ".json")).string();
      const auto r = run_cli({"reach", d("regression/tokenizer.json"), d("regression/template.json"),
                              d("regression/conversation.json"), d("regression/candidates.txt"), "--mode", mode,
                              "--workers", workers, "--out", out});
      c.require(r.code == cli::kOk || r.code == cli::kFailuresFound, std::string("reach failed: ") + r.err);
      outs.push_back(read_file(out));
    }
    c.require(!outs[0].empty() && outs[0] == outs[1], std::string(mode) + " reports differ between 1 and 8 workers");
  }
  fs::remove_all(dir);
  if (o.pass) o.detail = "400-candidate corpus, full and isolated modes, 1 vs 8 workers byte-identical";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"1 oracle agreement", oracle_agreement},
      {"2 boundary-merge regression", boundary_merge_regression},
      {"3 round-trip property", round_trip},
      {"4 batch invariance", batch_invariance},
      {"5 mask sensitivity", mask_sensitivity},
      {"6 FLOPs arithmetic", flops_arithmetic},
      {"7 artifact schema", artifact_schema},
      {"8 worker determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
