#include "advkit/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "advkit/artifact.hpp"
#include "advkit/budget.hpp"
#include "advkit/conversation.hpp"
#include "advkit/corpus.hpp"
#include "advkit/ragged_batch.hpp"
#include "advkit/reachability.hpp"
#include "advkit/text.hpp"
#include "advkit/tokenizer.hpp"

namespace advkit::cli {

namespace {

// Input problems that map to kUsageError.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void emit(std::ostream& out, const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    out << text;
  } else {
    write_file_atomic(out_path, text);
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

template <typename Fn>
auto load(const std::string& what, const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const DocumentError& e) {
    throw UsageError(what + " " + path + ": " + e.what());
  } catch (const TextError& e) {
    throw UsageError(what + " " + path + ": " + e.what());
  }
}

struct ReachInputs {
  std::string tokenizer;
  std::string tpl;
  std::string conversation;
  std::string candidates;
  std::string slot;
};

struct LoadedReach {
  TokenizerModel tok;
  TemplateSpec tpl;
  Conversation conv;
  SegmentLabel slot;
  std::vector<std::vector<TokenId>> candidates;
};

SegmentLabel resolve_slot(const Conversation& conv, const std::string& flag) {
  if (!flag.empty()) {
    SegmentLabel label;
    try {
      label = SegmentLabel::parse(flag);
      check_slot(conv, label);
    } catch (const SlotError& e) {
      throw UsageError(e.what());
    }
    return label;
  }
  for (std::size_t i = conv.messages.size(); i > 0; --i) {
    if (conv.messages[i - 1].role == Role::user) return {SegmentKind::content, i - 1};
  }
  throw UsageError("conversation has no user message; pass --slot");
}

LoadedReach load_reach(const ReachInputs& in, bool need_candidates) {
  auto tok = load("tokenizer", in.tokenizer, [&] { return TokenizerModel::from_file(in.tokenizer); });
  auto tpl = load("template", in.tpl, [&] { return load_template(in.tpl); });
  load("template", in.tpl, [&] { check_template(tpl, tok); return 0; });
  auto conv = load("conversation", in.conversation, [&] { return load_conversation(in.conversation); });
  LoadedReach loaded{std::move(tok), std::move(tpl), std::move(conv), {}, {}};
  loaded.slot = resolve_slot(loaded.conv, in.slot);
  if (need_candidates) {
    loaded.candidates =
        load("candidates", in.candidates, [&] { return parse_candidates(read_file(in.candidates)); });
    if (loaded.candidates.empty()) throw UsageError("candidates " + in.candidates + ": no candidates");
  }
  return loaded;
}

void add_reach_inputs(CLI::App* cmd, ReachInputs& in, bool with_candidates) {
  cmd->add_option("tokenizer", in.tokenizer, "Tokenizer spec (JSON)")->required();
  cmd->add_option("template", in.tpl, "Chat template (JSON)")->required();
  cmd->add_option("conversation", in.conversation, "Conversation (JSON)")->required();
  if (with_candidates) {
    cmd->add_option("candidates", in.candidates, "Candidates, one JSON id list per line")->required();
  }
  cmd->add_option("--slot", in.slot, "Content segment receiving the candidate (default: last user turn)");
}

int cmd_reach(const ReachInputs& in, const std::string& mode_name, unsigned workers,
              const std::string& out_path, std::ostream& out) {
  const auto mode = parse_filter_mode(mode_name);
  auto loaded = load_reach(in, true);
  const auto report = filter_candidates(loaded.tok, loaded.conv, loaded.tpl, loaded.slot,
                                        loaded.candidates, mode, workers);
  emit(out, out_path, dump(report.to_json(loaded.candidates)));
  return report.rejected.empty() ? kOk : kFailuresFound;
}

int cmd_oracle(const ReachInputs& in, const std::string& alphabet_utf8, std::size_t max_len,
               const std::string& out_path, std::ostream& out) {
  std::u32string alphabet;
  try {
    alphabet = to_u32(alphabet_utf8);
  } catch (const TextError& e) {
    throw UsageError(std::string("--alphabet: ") + e.what());
  }
  if (alphabet.empty()) throw UsageError("--alphabet must not be empty");
  std::sort(alphabet.begin(), alphabet.end());
  alphabet.erase(std::unique(alphabet.begin(), alphabet.end()), alphabet.end());
  BruteForceOracle::check_bound(alphabet.size(), max_len);
  auto loaded = load_reach(in, true);
  const BruteForceOracle oracle(loaded.tok, loaded.conv, loaded.tpl, loaded.slot, alphabet, max_len);

  json verdicts = json::array();
  std::size_t reachable = 0;
  for (std::size_t i = 0; i < loaded.candidates.size(); ++i) {
    const auto target =
        expected_tokens(loaded.tok, loaded.conv, loaded.tpl, loaded.slot, loaded.candidates[i]);
    const auto verdict = oracle.query(target);
    if (verdict.reachable) ++reachable;
    verdicts.push_back(json{{"index", i},
                            {"candidate", loaded.candidates[i]},
                            {"target", target},
                            {"verdict", to_json(verdict)}});
  }
  json report{{"slot", loaded.slot.str()},
              {"alphabet", alphabet_utf8},
              {"max_len", max_len},
              {"strings_enumerated", oracle.strings_enumerated()},
              {"totals",
               {{"candidates", loaded.candidates.size()},
                {"reachable", reachable},
                {"unreachable", loaded.candidates.size() - reachable}}},
              {"verdicts", std::move(verdicts)}};
  emit(out, out_path, dump(report));
  return reachable == loaded.candidates.size() ? kOk : kFailuresFound;
}

int cmd_segments(const ReachInputs& in, const std::string& out_path, std::ostream& out) {
  auto tok = load("tokenizer", in.tokenizer, [&] { return TokenizerModel::from_file(in.tokenizer); });
  auto tpl = load("template", in.tpl, [&] { return load_template(in.tpl); });
  load("template", in.tpl, [&] { check_template(tpl, tok); return 0; });
  auto conv = load("conversation", in.conversation, [&] { return load_conversation(in.conversation); });
  const auto map = tokenize_and_split(tok, conv, tpl);
  emit(out, out_path, dump(map.to_json(tok)));
  return kOk;
}

int cmd_flops(const std::string& shape_path, std::uint64_t context, std::uint64_t new_tokens,
              bool backward, const std::string& out_path, std::ostream& out) {
  const auto shape = load("shape", shape_path, [&] { return load_shape(shape_path); });
  FlopBreakdown fwd;
  try {
    fwd = forward_breakdown(shape, context, new_tokens);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const FlopCount total = backward ? backward_flops(shape, context, new_tokens) : fwd.total();
  out << to_string(total) << "\n";
  out << "pass: " << (backward ? "backward" : "forward") << "\n";
  out << "param_count: " << to_string(param_count(shape)) << "\n";
  out << "matmul_params: " << to_string(matmul_params(shape)) << "\n";
  out << "forward_linear: " << to_string(fwd.linear) << "\n";
  out << "forward_attention: " << to_string(fwd.attention) << "\n";
  out << "forward_total: " << to_string(fwd.total()) << "\n";
  if (!out_path.empty()) {
    json report{{"flops", flop_json(total)},
                {"pass", backward ? "backward" : "forward"},
                {"context", context},
                {"new_tokens", new_tokens},
                {"param_count", flop_json(param_count(shape))},
                {"matmul_params", flop_json(matmul_params(shape))},
                {"forward_linear", flop_json(fwd.linear)},
                {"forward_attention", flop_json(fwd.attention)}};
    write_file_atomic(out_path, dump(report));
  }
  return kOk;
}

int cmd_validate(const std::vector<std::string>& files, const std::string& out_path, std::ostream& out) {
  json results = json::array();
  bool any_invalid = false;
  bool any_unparseable = false;
  for (const auto& file : files) {
    json entry{{"file", file}};
    try {
      const auto doc = parse_artifact_text(read_file(file));
      const auto result = validate(doc);
      entry.update(result.to_json());
      if (result.ok()) entry["summary"] = to_json(summarize(from_json(doc)));
      any_invalid |= !result.ok();
    } catch (const std::exception& e) {
      entry["ok"] = false;
      entry["parse_error"] = e.what();
      any_unparseable = true;
    }
    results.push_back(std::move(entry));
  }
  emit(out, out_path, dump(results));
  if (any_unparseable) return kUsageError;
  return any_invalid ? kFailuresFound : kOk;
}

std::vector<std::size_t> parse_batch_sizes(const std::string& list) {
  std::vector<std::size_t> sizes;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || pos == 0 || v <= 0) {
      throw UsageError("--batch-sizes: invalid entry '" + item + "'");
    }
    sizes.push_back(static_cast<std::size_t>(v));
  }
  if (sizes.empty()) throw UsageError("--batch-sizes must list at least one size");
  return sizes;
}

struct BatchsimArgs {
  std::string model = "exact";
  std::string seqs;
  std::size_t steps = 64;
  std::string batch_sizes = "1,2,4,8";
  bool corrupt = false;
  std::size_t vocab = 256;
  std::size_t dim = 16;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_batchsim(const BatchsimArgs& a, std::ostream& out) {
  auto seqs = load("sequences", a.seqs, [&] { return parse_candidates(read_file(a.seqs)); });
  if (seqs.empty()) throw UsageError("sequences " + a.seqs + ": no sequences");
  for (const auto& s : seqs) {
    if (s.empty()) throw UsageError("sequences " + a.seqs + ": empty sequence");
  }
  const auto sizes = parse_batch_sizes(a.batch_sizes);
  std::unique_ptr<NextTokenModel> model;
  if (a.model == "exact") {
    model = std::make_unique<ExactHashModel>(a.vocab, a.seed);
  } else {
    model = std::make_unique<TinyFloatAttention>(a.vocab, a.dim, a.seed);
  }
  EquivalenceOptions options;
  options.corrupt_mask = a.corrupt;
  const auto report = equivalence_report(*model, seqs, a.steps, sizes, options);
  json j = report.to_json();
  j["model"] = a.model;
  emit(out, a.out, dump(j));
  const bool all_match = std::all_of(report.rows.begin(), report.rows.end(),
                                     [](const auto& r) { return r.exact_matches == r.sequences; });
  return all_match ? kOk : kFailuresFound;
}

int cmd_gen_corpus(std::uint64_t seed, std::size_t count, const std::string& out_dir) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t instance_seed = seed + i;
    write_instance(generate_instance(instance_seed), instance_seed,
                   std::filesystem::path(out_dir) / ("instance_" + std::to_string(i)));
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Token reachability, segmentation, budget and artifact tooling for adversarial LLM evaluation"};
  app.name("advkit");
  app.require_subcommand(1);

  const unsigned default_workers = std::max(1u, std::thread::hardware_concurrency());

  ReachInputs reach_in;
  std::string reach_mode = "full";
  unsigned reach_workers = default_workers;
  std::string reach_out;
  auto* reach = app.add_subcommand("reach", "Filter candidate token sequences by reachability");
  add_reach_inputs(reach, reach_in, true);
  reach->add_option("--mode", reach_mode, "isolated | full")->check(CLI::IsMember({"isolated", "full"}));
  reach->add_option("--workers", reach_workers, "Worker threads")->check(CLI::PositiveNumber);
  reach->add_option("--out", reach_out, "Report path (default: stdout)");

  ReachInputs oracle_in;
  std::string alphabet;
  std::size_t max_len = 8;
  std::string oracle_out;
  auto* oracle = app.add_subcommand("oracle", "Brute-force reachability ground truth");
  add_reach_inputs(oracle, oracle_in, true);
  oracle->add_option("--alphabet", alphabet, "Characters to enumerate")->required();
  oracle->add_option("--max-len", max_len, "Longest slot string to enumerate");
  oracle->add_option("--out", oracle_out, "Verdicts path (default: stdout)");

  ReachInputs seg_in;
  std::string seg_out;
  auto* segments = app.add_subcommand("segments", "Tokenize a conversation and split it into segments");
  add_reach_inputs(segments, seg_in, false);
  segments->remove_option(segments->get_option("--slot"));
  segments->add_option("--out", seg_out, "Segment map path (default: stdout)");

  std::string shape_path;
  std::uint64_t context = 0;
  std::uint64_t new_tokens = 1;
  bool backward = false;
  std::string flops_out;
  auto* flops = app.add_subcommand("flops", "FLOPs estimate for a model shape");
  flops->add_option("shape", shape_path, "Model shape (JSON)")->required();
  flops->add_option("--context", context, "Running context of the first processed token")->required();
  flops->add_option("--new-tokens", new_tokens, "Tokens processed");
  flops->add_flag("--backward", backward, "Report the backward pass (2x forward)");
  flops->add_option("--out", flops_out, "Also write a JSON breakdown here");

  std::vector<std::string> artifact_files;
  std::string validate_out;
  auto* validate_cmd = app.add_subcommand("validate", "Validate attack-result documents");
  validate_cmd->add_option("files", artifact_files, "Artifact files")->required();
  validate_cmd->add_option("--out", validate_out, "Report path (default: stdout)");

  BatchsimArgs bs;
  auto* batchsim = app.add_subcommand("batchsim", "Compare batched and unbatched greedy generation");
  batchsim->add_option("--model", bs.model, "exact | float")->check(CLI::IsMember({"exact", "float"}));
  batchsim->add_option("--seqs", bs.seqs, "Prompts, one JSON id list per line")->required();
  batchsim->add_option("--steps", bs.steps, "Generated tokens per prompt");
  batchsim->add_option("--batch-sizes", bs.batch_sizes, "Comma-separated batch sizes");
  batchsim->add_flag("--corrupt-mask", bs.corrupt, "Let padding leak into attention");
  batchsim->add_option("--vocab", bs.vocab, "Model vocabulary size")->check(CLI::PositiveNumber);
  batchsim->add_option("--dim", bs.dim, "Hidden size of the float model")->check(CLI::PositiveNumber);
  batchsim->add_option("--seed", bs.seed, "Model weight seed");
  batchsim->add_option("--out", bs.out, "Report path (default: stdout)");

  std::uint64_t corpus_seed = 0;
  std::size_t corpus_count = 1;
  std::string corpus_dir;
  auto* gen = app.add_subcommand("gen-corpus", "Write seeded random reachability instances");
  gen->add_option("--seed", corpus_seed, "Seed")->required();
  gen->add_option("--count", corpus_count, "Number of instances");
  gen->add_option("--out-dir", corpus_dir, "Output directory")->required();

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.push_back("advkit");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*reach) return cmd_reach(reach_in, reach_mode, reach_workers, reach_out, out);
    if (*oracle) return cmd_oracle(oracle_in, alphabet, max_len, oracle_out, out);
    if (*segments) return cmd_segments(seg_in, seg_out, out);
    if (*flops) return cmd_flops(shape_path, context, new_tokens, backward, flops_out, out);
    if (*validate_cmd) return cmd_validate(artifact_files, validate_out, out);
    if (*batchsim) return cmd_batchsim(bs, out);
    if (*gen) return cmd_gen_corpus(corpus_seed, corpus_count, corpus_dir);
  } catch (const std::exception& e) {
    // Malformed inputs, unreadable files, unencodable templates, oracle guard.
    err << "error: " << e.what() << "\n";
    return kUsageError;
  }
  return kUsageError;
}

}  // namespace advkit::cli
