#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "advkit/budget.hpp"
#include "advkit/conversation.hpp"
#include "advkit/json_io.hpp"

namespace advkit {

// Attack-result document: one file per attack configuration, holding every
// run and every optimization step.

struct StepRecord {
  std::int64_t step = 0;
  std::vector<std::string> model_completions;
  json scores = json::object();  // judge → score type → [numbers]
  double time_taken = 0.0;       // seconds
  std::uint64_t flops = 0;       // optimization phase only
  std::optional<double> loss;
  std::optional<Conversation> model_input;
  std::optional<std::vector<std::int64_t>> model_input_tokens;      // discrete attacks
  std::optional<json> model_input_embeddings;                       // inline tensor or path
};

struct SingleRun {
  Conversation original_prompt;
  std::vector<StepRecord> steps;
  double total_time = 0.0;
  json extra = json::object();  // unknown fields, kept on rewrite
};

struct ConfigRecord {
  std::string model;
  std::string dataset;
  std::string attack;
  json model_params = json::object();
  json dataset_params = json::object();
  json attack_params = json::object();
  json extra = json::object();
};

struct AttackResultDoc {
  ConfigRecord config;
  std::vector<SingleRun> runs;
  json extra = json::object();
};

struct Issue {
  std::string path;
  std::string message;
  friend bool operator==(const Issue&, const Issue&) = default;
};

struct ValidationResult {
  std::vector<Issue> errors;
  std::vector<Issue> warnings;
  bool ok() const noexcept { return errors.empty(); }
  json to_json() const;
};

class ArtifactError : public std::runtime_error {
 public:
  explicit ArtifactError(std::vector<Issue> errors);
  const std::vector<Issue>& errors() const noexcept { return errors_; }

 private:
  std::vector<Issue> errors_;
};

// Collects every schema violation instead of stopping at the first one.
ValidationResult validate(const json& doc);

// Parses artifact text. Syntax errors throw DocumentError with line/column.
json parse_artifact_text(std::string_view text);

// Throws ArtifactError when `doc` does not validate.
AttackResultDoc from_json(const json& doc);
json to_json(const AttackResultDoc& doc);

AttackResultDoc read_artifact(std::string_view text);
AttackResultDoc read_artifact_file(const std::filesystem::path& path);

// Canonical text: schema keys in fixed order, unknown keys after them in
// sorted order, two-space indentation, scalar arrays inline, seconds with at
// most six fractional digits. Throws ArtifactError for invalid documents.
std::string write_artifact(const AttackResultDoc& doc);

// Seconds formatting used by the canonical writer: fixed six decimals with
// trailing zeros removed, keeping at least one ("1.5", "3.0", "0.000001").
std::string format_seconds(double seconds);

struct RunSummary {
  std::size_t steps = 0;
  double time_taken = 0.0;
  FlopCount flops = 0;
  std::size_t completions = 0;
};

std::vector<RunSummary> summarize(const AttackResultDoc& doc);
json to_json(const std::vector<RunSummary>& summary);

}  // namespace advkit
