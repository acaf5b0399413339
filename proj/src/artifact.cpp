#include "advkit/artifact.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

namespace advkit {

namespace {

constexpr std::string_view kConfigKeys[] = {"model",        "dataset",        "attack",
                                            "model_params", "dataset_params", "attack_params"};
constexpr std::string_view kRunKeys[] = {"original_prompt", "steps", "total_time"};
constexpr std::string_view kStepKeys[] = {"step",
                                          "model_completions",
                                          "scores",
                                          "time_taken",
                                          "flops",
                                          "loss",
                                          "model_input",
                                          "model_input_tokens",
                                          "model_input_embeddings"};

template <std::size_t N>
bool is_known(const std::string_view (&keys)[N], std::string_view key) {
  for (auto k : keys) {
    if (k == key) return true;
  }
  return false;
}

// Optional fields may be absent or null.
bool present(const json& obj, std::string_view key) {
  auto it = obj.find(key);
  return it != obj.end() && !it->is_null();
}

class Validator {
 public:
  ValidationResult result;

  void error(std::string path, std::string message) {
    result.errors.push_back(Issue{std::move(path), std::move(message)});
  }
  void warn(std::string path, std::string message) {
    result.warnings.push_back(Issue{std::move(path), std::move(message)});
  }

  const json* required(const json& obj, std::string_view key, const std::string& parent) {
    auto it = obj.find(key);
    if (it == obj.end()) {
      error(join_path(parent, key), "required field missing");
      return nullptr;
    }
    return &*it;
  }

  void name_string(const json& obj, std::string_view key, const std::string& parent) {
    const json* v = required(obj, key, parent);
    if (!v) return;
    if (!v->is_string()) {
      error(join_path(parent, key), "must be a string");
    } else if (v->get_ref<const std::string&>().empty()) {
      error(join_path(parent, key), "must not be empty");
    }
  }

  void params_object(const json& obj, std::string_view key, const std::string& parent) {
    const json* v = required(obj, key, parent);
    if (v && !v->is_object()) error(join_path(parent, key), "must be an object");
  }

  void seconds(const json& v, const std::string& path) {
    if (!v.is_number()) {
      error(path, "must be a number of seconds");
    } else if (!(v.get<double>() >= 0.0) || !std::isfinite(v.get<double>())) {
      error(path, "must be non-negative");
    }
  }

  void conversation(const json& v, const std::string& path) {
    try {
      (void)conversation_from_json(v, path);
    } catch (const DocumentError& e) {
      error(e.path(), strip_path(e));
    }
  }

  void config(const json& cfg) {
    if (!cfg.is_object()) {
      error("config", "must be an object");
      return;
    }
    for (auto key : {"model", "dataset", "attack"}) name_string(cfg, key, "config");
    for (auto key : {"model_params", "dataset_params", "attack_params"}) {
      params_object(cfg, key, "config");
    }
  }

  void run(const json& r, const std::string& path) {
    if (!r.is_object()) {
      error(path, "run must be an object");
      return;
    }
    if (const json* prompt = required(r, "original_prompt", path)) {
      conversation(*prompt, join_path(path, "original_prompt"));
    }
    const json* total = required(r, "total_time", path);
    if (total) seconds(*total, join_path(path, "total_time"));
    const json* steps = required(r, "steps", path);
    if (!steps) return;
    const auto steps_path = join_path(path, "steps");
    if (!steps->is_array()) {
      error(steps_path, "must be an array");
      return;
    }
    std::optional<std::int64_t> previous;
    double time_sum = 0.0;
    bool times_ok = true;
    for (std::size_t i = 0; i < steps->size(); ++i) {
      const auto& s = (*steps)[i];
      const auto step_path = index_path(steps_path, i);
      step(s, step_path, previous);
      if (s.is_object() && s.contains("time_taken") && s["time_taken"].is_number()) {
        time_sum += s["time_taken"].get<double>();
      } else {
        times_ok = false;
      }
    }
    if (times_ok && total && total->is_number() && total->get<double>() >= 0.0) {
      const double limit = total->get<double>() * 1.001;
      if (time_sum > limit) {
        warn(join_path(path, "total_time"),
             "sum of step time_taken (" + format_seconds(time_sum) + ") exceeds total_time");
      }
    }
  }

  void step(const json& s, const std::string& path, std::optional<std::int64_t>& previous) {
    if (!s.is_object()) {
      error(path, "step must be an object");
      return;
    }
    if (const json* v = required(s, "step", path)) {
      const auto p = join_path(path, "step");
      if (!v->is_number_integer()) {
        error(p, "must be an integer");
      } else if (v->get<std::int64_t>() < 0) {
        error(p, "must be non-negative");
      } else {
        const auto value = v->get<std::int64_t>();
        if (previous && value <= *previous) {
          error(p, "steps must be in ascending step order (previous " + std::to_string(*previous) + ")");
        }
        previous = value;
      }
    }
    if (const json* v = required(s, "model_completions", path)) {
      const auto p = join_path(path, "model_completions");
      if (!v->is_array()) {
        error(p, "must be an array of strings");
      } else {
        for (std::size_t i = 0; i < v->size(); ++i) {
          if (!(*v)[i].is_string()) error(index_path(p, i), "must be a string");
        }
      }
    }
    if (const json* v = required(s, "scores", path)) scores(*v, join_path(path, "scores"));
    if (const json* v = required(s, "time_taken", path)) seconds(*v, join_path(path, "time_taken"));
    if (const json* v = required(s, "flops", path)) {
      if (!v->is_number_integer()) {
        error(join_path(path, "flops"), "must be an integer");
      } else if (!v->is_number_unsigned() && v->get<std::int64_t>() < 0) {
        error(join_path(path, "flops"), "must be non-negative");
      }
    }
    if (present(s, "loss") && !s["loss"].is_number()) error(join_path(path, "loss"), "must be a number");
    if (present(s, "model_input")) conversation(s["model_input"], join_path(path, "model_input"));
    const bool has_tokens = present(s, "model_input_tokens");
    const bool has_embeddings = present(s, "model_input_embeddings");
    if (has_tokens) {
      const auto& t = s["model_input_tokens"];
      const auto p = join_path(path, "model_input_tokens");
      if (!t.is_array()) {
        error(p, "must be an array of token ids");
      } else {
        for (std::size_t i = 0; i < t.size(); ++i) {
          if (!t[i].is_number_integer() || (!t[i].is_number_unsigned() && t[i].get<std::int64_t>() < 0)) {
            error(index_path(p, i), "must be a non-negative integer");
          }
        }
      }
    }
    if (has_embeddings) embeddings(s["model_input_embeddings"], join_path(path, "model_input_embeddings"));
    if (has_tokens == has_embeddings) {
      error(path, has_tokens
                      ? "exactly one of model_input_tokens (discrete attack) or model_input_embeddings "
                        "(embedding attack) is allowed; both are present"
                      : "exactly one of model_input_tokens (discrete attack) or model_input_embeddings "
                        "(embedding attack) is required; neither is present");
    }
    for (const auto& [key, value] : s.items()) {
      if (!is_known(kStepKeys, key)) warn(join_path(path, key), "unknown step field is dropped on rewrite");
    }
  }

  void scores(const json& v, const std::string& path) {
    if (!v.is_object()) {
      error(path, "must be an object mapping judge name to score types");
      return;
    }
    for (const auto& [judge, types] : v.items()) {
      const auto judge_path = join_path(path, judge);
      if (!types.is_object()) {
        error(judge_path, "must be an object mapping score type to values");
        continue;
      }
      for (const auto& [type, values] : types.items()) {
        const auto type_path = join_path(judge_path, type);
        if (!values.is_array()) {
          error(type_path, "must be an array of numbers");
          continue;
        }
        for (std::size_t i = 0; i < values.size(); ++i) {
          if (!values[i].is_number()) error(index_path(type_path, i), "must be a number");
        }
      }
    }
  }

  void embeddings(const json& v, const std::string& path) {
    if (v.is_string()) {
      if (v.get_ref<const std::string&>().empty()) error(path, "path reference must not be empty");
      return;
    }
    if (!v.is_array()) {
      error(path, "must be a path string or a nested array of numbers");
      return;
    }
    tensor(v, path);
  }

  void tensor(const json& v, const std::string& path) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i].is_array()) {
        tensor(v[i], index_path(path, i));
      } else if (!v[i].is_number()) {
        error(index_path(path, i), "tensor entries must be numbers");
      }
    }
  }

 private:
  static std::string strip_path(const DocumentError& e) {
    std::string what = e.what();
    const std::string prefix = e.path() + ": ";
    if (!e.path().empty() && what.rfind(prefix, 0) == 0) return what.substr(prefix.size());
    return what;
  }
};

std::string quoted(std::string_view s) { return json(std::string(s)).dump(); }

bool is_scalar(const json& v) { return !v.is_array() && !v.is_object(); }

// Pretty printer producing the canonical layout.
class CanonicalWriter {
 public:
  std::string take() { return std::move(out_); }

  void open_object() {
    before_value();
    out_ += '{';
    stack_.push_back(Frame{false});
  }
  void close_object() { close('}'); }
  void open_array() {
    before_value();
    out_ += '[';
    stack_.push_back(Frame{true});
  }
  void close_array() { close(']'); }

  void key(std::string_view k) {
    next_line();
    out_ += quoted(k);
    out_ += ": ";
    after_key_ = true;
  }

  void raw(std::string_view text) {
    before_value();
    out_ += text;
  }

  void value(const json& v) {
    if (v.is_object()) {
      open_object();
      for (const auto& [k, item] : v.items()) {
        key(k);
        value(item);
      }
      close_object();
    } else if (v.is_array()) {
      if (std::all_of(v.begin(), v.end(), is_scalar)) {
        std::string inline_text = "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (i) inline_text += ", ";
          inline_text += v[i].dump();
        }
        inline_text += ']';
        raw(inline_text);
        return;
      }
      open_array();
      for (const auto& item : v) value(item);
      close_array();
    } else {
      raw(v.dump());
    }
  }

 private:
  struct Frame {
    bool array;
    bool empty = true;
  };

  void next_line() {
    if (!stack_.empty()) {
      if (!stack_.back().empty) out_ += ',';
      stack_.back().empty = false;
    }
    out_ += '\n';
    out_.append(stack_.size() * 2, ' ');
  }

  void before_value() {
    if (after_key_) {
      after_key_ = false;
      return;
    }
    if (!stack_.empty()) next_line();
  }

  void close(char c) {
    const bool was_empty = stack_.back().empty;
    stack_.pop_back();
    if (!was_empty) {
      out_ += '\n';
      out_.append(stack_.size() * 2, ' ');
    }
    out_ += c;
  }

  std::string out_;
  std::vector<Frame> stack_;
  bool after_key_ = false;
};

template <std::size_t N>
void write_extras(CanonicalWriter& w, const json& obj, const std::string_view (&known)[N]) {
  for (const auto& [k, v] : obj.items()) {
    if (is_known(known, k)) continue;
    w.key(k);
    w.value(v);
  }
}

void write_step(CanonicalWriter& w, const json& s) {
  w.open_object();
  w.key("step");
  w.value(s["step"]);
  w.key("model_completions");
  w.value(s["model_completions"]);
  w.key("scores");
  w.value(s["scores"]);
  w.key("time_taken");
  w.raw(format_seconds(s["time_taken"].get<double>()));
  w.key("flops");
  w.value(s["flops"]);
  for (auto k : {"loss", "model_input", "model_input_tokens", "model_input_embeddings"}) {
    if (!present(s, k)) continue;
    w.key(k);
    w.value(s[k]);
  }
  w.close_object();
}

void write_run(CanonicalWriter& w, const json& r) {
  w.open_object();
  w.key("original_prompt");
  w.value(r["original_prompt"]);
  w.key("steps");
  w.open_array();
  for (const auto& s : r["steps"]) write_step(w, s);
  w.close_array();
  w.key("total_time");
  w.raw(format_seconds(r["total_time"].get<double>()));
  write_extras(w, r, kRunKeys);
  w.close_object();
}

std::string write_canonical(const json& doc) {
  CanonicalWriter w;
  w.open_object();
  w.key("config");
  w.open_object();
  const auto& cfg = doc["config"];
  for (auto k : kConfigKeys) {
    w.key(k);
    w.value(cfg[std::string(k)]);
  }
  write_extras(w, cfg, kConfigKeys);
  w.close_object();
  w.key("runs");
  w.open_array();
  for (const auto& r : doc["runs"]) write_run(w, r);
  w.close_array();
  for (const auto& [k, v] : doc.items()) {
    if (k == "config" || k == "runs") continue;
    w.key(k);
    w.value(v);
  }
  w.close_object();
  auto out = w.take();
  out += '\n';
  return out;
}

json extras_of(const json& obj, std::span<const std::string_view> known) {
  json extra = json::object();
  for (const auto& [k, v] : obj.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) extra[k] = v;
  }
  return extra;
}

}  // namespace

json ValidationResult::to_json() const {
  auto issues = [](const std::vector<Issue>& list) {
    json arr = json::array();
    for (const auto& i : list) arr.push_back(json{{"path", i.path}, {"message", i.message}});
    return arr;
  };
  return json{{"ok", ok()}, {"errors", issues(errors)}, {"warnings", issues(warnings)}};
}

ArtifactError::ArtifactError(std::vector<Issue> errors)
    : std::runtime_error(errors.empty() ? "invalid artifact"
                                        : "invalid artifact: " + errors.front().path + ": " +
                                              errors.front().message),
      errors_(std::move(errors)) {}

ValidationResult validate(const json& doc) {
  Validator v;
  if (!doc.is_object()) {
    v.error("", "document must be an object");
    return v.result;
  }
  if (const json* cfg = v.required(doc, "config", "")) v.config(*cfg);
  if (const json* runs = v.required(doc, "runs", "")) {
    if (!runs->is_array()) {
      v.error("runs", "must be an array");
    } else {
      for (std::size_t i = 0; i < runs->size(); ++i) v.run((*runs)[i], index_path("runs", i));
    }
  }
  return v.result;
}

json parse_artifact_text(std::string_view text) { return parse_json_text(text); }

AttackResultDoc from_json(const json& doc) {
  auto result = validate(doc);
  if (!result.ok()) throw ArtifactError(std::move(result.errors));

  AttackResultDoc out;
  const auto& cfg = doc["config"];
  out.config.model = cfg["model"].get<std::string>();
  out.config.dataset = cfg["dataset"].get<std::string>();
  out.config.attack = cfg["attack"].get<std::string>();
  out.config.model_params = cfg["model_params"];
  out.config.dataset_params = cfg["dataset_params"];
  out.config.attack_params = cfg["attack_params"];
  out.config.extra = extras_of(cfg, kConfigKeys);
  out.extra = extras_of(doc, std::array<std::string_view, 2>{"config", "runs"});

  for (const auto& r : doc["runs"]) {
    SingleRun run;
    run.original_prompt = conversation_from_json(r["original_prompt"]);
    run.total_time = r["total_time"].get<double>();
    run.extra = extras_of(r, kRunKeys);
    for (const auto& s : r["steps"]) {
      StepRecord step;
      step.step = s["step"].get<std::int64_t>();
      step.model_completions = s["model_completions"].get<std::vector<std::string>>();
      step.scores = s["scores"];
      step.time_taken = s["time_taken"].get<double>();
      step.flops = s["flops"].get<std::uint64_t>();
      if (present(s, "loss")) step.loss = s["loss"].get<double>();
      if (present(s, "model_input")) step.model_input = conversation_from_json(s["model_input"]);
      if (present(s, "model_input_tokens")) {
        step.model_input_tokens = s["model_input_tokens"].get<std::vector<std::int64_t>>();
      }
      if (present(s, "model_input_embeddings")) step.model_input_embeddings = s["model_input_embeddings"];
      run.steps.push_back(std::move(step));
    }
    out.runs.push_back(std::move(run));
  }
  return out;
}

json to_json(const AttackResultDoc& doc) {
  json out = doc.extra.is_object() ? doc.extra : json::object();
  json cfg = doc.config.extra.is_object() ? doc.config.extra : json::object();
  cfg["model"] = doc.config.model;
  cfg["dataset"] = doc.config.dataset;
  cfg["attack"] = doc.config.attack;
  cfg["model_params"] = doc.config.model_params;
  cfg["dataset_params"] = doc.config.dataset_params;
  cfg["attack_params"] = doc.config.attack_params;
  out["config"] = std::move(cfg);
  json runs = json::array();
  for (const auto& run : doc.runs) {
    json r = run.extra.is_object() ? run.extra : json::object();
    r["original_prompt"] = to_json(run.original_prompt);
    r["total_time"] = run.total_time;
    json steps = json::array();
    for (const auto& s : run.steps) {
      json j{{"step", s.step},
             {"model_completions", s.model_completions},
             {"scores", s.scores},
             {"time_taken", s.time_taken},
             {"flops", s.flops}};
      if (s.loss) j["loss"] = *s.loss;
      if (s.model_input) j["model_input"] = to_json(*s.model_input);
      if (s.model_input_tokens) j["model_input_tokens"] = *s.model_input_tokens;
      if (s.model_input_embeddings) j["model_input_embeddings"] = *s.model_input_embeddings;
      steps.push_back(std::move(j));
    }
    r["steps"] = std::move(steps);
    runs.push_back(std::move(r));
  }
  out["runs"] = std::move(runs);
  return out;
}

AttackResultDoc read_artifact(std::string_view text) { return from_json(parse_artifact_text(text)); }

AttackResultDoc read_artifact_file(const std::filesystem::path& path) {
  return read_artifact(read_file(path));
}

std::string write_artifact(const AttackResultDoc& doc) {
  const auto j = to_json(doc);
  auto result = validate(j);
  if (!result.ok()) throw ArtifactError(std::move(result.errors));
  return write_canonical(j);
}

std::string format_seconds(double seconds) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", seconds);
  std::string s = buf;
  while (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
  return s;
}

std::vector<RunSummary> summarize(const AttackResultDoc& doc) {
  std::vector<RunSummary> out;
  for (const auto& run : doc.runs) {
    RunSummary s;
    s.steps = run.steps.size();
    for (const auto& step : run.steps) {
      s.time_taken += step.time_taken;
      s.flops += step.flops;
      s.completions += step.model_completions.size();
    }
    out.push_back(s);
  }
  return out;
}

json to_json(const std::vector<RunSummary>& summary) {
  json out = json::array();
  for (const auto& s : summary) {
    out.push_back(json{{"steps", s.steps},
                       {"time_taken", s.time_taken},
                       {"flops", flop_json(s.flops)},
                       {"completions", s.completions}});
  }
  return out;
}

}  // namespace advkit
