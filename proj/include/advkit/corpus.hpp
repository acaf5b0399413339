#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advkit/conversation.hpp"
#include "advkit/json_io.hpp"
#include "advkit/tokenizer.hpp"

namespace advkit {

struct CorpusLimits {
  std::size_t max_vocab = 40;
  std::size_t max_merges = 30;
  std::size_t max_alphabet = 3;
  std::size_t candidates = 20;
  std::size_t max_candidate_len = 4;
};

// A random but fully seeded reachability instance: tokenizer, template,
// conversation, attack slot and candidate token sequences.
struct ReachInstance {
  json tokenizer_doc;
  TokenizerModel tokenizer;
  TemplateSpec tpl;
  Conversation conversation;
  SegmentLabel slot;
  std::u32string alphabet;  // content characters, sorted
  std::vector<std::vector<TokenId>> candidates;
};

ReachInstance generate_instance(std::uint64_t seed, const CorpusLimits& limits = {});

// Writes tokenizer.json, template.json, conversation.json, candidates.txt and
// meta.json (slot, alphabet, seed) into `dir`.
void write_instance(const ReachInstance& inst, std::uint64_t seed, const std::filesystem::path& dir);

// Random ragged prompts: `count` sequences with lengths in [min_len, max_len]
// and ids in [1, vocab).
std::vector<std::vector<TokenId>> generate_prompts(std::uint64_t seed, std::size_t count,
                                                   std::size_t min_len, std::size_t max_len,
                                                   std::size_t vocab);

}  // namespace advkit
