#pragma once

// Multi-system hypothesis fusion and automatic post-editing: prompt
// rendering, document-level block packing, context windows and response
// parsing.

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lfp/common.hpp"
#include "lfp/document.hpp"

namespace lfp::refinement {

struct FusionBlock {
  std::string talk_id;
  std::size_t first = 0;  // chunk range, inclusive
  std::size_t last = 0;
  // system_id -> concatenated text, in configured system order
  std::vector<std::pair<std::string, std::string>> per_system_texts;
  std::string rendered_prompt;
};

// "System1", ..., "System<n>".
std::vector<std::string> default_system_labels(std::size_t n);

// Plain completion prompt: instruction line, "ASR Transcripts:", one
// "<label>: <text>" line per system, then the "Post-Edited Transcript: " cue.
std::string build_fusion_prompt(const FusionBlock& block,
                                const std::vector<std::string>& system_labels);

using TokenCounter = std::function<std::size_t(const std::string&)>;

// Whitespace word count; the default token estimate.
std::size_t count_words(const std::string& text);

class BudgetExceeded : public Error {
public:
  BudgetExceeded(std::size_t chunk_index, std::size_t tokens, std::size_t budget);
  std::size_t chunk_index() const { return chunk_index_; }

private:
  std::size_t chunk_index_;
};

// Greedily packs consecutive chunks into blocks whose rendered prompt stays
// within token_budget. Texts missing for a system in a chunk count as empty.
std::vector<FusionBlock> plan_fusion_blocks(const std::vector<document::HypothesisSet>& chunks,
                                            const std::vector<std::string>& system_ids,
                                            std::size_t token_budget,
                                            const TokenCounter& count_tokens = count_words);

class EmptyOutput : public Error {
public:
  EmptyOutput() : Error("model returned an empty transcript") {}
};

// Trims and drops anything up to an echoed "Post-Edited Transcript:" cue.
std::string parse_fusion_response(std::string_view raw);

struct ApeRequest {
  std::string source;
  std::string mt;
  std::vector<std::pair<std::string, std::string>> context;  // (source, edited), oldest first
  std::string source_lang = "en";
  std::string target_lang = "de";
};

// English name for a language tag ("de" -> "German"); unknown tags pass through.
std::string language_name(std::string_view tag);
bool is_zh(std::string_view tag);

// Chat-template post-editing prompt. Context pairs render as earlier
// source/target blocks inside the user turn, before the current pair.
std::string build_ape_prompt(const ApeRequest& req);

// Trims and drops anything up to an echoed "Post-Edited <Lang>:" cue.
std::string parse_ape_response(std::string_view raw, std::string_view target_lang);

enum class PostEditMode { ape_offline, if_asr, if_st, if_ssum };

PostEditMode parse_mode(std::string_view name);

using Completion = std::function<std::string(const std::string& prompt)>;

struct PostEditOptions {
  std::size_t context_size = 0;
  PostEditMode mode = PostEditMode::ape_offline;
  // Post-editing into Chinese brings no gains; pass through unless enabled.
  bool edit_zh = false;
};

struct PostEditResult {
  std::vector<document::SentenceRecord> sentences;
  std::vector<std::string> prompts;     // one per edited sentence, in order
  std::vector<std::string> responses;   // raw model output, "" on failure
  std::vector<std::size_t> fallbacks;   // sentence indices that kept the unedited text
  std::vector<std::string> warnings;
  bool skipped = false;                 // whole document passed through
};

// Sentences are edited strictly in order; sentence i sees the last
// min(context_size, i) already-edited outputs with their sources. A failing
// completion keeps the unedited text for that sentence and flags it.
PostEditResult postedit_document(const std::vector<document::SentenceRecord>& sentences,
                                 const PostEditOptions& options, const Completion& llm);

}  // namespace lfp::refinement
