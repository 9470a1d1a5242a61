#include "lfp/refinement.hpp"

#include <algorithm>
#include <stdexcept>

namespace lfp::refinement {

namespace {
constexpr std::string_view kFusionInstruction =
    "Post-Edit the Automatic Speech Recognition Transcripts from different systems understanding "
    "the context.";
constexpr std::string_view kFusionCue = "Post-Edited Transcript:";
}  // namespace

std::vector<std::string> default_system_labels(std::size_t n) {
  std::vector<std::string> labels;
  for (std::size_t k = 1; k <= n; ++k) labels.push_back("System" + std::to_string(k));
  return labels;
}

std::string build_fusion_prompt(const FusionBlock& block,
                                const std::vector<std::string>& system_labels) {
  if (system_labels.size() != block.per_system_texts.size()) {
    throw std::invalid_argument("build_fusion_prompt: " + std::to_string(system_labels.size()) +
                                " labels for " + std::to_string(block.per_system_texts.size()) +
                                " systems");
  }
  std::string out(kFusionInstruction);
  out += "\n\nASR Transcripts:\n\n";
  for (std::size_t k = 0; k < system_labels.size(); ++k) {
    out += system_labels[k] + ": " + block.per_system_texts[k].second + "\n";
  }
  out += "\n";
  out += kFusionCue;
  out += " \n";
  return out;
}

std::size_t count_words(const std::string& s) { return text::split_ws(s).size(); }

BudgetExceeded::BudgetExceeded(std::size_t chunk_index, std::size_t tokens, std::size_t budget)
    : Error("fusion: chunk " + std::to_string(chunk_index) + " alone needs " +
            std::to_string(tokens) + " tokens, budget is " + std::to_string(budget)),
      chunk_index_(chunk_index) {}

namespace {

FusionBlock render_block(const std::vector<document::HypothesisSet>& chunks, std::size_t first,
                         std::size_t last, const std::vector<std::string>& system_ids,
                         const std::vector<std::string>& labels) {
  FusionBlock block;
  block.talk_id = chunks[first].talk_id;
  block.first = first;
  block.last = last;
  for (const auto& id : system_ids) {
    std::vector<std::pair<std::size_t, std::string>> parts;
    for (std::size_t c = first; c <= last; ++c) {
      auto it = chunks[c].texts.find(id);
      parts.emplace_back(c, it == chunks[c].texts.end() ? std::string() : it->second);
    }
    block.per_system_texts.emplace_back(id, document::assemble_talk(parts).text);
  }
  block.rendered_prompt = build_fusion_prompt(block, labels);
  return block;
}

}  // namespace

std::vector<FusionBlock> plan_fusion_blocks(const std::vector<document::HypothesisSet>& chunks,
                                            const std::vector<std::string>& system_ids,
                                            std::size_t token_budget,
                                            const TokenCounter& count_tokens) {
  if (system_ids.empty()) throw std::invalid_argument("plan_fusion_blocks: no systems");
  const auto labels = default_system_labels(system_ids.size());
  std::vector<FusionBlock> blocks;
  std::size_t first = 0;
  while (first < chunks.size()) {
    FusionBlock current = render_block(chunks, first, first, system_ids, labels);
    const std::size_t alone = count_tokens(current.rendered_prompt);
    if (alone > token_budget) throw BudgetExceeded(first, alone, token_budget);
    std::size_t last = first;
    while (last + 1 < chunks.size()) {
      FusionBlock wider = render_block(chunks, first, last + 1, system_ids, labels);
      if (count_tokens(wider.rendered_prompt) > token_budget) break;
      current = std::move(wider);
      ++last;
    }
    blocks.push_back(std::move(current));
    first = last + 1;
  }
  return blocks;
}

namespace {

std::string after_last_cue(std::string_view raw, std::string_view cue) {
  std::string_view body = raw;
  if (const auto at = body.rfind(cue); at != std::string_view::npos) {
    body = body.substr(at + cue.size());
  }
  return std::string(text::trim(body));
}

}  // namespace

std::string parse_fusion_response(std::string_view raw) {
  std::string out = after_last_cue(raw, kFusionCue);
  if (out.empty()) throw EmptyOutput();
  return out;
}

std::string language_name(std::string_view tag) {
  const std::string_view base = tag.substr(0, tag.find_first_of("-_"));
  if (base == "en") return "English";
  if (base == "de") return "German";
  if (base == "it") return "Italian";
  if (base == "zh") return "Chinese";
  if (base == "fr") return "French";
  if (base == "es") return "Spanish";
  if (base == "ja") return "Japanese";
  return std::string(tag);
}

bool is_zh(std::string_view tag) { return tag.substr(0, tag.find_first_of("-_")) == "zh"; }

std::string build_ape_prompt(const ApeRequest& req) {
  if (text::trim(req.source).empty()) throw std::invalid_argument("build_ape_prompt: empty source");
  if (text::trim(req.mt).empty()) throw std::invalid_argument("build_ape_prompt: empty mt");
  const std::string src = language_name(req.source_lang);
  const std::string tgt = language_name(req.target_lang);

  std::string out = "<|im_start|>user\n";
  out += "Post-Edit the " + tgt + " Translation of the " + src + " sentence.\n";
  for (const auto& [ctx_source, ctx_edited] : req.context) {
    out += src + ":\n" + ctx_source + "\n" + tgt + ":\n" + ctx_edited + "\n";
  }
  out += src + ":\n" + req.source + "\n" + tgt + ":\n" + req.mt + "\n";
  out += "<|im_end|>\n";
  out += "<|im_start|>assistant\n";
  out += "Post-Edited " + tgt + ":\n";
  return out;
}

std::string parse_ape_response(std::string_view raw, std::string_view target_lang) {
  std::string_view body = raw;
  if (const auto end = body.find("<|im_end|>"); end != std::string_view::npos) {
    body = body.substr(0, end);
  }
  return after_last_cue(body, "Post-Edited " + language_name(target_lang) + ":");
}

PostEditMode parse_mode(std::string_view name) {
  if (name == "ape_offline") return PostEditMode::ape_offline;
  if (name == "if_asr") return PostEditMode::if_asr;
  if (name == "if_st") return PostEditMode::if_st;
  if (name == "if_ssum") return PostEditMode::if_ssum;
  throw std::invalid_argument("unknown post-edit mode: " + std::string(name));
}

PostEditResult postedit_document(const std::vector<document::SentenceRecord>& sentences,
                                 const PostEditOptions& options, const Completion& llm) {
  if (options.mode == PostEditMode::if_ssum && sentences.size() > 1) {
    throw std::invalid_argument("postedit_document: a summary is edited as a single record");
  }
  PostEditResult result;
  result.sentences = sentences;

  const bool zh = std::any_of(sentences.begin(), sentences.end(),
                              [](const auto& s) { return is_zh(s.lang); });
  if (zh && !options.edit_zh) {
    for (auto& s : result.sentences) s.ape = s.mt.value_or(s.source);
    result.skipped = true;
    return result;
  }

  std::vector<std::pair<std::string, std::string>> history;
  for (std::size_t i = 0; i < result.sentences.size(); ++i) {
    auto& rec = result.sentences[i];
    const std::string draft = rec.mt.value_or(rec.source);

    ApeRequest req;
    req.source = rec.source;
    req.mt = draft;
    req.target_lang = rec.lang.empty() ? "de" : rec.lang;
    if (options.mode != PostEditMode::ape_offline) req.source_lang = req.target_lang;
    const std::size_t n_ctx = std::min(options.context_size, history.size());
    req.context.assign(history.end() - static_cast<std::ptrdiff_t>(n_ctx), history.end());

    std::string edited;
    std::string raw;
    std::string prompt;
    std::string failure = "empty post-edit output";
    try {
      prompt = build_ape_prompt(req);
      raw = llm(prompt);
      edited = parse_ape_response(raw, req.target_lang);
    } catch (const std::exception& e) {
      failure = e.what();
    }
    if (edited.empty()) {
      result.warnings.push_back("sentence " + std::to_string(i) + ": " + failure);
      result.fallbacks.push_back(i);
      edited = draft;
    }
    result.prompts.push_back(prompt);
    result.responses.push_back(raw);
    rec.ape = edited;
    history.emplace_back(rec.source, edited);
  }
  return result;
}

}  // namespace lfp::refinement
