#pragma once

// Talk-level document assembly, rule-based sentence splitting and transcript
// stitching for overlapping windows.

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lfp::document {

struct HypothesisSet {
  std::string talk_id;
  std::size_t chunk_index = 0;
  std::map<std::string, std::string> texts;  // system_id -> text
};

struct ChunkOffset {
  std::size_t chunk_index = 0;
  std::size_t char_start = 0;
  friend bool operator==(const ChunkOffset&, const ChunkOffset&) = default;
};

struct TalkDocument {
  std::string talk_id;
  std::string text;
  std::vector<ChunkOffset> chunk_offsets;
};

struct SentenceRecord {
  std::string talk_id;
  std::size_t index = 0;
  std::string source;
  std::optional<std::string> mt;
  std::optional<std::string> ape;
  std::string lang;
  friend bool operator==(const SentenceRecord&, const SentenceRecord&) = default;
};

// Joins trimmed chunk texts with one space. Empty chunks are skipped but keep
// an offset at the position the next text would start (clamped to the text
// length), so chunk offsets are non-decreasing rather than strictly
// increasing in char_start.
TalkDocument assemble_talk(const std::vector<std::pair<std::size_t, std::string>>& chunks,
                           std::string talk_id = {});

struct SplitterOptions {
  // Tokens (without the final period) that never end a sentence.
  std::set<std::string> abbreviations = {"Dr", "Mr", "Mrs", "Prof", "Fig",
                                         "et al", "e.g", "i.e", "vs", "No"};
};

// Splits after [.?!] when followed by whitespace and then an uppercase letter
// or digit, unless the period closes an abbreviation or a single-capital
// initial. 。！？ always end a sentence.
std::vector<SentenceRecord> split_sentences(const TalkDocument& doc, const std::string& lang = "en",
                                            const SplitterOptions& options = {});
std::vector<std::string> split_sentence_texts(std::string_view text,
                                              const SplitterOptions& options = {});

inline constexpr std::size_t kDefaultMinMatchWords = 3;

// Appends right to left, dropping the longest case-insensitive word overlap
// between the end of left and the start of right when it has at least
// min_match_words words. Han characters count as one word each.
std::string stitch_overlap(std::string_view left, std::string_view right,
                           std::size_t min_match_words = kDefaultMinMatchWords);

}  // namespace lfp::document
