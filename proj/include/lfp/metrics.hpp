#pragma once

// WER and chrF reference implementations and score-table rendering.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "lfp/common.hpp"

namespace lfp::metrics {

enum class NormProfile { jiwer_like, verbatim };

NormProfile parse_profile(std::string_view name);

// jiwer_like: lowercase, drop ASCII punctuation and typographic quotes,
// dashes and ellipsis, then split on whitespace. verbatim: whitespace split.
std::vector<std::string> normalize_for_wer(std::string_view text, NormProfile profile);

struct WerBreakdown {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t hits = 0;
  std::size_t ref_words = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  double wer() const {
    return ref_words == 0 ? 0.0 : static_cast<double>(errors()) / static_cast<double>(ref_words);
  }
};

class EmptyReferenceError : public Error {
public:
  EmptyReferenceError() : Error("wer: reference is empty after normalization") {}
};

// Word-level Levenshtein with unit costs. Among minimum-cost alignments the
// one with the fewest insertions + deletions (most substitutions) is
// reported, which fixes S, D and I uniquely.
WerBreakdown wer(std::string_view reference, std::string_view hypothesis,
                 NormProfile profile = NormProfile::jiwer_like);
WerBreakdown word_alignment(const std::vector<std::string>& reference,
                            const std::vector<std::string>& hypothesis);

struct ChrfScore {
  double score = 0.0;
  int max_order = 6;
  double beta = 2.0;
  // Set when both inputs were empty (score defined as 0).
  bool empty_input = false;
};

// Per-order character n-gram match statistics; summable across segments for
// corpus-level scores.
struct ChrfStats {
  std::vector<std::size_t> matches;
  std::vector<std::size_t> hyp_total;
  std::vector<std::size_t> ref_total;

  explicit ChrfStats(int max_order = 6);
  ChrfStats& operator+=(const ChrfStats& other);
};

ChrfStats chrf_stats(std::string_view reference, std::string_view hypothesis, int max_order = 6);
ChrfScore chrf_from_stats(const ChrfStats& stats, double beta = 2.0);
ChrfScore chrf(std::string_view reference, std::string_view hypothesis, int max_order = 6,
               double beta = 2.0);

enum class Better { lower, higher };
enum class TableFormat { tsv, markdown };

TableFormat parse_table_format(std::string_view name);

struct ScoreColumn {
  std::string name;
  Better better = Better::lower;
};

struct ScoreRow {
  std::string label;
  std::vector<double> values;
};

struct ScoreTable {
  std::string label_header = "label";
  std::vector<ScoreColumn> columns;
  std::vector<ScoreRow> rows;
  int precision = 2;
};

class RaggedTableError : public Error {
public:
  explicit RaggedTableError(std::size_t row)
      : Error("score table: row " + std::to_string(row) + " has the wrong number of values"),
        row_(row) {}
  std::size_t row() const { return row_; }

private:
  std::size_t row_;
};

// Best value per column (ties at the printed precision all count) is
// suffixed with '*' in TSV and wrapped in ** in markdown.
std::string emit_score_table(const ScoreTable& table, TableFormat format);

}  // namespace lfp::metrics
