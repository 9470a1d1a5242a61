#include "lfp/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <tuple>

namespace lfp::metrics {

NormProfile parse_profile(std::string_view name) {
  if (name == "jiwer_like") return NormProfile::jiwer_like;
  if (name == "verbatim") return NormProfile::verbatim;
  throw std::invalid_argument("unknown normalization profile: " + std::string(name));
}

namespace {

bool is_ascii_punct(char c) {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
         (c >= '{' && c <= '~');
}

// ‘ ’ ‚ “ ” „ « » ‹ › – — ‒ ― …
bool is_typographic_punct(char32_t cp) {
  switch (cp) {
    case 0x2018: case 0x2019: case 0x201A: case 0x201C: case 0x201D: case 0x201E:
    case 0x00AB: case 0x00BB: case 0x2039: case 0x203A:
    case 0x2013: case 0x2014: case 0x2012: case 0x2015: case 0x2026:
      return true;
    default:
      return false;
  }
}

}  // namespace

std::vector<std::string> normalize_for_wer(std::string_view input, NormProfile profile) {
  if (profile == NormProfile::verbatim) return text::split_ws(input);
  std::string cleaned;
  cleaned.reserve(input.size());
  std::size_t i = 0;
  while (i < input.size()) {
    const std::size_t len = text::utf8_seq_len(input, i);
    if (len == 1) {
      const char c = input[i];
      if (!is_ascii_punct(c)) cleaned.push_back(c);
    } else {
      const auto cp = text::decode_utf8(input.substr(i, len));
      if (cp.empty() || !is_typographic_punct(cp.front())) cleaned.append(input.substr(i, len));
    }
    i += len;
  }
  return text::split_ws(text::to_lower_ascii(cleaned));
}

namespace {

// Lexicographic (cost, insertions + deletions) with the edit counts carried
// along. Both components are additive, so the DP stays exact.
struct Cell {
  std::size_t cost = 0;
  std::size_t indels = 0;
  std::size_t sub = 0;
  std::size_t del = 0;
  std::size_t ins = 0;
  std::size_t hit = 0;

  bool better_than(const Cell& o) const {
    return std::tie(cost, indels) < std::tie(o.cost, o.indels);
  }
};

}  // namespace

WerBreakdown word_alignment(const std::vector<std::string>& ref,
                            const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<Cell> prev(m + 1);
  std::vector<Cell> cur(m + 1);
  for (std::size_t j = 1; j <= m; ++j) {
    prev[j] = prev[j - 1];
    prev[j].cost += 1;
    prev[j].indels += 1;
    prev[j].ins += 1;
  }
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = prev[0];
    cur[0].cost += 1;
    cur[0].indels += 1;
    cur[0].del += 1;
    for (std::size_t j = 1; j <= m; ++j) {
      Cell diag = prev[j - 1];
      if (ref[i - 1] == hyp[j - 1]) {
        diag.hit += 1;
      } else {
        diag.cost += 1;
        diag.sub += 1;
      }
      Cell del = prev[j];
      del.cost += 1;
      del.indels += 1;
      del.del += 1;
      Cell ins = cur[j - 1];
      ins.cost += 1;
      ins.indels += 1;
      ins.ins += 1;
      Cell best = diag;
      if (del.better_than(best)) best = del;
      if (ins.better_than(best)) best = ins;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  const Cell& end = prev[m];
  WerBreakdown out;
  out.substitutions = end.sub;
  out.deletions = end.del;
  out.insertions = end.ins;
  out.hits = end.hit;
  out.ref_words = n;
  return out;
}

WerBreakdown wer(std::string_view reference, std::string_view hypothesis, NormProfile profile) {
  const auto ref = normalize_for_wer(reference, profile);
  if (ref.empty()) throw EmptyReferenceError();
  return word_alignment(ref, normalize_for_wer(hypothesis, profile));
}

ChrfStats::ChrfStats(int max_order)
    : matches(static_cast<std::size_t>(std::max(max_order, 0)), 0),
      hyp_total(matches.size(), 0),
      ref_total(matches.size(), 0) {}

ChrfStats& ChrfStats::operator+=(const ChrfStats& other) {
  if (other.matches.size() != matches.size()) {
    throw std::invalid_argument("chrF: cannot add statistics of different orders");
  }
  for (std::size_t n = 0; n < matches.size(); ++n) {
    matches[n] += other.matches[n];
    hyp_total[n] += other.hyp_total[n];
    ref_total[n] += other.ref_total[n];
  }
  return *this;
}

namespace {

std::vector<char32_t> chars_without_space(std::string_view s) {
  std::vector<char32_t> out;
  for (char32_t cp : text::decode_utf8(s)) {
    if (cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v') continue;
    out.push_back(cp);
  }
  return out;
}

std::map<std::u32string, std::size_t> ngram_counts(const std::vector<char32_t>& chars,
                                                    std::size_t order) {
  std::map<std::u32string, std::size_t> counts;
  if (chars.size() < order) return counts;
  for (std::size_t i = 0; i + order <= chars.size(); ++i) {
    ++counts[std::u32string(chars.begin() + static_cast<std::ptrdiff_t>(i),
                            chars.begin() + static_cast<std::ptrdiff_t>(i + order))];
  }
  return counts;
}

}  // namespace

ChrfStats chrf_stats(std::string_view reference, std::string_view hypothesis, int max_order) {
  if (max_order < 1) throw std::invalid_argument("chrF: max_order must be >= 1");
  const auto ref = chars_without_space(reference);
  const auto hyp = chars_without_space(hypothesis);
  ChrfStats stats(max_order);
  for (std::size_t n = 1; n <= static_cast<std::size_t>(max_order); ++n) {
    const auto rc = ngram_counts(ref, n);
    const auto hc = ngram_counts(hyp, n);
    std::size_t matched = 0;
    for (const auto& [gram, count] : hc) {
      if (auto it = rc.find(gram); it != rc.end()) matched += std::min(count, it->second);
    }
    stats.matches[n - 1] = matched;
    stats.hyp_total[n - 1] = hyp.size() >= n ? hyp.size() - n + 1 : 0;
    stats.ref_total[n - 1] = ref.size() >= n ? ref.size() - n + 1 : 0;
  }
  return stats;
}

ChrfScore chrf_from_stats(const ChrfStats& stats, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("chrF: beta must be positive");
  ChrfScore out;
  out.max_order = static_cast<int>(stats.matches.size());
  out.beta = beta;

  double p_sum = 0.0;
  double r_sum = 0.0;
  std::size_t p_orders = 0;
  std::size_t r_orders = 0;
  bool any_ref = false;
  bool any_hyp = false;
  for (std::size_t n = 0; n < stats.matches.size(); ++n) {
    if (stats.hyp_total[n] > 0) {
      p_sum += static_cast<double>(stats.matches[n]) / static_cast<double>(stats.hyp_total[n]);
      ++p_orders;
      any_hyp = true;
    }
    if (stats.ref_total[n] > 0) {
      r_sum += static_cast<double>(stats.matches[n]) / static_cast<double>(stats.ref_total[n]);
      ++r_orders;
      any_ref = true;
    }
  }
  out.empty_input = !any_ref && !any_hyp;
  const double p = p_orders ? p_sum / static_cast<double>(p_orders) : 0.0;
  const double r = r_orders ? r_sum / static_cast<double>(r_orders) : 0.0;
  if (p + r <= 0.0) return out;
  const double b2 = beta * beta;
  out.score = 100.0 * (1.0 + b2) * p * r / (b2 * p + r);
  return out;
}

ChrfScore chrf(std::string_view reference, std::string_view hypothesis, int max_order,
               double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("chrF: beta must be positive");
  return chrf_from_stats(chrf_stats(reference, hypothesis, max_order), beta);
}

TableFormat parse_table_format(std::string_view name) {
  if (name == "tsv") return TableFormat::tsv;
  if (name == "markdown" || name == "md") return TableFormat::markdown;
  throw std::invalid_argument("unknown table format: " + std::string(name));
}

namespace {

std::string format_value(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

}  // namespace

std::string emit_score_table(const ScoreTable& table, TableFormat format) {
  const std::size_t ncol = table.columns.size();
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.rows[r].values.size() != ncol) throw RaggedTableError(r);
  }

  std::vector<std::vector<std::string>> cells(table.rows.size());
  std::vector<std::vector<double>> rounded(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (double v : table.rows[r].values) {
      cells[r].push_back(format_value(v, table.precision));
      rounded[r].push_back(std::stod(cells[r].back()));
    }
  }
  for (std::size_t c = 0; c < ncol; ++c) {
    if (table.rows.empty()) break;
    double best = rounded[0][c];
    for (std::size_t r = 1; r < table.rows.size(); ++r) {
      best = table.columns[c].better == Better::lower ? std::min(best, rounded[r][c])
                                                      : std::max(best, rounded[r][c]);
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      if (rounded[r][c] != best) continue;
      cells[r][c] = format == TableFormat::tsv ? cells[r][c] + "*" : "**" + cells[r][c] + "**";
    }
  }

  std::string out;
  if (format == TableFormat::tsv) {
    out += table.label_header;
    for (const auto& col : table.columns) out += "\t" + col.name;
    out += "\n";
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      out += table.rows[r].label;
      for (const auto& cell : cells[r]) out += "\t" + cell;
      out += "\n";
    }
    return out;
  }
  out += "| " + table.label_header;
  for (const auto& col : table.columns) out += " | " + col.name;
  out += " |\n|---";
  for (std::size_t c = 0; c < ncol; ++c) out += "|---";
  out += "|\n";
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    out += "| " + table.rows[r].label;
    for (const auto& cell : cells[r]) out += " | " + cell;
    out += " |\n";
  }
  return out;
}

}  // namespace lfp::metrics
