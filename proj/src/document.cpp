#include "lfp/document.hpp"

#include <stdexcept>

#include "lfp/common.hpp"

namespace lfp::document {

TalkDocument assemble_talk(const std::vector<std::pair<std::size_t, std::string>>& chunks,
                           std::string talk_id) {
  TalkDocument doc;
  doc.talk_id = std::move(talk_id);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& [index, raw] = chunks[i];
    if (i > 0 && index <= chunks[i - 1].first) {
      throw std::invalid_argument("assemble_talk: chunk indices must be strictly increasing");
    }
    const std::string_view body = text::trim(raw);
    const std::size_t start = doc.text.empty() ? 0 : doc.text.size() + 1;
    doc.chunk_offsets.push_back({index, start});
    if (body.empty()) continue;
    if (!doc.text.empty()) doc.text.push_back(' ');
    doc.text.append(body);
  }
  // Trailing empty chunks would otherwise point one past the end.
  for (auto& off : doc.chunk_offsets) off.char_start = std::min(off.char_start, doc.text.size());
  return doc;
}

namespace {

bool is_ascii_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_ascii_digit(char c) { return c >= '0' && c <= '9'; }
bool is_terminator(char c) { return c == '.' || c == '?' || c == '!'; }

// 。！？ in UTF-8.
std::size_t han_terminator_len(std::string_view s, std::size_t i) {
  static constexpr std::string_view kHan[] = {"\xE3\x80\x82", "\xEF\xBC\x81", "\xEF\xBC\x9F"};
  for (auto t : kHan) {
    if (s.substr(i, t.size()) == t) return t.size();
  }
  return 0;
}

// Closing quotes/brackets that may follow a terminator: " ' ) ] ” ’ » 」 』
std::size_t closer_len(std::string_view s, std::size_t i) {
  const char c = s[i];
  if (c == '"' || c == '\'' || c == ')' || c == ']') return 1;
  static constexpr std::string_view kMulti[] = {"\xE2\x80\x9D", "\xE2\x80\x99", "\xC2\xBB",
                                                "\xE3\x80\x8D", "\xE3\x80\x8F"};
  for (auto t : kMulti) {
    if (s.substr(i, t.size()) == t) return t.size();
  }
  return 0;
}

bool closes_abbreviation(std::string_view text, std::size_t sentence_start, std::size_t period,
                         const SplitterOptions& options) {
  const std::string_view before = text.substr(sentence_start, period - sentence_start);
  for (const auto& abbr : options.abbreviations) {
    if (before.size() < abbr.size()) continue;
    if (before.substr(before.size() - abbr.size()) != abbr) continue;
    const std::size_t at = before.size() - abbr.size();
    if (at == 0 || text::is_space(before[at - 1]) || before[at - 1] == '(') return true;
  }
  std::size_t word_start = before.size();
  while (word_start > 0 && !text::is_space(before[word_start - 1])) --word_start;
  const std::string_view word = before.substr(word_start);
  return word.size() == 1 && is_ascii_upper(word[0]);
}

}  // namespace

std::vector<std::string> split_sentence_texts(std::string_view text,
                                              const SplitterOptions& options) {
  std::vector<std::string> out;
  auto emit = [&](std::size_t b, std::size_t e) {
    const auto s = text::trim(text.substr(b, e - b));
    if (!s.empty()) out.emplace_back(s);
  };

  const std::size_t n = text.size();
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < n) {
    if (const std::size_t hl = han_terminator_len(text, i); hl > 0) {
      std::size_t k = i + hl;
      while (k < n) {
        if (const std::size_t h = han_terminator_len(text, k); h > 0) k += h;
        else if (const std::size_t c = closer_len(text, k); c > 0) k += c;
        else break;
      }
      emit(start, k);
      while (k < n && text::is_space(text[k])) ++k;
      start = i = k;
      continue;
    }
    if (!is_terminator(text[i])) {
      i += text::utf8_seq_len(text, i);
      continue;
    }
    std::size_t k = i;
    while (k < n && is_terminator(text[k])) ++k;
    const bool single_period = (k == i + 1 && text[i] == '.');
    while (k < n) {
      const std::size_t c = closer_len(text, k);
      if (c == 0) break;
      k += c;
    }
    if (k >= n || !text::is_space(text[k])) {
      i = k;
      continue;
    }
    std::size_t m = k;
    while (m < n && text::is_space(text[m])) ++m;
    const bool next_starts = m < n && (is_ascii_upper(text[m]) || is_ascii_digit(text[m]));
    if (!next_starts || (single_period && closes_abbreviation(text, start, i, options))) {
      i = m;
      continue;
    }
    emit(start, k);
    start = i = m;
  }
  emit(start, n);
  return out;
}

std::vector<SentenceRecord> split_sentences(const TalkDocument& doc, const std::string& lang,
                                            const SplitterOptions& options) {
  std::vector<SentenceRecord> out;
  for (auto& s : split_sentence_texts(doc.text, options)) {
    SentenceRecord rec;
    rec.talk_id = doc.talk_id;
    rec.index = out.size();
    rec.source = std::move(s);
    rec.lang = lang;
    out.push_back(std::move(rec));
  }
  return out;
}

namespace {

struct Token {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool han = false;
};

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (text::is_space(s[i])) {
      ++i;
      continue;
    }
    const std::size_t len = text::utf8_seq_len(s, i);
    const auto cps = text::decode_utf8(s.substr(i, len));
    if (!cps.empty() && text::is_han(cps.front())) {
      out.push_back({i, i + len, true});
      i += len;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && !text::is_space(s[j])) {
      const std::size_t l = text::utf8_seq_len(s, j);
      const auto cp = text::decode_utf8(s.substr(j, l));
      if (!cp.empty() && text::is_han(cp.front())) break;
      j += l;
    }
    out.push_back({i, j, false});
    i = j;
  }
  return out;
}

bool same_word(std::string_view a, std::string_view b) {
  return text::to_lower_ascii(a) == text::to_lower_ascii(b);
}

}  // namespace

std::string stitch_overlap(std::string_view left, std::string_view right,
                           std::size_t min_match_words) {
  if (min_match_words < 1) throw std::invalid_argument("stitch_overlap: min_match_words >= 1");
  const auto lt = tokenize(left);
  const auto rt = tokenize(right);
  if (rt.empty()) return std::string(left);
  if (lt.empty()) return std::string(right);

  std::size_t overlap = 0;
  for (std::size_t len = std::min(lt.size(), rt.size()); len >= min_match_words && len > 0; --len) {
    bool match = true;
    for (std::size_t k = 0; k < len && match; ++k) {
      const Token& a = lt[lt.size() - len + k];
      const Token& b = rt[k];
      match = same_word(left.substr(a.begin, a.end - a.begin), right.substr(b.begin, b.end - b.begin));
    }
    if (match) {
      overlap = len;
      break;
    }
  }

  std::string out(text::trim(left).empty() ? left : left.substr(0, lt.back().end));
  if (overlap == rt.size()) return out;
  const Token& first = rt[overlap];
  const std::string_view rest = text::trim(right.substr(first.begin));
  if (!(lt.back().han && first.han)) out.push_back(' ');
  out.append(rest);
  return out;
}

}  // namespace lfp::document
