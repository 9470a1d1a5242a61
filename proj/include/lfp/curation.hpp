#pragma once

// Dataset construction: QE-ranked filtering, APE triplet synthesis, SQA
// generation and balancing, augmentation prompts and TTS job manifests.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lfp/common.hpp"

namespace lfp::curation {

struct ScoredPair {
  std::string source;
  std::string target;
  double qe_score = 0.0;
  std::string origin;
  friend bool operator==(const ScoredPair&, const ScoredPair&) = default;
};

// Streaming top-k selection with O(k) memory. Ordering: score descending,
// then origin ascending, then arrival position ascending.
class TopKSelector {
public:
  explicit TopKSelector(std::size_t k);

  void push(ScoredPair pair);
  std::size_t seen() const { return seen_; }
  // Best first. Leaves the selector empty.
  std::vector<ScoredPair> finish();

private:
  struct Entry {
    ScoredPair pair;
    std::size_t position;
  };
  struct WorseOnTop {
    bool operator()(const Entry& a, const Entry& b) const;
  };

  std::size_t k_;
  std::size_t seen_ = 0;
  std::priority_queue<Entry, std::vector<Entry>, WorseOnTop> heap_;
};

// True when a ranks strictly before b (a, b with arrival positions).
bool ranks_before(const ScoredPair& a, std::size_t pos_a, const ScoredPair& b, std::size_t pos_b);

struct TopKResult {
  std::vector<ScoredPair> pairs;
  bool shortfall = false;  // fewer than k inputs
};

TopKResult filter_top_k(const std::vector<ScoredPair>& pairs, std::size_t k);

// The generator behind every seeded operation: std::mt19937_64, whose output
// sequence is fixed by the C++ standard. Bounded draws use rejection sampling
// so results do not depend on the standard library's distributions.
class SeededRng {
public:
  explicit SeededRng(std::uint64_t seed);
  std::uint64_t next();
  // Uniform in [0, n). n > 0.
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[static_cast<std::size_t>(below(i))]);
    }
  }

private:
  std::mt19937_64 engine_;
};

inline constexpr std::string_view kRngName = "mt19937_64";

// First n indices of a partial Fisher-Yates shuffle of [0, population).
std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n, std::uint64_t seed);

struct ApeTriplet {
  std::string source;
  std::string hypothesis;
  std::string reference;
  friend bool operator==(const ApeTriplet&, const ApeTriplet&) = default;
};

using Translator = std::function<std::string(const std::string& source)>;

struct TripletResult {
  std::vector<ApeTriplet> triplets;
  std::vector<std::size_t> sampled;  // indices into the input, in sampled order
  std::vector<std::string> warnings; // one per skipped item
  std::size_t shortfall = 0;
};

TripletResult make_ape_triplets(const std::vector<ScoredPair>& pairs, std::size_t sample_n,
                                const Translator& mt, std::uint64_t seed);

inline constexpr std::string_view kNotAnswerable = "N/A";

struct QaExample {
  std::string segment_id;
  std::string question;
  std::string answer;
  bool answerable = true;
  std::string lang;
  friend bool operator==(const QaExample&, const QaExample&) = default;
};

struct BalanceResult {
  std::vector<QaExample> examples;
  std::size_t unanswerable_target = 0;
  std::size_t unanswerable_kept = 0;
  bool shortfall = false;
};

// Keeps every answerable example and round-half-up(f * A / (1 - f))
// unanswerable ones chosen with the seed, then shuffles the result.
BalanceResult balance_unanswerable(const std::vector<QaExample>& examples, double target_fraction,
                                   std::uint64_t seed);

enum class PromptKind { sqa, ssum_translate, st_translate };

PromptKind parse_prompt_kind(std::string_view name);

class MissingArgument : public Error {
public:
  explicit MissingArgument(std::string placeholder)
      : Error("augmentation prompt: missing argument for " + placeholder),
        placeholder_(std::move(placeholder)) {}
  const std::string& placeholder() const { return placeholder_; }

private:
  std::string placeholder_;
};

struct PromptPair {
  std::string system;
  std::string user;
};

// Argument keys: sqa {transcript, trg_lang}; ssum_translate {abstract,
// trg_lang}; st_translate {text, trg_lang}. trg_lang is a language name such
// as "German".
PromptPair build_augmentation_prompt(PromptKind kind, const std::map<std::string, std::string>& args);

class SqaParseError : public Error {
public:
  using Error::Error;
};

class SqaSchemaError : public SqaParseError {
public:
  explicit SqaSchemaError(std::vector<std::string> missing);
  const std::vector<std::string>& missing() const { return missing_; }

private:
  std::vector<std::string> missing_;
};

// Parses {"questions":[{"q1","a1"},{"q2","a2"},{"q3","a3"}]}. Surrounding
// prose or code fences are ignored. An answer equal to "N/A" marks the
// question unanswerable.
std::vector<QaExample> parse_sqa_json(std::string_view raw, const std::string& segment_id = {},
                                      const std::string& lang = {});

struct TtsJob {
  std::string abstract_id;
  std::size_t sentence_index = 0;
  std::string text;
  friend bool operator==(const TtsJob&, const TtsJob&) = default;
};

std::vector<TtsJob> abstracts_to_tts_manifest(
    const std::vector<std::pair<std::string, std::string>>& abstracts);

}  // namespace lfp::curation
