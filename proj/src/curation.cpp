#include "lfp/curation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "lfp/document.hpp"

namespace lfp::curation {

using nlohmann::json;

bool ranks_before(const ScoredPair& a, std::size_t pos_a, const ScoredPair& b, std::size_t pos_b) {
  if (a.qe_score != b.qe_score) return a.qe_score > b.qe_score;
  if (a.origin != b.origin) return a.origin < b.origin;
  return pos_a < pos_b;
}

bool TopKSelector::WorseOnTop::operator()(const Entry& a, const Entry& b) const {
  // priority_queue puts the "largest" on top; the worst-ranked entry is largest.
  return ranks_before(a.pair, a.position, b.pair, b.position);
}

TopKSelector::TopKSelector(std::size_t k) : k_(k) {
  if (k == 0) throw std::invalid_argument("top-k: k must be >= 1");
}

void TopKSelector::push(ScoredPair pair) {
  if (std::isnan(pair.qe_score)) throw std::invalid_argument("top-k: NaN quality score");
  Entry entry{std::move(pair), seen_++};
  if (heap_.size() < k_) {
    heap_.push(std::move(entry));
  } else if (ranks_before(entry.pair, entry.position, heap_.top().pair, heap_.top().position)) {
    heap_.pop();
    heap_.push(std::move(entry));
  }
}

std::vector<ScoredPair> TopKSelector::finish() {
  std::vector<ScoredPair> out(heap_.size());
  for (std::size_t i = out.size(); i > 0; --i) {
    out[i - 1] = heap_.top().pair;
    heap_.pop();
  }
  return out;
}

TopKResult filter_top_k(const std::vector<ScoredPair>& pairs, std::size_t k) {
  TopKSelector selector(k);
  for (const auto& p : pairs) selector.push(p);
  TopKResult result;
  result.shortfall = selector.seen() < k;
  result.pairs = selector.finish();
  return result;
}

SeededRng::SeededRng(std::uint64_t seed) : engine_(seed) {}

std::uint64_t SeededRng::next() { return engine_(); }

std::uint64_t SeededRng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("SeededRng::below: n must be > 0");
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = next();
    if (r >= threshold) return r % n;
  }
}

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n, std::uint64_t seed) {
  if (n > population) {
    throw std::invalid_argument("sample: requested " + std::to_string(n) + " of " +
                                std::to_string(population));
  }
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), 0);
  SeededRng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(population - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

TripletResult make_ape_triplets(const std::vector<ScoredPair>& pairs, std::size_t sample_n,
                                const Translator& mt, std::uint64_t seed) {
  TripletResult result;
  result.sampled = sample_indices(pairs.size(), sample_n, seed);
  for (std::size_t idx : result.sampled) {
    const auto& pair = pairs[idx];
    try {
      std::string hyp = mt(pair.source);
      if (text::trim(hyp).empty() || text::trim(pair.source).empty() ||
          text::trim(pair.target).empty()) {
        throw Error("empty field");
      }
      result.triplets.push_back({pair.source, std::move(hyp), pair.target});
    } catch (const std::exception& e) {
      result.warnings.push_back("pair " + std::to_string(idx) + " skipped: " + e.what());
      ++result.shortfall;
    }
  }
  return result;
}

BalanceResult balance_unanswerable(const std::vector<QaExample>& examples, double target_fraction,
                                   std::uint64_t seed) {
  if (!(target_fraction > 0.0 && target_fraction < 1.0)) {
    throw std::invalid_argument("balance_unanswerable: fraction must be in (0, 1)");
  }
  std::vector<QaExample> answerable;
  std::vector<QaExample> unanswerable;
  for (const auto& ex : examples) (ex.answerable ? answerable : unanswerable).push_back(ex);
  if (answerable.empty()) {
    throw std::invalid_argument("balance_unanswerable: no answerable examples");
  }

  BalanceResult result;
  const double exact = target_fraction * static_cast<double>(answerable.size()) /
                       (1.0 - target_fraction);
  result.unanswerable_target = static_cast<std::size_t>(std::floor(exact + 0.5 + 1e-9));

  SeededRng rng(seed);
  if (unanswerable.size() < result.unanswerable_target) {
    result.shortfall = true;
  } else {
    rng.shuffle(unanswerable);
    unanswerable.resize(result.unanswerable_target);
  }
  result.unanswerable_kept = unanswerable.size();
  result.examples = std::move(answerable);
  result.examples.insert(result.examples.end(), unanswerable.begin(), unanswerable.end());
  rng.shuffle(result.examples);
  return result;
}

PromptKind parse_prompt_kind(std::string_view name) {
  if (name == "sqa") return PromptKind::sqa;
  if (name == "ssum_translate" || name == "ssum") return PromptKind::ssum_translate;
  if (name == "st_translate" || name == "st") return PromptKind::st_translate;
  throw std::invalid_argument("unknown prompt kind: " + std::string(name));
}

namespace {

const std::string& arg(const std::map<std::string, std::string>& args, const std::string& key,
                       const std::string& placeholder) {
  auto it = args.find(key);
  if (it == args.end()) throw MissingArgument(placeholder);
  return it->second;
}

}  // namespace

PromptPair build_augmentation_prompt(PromptKind kind,
                                     const std::map<std::string, std::string>& args) {
  PromptPair out;
  switch (kind) {
    case PromptKind::sqa: {
      const std::string& transcript = arg(args, "transcript", "<Transcript>");
      const std::string& lang = arg(args, "trg_lang", "<trg lang>");
      out.system =
          "You are a professional question generator. Given a transcript, you will create three "
          "questions: \n"
          "two that can be answered based on the transcript and one that cannot be answered (but "
          "is relevant to the topic). \n"
          "The answers should be full sentences in the target language specified. \n"
          "Your response must be in valid JSON format, with keys for 'questions' and 'answers'. \n"
          "Do not include any explanations or additional text.\n";
      out.user = transcript + "\n" +
                 "Based on the transcript, generate a JSON dictionary with the following "
                 "structure.\n" +
                 "The questions and answers must be in " + lang + ":\n" +
                 "{\n"
                 "  \"questions\": [\n"
                 "    {\"q1\": \"First question in " + lang +
                 "\", \"a1\": \"Full-sentence answer in " + lang + "\"},\n" +
                 "    {\"q2\": \"Second question in " + lang +
                 "\", \"a2\": \"Full-sentence answer in " + lang + "\"},\n" +
                 "    {\"q3\": \"Third question in " + lang + "\", \"a3\": \"N/A\"}\n" +
                 "  ]\n"
                 "}\n"
                 "Ensure the response is a valid JSON object with properly formatted keys and "
                 "values.";
      break;
    }
    case PromptKind::ssum_translate: {
      const std::string& abstract = arg(args, "abstract", "<abstract>");
      const std::string& lang = arg(args, "trg_lang", "<trg lang>");
      out.system =
          "A chat between a curious user and a professional system for translating ACL "
          "abstracts.\n";
      out.user = abstract + "\nTranslate this abstract to " + lang +
                 ". Do not provide any explanation or additional text.";
      break;
    }
    case PromptKind::st_translate: {
      const std::string& body = arg(args, "text", "<text>");
      const std::string& lang = arg(args, "trg_lang", "<trg lang>");
      out.system =
          "You are a professional translator. Your task is to provide accurate, fluent, and "
          "natural translations without adding explanations, comments, or extra content.";
      out.user = "Translate the following English text into " + lang +
                 ". Do not provide any explanation or additional text.\n" + body;
      break;
    }
  }
  return out;
}

SqaSchemaError::SqaSchemaError(std::vector<std::string> missing)
    : SqaParseError("sqa payload: missing keys " + text::join(missing, ", ")),
      missing_(std::move(missing)) {}

std::vector<QaExample> parse_sqa_json(std::string_view raw, const std::string& segment_id,
                                      const std::string& lang) {
  const auto open = raw.find('{');
  const auto close = raw.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    throw SqaParseError("sqa payload: no JSON object found");
  }
  json doc;
  try {
    doc = json::parse(raw.substr(open, close - open + 1));
  } catch (const json::parse_error& e) {
    throw SqaParseError(std::string("sqa payload: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("questions") || !doc["questions"].is_array()) {
    throw SqaSchemaError({"questions"});
  }

  std::map<std::string, std::string> fields;
  for (const auto& item : doc["questions"]) {
    if (!item.is_object()) continue;
    for (const auto& [key, value] : item.items()) {
      if (value.is_string()) fields[key] = value.get<std::string>();
    }
  }
  std::vector<std::string> missing;
  for (int k = 1; k <= 3; ++k) {
    for (const char* prefix : {"q", "a"}) {
      const std::string key = prefix + std::to_string(k);
      if (!fields.contains(key)) missing.push_back(key);
    }
  }
  if (!missing.empty()) throw SqaSchemaError(std::move(missing));

  std::vector<QaExample> out;
  for (int k = 1; k <= 3; ++k) {
    QaExample ex;
    ex.segment_id = segment_id;
    ex.question = fields["q" + std::to_string(k)];
    ex.answer = fields["a" + std::to_string(k)];
    ex.answerable = text::trim(ex.answer) != kNotAnswerable;
    if (!ex.answerable) ex.answer = std::string(kNotAnswerable);
    ex.lang = lang;
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TtsJob> abstracts_to_tts_manifest(
    const std::vector<std::pair<std::string, std::string>>& abstracts) {
  std::vector<TtsJob> jobs;
  for (const auto& [id, body] : abstracts) {
    const auto sentences = document::split_sentence_texts(body);
    for (std::size_t i = 0; i < sentences.size(); ++i) jobs.push_back({id, i, sentences[i]});
  }
  return jobs;
}

}  // namespace lfp::curation
