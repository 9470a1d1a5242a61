#include <gtest/gtest.h>

#include <random>

#include "lfp/common.hpp"
#include "lfp/document.hpp"

using namespace lfp;
using namespace lfp::document;

namespace {

std::vector<std::string> sources(const std::vector<SentenceRecord>& records) {
  std::vector<std::string> out;
  for (const auto& r : records) out.push_back(r.source);
  return out;
}

std::size_t words(const std::string& s) { return text::split_ws(s).size(); }

}  // namespace

TEST(AssembleTalk, JoinsWithOneSpace) {
  const auto doc = assemble_talk({{0, "hello"}, {1, "world"}}, "t1");
  EXPECT_EQ(doc.text, "hello world");
  EXPECT_EQ(doc.talk_id, "t1");
  EXPECT_EQ(doc.chunk_offsets, (std::vector<ChunkOffset>{{0, 0}, {1, 6}}));
}

TEST(AssembleTalk, EmptyChunksKeepAnOffset) {
  const auto doc = assemble_talk({{0, "a "}, {1, ""}, {2, "b"}});
  EXPECT_EQ(doc.text, "a b");
  EXPECT_EQ(doc.chunk_offsets, (std::vector<ChunkOffset>{{0, 0}, {1, 2}, {2, 2}}));
}

TEST(AssembleTalk, NothingGivesAnEmptyDocument) {
  const auto doc = assemble_talk({});
  EXPECT_TRUE(doc.text.empty());
  EXPECT_TRUE(doc.chunk_offsets.empty());
}

TEST(AssembleTalk, OffsetsRecoverEachChunk) {
  const std::vector<std::pair<std::size_t, std::string>> chunks = {
      {0, "  first part "}, {1, "second"}, {3, "\tthird bit\n"}};
  const auto doc = assemble_talk(chunks);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const std::string trimmed(text::trim(chunks[i].second));
    EXPECT_EQ(doc.text.substr(doc.chunk_offsets[i].char_start, trimmed.size()), trimmed);
    EXPECT_EQ(doc.chunk_offsets[i].chunk_index, chunks[i].first);
  }
}

TEST(SplitSentences, BasicTerminators) {
  EXPECT_EQ(sources(split_sentences(assemble_talk({{0, "Hello world. How are you?"}}))),
            (std::vector<std::string>{"Hello world.", "How are you?"}));
}

TEST(SplitSentences, AbbreviationDoesNotSplit) {
  EXPECT_EQ(sources(split_sentences(assemble_talk({{0, "Dr. Smith arrived. He left."}}))),
            (std::vector<std::string>{"Dr. Smith arrived.", "He left."}));
}

TEST(SplitSentences, InitialsAndLowercaseDoNotSplit) {
  EXPECT_EQ(split_sentence_texts("J. R. Tolkien wrote it. it was long! Then 3 more."),
            (std::vector<std::string>{"J. R. Tolkien wrote it. it was long!", "Then 3 more."}));
}

TEST(SplitSentences, CustomAbbreviations) {
  SplitterOptions opts;
  opts.abbreviations = {"Approx"};
  EXPECT_EQ(split_sentence_texts("Approx. Ten people. Dr. Who.", opts),
            (std::vector<std::string>{"Approx. Ten people.", "Dr.", "Who."}));
}

TEST(SplitSentences, HanTerminators) {
  EXPECT_EQ(split_sentence_texts("你好。今天天气很好！是吗？"),
            (std::vector<std::string>{"你好。", "今天天气很好！", "是吗？"}));
}

TEST(SplitSentences, EmptyDocument) { EXPECT_TRUE(split_sentences(assemble_talk({})).empty()); }

TEST(SplitSentences, RecordsCarryTalkAndLanguage) {
  const auto recs = split_sentences(assemble_talk({{0, "One. Two."}}, "t9"), "de");
  ASSERT_EQ(recs.size(), 2u);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].index, i);
    EXPECT_EQ(recs[i].talk_id, "t9");
    EXPECT_EQ(recs[i].lang, "de");
    EXPECT_FALSE(recs[i].mt.has_value());
    EXPECT_FALSE(recs[i].ape.has_value());
  }
}

TEST(SplitSentences, ReconstructsTheDocument) {
  const std::vector<std::string> vocab = {"Hello", "world.", "Dr.", "Smith", "is", "here?", "yes!",
                                          "A.", "3", "e.g.", "No.", "ok", "  ", "Fine.", "\n"};
  std::mt19937 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::pair<std::size_t, std::string>> chunks;
    std::string joined;
    for (std::size_t c = 0; c < 1 + rng() % 5; ++c) {
      std::string t;
      for (std::size_t w = 0; w < rng() % 12; ++w) t += vocab[rng() % vocab.size()] + " ";
      chunks.emplace_back(c, t);
      joined += t + " ";
    }
    const auto recs = split_sentences(assemble_talk(chunks));
    std::vector<std::string> parts;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      ASSERT_FALSE(text::trim(recs[i].source).empty());
      ASSERT_EQ(recs[i].index, i);
      parts.push_back(recs[i].source);
    }
    ASSERT_EQ(text::normalize_ws(text::join(parts, " ")), text::normalize_ws(joined));
  }
}

TEST(StitchOverlap, Examples) {
  EXPECT_EQ(stitch_overlap("a b c d", "c d e f", 2), "a b c d e f");
  EXPECT_EQ(stitch_overlap("a b", "x y", 2), "a b x y");
  EXPECT_EQ(stitch_overlap("a b C", "c d", 1), "a b C d");
}

TEST(StitchOverlap, ShortOverlapBelowMinimumIsKept) {
  EXPECT_EQ(stitch_overlap("a b c d", "c d e f"), "a b c d c d e f");
}

TEST(StitchOverlap, IdentityAtEmpty) {
  EXPECT_EQ(stitch_overlap("x y z", ""), "x y z");
  EXPECT_EQ(stitch_overlap("", "x y z"), "x y z");
}

TEST(StitchOverlap, HanCharactersAreWords) {
  EXPECT_EQ(stitch_overlap("我们今天", "今天很好", 2), "我们今天很好");
}

TEST(StitchOverlap, NeverLosesWords) {
  std::mt19937 rng(5);
  const std::vector<std::string> vocab = {"a", "b", "c", "A"};
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> l, r;
    for (std::size_t i = 0; i < rng() % 8; ++i) l.push_back(vocab[rng() % vocab.size()]);
    for (std::size_t i = 0; i < rng() % 8; ++i) r.push_back(vocab[rng() % vocab.size()]);
    const std::string left = text::join(l, " ");
    const std::string right = text::join(r, " ");
    const std::size_t min_match = 1 + rng() % 3;
    const std::string out = stitch_overlap(left, right, min_match);
    ASSERT_GE(words(out), std::max(l.size(), r.size()));
    ASSERT_LE(words(out), l.size() + r.size());
    ASSERT_EQ(out.substr(0, left.size()), left);
  }
}
