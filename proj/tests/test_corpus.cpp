#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"
#include "uniasr/corpus.hpp"

using namespace uniasr;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::Io;
}

}  // namespace

TEST(Aggregate, TwoCharsOneToken) {
  const std::vector<CharAlignment> chars{{"h", 0, 100}, {"i", 100, 240}};
  const std::vector<TokenSpan> spans{{10, 0, 1}};
  const auto out = aggregate_alignments(chars, spans, 25.0);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], (TokenAlignment{10, 0, 6}));  // floor(240 * 25 / 1000) = 6
}

TEST(Aggregate, ZeroDuration) {
  const std::vector<CharAlignment> chars{{"x", 0, 0}};
  const std::vector<TokenSpan> spans{{10, 0, 0}};
  EXPECT_EQ(aggregate_alignments(chars, spans, 25.0).front(), (TokenAlignment{10, 0, 0}));
}

TEST(Aggregate, Errors) {
  const std::vector<CharAlignment> cjk{{"你", 0, 100}, {"好", 100, 200}};
  const std::vector<TokenSpan> joint{{10, 0, 1}};
  EXPECT_EQ(code_of([&] { aggregate_alignments(cjk, joint, 25.0); }), ErrorCode::MultiCharCjkToken);
  const std::vector<TokenSpan> split{{10, 0, 0}, {11, 1, 1}};
  EXPECT_EQ(aggregate_alignments(cjk, split, 25.0).size(), 2u);

  const std::vector<CharAlignment> abc{{"a", 0, 40}, {"b", 40, 80}, {"c", 80, 120}};
  EXPECT_EQ(code_of([&] { aggregate_alignments(abc, std::vector<TokenSpan>{{10, 0, 1}, {11, 1, 2}}, 25.0); }),
            ErrorCode::OverlappingSpans);
  EXPECT_EQ(code_of([&] { aggregate_alignments(abc, std::vector<TokenSpan>{{10, 0, 0}, {11, 2, 2}}, 25.0); }),
            ErrorCode::InvalidSpans);
  EXPECT_EQ(code_of([&] { aggregate_alignments(abc, std::vector<TokenSpan>{{10, 0, 3}}, 25.0); }),
            ErrorCode::InvalidSpans);
  const std::vector<CharAlignment> backwards{{"a", 50, 40}};
  EXPECT_EQ(code_of([&] { aggregate_alignments(backwards, std::vector<TokenSpan>{{10, 0, 0}}, 25.0); }),
            ErrorCode::InvalidAlignment);
}

TEST(Aggregate, FrameConversionFloors) {
  EXPECT_EQ(ms_to_frame(39, 25.0), 0);
  EXPECT_EQ(ms_to_frame(40, 25.0), 1);
  EXPECT_EQ(ms_to_frame(1000, 25.0), 25);
}

TEST(Corpus, Deterministic) {
  CorpusConfig cfg;
  cfg.num_utterances = 20;
  std::ostringstream a, b;
  write_corpus(a, gen_synthetic_corpus(cfg));
  write_corpus(b, gen_synthetic_corpus(cfg));
  EXPECT_EQ(a.str(), b.str());
  cfg.seed = 8;
  std::ostringstream c;
  write_corpus(c, gen_synthetic_corpus(cfg));
  EXPECT_NE(a.str(), c.str());
}

TEST(Corpus, ZeroNoiseFramesAreCodebookRows) {
  CorpusConfig cfg;
  cfg.num_utterances = 10;
  cfg.noise_std = 0.0;
  const auto book = make_codebook(cfg.vocab_size, cfg.frame_dim, cfg.seed);
  for (const auto& u : gen_synthetic_corpus(cfg)) {
    for (const auto& a : u.alignments)
      for (auto f = a.start_frame; f <= a.end_frame; ++f) {
        const auto got = u.frames.row(static_cast<std::size_t>(f));
        const auto want = book.row(static_cast<std::size_t>(a.token_id));
        ASSERT_TRUE(std::equal(got.begin(), got.end(), want.begin()));
      }
  }
}

TEST(Corpus, DefaultShape) {
  CorpusConfig cfg;
  const auto corpus = gen_synthetic_corpus(cfg);
  ASSERT_EQ(corpus.size(), 200u);
  for (const auto& u : corpus) {
    EXPECT_GE(u.tokens.size(), 5u);
    EXPECT_LE(u.tokens.size(), 20u);
    ASSERT_EQ(u.alignments.size(), u.tokens.size());
    for (std::size_t i = 0; i < u.tokens.size(); ++i) {
      EXPECT_EQ(u.alignments[i].token_id, u.tokens[i]);
      EXPECT_GE(u.tokens[i], 3);
      EXPECT_LT(u.tokens[i], 64);
      EXPECT_LE(u.alignments[i].start_frame, u.alignments[i].end_frame);
      if (i > 0) {
        EXPECT_GT(u.alignments[i].start_frame, u.alignments[i - 1].end_frame);
      }
    }
    EXPECT_LT(static_cast<std::size_t>(u.alignments.back().end_frame), u.num_frames());
    EXPECT_EQ(u.frames.cols, cfg.frame_dim);
  }
}

TEST(Corpus, InvalidConfig) {
  CorpusConfig cfg;
  cfg.vocab_size = 3;
  EXPECT_EQ(code_of([&] { gen_synthetic_corpus(cfg); }), ErrorCode::InvalidArgument);
  cfg = {};
  cfg.min_tokens = 9;
  cfg.max_tokens = 2;
  EXPECT_EQ(code_of([&] { gen_synthetic_corpus(cfg); }), ErrorCode::InvalidArgument);
}

TEST(Corpus, JsonLinesRoundTrip) {
  CorpusConfig cfg;
  cfg.num_utterances = 15;
  const auto corpus = gen_synthetic_corpus(cfg);
  std::stringstream ss;
  write_corpus(ss, corpus);
  const auto back = read_corpus(ss);
  ASSERT_EQ(back.size(), corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(back[i].id, corpus[i].id);
    EXPECT_EQ(back[i].tokens, corpus[i].tokens);
    EXPECT_EQ(back[i].alignments, corpus[i].alignments);
    EXPECT_EQ(back[i].frames, corpus[i].frames);
  }
}

TEST(Corpus, LazyFramesRegenerate) {
  CorpusConfig cfg;
  cfg.num_utterances = 6;
  const auto corpus = gen_synthetic_corpus(cfg);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto j = to_json_lazy(corpus[i], cfg, i);
    ASSERT_FALSE(j.contains("frames"));
    EXPECT_EQ(utterance_from_json(j).frames, corpus[i].frames);
  }
}

TEST(Corpus, RejectsBadRecords) {
  std::stringstream bad("{\"id\": \"x\"}\n");
  EXPECT_EQ(code_of([&] { read_corpus(bad); }), ErrorCode::Parse);
  std::stringstream garbage("not json\n");
  EXPECT_EQ(code_of([&] { read_corpus(garbage); }), ErrorCode::Parse);

  auto u = support::abc_utterance();
  u.alignments[1].end_frame = 1;  // ends before its predecessor
  EXPECT_EQ(code_of([&] { validate_utterance(u); }), ErrorCode::InvalidAlignment);
}

TEST(Corpus, CharAlignmentIngest) {
  std::stringstream in(
      "{\"char\": \"h\", \"start_ms\": 0, \"end_ms\": 100}\n"
      "{\"char\": \"i\", \"start_ms\": 100, \"end_ms\": 240}\n");
  const auto chars = read_char_alignments(in);
  ASSERT_EQ(chars.size(), 2u);
  EXPECT_EQ(chars[1].ch, "i");
  EXPECT_EQ(chars[1].end_ms, 240);
}
