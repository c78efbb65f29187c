#include <gtest/gtest.h>

#include <atomic>

#include "support.hpp"
#include "uniasr/harness.hpp"
#include "uniasr/oracles.hpp"
#include "uniasr/toy_transformer.hpp"

using namespace uniasr;

TEST(ParallelFor, VisitsEveryIndexOnce) {
  for (std::size_t threads : {0, 1, 3, 8}) {
    std::vector<std::atomic<int>> hits(97);
    parallel_for(hits.size(), threads, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) ASSERT_EQ(h.load(), 1);
  }
  parallel_for(0, 4, [](std::size_t) { FAIL(); });
}

TEST(ParallelFor, RethrowsWorkerErrors) {
  EXPECT_THROW(parallel_for(50, 4,
                            [](std::size_t i) {
                              if (i == 17) throw Error(ErrorCode::Io, "boom");
                            }),
               Error);
}

TEST(DecodeCorpus, SortedAndThreadIndependent) {
  auto corpus = support::corpus(24, 31);
  std::reverse(corpus.begin(), corpus.end());
  const ChunkingConfig cfg{8, 2};
  const auto model = shared_model(std::make_shared<ToyTransformer>(ModelConfig{}));
  const auto one = decode_corpus(corpus, model, StrategyConfig::cs_fallback_greedy(8), cfg, 25.0, {}, 1);
  const auto four = decode_corpus(corpus, model, StrategyConfig::cs_fallback_greedy(8), cfg, 25.0, {}, 4);
  ASSERT_EQ(one.size(), corpus.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    if (i > 0) {
      EXPECT_LT(one[i - 1].id, one[i].id);
    }
    EXPECT_EQ(one[i].id, four[i].id);
    EXPECT_EQ(one[i].records, four[i].records);
    EXPECT_EQ(one[i].stats, four[i].stats);
    EXPECT_EQ(one[i].errors, edit_distance(one[i].reference, one[i].hypothesis));
  }
}

TEST(DecodeCorpus, OracleProviderPerUtterance) {
  const auto corpus = support::corpus(30, 32);
  const ChunkingConfig cfg{8, 2};
  BoundaryOracleFactory factory{0, 64, cfg, {}, {}};
  const ModelProvider provider = [&](const Utterance& u, Paradigm p) { return factory(u, p); };
  for (const auto& s : {StrategyConfig::ss_greedy(8), StrategyConfig::cs_fallback_beam(3, 8),
                        StrategyConfig::ns_redecode(CommitPolicy::LocalAgreement, 0, 8)}) {
    const auto t = totals(decode_corpus(corpus, provider, s, cfg, 25.0));
    EXPECT_EQ(t.errors.errors(), 0u) << s.name();
    EXPECT_GT(t.tokens_timed, 0u);
  }
}

TEST(DecodeCorpus, HoldNDelaysTailTokens) {
  const auto corpus = support::corpus(40, 33);
  const ChunkingConfig cfg{8, 2};
  BoundaryOracleFactory factory{0, 64, cfg, {}, {}};
  const ModelProvider provider = [&](const Utterance& u, Paradigm p) { return factory(u, p); };
  double prev = -1.0;
  for (std::size_t n : {0, 1, 2, 4}) {
    const auto t = totals(decode_corpus(corpus, provider, StrategyConfig::ns_redecode(CommitPolicy::HoldN, n, 8), cfg, 25.0));
    EXPECT_GT(t.mean_finalization_ms, prev) << n;
    prev = t.mean_finalization_ms;
  }
}

TEST(Json, DecodeResultFields) {
  const auto u = support::abc_utterance();
  const TeacherOracle teacher(build_cs(u, ChunkingConfig{4, 2}), 64);
  const auto r = decode_utterance(teacher, StrategyConfig::cs_fallback_greedy(4), ChunkingConfig{4, 2}, u, 25.0);
  const auto j = to_json(r);
  EXPECT_EQ(j["id"], "u");
  EXPECT_EQ(j["hypothesis"], (std::vector<TokenId>{10, 11, 12}));
  EXPECT_EQ(j["emissions"].size(), 3u);
  EXPECT_EQ(j["emissions"][0]["provisional"], true);
  EXPECT_EQ(j["stats"]["rollback_count"], 2);
  EXPECT_EQ(j["errors"]["substitutions"], 0);
}
