#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "uniasr/corpus.hpp"
#include "uniasr/engine.hpp"
#include "uniasr/error.hpp"
#include "uniasr/harness.hpp"
#include "uniasr/layout.hpp"
#include "uniasr/metrics.hpp"
#include "uniasr/model.hpp"
#include "uniasr/oracles.hpp"
#include "uniasr/rng.hpp"
#include "uniasr/toy_transformer.hpp"

namespace uniasr {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  std::size_t utterances = 200;
  std::size_t model_trials = 10;
  std::uint64_t seed = 7;
  bool inject_cache_fault = false;  // flip one sealed cache byte mid-session; the immutability check must then fail
};

/// Model inputs that reproduce a recorded context, reading frames from `utt`.
inline std::vector<ModelInput> inputs_for(const std::vector<Position>& positions, const Utterance& utt) {
  std::vector<ModelInput> in;
  in.reserve(positions.size());
  for (const auto& p : positions)
    in.push_back({p, p.is_speech() ? utt.frames.row(static_cast<std::size_t>(p.value)) : std::span<const double>{}});
  return in;
}

/// A small random toy configuration: up to 2 layers and width up to 32.
inline ModelConfig random_model_config(std::uint64_t seed, std::size_t frame_dim) {
  Rng rng(derive_seed(seed, "model-config"));
  const auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  ModelConfig cfg;
  cfg.num_layers = pick(0, 2);
  cfg.num_heads = std::size_t{1} << pick(0, 2);
  cfg.embed_dim = cfg.num_heads * (std::size_t{2} << pick(0, 2));
  cfg.ffn_dim = pick(8, 64);
  cfg.vocab_size = pick(8, 64);
  cfg.frame_dim = frame_dim;
  cfg.adapter_hidden = pick(4, 32);
  cfg.seed = seed;
  return cfg;
}

namespace detail {

inline CheckResult check(std::string name, const std::function<std::string()>& body) {
  CheckResult r{std::move(name), true, ""};
  try {
    r.detail = body();
    r.passed = r.detail.empty();
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = e.what();
  }
  return r;
}

inline std::vector<Utterance> verify_corpus(const VerifyOptions& opt, std::size_t vocab) {
  CorpusConfig cfg;
  cfg.num_utterances = opt.utterances;
  cfg.vocab_size = vocab;
  cfg.seed = opt.seed;
  return gen_synthetic_corpus(cfg);
}

}  // namespace detail

/// Library-level invariant suites. Every check passes on a correct build.
inline std::vector<CheckResult> run_verify(const VerifyOptions& opt) {
  std::vector<CheckResult> out;
  const std::vector<std::size_t> chunk_sizes{25, 16, 8};
  const auto corpus = detail::verify_corpus(opt, 64);

  out.push_back(detail::check("cache-equivalence", [&]() -> std::string {
    for (std::size_t trial = 0; trial < opt.model_trials; ++trial) {
      const auto cfg = random_model_config(derive_seed(opt.seed, trial), 8);
      const ToyTransformer model(cfg);
      CorpusConfig cc;
      cc.num_utterances = 1;
      cc.vocab_size = cfg.vocab_size;
      cc.seed = derive_seed(opt.seed, trial);
      const auto utt = gen_synthetic_corpus(cc).front();
      for (const auto& strategy : {StrategyConfig::ss_greedy(8), StrategyConfig::cs_fallback_greedy(8)}) {
        std::string err;
        DecodeHooks hooks;
        hooks.on_decode_step = [&](const KVCache& cache, std::span<const double> logits) {
          auto fresh = model.new_cache();
          const auto full = model.forward(inputs_for(cache.positions(), utt), fresh);
          if (err.empty() && relative_error(logits, full.last()) > 1e-5)
            err = "trial " + std::to_string(trial) + " " + strategy.name() + ": logits diverge at length " +
                  std::to_string(cache.size());
        };
        decode_stream(model, strategy, ChunkingConfig{8, 2}, utt, {}, hooks);
        if (!err.empty()) return err;
      }
    }
    return "";
  }));

  out.push_back(detail::check("round-trip", [&]() -> std::string {
    for (auto n : chunk_sizes) {
      const ChunkingConfig layout{n, 2};
      for (const auto& utt : corpus) {
        for (auto p : {Paradigm::SS, Paradigm::CS}) {
          const auto seq = build_sequence(p, utt, layout);
          const TeacherOracle teacher(seq, 64);
          const auto strategy = p == Paradigm::SS ? StrategyConfig::ss_greedy(n) : StrategyConfig::cs_fallback_greedy(n);
          const auto session = decode_stream(teacher, strategy, layout, utt);
          if (session.timeline() != seq.positions) return utt.id + ": " + strategy.name() + " timeline differs at N=" + std::to_string(n);
          if (session.hypothesis() != utt.tokens) return utt.id + ": " + strategy.name() + " transcript differs";
        }
      }
    }
    return "";
  }));

  out.push_back(detail::check("immutability", [&]() -> std::string {
    std::uint64_t rollbacks = 0;
    ModelConfig cfg;
    cfg.seed = opt.seed;
    const ToyTransformer model(cfg);
    for (auto n : chunk_sizes) {
      const ChunkingConfig layout{n, 2};
      auto strategy = StrategyConfig::cs_fallback_greedy(n);
      strategy.audit = true;
      for (const auto& utt : corpus) {
        auto session = session_new(model, strategy, layout);
        const auto total = utt.num_frames();
        for (std::size_t b = 0; b < total; b += n) {
          const auto e = std::min(total, b + n);
          session.push_chunk(utt.frames.slice(b, e - b), e == total);
          if (opt.inject_cache_fault && b == 0 && e < total) session.cache_for_testing().flip_key_byte_for_testing(0, 0);
        }
        rollbacks += session.stats().rollback_count;
      }
    }
    if (opt.inject_cache_fault) return "injected fault went undetected";
    return rollbacks == 0 ? "no rollbacks exercised" : "";
  }));

  out.push_back(detail::check("beam-width-1-equals-greedy", [&]() -> std::string {
    for (std::size_t trial = 0; trial < opt.model_trials; ++trial) {
      const auto cfg = random_model_config(derive_seed(opt.seed, 1000 + trial), 8);
      const ToyTransformer model(cfg);
      CorpusConfig cc;
      cc.num_utterances = 1;
      cc.vocab_size = cfg.vocab_size;
      cc.seed = derive_seed(opt.seed, 1000 + trial);
      const auto utt = gen_synthetic_corpus(cc).front();
      const ChunkingConfig layout{8, 2};
      const auto greedy = decode_stream(model, StrategyConfig::ss_greedy(8), layout, utt);
      const auto beam = decode_stream(model, StrategyConfig::ss_beam(1, 8), layout, utt);
      if (greedy.records() != beam.records()) return "SS width 1 differs from greedy in trial " + std::to_string(trial);
      const auto cs_greedy = decode_stream(model, StrategyConfig::cs_fallback_greedy(8), layout, utt);
      const auto cs_beam = decode_stream(model, StrategyConfig::cs_fallback_beam(1, 8), layout, utt);
      if (cs_greedy.records() != cs_beam.records()) return "CS width 1 differs from greedy in trial " + std::to_string(trial);
    }
    return "";
  }));

  out.push_back(detail::check("boundary-fallback-recovery", [&]() -> std::string {
    for (auto n : chunk_sizes) {
      const ChunkingConfig layout{n, 2};
      BoundaryOracleFactory oracles{1, 64, layout, {}, {}};
      const ModelProvider provider = [&](const Utterance& u, Paradigm p) { return oracles(u, p); };
      const auto cs = totals(decode_corpus(corpus, provider, StrategyConfig::cs_fallback_greedy(n), layout, 25.0));
      if (cs.errors.errors() != 0) return "fallback left " + std::to_string(cs.errors.errors()) + " errors at N=" + std::to_string(n);
      const auto ss = totals(decode_corpus(corpus, provider, StrategyConfig::ss_greedy(n), layout, 25.0));
      if (ss.errors.errors() == 0) return "boundary oracle produced no SS errors at N=" + std::to_string(n);
    }
    return "";
  }));

  out.push_back(detail::check("layout-structure", [&]() -> std::string {
    const SpecialTokens sp;
    for (auto n : chunk_sizes) {
      const ChunkingConfig layout{n, 2};
      for (const auto& utt : corpus) {
        const auto ss = build_ss(utt, layout);
        const auto cs = build_cs(utt, layout);
        const auto eos = [&](const MixedSequence& s) {
          return std::count(s.targets.begin(), s.targets.end(), std::optional<TokenId>(sp.eos));
        };
        if (eos(ss) != 1) return utt.id + ": SS eos target count " + std::to_string(eos(ss));
        if (eos(cs) != 0) return utt.id + ": CS has an eos target";
        for (const auto& p : cs.positions)
          if (p.is_text() && p.value == sp.eos) return utt.id + ": CS input holds eos";
        const auto segs = detail::plan_segments(utt.alignments, layout, utt.num_frames(), true);
        for (std::size_t s = 0; s < segs.size(); ++s) {
          if (!segs[s].masked_last) continue;
          const auto slot = cs.segments[s].text.begin + segs[s].tokens.size() - 1;
          if (cs.positions[slot] != Position::text(sp.pad)) return utt.id + ": CS carried slot is not pad";
        }
      }
    }
    std::array<std::size_t, 3> counts{};
    for (std::uint64_t step = 0; step < 30000; ++step) ++counts[static_cast<std::size_t>(sample_paradigm(step, true, opt.seed))];
    for (auto c : counts)
      if (c < 9500 || c > 10500) return "paradigm sampler out of balance";
    for (std::uint64_t step = 0; step < 300; ++step)
      if (sample_paradigm(step, false, opt.seed) != Paradigm::NS) return "sampler left NS without chunk attention";
    return "";
  }));

  out.push_back(detail::check("edit-distance-symmetry", [&]() -> std::string {
    Rng rng(derive_seed(opt.seed, "edit-distance"));
    std::uniform_int_distribution<int> len(0, 12), tok(3, 8);
    for (int i = 0; i < 500; ++i) {
      std::vector<TokenId> a(static_cast<std::size_t>(len(rng))), b(static_cast<std::size_t>(len(rng)));
      for (auto& t : a) t = tok(rng);
      for (auto& t : b) t = tok(rng);
      const auto ab = edit_distance(a, b), ba = edit_distance(b, a);
      if (ab.errors() != ba.errors()) return "edit distance is not symmetric";
    }
    return "";
  }));

  return out;
}

}  // namespace uniasr
