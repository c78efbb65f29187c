#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "uniasr/corpus.hpp"
#include "uniasr/engine.hpp"
#include "uniasr/layout.hpp"
#include "uniasr/metrics.hpp"
#include "uniasr/model.hpp"

namespace uniasr {

/// Model to decode one utterance with, given the layout the strategy follows.
/// Shared models ignore both arguments; oracles are built per utterance.
using ModelProvider = std::function<std::shared_ptr<const LanguageModel>(const Utterance&, Paradigm)>;

inline ModelProvider shared_model(std::shared_ptr<const LanguageModel> model) {
  return [model = std::move(model)](const Utterance&, Paradigm) { return model; };
}

struct DecodeResult {
  std::string id;
  std::vector<TokenId> reference;
  std::vector<TokenId> hypothesis;
  std::vector<EmissionRecord> records;
  SessionStats stats;
  ErrorCounts errors;
  LatencyReport latency;
};

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). The first exception thrown is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  const auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

inline DecodeResult decode_utterance(const LanguageModel& model, const StrategyConfig& strategy,
                                     const ChunkingConfig& layout, const Utterance& utt, double fps,
                                     const SpecialTokens& sp = {}) {
  const auto session = decode_stream(model, strategy, layout, utt, sp);
  DecodeResult r;
  r.id = utt.id;
  r.reference = utt.tokens;
  r.hypothesis = session.hypothesis();
  r.records = session.records();
  r.stats = session.stats();
  r.errors = edit_distance(r.reference, r.hypothesis);
  const double chunk_ms = static_cast<double>(layout.chunk_frames) * 1000.0 / fps;
  r.latency = emission_latency(r.records, utt.alignments, chunk_ms, fps);
  return r;
}

/// Decodes every utterance in parallel; results come back sorted by id.
inline std::vector<DecodeResult> decode_corpus(const std::vector<Utterance>& corpus, const ModelProvider& models,
                                               const StrategyConfig& strategy, const ChunkingConfig& layout,
                                               double fps, const SpecialTokens& sp = {}, std::size_t threads = 0) {
  std::vector<DecodeResult> out(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t i) {
    const auto model = models(corpus[i], strategy.layout());
    out[i] = decode_utterance(*model, strategy, layout, corpus[i], fps, sp);
  });
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

inline nlohmann::json to_json(const EmissionRecord& r) {
  nlohmann::json j{{"token", r.token},
                   {"emit_chunk", r.emit_chunk},
                   {"finalize_chunk", r.finalize_chunk},
                   {"provisional", r.provisional}};
  j["retracted_value"] = r.retracted_value ? nlohmann::json(*r.retracted_value) : nlohmann::json(nullptr);
  if (r.dropped) j["dropped"] = true;
  return j;
}

inline nlohmann::json to_json(const SessionStats& s) {
  return {{"forward_positions", s.forward_positions},
          {"cache_reused_positions", s.cache_reused_positions},
          {"rollback_count", s.rollback_count},
          {"rollback_positions", s.rollback_positions},
          {"turns", s.turns},
          {"early_eos", s.early_eos}};
}

inline nlohmann::json to_json(const ErrorCounts& e) {
  return {{"substitutions", e.substitutions}, {"deletions", e.deletions}, {"insertions", e.insertions},
          {"ref_len", e.ref_len}};
}

inline nlohmann::json to_json(const DecodeResult& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["reference"] = r.reference;
  j["hypothesis"] = r.hypothesis;
  auto& recs = j["emissions"] = nlohmann::json::array();
  for (const auto& e : r.records) recs.push_back(to_json(e));
  j["stats"] = to_json(r.stats);
  j["errors"] = to_json(r.errors);
  j["latency"] = {{"mean_emission_ms", r.latency.mean_emission_ms},
                  {"mean_finalization_ms", r.latency.mean_finalization_ms},
                  {"max_spike_ms", r.latency.max_spike_ms}};
  return j;
}

/// Pooled totals over a decode run.
struct RunTotals {
  ErrorCounts errors;
  SessionStats stats;
  double mean_emission_ms = 0.0;
  double mean_finalization_ms = 0.0;
  double max_spike_ms = 0.0;
  std::size_t tokens_timed = 0;
};

inline RunTotals totals(const std::vector<DecodeResult>& results) {
  RunTotals t;
  double emit_sum = 0.0, fin_sum = 0.0;
  for (const auto& r : results) {
    t.errors += r.errors;
    t.stats.forward_positions += r.stats.forward_positions;
    t.stats.cache_reused_positions += r.stats.cache_reused_positions;
    t.stats.rollback_count += r.stats.rollback_count;
    t.stats.rollback_positions += r.stats.rollback_positions;
    t.stats.turns += r.stats.turns;
    t.stats.early_eos = t.stats.early_eos || r.stats.early_eos;
    for (std::size_t i = 0; i < r.latency.emission_ms.size(); ++i) {
      emit_sum += r.latency.emission_ms[i];
      fin_sum += r.latency.finalization_ms[i];
    }
    t.tokens_timed += r.latency.emission_ms.size();
    t.max_spike_ms = std::max(t.max_spike_ms, r.latency.max_spike_ms);
  }
  if (t.tokens_timed > 0) {
    t.mean_emission_ms = emit_sum / static_cast<double>(t.tokens_timed);
    t.mean_finalization_ms = fin_sum / static_cast<double>(t.tokens_timed);
  }
  return t;
}

}  // namespace uniasr
