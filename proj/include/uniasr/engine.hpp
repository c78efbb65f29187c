#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "uniasr/corpus.hpp"
#include "uniasr/error.hpp"
#include "uniasr/kv_cache.hpp"
#include "uniasr/layout.hpp"
#include "uniasr/model.hpp"
#include "uniasr/tokens.hpp"

namespace uniasr {

enum class StrategyKind : std::uint8_t { SsGreedy, SsBeam, CsFallbackGreedy, CsFallbackBeam, NsRedecode };
enum class CommitPolicy : std::uint8_t { HoldN, LocalAgreement, WaitK };

struct StrategyConfig {
  StrategyKind kind = StrategyKind::SsGreedy;
  std::size_t beam_width = 1;
  CommitPolicy policy = CommitPolicy::HoldN;
  std::size_t policy_param = 0;  // n for hold-n, k for wait-k
  std::size_t chunk_frames = 25;
  std::size_t flush_budget = 32;  // extra decode steps allowed once the stream has ended
  bool audit = false;             // checksum sealed cache rows around every cache operation

  static StrategyConfig ss_greedy(std::size_t chunk_frames) { return {StrategyKind::SsGreedy, 1, {}, 0, chunk_frames}; }
  static StrategyConfig ss_beam(std::size_t width, std::size_t chunk_frames) {
    return {StrategyKind::SsBeam, width, {}, 0, chunk_frames};
  }
  static StrategyConfig cs_fallback_greedy(std::size_t chunk_frames) {
    return {StrategyKind::CsFallbackGreedy, 1, {}, 0, chunk_frames};
  }
  static StrategyConfig cs_fallback_beam(std::size_t width, std::size_t chunk_frames) {
    return {StrategyKind::CsFallbackBeam, width, {}, 0, chunk_frames};
  }
  static StrategyConfig ns_redecode(CommitPolicy policy, std::size_t param, std::size_t chunk_frames) {
    return {StrategyKind::NsRedecode, 1, policy, param, chunk_frames};
  }

  bool is_ss() const { return kind == StrategyKind::SsGreedy || kind == StrategyKind::SsBeam; }
  bool is_cs() const { return kind == StrategyKind::CsFallbackGreedy || kind == StrategyKind::CsFallbackBeam; }
  bool is_ns() const { return kind == StrategyKind::NsRedecode; }
  std::size_t width() const {
    return kind == StrategyKind::SsBeam || kind == StrategyKind::CsFallbackBeam ? beam_width : 1;
  }
  /// The training layout whose turn structure this strategy decodes.
  Paradigm layout() const { return is_ss() ? Paradigm::SS : is_cs() ? Paradigm::CS : Paradigm::NS; }

  void validate() const {
    if (beam_width == 0) throw Error(ErrorCode::InvalidArgument, "beam width must be >= 1");
    if (chunk_frames == 0) throw Error(ErrorCode::InvalidArgument, "chunk_frames must be >= 1");
  }

  /// Short report name: greedy, greedy-fallback, beam3, beam3-fallback, hold-2, local-agreement, wait-1.
  std::string name() const {
    switch (kind) {
      case StrategyKind::SsGreedy: return "greedy";
      case StrategyKind::SsBeam: return "beam" + std::to_string(beam_width);
      case StrategyKind::CsFallbackGreedy: return "greedy-fallback";
      case StrategyKind::CsFallbackBeam: return "beam" + std::to_string(beam_width) + "-fallback";
      case StrategyKind::NsRedecode:
        switch (policy) {
          case CommitPolicy::HoldN: return "hold-" + std::to_string(policy_param);
          case CommitPolicy::LocalAgreement: return "local-agreement";
          case CommitPolicy::WaitK: return "wait-" + std::to_string(policy_param);
        }
    }
    return "?";
  }
};

/// Inverse of StrategyConfig::name.
inline StrategyConfig parse_strategy(std::string_view name, std::size_t chunk_frames) {
  const auto number = [&](std::string_view digits) {
    std::size_t v = 0;
    const auto* end = digits.data() + digits.size();
    const auto [p, ec] = std::from_chars(digits.data(), end, v);
    if (ec != std::errc() || p != end || digits.empty())
      throw Error(ErrorCode::InvalidArgument, "unknown strategy '" + std::string(name) + "'");
    return v;
  };
  constexpr std::string_view fb = "-fallback";
  const bool fallback = name.size() > fb.size() && name.substr(name.size() - fb.size()) == fb;
  const auto base = fallback ? name.substr(0, name.size() - fb.size()) : name;
  StrategyConfig s;
  if (base == "greedy") {
    s = fallback ? StrategyConfig::cs_fallback_greedy(chunk_frames) : StrategyConfig::ss_greedy(chunk_frames);
  } else if (base.starts_with("beam")) {
    const auto w = number(base.substr(4));
    s = fallback ? StrategyConfig::cs_fallback_beam(w, chunk_frames) : StrategyConfig::ss_beam(w, chunk_frames);
  } else if (!fallback && name == "local-agreement") {
    s = StrategyConfig::ns_redecode(CommitPolicy::LocalAgreement, 0, chunk_frames);
  } else if (!fallback && name.starts_with("hold-")) {
    s = StrategyConfig::ns_redecode(CommitPolicy::HoldN, number(name.substr(5)), chunk_frames);
  } else if (!fallback && name.starts_with("wait-")) {
    s = StrategyConfig::ns_redecode(CommitPolicy::WaitK, number(name.substr(5)), chunk_frames);
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown strategy '" + std::string(name) + "'");
  }
  s.validate();
  return s;
}

struct EmissionRecord {
  TokenId token = 0;
  std::int64_t emit_chunk = 0;
  std::int64_t finalize_chunk = -1;  // -1 while still provisional
  bool provisional = false;          // was shown before it became final
  std::optional<TokenId> retracted_value;
  bool dropped = false;  // a provisional token the re-decode removed altogether

  friend bool operator==(const EmissionRecord&, const EmissionRecord&) = default;
};

struct SessionStats {
  std::uint64_t forward_positions = 0;
  std::uint64_t cache_reused_positions = 0;  // cache rows already present at each forward call
  std::uint64_t rollback_count = 0;
  std::uint64_t rollback_positions = 0;
  std::uint64_t turns = 0;
  bool early_eos = false;  // eos decoded before the stream ended

  friend bool operator==(const SessionStats&, const SessionStats&) = default;
};

/// What a decode turn starts from. Handed to DecodeHooks::on_turn.
struct TurnContext {
  const KVCache& cache;
  std::span<const double> logits;
  std::size_t budget;
  std::size_t width;
  std::size_t chunk;
};

struct DecodeHooks {
  // Every logits row a decode decision is taken from, with the cache that produced it.
  std::function<void(const KVCache&, std::span<const double>)> on_decode_step;
  std::function<void(const TurnContext&)> on_turn;
  std::function<void(std::size_t removed, std::size_t boundary)> on_rollback;
};

/// Argmax over the vocabulary with sos excluded; ties go to the smaller id.
inline TokenId best_token(std::span<const double> logits, const SpecialTokens& sp) {
  std::optional<std::size_t> best;
  for (std::size_t v = 0; v < logits.size(); ++v) {
    if (static_cast<TokenId>(v) == sp.sos) continue;
    if (!best || logits[v] > logits[*best]) best = v;
  }
  return static_cast<TokenId>(best.value_or(0));
}

struct BeamResult {
  std::vector<TokenId> tokens;
  std::optional<TokenId> stop;      // pad or eos when the hypothesis ended on one
  double score = 0.0;               // summed log-probabilities, stop token included
  double normalized = 0.0;          // score / (tokens + stop)
  std::vector<double> last_logits;  // prediction after the last fed token
};

namespace detail {

struct Hypothesis {
  std::vector<TokenId> tokens;
  std::optional<TokenId> stop;
  double score = 0.0;
  KVSuffix suffix;
  std::vector<double> logits;
  bool greedy = false;
  bool done = false;

  std::vector<TokenId> sequence() const {
    auto s = tokens;
    if (stop) s.push_back(*stop);
    return s;
  }
  double normalized() const {
    const auto len = tokens.size() + (stop ? 1 : 0);
    return len == 0 ? 0.0 : score / static_cast<double>(len);
  }
};

}  // namespace detail

/// Length-normalized beam search over one turn. The cache is positioned at the
/// turn's prefill boundary and `logits` predict the first slot. Candidates are
/// ranked by summed log-probability, with the greedy lineage always kept on the
/// beam; the final pick maximizes score per emitted symbol. Ties prefer the
/// lexicographically smaller sequence. On return the cache holds the winner.
inline BeamResult beam_search(const LanguageModel& model, KVCache& cache, std::span<const double> logits,
                              std::size_t budget, std::size_t width, const SpecialTokens& sp,
                              SessionStats* stats = nullptr, const DecodeHooks* hooks = nullptr) {
  if (width == 0) throw Error(ErrorCode::InvalidArgument, "beam width must be >= 1");
  const auto boundary = cache.size();
  const auto restore = [&](const detail::Hypothesis& h) {
    cache.rollback(boundary);
    cache.append(h.suffix);
  };

  std::vector<detail::Hypothesis> beam(1);
  beam[0].suffix = cache.suffix(boundary);
  beam[0].logits.assign(logits.begin(), logits.end());
  beam[0].greedy = true;
  beam[0].done = budget == 0;

  struct Candidate {
    std::size_t parent;
    std::optional<TokenId> token;  // empty: a finished hypothesis carried as is
    double score;
    std::vector<TokenId> seq;
    bool greedy;
  };
  const auto better = [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.seq < b.seq;
  };

  while (std::any_of(beam.begin(), beam.end(), [](const auto& h) { return !h.done; })) {
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < beam.size(); ++i) {
      const auto& h = beam[i];
      if (h.done) {
        cands.push_back({i, std::nullopt, h.score, h.sequence(), h.greedy});
        continue;
      }
      if (hooks && hooks->on_decode_step) {
        restore(h);
        hooks->on_decode_step(cache, h.logits);
      }
      const auto lp = log_softmax(h.logits);
      const auto best = best_token(h.logits, sp);
      for (std::size_t v = 0; v < lp.size(); ++v) {
        const auto t = static_cast<TokenId>(v);
        if (t == sp.sos) continue;
        auto seq = h.tokens;
        seq.push_back(t);
        cands.push_back({i, t, h.score + lp[v], std::move(seq), h.greedy && t == best});
      }
    }
    std::sort(cands.begin(), cands.end(), better);
    const auto keep = std::min(width, cands.size());
    const auto greedy_it = std::find_if(cands.begin(), cands.end(), [](const auto& c) { return c.greedy; });
    if (greedy_it != cands.end() && greedy_it - cands.begin() >= static_cast<std::ptrdiff_t>(keep))
      std::swap(cands[keep - 1], *greedy_it);

    std::vector<detail::Hypothesis> next;
    for (std::size_t c = 0; c < keep; ++c) {
      const auto& cand = cands[c];
      const auto& parent = beam[cand.parent];
      if (!cand.token) {
        next.push_back(parent);
        continue;
      }
      detail::Hypothesis h;
      h.tokens = parent.tokens;
      h.score = cand.score;
      h.greedy = cand.greedy;
      const auto t = *cand.token;
      if (t == sp.pad || t == sp.eos) {
        h.stop = t;
        h.suffix = parent.suffix;
        h.logits = parent.logits;
        h.done = true;
      } else {
        restore(parent);
        const ModelInput in{Position::text(t), {}};
        if (stats) {
          stats->forward_positions += 1;
          stats->cache_reused_positions += cache.size();
        }
        const auto out = model.forward(std::span(&in, 1), cache);
        h.tokens.push_back(t);
        h.suffix = cache.suffix(boundary);
        h.logits.assign(out.last().begin(), out.last().end());
        h.done = h.tokens.size() >= budget;
      }
      next.push_back(std::move(h));
    }
    beam = std::move(next);
  }

  const auto* winner = &beam.front();
  for (const auto& h : beam) {
    const auto a = h.normalized(), b = winner->normalized();
    if (a > b || (a == b && h.sequence() < winner->sequence())) winner = &h;
  }
  restore(*winner);
  return {winner->tokens, winner->stop, winner->score, winner->normalized(), winner->logits};
}

/// Per-utterance streaming decoder. Each push_chunk is one dialogue turn:
/// prefill, then decode at most ceil(n / r) text slots.
///
/// SS strategies prefill the previous turn's unused slots as pad, then the
/// chunk's speech, and emit final tokens. CS strategies first rewind the cache
/// to the previous turn's prefill boundary and re-prefill that turn's slots
/// with its last token masked to pad; the turn's last token is provisional
/// until the next turn regenerates it. NS re-decode baselines run a fresh
/// non-streaming decode over all audio so far and commit a prefix.
class StreamingSession {
 public:
  StreamingSession(const LanguageModel& model, StrategyConfig strategy, ChunkingConfig layout,
                   SpecialTokens sp = {})
      : model_(&model), strategy_(strategy), layout_(layout), sp_(sp), cache_(model.new_cache()) {
    strategy_.validate();
    layout_.validate();
    sp_.validate();
    if (strategy_.chunk_frames != layout_.chunk_frames)
      throw Error(ErrorCode::ConfigMismatch, "strategy chunk_frames " + std::to_string(strategy_.chunk_frames) +
                                                 " differs from layout chunk_frames " +
                                                 std::to_string(layout_.chunk_frames));
  }

  void set_hooks(DecodeHooks hooks) { hooks_ = std::move(hooks); }

  const StrategyConfig& strategy() const { return strategy_; }
  bool finished() const { return finished_; }
  std::size_t chunk_index() const { return chunk_index_; }
  const KVCache& cache() const { return cache_; }
  KVCache& cache_for_testing() { return cache_; }
  const SessionStats& stats() const { return stats_; }
  const std::vector<EmissionRecord>& records() const { return records_; }

  /// Feeds one chunk of frames and returns every record created or resolved by it.
  std::vector<EmissionRecord> push_chunk(const FrameMatrix& frames, bool is_last) {
    if (finished_) throw Error(ErrorCode::PushAfterFinish, "push_chunk after the final chunk");
    if (frames.rows > layout_.chunk_frames)
      throw Error(ErrorCode::InvalidArgument, "chunk of " + std::to_string(frames.rows) + " frames exceeds " +
                                                  std::to_string(layout_.chunk_frames));
    verify_immutability();
    const auto begin = frames_received_;
    if (frames.rows > 0) {
      if (frame_dim_ == 0) frame_dim_ = frames.cols;
      if (frames.cols != frame_dim_) throw Error(ErrorCode::DimensionMismatch, "frame width changed mid-stream");
      frames_.insert(frames_.end(), frames.data.begin(), frames.data.end());
      frames_received_ += frames.rows;
    }
    touched_.clear();
    const auto k = chunk_index_;
    if (strategy_.is_ss())
      push_ss(begin, frames.rows, is_last, k);
    else if (strategy_.is_cs())
      push_cs(begin, frames.rows, is_last, k);
    else
      push_ns(is_last, k);
    if (pending_) records_[*pending_].provisional = true;
    ++chunk_index_;
    finished_ = is_last;
    verify_immutability();

    std::sort(touched_.begin(), touched_.end());
    touched_.erase(std::unique(touched_.begin(), touched_.end()), touched_.end());
    std::vector<EmissionRecord> out;
    for (auto i : touched_) out.push_back(records_[i]);
    return out;
  }

  /// Discards the previous turn's decoded rows and queues its slots, last token
  /// masked to pad, for re-prefill with the next chunk.
  void fallback_rewind() {
    if (!strategy_.is_cs()) throw Error(ErrorCode::InvalidArgument, "fallback_rewind needs a fallback strategy");
    if (cs_turns_ == 0 || cache_.marks().empty())
      throw Error(ErrorCode::RollbackPastChunkBoundary, "no previous turn to roll back");
    if (revised_pending_) return;
    verify_immutability();
    const auto boundary = cache_.sealed_length();
    const auto removed = cache_.rollback(boundary);
    stats_.rollback_count += 1;
    stats_.rollback_positions += removed;
    if (hooks_.on_rollback) hooks_.on_rollback(removed, boundary);
    revised_ = prev_tokens_;
    if (!revised_.empty()) revised_.back() = sp_.pad;
    revised_.resize(std::max(revised_.size(), prev_slots_), sp_.pad);
    revised_pending_ = true;
    verify_immutability();
  }

  /// Throws ImmutabilityViolation if any row below the last prefill boundary
  /// changed since it was sealed. Only active with strategy.audit.
  void verify_immutability() const {
    if (!strategy_.audit || sealed_rows_ == 0) return;
    if (cache_.size() < sealed_rows_ || cache_.checksum(sealed_rows_) != sealed_sum_)
      throw Error(ErrorCode::ImmutabilityViolation,
                  "sealed cache rows [0, " + std::to_string(sealed_rows_) + ") were modified");
  }

  SessionStats collect_stats() const { return stats_; }

  /// Current transcript: every record still standing, in order.
  std::vector<TokenId> hypothesis() const {
    std::vector<TokenId> out;
    for (const auto& r : records_)
      if (!r.dropped) out.push_back(r.token);
    return out;
  }

  /// The interleaved position sequence this session has committed to, with the
  /// final turn's unused slots filled by pad.
  std::vector<Position> timeline() const {
    auto out = cache_.positions();
    out.insert(out.end(), pending_pads_, Position::text(sp_.pad));
    return out;
  }

 private:
  std::vector<ModelInput> make_inputs(const std::vector<TokenId>& text, std::size_t frame_begin,
                                      std::size_t frame_count) const {
    std::vector<ModelInput> in;
    in.reserve(text.size() + frame_count);
    for (auto t : text) in.push_back({Position::text(t), {}});
    for (std::size_t f = frame_begin; f < frame_begin + frame_count; ++f)
      in.push_back({Position::speech(static_cast<std::int32_t>(f)),
                    std::span<const double>(frames_.data() + f * frame_dim_, frame_dim_)});
    return in;
  }

  std::vector<double> prefill(const std::vector<ModelInput>& inputs) {
    stats_.forward_positions += inputs.size();
    stats_.cache_reused_positions += cache_.size();
    const auto out = model_->forward(inputs, cache_);
    return {out.last().begin(), out.last().end()};
  }

  void seal() {
    cache_.mark();
    sealed_rows_ = cache_.sealed_length();
    if (strategy_.audit) sealed_sum_ = cache_.checksum(sealed_rows_);
  }

  BeamResult decode_turn(std::span<const double> logits, std::size_t budget, std::size_t chunk) {
    stats_.turns += 1;
    if (hooks_.on_turn) hooks_.on_turn({cache_, logits, budget, strategy_.width(), chunk});
    return beam_search(*model_, cache_, logits, budget, strategy_.width(), sp_, &stats_, &hooks_);
  }

  std::size_t add_record(TokenId t, std::size_t chunk) {
    const auto c = static_cast<std::int64_t>(chunk);
    records_.push_back({t, c, c, false, std::nullopt, false});
    touched_.push_back(records_.size() - 1);
    return records_.size() - 1;
  }

  void push_ss(std::size_t begin, std::size_t n, bool is_last, std::size_t k) {
    if (early_eos_ || (n == 0 && !is_last)) return;
    const auto slots = layout_.slots_for(n);
    const auto inputs = make_inputs(std::vector<TokenId>(pending_pads_, sp_.pad), begin, n);
    std::vector<double> logits;
    if (!inputs.empty()) {
      logits = prefill(inputs);
    } else if (!last_logits_.empty()) {
      logits = last_logits_;
    } else {
      return;  // nothing heard at all
    }
    pending_pads_ = 0;
    seal();
    const auto res = decode_turn(logits, is_last ? slots + strategy_.flush_budget : slots, k);
    last_logits_ = res.last_logits;
    for (auto t : res.tokens) add_record(t, k);
    if (res.stop == sp_.eos && !is_last) {
      early_eos_ = true;
      stats_.early_eos = true;
    }
    pending_pads_ = slots > res.tokens.size() ? slots - res.tokens.size() : 0;
  }

  /// The first token of a CS turn regenerates the pending provisional token.
  void apply_cs_tokens(const std::vector<TokenId>& tokens, std::size_t k) {
    std::size_t i = 0;
    if (pending_ && records_[*pending_].emit_chunk == static_cast<std::int64_t>(k)) {
      // Held and regenerated within one push: the caller never saw it, so
      // the re-decode replaces it outright instead of retracting it.
      const auto idx = *pending_;
      pending_.reset();
      if (tokens.empty()) {
        records_.erase(records_.begin() + static_cast<std::ptrdiff_t>(idx));
        std::erase(touched_, idx);
      } else {
        records_[idx].token = tokens[0];
        records_[idx].finalize_chunk = static_cast<std::int64_t>(k);
        last_record_ = idx;
        i = 1;
      }
    }
    if (pending_) {
      auto& r = records_[*pending_];
      if (tokens.empty()) {
        r.retracted_value = r.token;
        r.dropped = true;
      } else {
        if (tokens[0] != r.token) {
          r.retracted_value = r.token;
          r.token = tokens[0];
        }
        i = 1;
      }
      r.finalize_chunk = static_cast<std::int64_t>(k);
      touched_.push_back(*pending_);
      last_record_ = *pending_;
      pending_.reset();
    }
    for (; i < tokens.size(); ++i) last_record_ = add_record(tokens[i], k);
  }

  void hold_last(const std::vector<TokenId>& tokens) {
    if (tokens.empty()) return;
    pending_ = last_record_;
    records_[*pending_].finalize_chunk = -1;
  }

  void push_cs(std::size_t begin, std::size_t n, bool is_last, std::size_t k) {
    if (n == 0) {
      if (is_last && cs_turns_ > 0) flush_turn(k);
      return;
    }
    const auto slots = layout_.slots_for(n);
    if (cs_turns_ > 0) fallback_rewind();
    auto logits = prefill(make_inputs(take_revised(), begin, n));
    seal();
    const auto res = decode_turn(logits, slots, k);
    ++cs_turns_;
    apply_cs_tokens(res.tokens, k);
    prev_tokens_ = res.tokens;
    prev_slots_ = slots;
    last_logits_ = res.last_logits;
    if (!is_last) {
      hold_last(res.tokens);
      return;
    }
    const bool terminal = res.stop.has_value() || res.tokens.empty() || best_token(res.last_logits, sp_) == sp_.pad;
    if (terminal) {
      pending_pads_ = slots > res.tokens.size() ? slots - res.tokens.size() : 0;
      return;
    }
    hold_last(res.tokens);
    flush_turn(k);
  }

  /// Speech-less final turn: regenerate the provisional token and drain until pad.
  void flush_turn(std::size_t k) {
    fallback_rewind();
    const auto text = take_revised();
    if (text.empty()) return;
    auto logits = prefill(make_inputs(text, 0, 0));
    seal();
    const auto res = decode_turn(logits, strategy_.flush_budget, k);
    ++cs_turns_;
    apply_cs_tokens(res.tokens, k);
    prev_tokens_ = res.tokens;
    prev_slots_ = res.tokens.size();
    last_logits_ = res.last_logits;
    pending_pads_ = 0;
  }

  std::vector<TokenId> take_revised() {
    revised_pending_ = false;
    return std::exchange(revised_, {});
  }

  void push_ns(bool is_last, std::size_t k) {
    cache_ = model_->new_cache();
    sealed_rows_ = 0;
    std::vector<TokenId> hyp;
    if (frames_received_ > 0) {
      auto inputs = make_inputs({}, 0, frames_received_);
      inputs.push_back({Position::text(sp_.sos), {}});
      const auto logits = prefill(inputs);
      hyp = decode_turn(logits, frames_received_, k).tokens;
    }
    const auto count = std::min(hyp.size(), commit_count(hyp, k, is_last));
    for (auto i = committed_; i < count; ++i) add_record(hyp[i], k);
    committed_ = std::max(committed_, count);
    prev_hyp_ = std::move(hyp);
  }

  std::size_t commit_count(const std::vector<TokenId>& hyp, std::size_t k, bool is_last) const {
    if (is_last) return hyp.size();
    const auto n = strategy_.policy_param;
    switch (strategy_.policy) {
      case CommitPolicy::HoldN: return hyp.size() > n ? hyp.size() - n : 0;
      case CommitPolicy::LocalAgreement: {
        std::size_t i = 0;
        while (i < hyp.size() && i < prev_hyp_.size() && hyp[i] == prev_hyp_[i]) ++i;
        return i;
      }
      case CommitPolicy::WaitK: {
        const auto chunks = k + 1;
        return chunks > n ? (chunks - n) * layout_.slots_for(layout_.chunk_frames) : 0;
      }
    }
    return 0;
  }

  const LanguageModel* model_;
  StrategyConfig strategy_;
  ChunkingConfig layout_;
  SpecialTokens sp_;
  DecodeHooks hooks_;
  KVCache cache_;
  SessionStats stats_;

  std::vector<double> frames_;
  std::size_t frame_dim_ = 0;
  std::size_t frames_received_ = 0;
  std::size_t chunk_index_ = 0;
  bool finished_ = false;

  std::vector<EmissionRecord> records_;
  std::vector<std::size_t> touched_;
  std::vector<double> last_logits_;
  std::size_t pending_pads_ = 0;
  std::uint64_t sealed_sum_ = 0;
  std::size_t sealed_rows_ = 0;

  bool early_eos_ = false;  // SS

  std::size_t cs_turns_ = 0;  // CS
  std::optional<std::size_t> pending_;
  std::size_t last_record_ = 0;
  std::vector<TokenId> prev_tokens_;
  std::size_t prev_slots_ = 0;
  std::vector<TokenId> revised_;
  bool revised_pending_ = false;

  std::size_t committed_ = 0;  // NS re-decode
  std::vector<TokenId> prev_hyp_;
};

inline StreamingSession session_new(const LanguageModel& model, const StrategyConfig& strategy,
                                    const ChunkingConfig& layout, const SpecialTokens& sp = {}) {
  return StreamingSession(model, strategy, layout, sp);
}

/// Splits an utterance's frames into chunks and pushes them all.
inline StreamingSession decode_stream(const LanguageModel& model, const StrategyConfig& strategy,
                                      const ChunkingConfig& layout, const Utterance& utt,
                                      const SpecialTokens& sp = {}, DecodeHooks hooks = {}) {
  auto session = session_new(model, strategy, layout, sp);
  session.set_hooks(std::move(hooks));
  const auto total = utt.num_frames();
  if (total == 0) {
    session.push_chunk(FrameMatrix(0, utt.frames.cols), true);
    return session;
  }
  for (std::size_t b = 0; b < total; b += layout.chunk_frames) {
    const auto e = std::min(total, b + layout.chunk_frames);
    session.push_chunk(utt.frames.slice(b, e - b), e == total);
  }
  return session;
}

}  // namespace uniasr
