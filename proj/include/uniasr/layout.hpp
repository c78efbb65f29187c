#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "uniasr/corpus.hpp"
#include "uniasr/error.hpp"
#include "uniasr/rng.hpp"
#include "uniasr/tokens.hpp"

namespace uniasr {

enum class Paradigm : std::uint8_t { NS, SS, CS };

constexpr std::string_view to_string(Paradigm p) {
  switch (p) {
    case Paradigm::NS: return "NS";
    case Paradigm::SS: return "SS";
    case Paradigm::CS: return "CS";
  }
  return "?";
}

/// Chunk length N in frames and the speech:text ratio r. A chunk of n frames
/// owns ceil(n / r) text slots.
struct ChunkingConfig {
  std::size_t chunk_frames = 25;
  std::size_t speech_text_ratio = 2;

  void validate() const {
    if (chunk_frames == 0) throw Error(ErrorCode::InvalidArgument, "chunk_frames must be >= 1");
    if (speech_text_ratio == 0) throw Error(ErrorCode::InvalidArgument, "speech_text_ratio must be >= 1");
  }

  std::size_t slots_for(std::size_t frames) const { return (frames + speech_text_ratio - 1) / speech_text_ratio; }
};

/// Chunk length in milliseconds to frames, rounding down, at least one frame.
inline std::size_t chunk_ms_to_frames(double chunk_ms, double fps) {
  const auto n = static_cast<std::int64_t>(chunk_ms * fps / 1000.0 + 1e-9);
  return static_cast<std::size_t>(std::max<std::int64_t>(1, n));
}

/// One chunk (or the trailing flush) together with the tokens it carries.
struct Segment {
  std::size_t frame_begin = 0;
  std::size_t frame_end = 0;  // exclusive; equal to frame_begin for the flush
  std::size_t slots = 0;      // text slots; for the flush, the number of tokens
  std::vector<std::size_t> tokens;  // indices into the utterance token list, in slot order
  bool flush = false;
  bool masked_last = false;  // context-aware layout: last token is masked and carried forward

  std::size_t speech_len() const { return frame_end - frame_begin; }
};

namespace detail {

/// Walks the chunks of [0, total_frames). A token becomes due in the first chunk
/// whose end is past its end frame; each chunk takes up to `slots` tokens from
/// the queue and the remainder carries over. With `carry`, the last token taken
/// by every non-terminal segment is masked and pushed back to the queue front.
inline std::vector<Segment> plan_segments(std::span<const TokenAlignment> aligns, const ChunkingConfig& cfg,
                                          std::size_t total_frames, bool carry) {
  cfg.validate();
  if (!aligns.empty() && static_cast<std::size_t>(aligns.back().end_frame) >= total_frames)
    throw Error(ErrorCode::InvalidAlignment, "alignment extends past total_frames");
  std::vector<Segment> out;
  std::deque<std::size_t> queue;
  std::size_t next = 0;
  for (std::size_t begin = 0; begin < total_frames; begin += cfg.chunk_frames) {
    Segment seg;
    seg.frame_begin = begin;
    seg.frame_end = std::min(total_frames, begin + cfg.chunk_frames);
    seg.slots = cfg.slots_for(seg.speech_len());
    while (next < aligns.size() && static_cast<std::size_t>(aligns[next].end_frame) < seg.frame_end)
      queue.push_back(next++);
    while (!queue.empty() && seg.tokens.size() < seg.slots) {
      seg.tokens.push_back(queue.front());
      queue.pop_front();
    }
    const bool last_chunk = seg.frame_end == total_frames;
    const bool terminal = last_chunk && queue.empty();
    if (carry && !terminal && !seg.tokens.empty()) {
      seg.masked_last = true;
      queue.push_front(seg.tokens.back());
    }
    out.push_back(std::move(seg));
  }
  while (next < aligns.size()) queue.push_back(next++);
  if (!queue.empty()) {
    Segment flush;
    flush.frame_begin = flush.frame_end = total_frames;
    flush.flush = true;
    flush.tokens.assign(queue.begin(), queue.end());
    flush.slots = flush.tokens.size();
    out.push_back(std::move(flush));
  }
  return out;
}

}  // namespace detail

/// Standard streaming chunk assignment (no carry).
inline std::vector<Segment> chunk_utterance(std::span<const TokenAlignment> aligns, const ChunkingConfig& cfg,
                                            std::size_t total_frames) {
  return detail::plan_segments(aligns, cfg, total_frames, false);
}

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

struct SegmentRange {
  IndexRange speech;
  IndexRange text;
};

/// An interleaved training sequence. A position contributes to the loss exactly
/// when it has a target.
struct MixedSequence {
  Paradigm paradigm = Paradigm::NS;
  std::vector<Position> positions;
  std::vector<std::optional<TokenId>> targets;
  std::vector<SegmentRange> segments;
  // Index of the utterance token each real-token target refers to, -1 otherwise.
  std::vector<std::int32_t> target_sources;

  std::size_t size() const { return positions.size(); }

  void push(Position p, std::optional<TokenId> target = std::nullopt, std::int32_t source = -1) {
    positions.push_back(p);
    targets.push_back(target);
    target_sources.push_back(source);
  }

  std::vector<std::uint8_t> loss_mask() const {
    std::vector<std::uint8_t> m(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) m[i] = targets[i].has_value() ? 1 : 0;
    return m;
  }
};

inline MixedSequence build_ns(const Utterance& utt, const SpecialTokens& sp = {}) {
  MixedSequence seq;
  seq.paradigm = Paradigm::NS;
  const auto frames = utt.num_frames();
  for (std::size_t f = 0; f < frames; ++f) seq.push(Position::speech(static_cast<std::int32_t>(f)));
  if (utt.tokens.empty())
    seq.push(Position::text(sp.sos), sp.eos);
  else
    seq.push(Position::text(sp.sos), utt.tokens.front(), 0);
  for (std::size_t i = 0; i < utt.tokens.size(); ++i) {
    if (i + 1 < utt.tokens.size())
      seq.push(Position::text(utt.tokens[i]), utt.tokens[i + 1], static_cast<std::int32_t>(i + 1));
    else
      seq.push(Position::text(utt.tokens[i]), sp.eos);
  }
  seq.segments.push_back({{0, frames}, {frames, seq.positions.size()}});
  return seq;
}

namespace detail {

/// A target that is either a special id or the utterance token at `source`.
struct Target {
  TokenId id;
  std::int32_t source = -1;
};

inline void push_target(MixedSequence& seq, Position p, Target t) { seq.push(p, t.id, t.source); }

inline void append_speech(MixedSequence& seq, const Segment& seg, Target last_target) {
  for (auto f = seg.frame_begin; f < seg.frame_end; ++f) {
    const auto p = Position::speech(static_cast<std::int32_t>(f));
    if (f + 1 == seg.frame_end)
      push_target(seq, p, last_target);
    else
      seq.push(p);
  }
}

}  // namespace detail

/// Standard streaming layout. Each chunk's last speech position predicts the
/// chunk's first token; pad closes a turn and eos closes the utterance. When
/// the final chunk overflows, its text runs straight on into the flush tokens.
inline MixedSequence build_ss(const Utterance& utt, const ChunkingConfig& cfg, const SpecialTokens& sp = {}) {
  const auto segs = chunk_utterance(utt.alignments, cfg, utt.num_frames());
  MixedSequence seq;
  seq.paradigm = Paradigm::SS;
  const auto tok = [&](std::size_t idx) { return detail::Target{utt.tokens[idx], static_cast<std::int32_t>(idx)}; };
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const auto& seg = segs[s];
    const bool final_seg = s + 1 == segs.size();
    const bool flush_follows = s + 1 < segs.size() && segs[s + 1].flush;
    // What follows this segment's last real token.
    const detail::Target after_last =
        final_seg ? detail::Target{sp.eos} : (flush_follows ? tok(segs[s + 1].tokens.front()) : detail::Target{sp.pad});
    SegmentRange range;
    range.speech.begin = seq.size();
    if (!seg.flush) detail::append_speech(seq, seg, seg.tokens.empty() ? after_last : tok(seg.tokens.front()));
    range.speech.end = range.text.begin = seq.size();
    for (std::size_t i = 0; i < seg.slots; ++i) {
      if (i < seg.tokens.size()) {
        const auto input = Position::text(utt.tokens[seg.tokens[i]]);
        detail::push_target(seq, input, i + 1 < seg.tokens.size() ? tok(seg.tokens[i + 1]) : after_last);
      } else {
        seq.push(Position::text(sp.pad));
      }
    }
    range.text.end = seq.size();
    seq.segments.push_back(range);
  }
  return seq;
}

/// Context-aware streaming layout. The last token of every non-terminal segment
/// is masked to pad in the input and re-appears as the first token of the next
/// segment. The position before a masked slot predicts the masked token, the
/// masked slot itself predicts pad (or the first flush token when the flush
/// follows directly), and no eos target exists.
inline MixedSequence build_cs(const Utterance& utt, const ChunkingConfig& cfg, const SpecialTokens& sp = {}) {
  const auto segs = detail::plan_segments(utt.alignments, cfg, utt.num_frames(), true);
  MixedSequence seq;
  seq.paradigm = Paradigm::CS;
  const auto tok = [&](std::size_t idx) { return detail::Target{utt.tokens[idx], static_cast<std::int32_t>(idx)}; };
  const detail::Target stop{sp.pad};
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const auto& seg = segs[s];
    const bool flush_follows = s + 1 < segs.size() && segs[s + 1].flush;
    SegmentRange range;
    range.speech.begin = seq.size();
    if (!seg.flush) detail::append_speech(seq, seg, seg.tokens.empty() ? stop : tok(seg.tokens.front()));
    range.speech.end = range.text.begin = seq.size();
    const auto n = seg.tokens.size();
    for (std::size_t i = 0; i < seg.slots; ++i) {
      if (i >= n) {
        seq.push(Position::text(sp.pad));
      } else if (seg.masked_last && i + 1 == n) {
        detail::push_target(seq, Position::text(sp.pad), flush_follows ? tok(segs[s + 1].tokens.front()) : stop);
      } else {
        const auto input = Position::text(utt.tokens[seg.tokens[i]]);
        detail::push_target(seq, input, i + 1 < n ? tok(seg.tokens[i + 1]) : stop);
      }
    }
    range.text.end = seq.size();
    seq.segments.push_back(range);
  }
  return seq;
}

inline MixedSequence build_sequence(Paradigm p, const Utterance& utt, const ChunkingConfig& cfg,
                                    const SpecialTokens& sp = {}) {
  switch (p) {
    case Paradigm::NS: return build_ns(utt, sp);
    case Paradigm::SS: return build_ss(utt, cfg, sp);
    case Paradigm::CS: return build_cs(utt, cfg, sp);
  }
  return build_ns(utt, sp);
}

inline nlohmann::json to_json(const MixedSequence& seq, std::string_view id) {
  nlohmann::json j;
  j["id"] = id;
  j["paradigm"] = to_string(seq.paradigm);
  auto& pos = j["positions"] = nlohmann::json::array();
  for (const auto& p : seq.positions) pos.push_back(to_tag(p));
  auto& tgt = j["targets"] = nlohmann::json::array();
  for (const auto& t : seq.targets) tgt.push_back(t ? nlohmann::json(*t) : nlohmann::json(nullptr));
  auto& segs = j["segments"] = nlohmann::json::array();
  for (const auto& s : seq.segments) segs.push_back({s.speech.begin, s.speech.end, s.text.begin, s.text.end});
  return j;
}

// ---------------------------------------------------------------------------
// Joint training schedule

/// Paradigm for a training step. Without chunk attention the step is always NS.
/// With it, every aligned block of three steps holds NS, SS and CS once each in
/// a seeded order, so any window of steps is balanced to within one per paradigm.
inline Paradigm sample_paradigm(std::uint64_t step, bool chunk_attention_active, std::uint64_t seed) {
  if (!chunk_attention_active) return Paradigm::NS;
  static constexpr std::array<std::array<Paradigm, 3>, 6> kOrders{{
      {Paradigm::NS, Paradigm::SS, Paradigm::CS},
      {Paradigm::NS, Paradigm::CS, Paradigm::SS},
      {Paradigm::SS, Paradigm::NS, Paradigm::CS},
      {Paradigm::SS, Paradigm::CS, Paradigm::NS},
      {Paradigm::CS, Paradigm::NS, Paradigm::SS},
      {Paradigm::CS, Paradigm::SS, Paradigm::NS},
  }};
  const auto order = derive_seed(derive_seed(seed, "paradigm"), step / 3) % kOrders.size();
  return kOrders[order][step % 3];
}

struct StageConfig {
  int stage = 0;
  bool encoder_trainable = false;
  bool adapter_trainable = false;
  bool decoder_trainable = false;
  std::vector<Paradigm> paradigms;
  bool dual_attention = true;  // encoder trains with full and dynamic chunk attention in every stage
};

using StagePlan = std::array<StageConfig, 5>;

/// Four non-streaming stages with different frozen modules, then joint SFT.
inline StagePlan stage_plan() {
  return {{
      {1, false, true, false, {Paradigm::NS}, true},
      {2, true, true, false, {Paradigm::NS}, true},
      {3, false, false, true, {Paradigm::NS}, true},
      {4, true, true, true, {Paradigm::NS}, true},
      {5, true, true, true, {Paradigm::NS, Paradigm::SS, Paradigm::CS}, true},
  }};
}

}  // namespace uniasr
