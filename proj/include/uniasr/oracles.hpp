#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uniasr/corpus.hpp"
#include "uniasr/error.hpp"
#include "uniasr/kv_cache.hpp"
#include "uniasr/layout.hpp"
#include "uniasr/model.hpp"
#include "uniasr/tokens.hpp"

namespace uniasr {

/// Logit given to the token an oracle wants to emit; every other entry is 0.
inline constexpr double kOracleLogit = 8.0;

namespace detail {

inline void check_beyond(std::size_t row, std::size_t size) {
  if (row >= size)
    throw Error(ErrorCode::StepBeyondSequence,
                "position " + std::to_string(row) + " is past the end of a " + std::to_string(size) + "-position sequence");
}

/// Runs `predict(row)` for every newly appended row and packs the logits.
template <typename Predict>
StepOutput oracle_forward(std::span<const ModelInput> inputs, KVCache& cache, std::size_t vocab, Predict&& predict) {
  std::vector<Position> pos;
  pos.reserve(inputs.size());
  for (const auto& in : inputs) pos.push_back(in.pos);
  const auto old = cache.extend(pos);
  StepOutput out;
  out.rows = inputs.size();
  out.vocab = vocab;
  out.logits.assign(out.rows * vocab, 0.0);
  for (std::size_t r = 0; r < out.rows; ++r) {
    if (auto t = predict(old + r)) out.logits[r * vocab + static_cast<std::size_t>(*t)] = kOracleLogit;
  }
  out.new_len = cache.size();
  return out;
}

}  // namespace detail

/// Emits the builder's target for whatever sequence index is being decoded.
/// Positions with no target get all-zero logits, whose argmax is pad.
class TeacherOracle final : public LanguageModel {
 public:
  TeacherOracle(MixedSequence seq, std::size_t vocab_size) : seq_(std::move(seq)), vocab_(vocab_size) {}

  std::size_t vocab_size() const override { return vocab_; }
  KVCache new_cache() const override { return KVCache(0, 0); }
  const MixedSequence& sequence() const { return seq_; }

  StepOutput forward(std::span<const ModelInput> inputs, KVCache& cache, MaskMode = MaskMode::full()) const override {
    return detail::oracle_forward(inputs, cache, vocab_, [&](std::size_t row) {
      detail::check_beyond(row, seq_.size());
      return seq_.targets[row];
    });
  }

 private:
  MixedSequence seq_;
  std::size_t vocab_;
};

using ConfusableMap = std::function<TokenId(TokenId)>;

/// Next text id, wrapping back to the first text id at the end of the vocabulary.
inline ConfusableMap next_token_confusion(std::size_t vocab_size, const SpecialTokens& sp = {}) {
  return [vocab_size, first = sp.first_text_id](TokenId t) {
    return static_cast<std::size_t>(t) + 1 < vocab_size ? t + 1 : first;
  };
}

/// Follows the ground truth of one utterance except near the right edge of the
/// audio it has heard: a token whose end frame is fewer than F frames before
/// the last speech frame in context comes out as confusable(t), unless that
/// frame is the final frame of the utterance. With F = 0 it never errs.
///
/// SS and CS layouts are followed by sequence index. In NS mode (the context
/// contains sos) it transcribes the tokens fully heard so far and then eos.
class BoundaryOracle final : public LanguageModel {
 public:
  BoundaryOracle(const Utterance& utt, Paradigm layout, const ChunkingConfig& chunking, std::size_t window,
                 ConfusableMap confusable, std::size_t vocab_size, const SpecialTokens& sp = {})
      : layout_(layout),
        aligns_(utt.alignments),
        num_frames_(utt.num_frames()),
        window_(window),
        confusable_(std::move(confusable)),
        vocab_(vocab_size),
        sp_(sp) {
    if (layout != Paradigm::NS) seq_ = build_sequence(layout, utt, chunking, sp);
  }

  std::size_t vocab_size() const override { return vocab_; }
  KVCache new_cache() const override { return KVCache(0, 0); }

  StepOutput forward(std::span<const ModelInput> inputs, KVCache& cache, MaskMode = MaskMode::full()) const override {
    return detail::oracle_forward(inputs, cache, vocab_, [&](std::size_t row) { return predict(cache.positions(), row); });
  }

  /// Whether a token ending at `end_frame` is misheard when `last_frame` is the latest frame heard.
  bool confused(std::int32_t end_frame, std::int64_t last_frame) const {
    if (last_frame + 1 >= static_cast<std::int64_t>(num_frames_)) return false;
    return last_frame - end_frame < static_cast<std::int64_t>(window_);
  }

 private:
  std::optional<TokenId> predict(const std::vector<Position>& ctx, std::size_t row) const {
    std::int64_t last_frame = -1;
    std::optional<std::size_t> sos_at;
    for (std::size_t i = 0; i <= row; ++i) {
      if (ctx[i].is_speech()) {
        last_frame = std::max<std::int64_t>(last_frame, ctx[i].value);
      } else if (ctx[i].value == sp_.sos && !sos_at) {
        sos_at = i;
      }
    }
    if (layout_ == Paradigm::NS) {
      if (!sos_at) return std::nullopt;
      std::size_t visible = 0;
      while (visible < aligns_.size() && aligns_[visible].end_frame <= last_frame) ++visible;
      const auto j = row - *sos_at;
      if (j >= visible) return sp_.eos;
      return emit(j, last_frame);
    }
    detail::check_beyond(row, seq_.size());
    const auto src = seq_.target_sources[row];
    if (src < 0) return seq_.targets[row];
    return emit(static_cast<std::size_t>(src), last_frame);
  }

  TokenId emit(std::size_t token_index, std::int64_t last_frame) const {
    const auto& a = aligns_[token_index];
    return confused(a.end_frame, last_frame) ? confusable_(a.token_id) : a.token_id;
  }

  Paradigm layout_;
  MixedSequence seq_;
  std::vector<TokenAlignment> aligns_;
  std::size_t num_frames_;
  std::size_t window_;
  ConfusableMap confusable_;
  std::size_t vocab_;
  SpecialTokens sp_;
};

/// Builds a boundary oracle per utterance of a corpus.
struct BoundaryOracleFactory {
  std::size_t window = 1;
  std::size_t vocab_size = 64;
  ChunkingConfig chunking;
  SpecialTokens sp;
  ConfusableMap confusable;

  std::shared_ptr<const LanguageModel> operator()(const Utterance& utt, Paradigm layout) const {
    auto map = confusable ? confusable : next_token_confusion(vocab_size, sp);
    return std::make_shared<BoundaryOracle>(utt, layout, chunking, window, std::move(map), vocab_size, sp);
  }
};

}  // namespace uniasr
