#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "uniasr/error.hpp"
#include "uniasr/kv_cache.hpp"
#include "uniasr/tokens.hpp"

namespace uniasr {

/// One input position: a text token, or a speech frame with its feature vector.
struct ModelInput {
  Position pos;
  std::span<const double> frame;  // empty for text positions
};

struct MaskMode {
  enum class Kind : std::uint8_t { Full, Chunk };
  Kind kind = Kind::Full;
  std::size_t chunk_size = 0;

  static constexpr MaskMode full() { return {}; }
  static constexpr MaskMode chunk(std::size_t size) { return {Kind::Chunk, size}; }

  /// Whether absolute query position i may attend to key position j.
  /// Full is causal; chunk lets i see every key in its own or an earlier chunk.
  constexpr bool allows(std::size_t i, std::size_t j) const {
    if (kind == Kind::Full || chunk_size == 0) return j <= i;
    return j / chunk_size <= i / chunk_size;
  }
};

/// Row-major boolean mask; the queries are the last `query_len` of `key_len` positions.
inline std::vector<std::vector<std::uint8_t>> build_attention_mask(MaskMode mode, std::size_t query_len,
                                                                   std::size_t key_len) {
  std::vector<std::vector<std::uint8_t>> mask(query_len, std::vector<std::uint8_t>(key_len, 0));
  const auto offset = key_len >= query_len ? key_len - query_len : 0;
  for (std::size_t q = 0; q < query_len; ++q)
    for (std::size_t k = 0; k < key_len; ++k) mask[q][k] = mode.allows(offset + q, k) ? 1 : 0;
  return mask;
}

/// Logits for each position of a forward span, row-major [rows x vocab].
struct StepOutput {
  std::size_t rows = 0;
  std::size_t vocab = 0;
  std::vector<double> logits;
  std::size_t new_len = 0;

  std::span<const double> row(std::size_t i) const { return {logits.data() + i * vocab, vocab}; }
  std::span<const double> last() const { return row(rows - 1); }
};

/// The decoding contract: extend `cache` with `inputs` and return their logits.
/// Implementations are immutable and may be shared across sessions.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual KVCache new_cache() const = 0;
  virtual StepOutput forward(std::span<const ModelInput> inputs, KVCache& cache,
                             MaskMode mask = MaskMode::full()) const = 0;
};

// ---------------------------------------------------------------------------
// Numerics shared by models, the engine and the tests

inline std::vector<double> log_softmax(std::span<const double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
  return out;
}

inline std::vector<double> softmax(std::span<const double> x) {
  auto out = log_softmax(x);
  for (auto& v : out) v = std::exp(v);
  return out;
}

/// Index of the largest value; ties go to the smallest index.
inline std::size_t argmax(std::span<const double> x) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

/// max |a - b| / max |b|, the vector-wise relative error (absolute when b is all zero).
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "relative_error: length mismatch");
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return scale > 0.0 ? diff / scale : diff;
}

/// Mean token cross-entropy over positions that have a target.
inline double masked_ce_loss(std::span<const double> logits, std::size_t vocab,
                             std::span<const std::optional<TokenId>> targets) {
  if (logits.size() != targets.size() * vocab)
    throw Error(ErrorCode::DimensionMismatch, "logits rows must match targets");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (!targets[t]) continue;
    const auto lp = log_softmax(logits.subspan(t * vocab, vocab));
    total -= lp.at(static_cast<std::size_t>(*targets[t]));
    ++count;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

}  // namespace uniasr
