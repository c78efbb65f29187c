#pragma once

// Independent reference implementations used as test oracles. None of them
// shares code with the library beyond plain data types.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "uniasr/uniasr.hpp"

namespace support {

using uniasr::Position;
using uniasr::TokenId;
using uniasr::Utterance;

/// Utterance from (token, start_frame, end_frame) triples with zero frames.
inline Utterance make_utterance(const std::vector<std::tuple<TokenId, int, int>>& toks, std::size_t total_frames,
                                std::size_t frame_dim = 8, std::string id = "u") {
  Utterance u;
  u.id = std::move(id);
  for (const auto& [t, s, e] : toks) {
    u.tokens.push_back(t);
    u.alignments.push_back({t, s, e});
  }
  u.frames = uniasr::FrameMatrix(total_frames, frame_dim);
  return u;
}

/// The three-token example: A=10 ends at frame 2, B=11 at 5, C=12 at 7, 8 frames.
inline Utterance abc_utterance() { return make_utterance({{10, 0, 2}, {11, 3, 5}, {12, 6, 7}}, 8); }

inline std::vector<Utterance> corpus(std::size_t n, std::uint64_t seed, std::size_t vocab = 64) {
  uniasr::CorpusConfig cfg;
  cfg.num_utterances = n;
  cfg.seed = seed;
  cfg.vocab_size = vocab;
  return uniasr::gen_synthetic_corpus(cfg);
}

// ---------------------------------------------------------------------------
// Edit distance: top-down memoized recursion over suffixes. Among optimal
// moves it picks diagonal, then insertion, then deletion, scanning from the end.

struct RefCounts {
  std::size_t cost = 0, sub = 0, ins = 0, del = 0;
};

inline RefCounts ref_edit(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
  std::map<std::pair<std::size_t, std::size_t>, RefCounts> memo;
  std::function<RefCounts(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> RefCounts {
    if (i == 0 && j == 0) return {};
    if (auto it = memo.find({i, j}); it != memo.end()) return it->second;
    std::optional<RefCounts> best;
    const auto consider = [&](RefCounts c) {
      if (!best || c.cost < best->cost) best = c;
    };
    if (i > 0 && j > 0) {
      auto c = go(i - 1, j - 1);
      if (a[i - 1] != b[j - 1]) {
        ++c.cost;
        ++c.sub;
      }
      consider(c);
    }
    if (j > 0) {
      auto c = go(i, j - 1);
      ++c.cost;
      ++c.ins;
      consider(c);
    }
    if (i > 0) {
      auto c = go(i - 1, j);
      ++c.cost;
      ++c.del;
      consider(c);
    }
    memo[{i, j}] = *best;
    return *best;
  };
  return go(a.size(), b.size());
}

// ---------------------------------------------------------------------------
// Chunk planning and layouts, formulated slot by slot.

struct RefSegment {
  std::size_t frame_begin = 0, frame_end = 0;
  std::vector<std::size_t> tokens;
  std::size_t slots = 0;
  bool flush = false;
  bool masked = false;
};

inline std::vector<RefSegment> ref_plan(const Utterance& u, std::size_t n, std::size_t r, bool carry) {
  const auto total = u.num_frames();
  const auto chunks = (total + n - 1) / n;
  std::vector<std::vector<std::size_t>> due(chunks);
  std::vector<std::size_t> late;
  for (std::size_t i = 0; i < u.alignments.size(); ++i) {
    const auto k = static_cast<std::size_t>(u.alignments[i].end_frame) / n;
    (k < chunks ? due[k] : late).push_back(i);
  }
  std::vector<RefSegment> out;
  std::vector<std::size_t> queue;
  for (std::size_t k = 0; k < chunks; ++k) {
    RefSegment s;
    s.frame_begin = k * n;
    s.frame_end = std::min(total, (k + 1) * n);
    s.slots = (s.frame_end - s.frame_begin + r - 1) / r;
    queue.insert(queue.end(), due[k].begin(), due[k].end());
    const auto take = std::min(s.slots, queue.size());
    s.tokens.assign(queue.begin(), queue.begin() + static_cast<std::ptrdiff_t>(take));
    queue.erase(queue.begin(), queue.begin() + static_cast<std::ptrdiff_t>(take));
    const bool terminal = k + 1 == chunks && queue.empty();
    if (carry && !terminal && !s.tokens.empty()) {
      s.masked = true;
      queue.insert(queue.begin(), s.tokens.back());
    }
    out.push_back(s);
  }
  queue.insert(queue.end(), late.begin(), late.end());
  if (!queue.empty()) {
    RefSegment f;
    f.frame_begin = f.frame_end = total;
    f.tokens = queue;
    f.slots = queue.size();
    f.flush = true;
    out.push_back(f);
  }
  return out;
}

struct RefLayout {
  std::vector<Position> positions;
  std::vector<std::optional<TokenId>> targets;
};

/// What a slot holds in the final-view input.
struct Slot {
  enum Kind { Token, Masked, Fill } kind;
  TokenId value;
};

/// Slot-by-slot layout: each predicting position targets whatever the next
/// slot shows, with the stop symbol standing in for an empty or fill slot.
inline RefLayout ref_layout(const Utterance& u, std::size_t n, std::size_t r, bool cs) {
  const uniasr::SpecialTokens sp;
  const auto segs = ref_plan(u, n, r, cs);
  RefLayout out;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const auto& seg = segs[s];
    const bool last = s + 1 == segs.size();
    const bool flush_next = !last && segs[s + 1].flush;
    std::vector<Slot> slots;
    for (std::size_t i = 0; i < seg.slots; ++i) {
      if (i >= seg.tokens.size())
        slots.push_back({Slot::Fill, sp.pad});
      else if (seg.masked && i + 1 == seg.tokens.size())
        slots.push_back({Slot::Masked, u.tokens[seg.tokens[i]]});
      else
        slots.push_back({Slot::Token, u.tokens[seg.tokens[i]]});
    }
    // Target of a position followed by slot index `next` (slots.size() if none).
    const auto after = [&](std::size_t next, bool from_masked) -> TokenId {
      if (next < slots.size() && slots[next].kind != Slot::Fill) return slots[next].value;
      if (flush_next && (from_masked || !cs)) return u.tokens[segs[s + 1].tokens.front()];
      if (!cs && last) return sp.eos;
      return sp.pad;
    };
    for (auto f = seg.frame_begin; f < seg.frame_end; ++f) {
      out.positions.push_back(Position::speech(static_cast<std::int32_t>(f)));
      out.targets.push_back(f + 1 == seg.frame_end ? std::optional<TokenId>(after(0, false)) : std::nullopt);
    }
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const auto& sl = slots[i];
      out.positions.push_back(Position::text(sl.kind == Slot::Token ? sl.value : sp.pad));
      if (sl.kind == Slot::Fill)
        out.targets.push_back(std::nullopt);
      else
        out.targets.push_back(after(i + 1, sl.kind == Slot::Masked));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cache-free transformer recomputation from the model's parameters.

inline std::vector<double> ref_matvec(const std::vector<double>& w, const std::vector<double>& x, std::size_t rows) {
  std::vector<double> y(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < x.size(); ++c) y[r] += w[r * x.size() + c] * x[c];
  return y;
}

inline std::vector<double> ref_norm(const std::vector<double>& x, const std::vector<double>& g,
                                    const std::vector<double>& b) {
  double mean = 0.0, var = 0.0;
  for (double v : x) mean += v / static_cast<double>(x.size());
  for (double v : x) var += (v - mean) * (v - mean) / static_cast<double>(x.size());
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) / std::sqrt(var + 1e-5) * g[i] + b[i];
  return y;
}

/// Logits of every position of `inputs` under full causal attention.
inline std::vector<std::vector<double>> ref_forward(const uniasr::ToyTransformer& m,
                                                    const std::vector<uniasr::ModelInput>& inputs) {
  const auto& cfg = m.config();
  const auto d = cfg.embed_dim, hd = d / cfg.num_heads;
  std::vector<std::vector<double>> x;
  for (const auto& in : inputs) {
    if (in.pos.is_speech()) {
      const auto& a = m.adapter();
      std::vector<double> frame(in.frame.begin(), in.frame.end());
      auto h = ref_matvec(a.w1, frame, a.hidden);
      for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::max(0.0, h[i] + a.b1[i]);
      auto o = ref_matvec(a.w2, h, a.out_dim);
      for (std::size_t i = 0; i < o.size(); ++i) o[i] += a.b2[i];
      x.push_back(o);
    } else {
      auto row = m.embedding_row(in.pos.value);
      x.emplace_back(row.begin(), row.end());
    }
  }
  const auto n = x.size();
  for (const auto& L : m.layers()) {
    std::vector<std::vector<double>> q(n), k(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto h = ref_norm(x[i], L.ln1_gain, L.ln1_bias);
      q[i] = ref_matvec(L.wq, h, d);
      k[i] = ref_matvec(L.wk, h, d);
      v[i] = ref_matvec(L.wv, h, d);
    }
    auto next = x;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> attn(d, 0.0);
      for (std::size_t head = 0; head < cfg.num_heads; ++head) {
        std::vector<double> w(i + 1);
        double mx = -1e300, z = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          double s = 0.0;
          for (std::size_t c = head * hd; c < (head + 1) * hd; ++c) s += q[i][c] * k[j][c];
          w[j] = s / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, w[j]);
        }
        for (auto& e : w) z += (e = std::exp(e - mx));
        for (std::size_t j = 0; j <= i; ++j)
          for (std::size_t c = head * hd; c < (head + 1) * hd; ++c) attn[c] += w[j] / z * v[j][c];
      }
      const auto proj = ref_matvec(L.wo, attn, d);
      for (std::size_t c = 0; c < d; ++c) next[i][c] += proj[c];
      const auto h = ref_norm(next[i], L.ln2_gain, L.ln2_bias);
      auto f = ref_matvec(L.ff1_w, h, cfg.ffn_dim);
      for (std::size_t c = 0; c < f.size(); ++c) f[c] = std::max(0.0, f[c] + L.ff1_b[c]);
      const auto o = ref_matvec(L.ff2_w, f, d);
      for (std::size_t c = 0; c < d; ++c) next[i][c] += o[c] + L.ff2_b[c];
    }
    x = std::move(next);
  }
  std::vector<std::vector<double>> logits;
  const std::vector<double> g(m.final_gain().begin(), m.final_gain().end());
  const std::vector<double> b(m.final_bias().begin(), m.final_bias().end());
  const std::vector<double> w(m.output_weight().begin(), m.output_weight().end());
  for (const auto& row : x) {
    auto out = ref_matvec(w, ref_norm(row, g, b), cfg.vocab_size);
    for (std::size_t v = 0; v < out.size(); ++v) out[v] += m.output_bias()[v];
    logits.push_back(out);
  }
  return logits;
}

/// Random mixed inputs over a frame matrix: speech frames in order with text tokens between.
inline std::vector<uniasr::ModelInput> random_inputs(const uniasr::FrameMatrix& frames, std::size_t vocab,
                                                     std::size_t len, std::mt19937_64& rng) {
  std::vector<uniasr::ModelInput> in;
  std::bernoulli_distribution speech(0.6);
  std::uniform_int_distribution<TokenId> tok(0, static_cast<TokenId>(vocab - 1));
  std::size_t f = 0;
  for (std::size_t i = 0; i < len; ++i) {
    if (f < frames.rows && speech(rng)) {
      in.push_back({Position::speech(static_cast<std::int32_t>(f)), frames.row(f)});
      ++f;
    } else {
      in.push_back({Position::text(tok(rng)), {}});
    }
  }
  return in;
}

/// A model whose logits are computed from the cached context by a callback.
class ScriptedModel final : public uniasr::LanguageModel {
 public:
  using Fn = std::function<std::vector<double>(const std::vector<Position>& context)>;
  ScriptedModel(std::size_t vocab, Fn fn) : vocab_(vocab), fn_(std::move(fn)) {}

  std::size_t vocab_size() const override { return vocab_; }
  uniasr::KVCache new_cache() const override { return uniasr::KVCache(1, 1); }

  uniasr::StepOutput forward(std::span<const uniasr::ModelInput> inputs, uniasr::KVCache& cache,
                             uniasr::MaskMode = uniasr::MaskMode::full()) const override {
    std::vector<Position> pos;
    for (const auto& in : inputs) pos.push_back(in.pos);
    const auto old = cache.extend(pos);
    uniasr::StepOutput out;
    out.rows = inputs.size();
    out.vocab = vocab_;
    for (std::size_t r = 0; r < inputs.size(); ++r) {
      cache.mutable_key(0, old + r)[0] = static_cast<double>(old + r);
      const std::vector<Position> ctx(cache.positions().begin(),
                                      cache.positions().begin() + static_cast<std::ptrdiff_t>(old + r + 1));
      const auto row = fn_(ctx);
      out.logits.insert(out.logits.end(), row.begin(), row.end());
    }
    out.new_len = cache.size();
    return out;
  }

 private:
  std::size_t vocab_;
  Fn fn_;
};

}  // namespace support
