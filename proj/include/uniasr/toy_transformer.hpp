#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uniasr/error.hpp"
#include "uniasr/kv_cache.hpp"
#include "uniasr/model.hpp"
#include "uniasr/rng.hpp"

namespace uniasr {

struct ModelConfig {
  std::size_t vocab_size = 64;
  std::size_t embed_dim = 32;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 64;
  std::size_t frame_dim = 8;
  std::size_t adapter_hidden = 32;
  std::size_t max_context = 4096;
  std::uint64_t seed = 1;

  void validate() const {
    if (vocab_size == 0 || embed_dim == 0 || num_heads == 0 || ffn_dim == 0 || frame_dim == 0 ||
        adapter_hidden == 0 || max_context == 0)
      throw Error(ErrorCode::InvalidArgument, "model dimensions must be >= 1");
    if (embed_dim % num_heads != 0) throw Error(ErrorCode::InvalidArgument, "embed_dim must be divisible by num_heads");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Weight matrices are row-major [out x in] and applied as y = W x.
struct AdapterParams {
  std::size_t in_dim = 0;
  std::size_t hidden = 0;
  std::size_t out_dim = 0;
  std::vector<double> w1, b1, w2, b2;

  AdapterParams() = default;
  AdapterParams(std::size_t in, std::size_t h, std::size_t out)
      : in_dim(in), hidden(h), out_dim(out), w1(h * in), b1(h), w2(out * h), b2(out) {}
};

namespace detail {

inline void matvec(std::span<const double> w, std::span<const double> x, std::span<double> y) {
  const auto in = x.size();
  for (std::size_t r = 0; r < y.size(); ++r) {
    double acc = 0.0;
    const double* row = w.data() + r * in;
    for (std::size_t c = 0; c < in; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

inline void layer_norm(std::span<const double> x, std::span<const double> gain, std::span<const double> bias,
                       std::span<double> y) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(var + 1e-5);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) * inv * gain[i] + bias[i];
}

/// In-place softmax where -inf entries (masked keys) get weight 0.
inline void masked_softmax(std::span<double> scores) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : scores) mx = std::max(mx, v);
  if (std::isinf(mx)) throw Error(ErrorCode::InvalidArgument, "attention row has no visible key");
  double z = 0.0;
  for (auto& v : scores) {
    v = std::isinf(v) ? 0.0 : std::exp(v - mx);
    z += v;
  }
  for (auto& v : scores) v /= z;
}

}  // namespace detail

/// Speech adapter: W2 relu(W1 x + b1) + b2.
inline std::vector<double> adapter_forward(std::span<const double> frame, const AdapterParams& p) {
  if (frame.size() != p.in_dim)
    throw Error(ErrorCode::DimensionMismatch, "frame has " + std::to_string(frame.size()) + " dims, adapter expects " +
                                                  std::to_string(p.in_dim));
  std::vector<double> h(p.hidden), out(p.out_dim);
  detail::matvec(p.w1, frame, h);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::max(0.0, h[i] + p.b1[i]);
  detail::matvec(p.w2, h, out);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += p.b2[i];
  return out;
}

/// Small pre-norm decoder-only transformer with a KV cache. Speech positions
/// enter through the adapter, text positions through the embedding table.
/// There is no positional encoding; order comes only from the causal mask.
class ToyTransformer final : public LanguageModel {
 public:
  struct Layer {
    std::vector<double> ln1_gain, ln1_bias;
    std::vector<double> wq, wk, wv, wo;
    std::vector<double> ln2_gain, ln2_bias;
    std::vector<double> ff1_w, ff1_b, ff2_w, ff2_b;
  };

  explicit ToyTransformer(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const auto d = cfg.embed_dim;
    embedding_.resize(cfg.vocab_size * d);
    adapter_ = AdapterParams(cfg.frame_dim, cfg.adapter_hidden, d);
    layers_.resize(cfg.num_layers);
    for (auto& l : layers_) {
      l.ln1_gain.resize(d);
      l.ln1_bias.resize(d);
      l.wq.resize(d * d);
      l.wk.resize(d * d);
      l.wv.resize(d * d);
      l.wo.resize(d * d);
      l.ln2_gain.resize(d);
      l.ln2_bias.resize(d);
      l.ff1_w.resize(cfg.ffn_dim * d);
      l.ff1_b.resize(cfg.ffn_dim);
      l.ff2_w.resize(d * cfg.ffn_dim);
      l.ff2_b.resize(d);
    }
    final_gain_.resize(d);
    final_bias_.resize(d);
    out_w_.resize(cfg.vocab_size * d);
    out_b_.resize(cfg.vocab_size);

    Rng rng(derive_seed(cfg.seed, "toy-transformer"));
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for_each_block([&](std::vector<double>& block) {
      for (auto& v : block) v = u(rng);
    });
  }

  const ModelConfig& config() const { return cfg_; }
  const AdapterParams& adapter() const { return adapter_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::span<const double> embedding_row(TokenId t) const {
    return {embedding_.data() + static_cast<std::size_t>(t) * cfg_.embed_dim, cfg_.embed_dim};
  }
  std::span<const double> final_gain() const { return final_gain_; }
  std::span<const double> final_bias() const { return final_bias_; }
  std::span<const double> output_weight() const { return out_w_; }
  std::span<const double> output_bias() const { return out_b_; }

  std::size_t vocab_size() const override { return cfg_.vocab_size; }
  KVCache new_cache() const override { return KVCache(cfg_.num_layers, cfg_.embed_dim); }

  /// Visits every parameter block in declaration order: embedding, adapter
  /// (w1, b1, w2, b2), each layer, final norm, output projection.
  template <typename F>
  void for_each_block(F&& f) {
    f(embedding_);
    f(adapter_.w1);
    f(adapter_.b1);
    f(adapter_.w2);
    f(adapter_.b2);
    for (auto& l : layers_) {
      for (auto* b : {&l.ln1_gain, &l.ln1_bias, &l.wq, &l.wk, &l.wv, &l.wo, &l.ln2_gain, &l.ln2_bias, &l.ff1_w,
                      &l.ff1_b, &l.ff2_w, &l.ff2_b})
        f(*b);
    }
    f(final_gain_);
    f(final_bias_);
    f(out_w_);
    f(out_b_);
  }

  template <typename F>
  void for_each_block(F&& f) const {
    const_cast<ToyTransformer*>(this)->for_each_block([&](std::vector<double>& b) { f(std::as_const(b)); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_block([&](const std::vector<double>& b) { n += b.size(); });
    return n;
  }

  std::vector<double> embed(const ModelInput& in) const {
    if (in.pos.is_speech()) return adapter_forward(in.frame, adapter_);
    if (in.pos.value < 0 || static_cast<std::size_t>(in.pos.value) >= cfg_.vocab_size)
      throw Error(ErrorCode::InvalidArgument, "token id " + std::to_string(in.pos.value) + " outside vocabulary");
    auto row = embedding_row(in.pos.value);
    return {row.begin(), row.end()};
  }

  StepOutput forward(std::span<const ModelInput> inputs, KVCache& cache,
                     MaskMode mask = MaskMode::full()) const override {
    const auto n = inputs.size();
    const auto d = cfg_.embed_dim;
    const auto heads = cfg_.num_heads;
    const auto hd = d / heads;
    if (cache.num_layers() != cfg_.num_layers || cache.width() != d)
      throw Error(ErrorCode::DimensionMismatch, "cache shape does not match the model");
    if (cache.size() + n > cfg_.max_context)
      throw Error(ErrorCode::ContextOverflow, std::to_string(cache.size() + n) + " positions exceed max_context " +
                                                  std::to_string(cfg_.max_context));
    std::vector<std::vector<double>> x;
    x.reserve(n);
    std::vector<Position> pos;
    for (const auto& in : inputs) {
      x.push_back(embed(in));
      pos.push_back(in.pos);
    }
    const auto base = cache.extend(pos);
    const auto total = base + n;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    std::vector<double> h(d), q(d), attn(d), proj(d), ff(cfg_.ffn_dim), scores(total);
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& L = layers_[li];
      std::vector<std::vector<double>> queries(n, std::vector<double>(d));
      for (std::size_t i = 0; i < n; ++i) {
        detail::layer_norm(x[i], L.ln1_gain, L.ln1_bias, h);
        detail::matvec(L.wq, h, queries[i]);
        detail::matvec(L.wk, h, cache.mutable_key(li, base + i));
        detail::matvec(L.wv, h, cache.mutable_value(li, base + i));
      }
      for (std::size_t i = 0; i < n; ++i) {
        const auto qi = base + i;
        std::fill(attn.begin(), attn.end(), 0.0);
        for (std::size_t hh = 0; hh < heads; ++hh) {
          const auto off = hh * hd;
          for (std::size_t j = 0; j < total; ++j) {
            if (!mask.allows(qi, j)) {
              scores[j] = -std::numeric_limits<double>::infinity();
              continue;
            }
            const auto k = cache.key(li, j);
            double s = 0.0;
            for (std::size_t c = 0; c < hd; ++c) s += queries[i][off + c] * k[off + c];
            scores[j] = s * scale;
          }
          detail::masked_softmax(std::span(scores.data(), total));
          for (std::size_t j = 0; j < total; ++j) {
            if (scores[j] == 0.0) continue;
            const auto v = cache.value(li, j);
            for (std::size_t c = 0; c < hd; ++c) attn[off + c] += scores[j] * v[off + c];
          }
        }
        detail::matvec(L.wo, attn, proj);
        for (std::size_t c = 0; c < d; ++c) x[i][c] += proj[c];
        detail::layer_norm(x[i], L.ln2_gain, L.ln2_bias, h);
        detail::matvec(L.ff1_w, h, ff);
        for (std::size_t c = 0; c < ff.size(); ++c) ff[c] = std::max(0.0, ff[c] + L.ff1_b[c]);
        detail::matvec(L.ff2_w, ff, proj);
        for (std::size_t c = 0; c < d; ++c) x[i][c] += proj[c] + L.ff2_b[c];
      }
    }

    StepOutput out;
    out.rows = n;
    out.vocab = cfg_.vocab_size;
    out.logits.resize(n * cfg_.vocab_size);
    out.new_len = cache.size();
    for (std::size_t i = 0; i < n; ++i) {
      detail::layer_norm(x[i], final_gain_, final_bias_, h);
      std::span<double> row(out.logits.data() + i * cfg_.vocab_size, cfg_.vocab_size);
      detail::matvec(out_w_, h, row);
      for (std::size_t v = 0; v < row.size(); ++v) row[v] += out_b_[v];
    }
    return out;
  }

  // Binary format: 8-byte magic, nine little-endian u64 header fields
  // (vocab, embed, layers, heads, ffn, frame, adapter_hidden, max_context,
  // seed), then every parameter block as raw doubles in declaration order.
  static constexpr std::array<char, 8> kMagic{'U', 'N', 'I', 'A', 'S', 'R', 'T', '1'};

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::Io, "cannot write " + path);
    os.write(kMagic.data(), kMagic.size());
    const std::array<std::uint64_t, 9> header{cfg_.vocab_size, cfg_.embed_dim,  cfg_.num_layers,
                                              cfg_.num_heads,  cfg_.ffn_dim,    cfg_.frame_dim,
                                              cfg_.adapter_hidden, cfg_.max_context, cfg_.seed};
    os.write(reinterpret_cast<const char*>(header.data()), sizeof(header));
    for_each_block([&](const std::vector<double>& b) {
      os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size() * sizeof(double)));
    });
    if (!os) throw Error(ErrorCode::Io, "short write to " + path);
  }

  static ToyTransformer load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::Io, "cannot read " + path);
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMagic) throw Error(ErrorCode::Parse, path + " is not a toy transformer file");
    std::array<std::uint64_t, 9> h{};
    is.read(reinterpret_cast<char*>(h.data()), sizeof(h));
    if (!is) throw Error(ErrorCode::Parse, path + ": truncated header");
    ModelConfig cfg{h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]};
    ToyTransformer m(cfg);
    m.for_each_block([&](std::vector<double>& b) {
      is.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size() * sizeof(double)));
    });
    if (!is) throw Error(ErrorCode::Parse, path + ": truncated parameters");
    if (is.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::Parse, path + ": trailing bytes");
    return m;
  }

 private:
  ModelConfig cfg_;
  std::vector<double> embedding_;
  AdapterParams adapter_;
  std::vector<Layer> layers_;
  std::vector<double> final_gain_, final_bias_;
  std::vector<double> out_w_, out_b_;
};

}  // namespace uniasr
