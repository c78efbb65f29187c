#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uniasr/error.hpp"
#include "uniasr/rng.hpp"
#include "uniasr/text.hpp"
#include "uniasr/tokens.hpp"

namespace uniasr {

/// Output of an external character-level forced aligner.
struct CharAlignment {
  std::string ch;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
};

/// Inclusive character-index span [first_char, last_char] making up one token.
struct TokenSpan {
  TokenId token = 0;
  std::size_t first_char = 0;
  std::size_t last_char = 0;
};

struct TokenAlignment {
  TokenId token_id = 0;
  std::int32_t start_frame = 0;
  std::int32_t end_frame = 0;

  friend bool operator==(const TokenAlignment&, const TokenAlignment&) = default;
};

/// Dense row-major matrix of speech frames.
struct FrameMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  FrameMatrix() = default;
  FrameMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  /// Rows [first, first + count) as a new matrix.
  FrameMatrix slice(std::size_t first, std::size_t count) const {
    FrameMatrix out(count, cols);
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(first * cols), count * cols, out.data.begin());
    return out;
  }

  friend bool operator==(const FrameMatrix&, const FrameMatrix&) = default;
};

struct Utterance {
  std::string id;
  std::vector<TokenId> tokens;
  std::vector<TokenAlignment> alignments;
  FrameMatrix frames;

  std::size_t num_frames() const { return frames.rows; }
};

struct CorpusConfig {
  std::size_t num_utterances = 200;
  std::size_t vocab_size = 64;
  std::size_t frame_dim = 8;
  double frames_per_second = 25.0;
  std::size_t min_tokens = 5;
  std::size_t max_tokens = 20;
  double frames_per_token_mean = 4.0;
  std::size_t min_frames_per_token = 3;
  std::size_t max_frames_per_token = 8;
  std::size_t max_edge_silence = 2;  // leading and trailing silence frames, each drawn from [0, this]
  double noise_std = 0.1;
  std::uint64_t seed = 7;

  void validate(const SpecialTokens& sp = {}) const {
    if (vocab_size <= static_cast<std::size_t>(sp.first_text_id))
      throw Error(ErrorCode::InvalidArgument, "vocab_size must exceed the reserved special ids");
    if (!(frames_per_second > 0.0)) throw Error(ErrorCode::InvalidArgument, "frames_per_second must be > 0");
    if (frame_dim == 0) throw Error(ErrorCode::InvalidArgument, "frame_dim must be >= 1");
    if (min_tokens == 0 || min_tokens > max_tokens)
      throw Error(ErrorCode::InvalidArgument, "need 1 <= min_tokens <= max_tokens");
    if (min_frames_per_token == 0 || min_frames_per_token > max_frames_per_token)
      throw Error(ErrorCode::InvalidArgument, "need 1 <= min_frames_per_token <= max_frames_per_token");
    if (frames_per_token_mean < static_cast<double>(min_frames_per_token))
      throw Error(ErrorCode::InvalidArgument, "frames_per_token_mean below min_frames_per_token");
    if (noise_std < 0.0) throw Error(ErrorCode::InvalidArgument, "noise_std must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Alignment ingestion

/// Milliseconds to encoder frame index, rounding down.
inline std::int32_t ms_to_frame(std::int64_t ms, double fps) {
  return static_cast<std::int32_t>(std::floor(static_cast<double>(ms) * fps / 1000.0 + 1e-9));
}

inline void validate_char_alignments(std::span<const CharAlignment> chars) {
  for (std::size_t i = 0; i < chars.size(); ++i) {
    if (chars[i].start_ms > chars[i].end_ms)
      throw Error(ErrorCode::InvalidAlignment, "char " + std::to_string(i) + " ends before it starts");
    if (i > 0 && chars[i].start_ms < chars[i - 1].end_ms)
      throw Error(ErrorCode::InvalidAlignment, "char " + std::to_string(i) + " overlaps its predecessor");
  }
}

/// Merges character timings into token timings. Spans must tile the character
/// sequence in order; a span holding more than one Han character is rejected so
/// the caller can re-split it into single-character tokens.
inline std::vector<TokenAlignment> aggregate_alignments(std::span<const CharAlignment> chars,
                                                        std::span<const TokenSpan> spans, double fps,
                                                        const SpecialTokens& sp = {}) {
  if (!(fps > 0.0)) throw Error(ErrorCode::InvalidArgument, "fps must be > 0");
  validate_char_alignments(chars);
  std::vector<TokenAlignment> out;
  out.reserve(spans.size());
  std::size_t expected_first = 0;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto& s = spans[i];
    if (s.first_char > s.last_char || s.last_char >= chars.size())
      throw Error(ErrorCode::InvalidSpans, "span " + std::to_string(i) + " out of range");
    if (s.first_char < expected_first)
      throw Error(ErrorCode::OverlappingSpans, "span " + std::to_string(i) + " overlaps its predecessor");
    if (s.first_char > expected_first)
      throw Error(ErrorCode::InvalidSpans, "span " + std::to_string(i) + " leaves a gap");
    if (sp.is_special(s.token))
      throw Error(ErrorCode::InvalidArgument, "span " + std::to_string(i) + " maps to a special token");
    std::size_t han = 0;
    std::int64_t start_ms = chars[s.first_char].start_ms;
    std::int64_t end_ms = chars[s.first_char].end_ms;
    for (std::size_t c = s.first_char; c <= s.last_char; ++c) {
      for (auto cp : decode_utf8(chars[c].ch)) han += is_han(cp) ? 1 : 0;
      start_ms = std::min(start_ms, chars[c].start_ms);
      end_ms = std::max(end_ms, chars[c].end_ms);
    }
    if (han > 1)
      throw Error(ErrorCode::MultiCharCjkToken, "span " + std::to_string(i) + " covers " + std::to_string(han) +
                                                    " Han characters");
    out.push_back({s.token, ms_to_frame(start_ms, fps), ms_to_frame(end_ms, fps)});
    expected_first = s.last_char + 1;
  }
  if (!spans.empty() && expected_first != chars.size())
    throw Error(ErrorCode::InvalidSpans, "spans do not cover every character");
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

/// Seeded codebook: row t is the clean frame vector of token t (row pad = silence).
inline FrameMatrix make_codebook(std::size_t vocab_size, std::size_t frame_dim, std::uint64_t seed) {
  FrameMatrix book(vocab_size, frame_dim);
  Rng rng(derive_seed(seed, "codebook"));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : book.data) v = u(rng);
  return book;
}

/// Frame matrix for an aligned token sequence: codebook rows plus gaussian noise.
/// Frames not covered by any token get the silence (pad) row.
inline FrameMatrix synthesize_frames(std::span<const TokenAlignment> aligns, std::size_t num_frames,
                                     const FrameMatrix& codebook, double noise_std, std::uint64_t noise_seed,
                                     TokenId silence = 0) {
  FrameMatrix frames(num_frames, codebook.cols);
  for (std::size_t f = 0; f < num_frames; ++f) {
    auto dst = frames.row(f);
    auto src = codebook.row(static_cast<std::size_t>(silence));
    std::copy(src.begin(), src.end(), dst.begin());
  }
  for (const auto& a : aligns) {
    auto src = codebook.row(static_cast<std::size_t>(a.token_id));
    for (auto f = a.start_frame; f <= a.end_frame; ++f) {
      auto dst = frames.row(static_cast<std::size_t>(f));
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  if (noise_std > 0.0) {
    Rng rng(noise_seed);
    std::normal_distribution<double> n(0.0, noise_std);
    for (auto& v : frames.data) v += n(rng);
  }
  return frames;
}

inline std::uint64_t utterance_seed(const CorpusConfig& cfg, std::size_t index) {
  return derive_seed(derive_seed(cfg.seed, "utterance"), index);
}

inline std::uint64_t noise_seed(std::uint64_t utt_seed) { return derive_seed(utt_seed, "noise"); }

inline std::string utterance_id(std::size_t index) {
  std::string digits = std::to_string(index);
  return "utt-" + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

/// One synthetic utterance; depends only on (cfg, index).
inline Utterance gen_utterance(const CorpusConfig& cfg, const FrameMatrix& codebook, std::size_t index,
                               const SpecialTokens& sp = {}) {
  const auto useed = utterance_seed(cfg, index);
  Rng rng(useed);
  std::uniform_int_distribution<std::size_t> n_tokens(cfg.min_tokens, cfg.max_tokens);
  std::uniform_int_distribution<TokenId> token(sp.first_text_id, static_cast<TokenId>(cfg.vocab_size - 1));
  std::uniform_int_distribution<std::size_t> silence(0, cfg.max_edge_silence);
  const double extra_mean = cfg.frames_per_token_mean - static_cast<double>(cfg.min_frames_per_token);
  std::poisson_distribution<int> extra(extra_mean > 0.0 ? extra_mean : 1.0);

  Utterance u;
  u.id = utterance_id(index);
  const auto count = n_tokens(rng);
  std::int32_t frame = static_cast<std::int32_t>(silence(rng));
  for (std::size_t i = 0; i < count; ++i) {
    const TokenId t = token(rng);
    auto dur = cfg.min_frames_per_token + (extra_mean > 0.0 ? static_cast<std::size_t>(extra(rng)) : 0);
    dur = std::min(dur, cfg.max_frames_per_token);
    u.tokens.push_back(t);
    u.alignments.push_back({t, frame, frame + static_cast<std::int32_t>(dur) - 1});
    frame += static_cast<std::int32_t>(dur);
  }
  const auto total = static_cast<std::size_t>(frame) + silence(rng);
  u.frames = synthesize_frames(u.alignments, total, codebook, cfg.noise_std, noise_seed(useed), sp.pad);
  return u;
}

inline std::vector<Utterance> gen_synthetic_corpus(const CorpusConfig& cfg, const SpecialTokens& sp = {}) {
  cfg.validate(sp);
  const auto codebook = make_codebook(cfg.vocab_size, cfg.frame_dim, cfg.seed);
  std::vector<Utterance> out;
  out.reserve(cfg.num_utterances);
  for (std::size_t i = 0; i < cfg.num_utterances; ++i) out.push_back(gen_utterance(cfg, codebook, i, sp));
  return out;
}

inline void validate_utterance(const Utterance& u, const SpecialTokens& sp = {}) {
  if (u.tokens.empty()) throw Error(ErrorCode::InvalidArgument, u.id + ": no tokens");
  if (u.tokens.size() != u.alignments.size())
    throw Error(ErrorCode::InvalidAlignment, u.id + ": tokens/alignments length mismatch");
  for (std::size_t i = 0; i < u.tokens.size(); ++i) {
    const auto& a = u.alignments[i];
    if (sp.is_special(u.tokens[i])) throw Error(ErrorCode::InvalidArgument, u.id + ": special id among tokens");
    if (a.token_id != u.tokens[i]) throw Error(ErrorCode::InvalidAlignment, u.id + ": alignment token mismatch");
    if (a.start_frame < 0 || a.start_frame > a.end_frame)
      throw Error(ErrorCode::InvalidAlignment, u.id + ": bad frame span");
    if (i > 0 && (a.end_frame < u.alignments[i - 1].end_frame || a.start_frame < u.alignments[i - 1].start_frame))
      throw Error(ErrorCode::InvalidAlignment, u.id + ": alignments not monotone");
  }
  if (static_cast<std::size_t>(u.alignments.back().end_frame) >= u.num_frames())
    throw Error(ErrorCode::InvalidAlignment, u.id + ": alignment past the last frame");
}

// ---------------------------------------------------------------------------
// JSON Lines I/O

/// Parameters needed to regenerate frames for records written without them.
struct LazyFrames {
  std::uint64_t codebook_seed = 0;
  std::size_t vocab_size = 0;
  double noise_std = 0.0;
};

inline nlohmann::json to_json(const Utterance& u) {
  nlohmann::json j;
  j["id"] = u.id;
  j["tokens"] = u.tokens;
  auto& al = j["alignments"] = nlohmann::json::array();
  for (const auto& a : u.alignments) al.push_back({a.start_frame, a.end_frame});
  j["num_frames"] = u.frames.rows;
  j["frame_dim"] = u.frames.cols;
  j["frames"] = u.frames.data;
  return j;
}

/// Compact record: frames are replaced by the seeds that regenerate them.
inline nlohmann::json to_json_lazy(const Utterance& u, const CorpusConfig& cfg, std::size_t index) {
  auto j = to_json(u);
  j.erase("frames");
  j["frames_seed"] = noise_seed(utterance_seed(cfg, index));
  j["codebook_seed"] = cfg.seed;
  j["vocab_size"] = cfg.vocab_size;
  j["noise_std"] = cfg.noise_std;
  return j;
}

inline Utterance utterance_from_json(const nlohmann::json& j, const SpecialTokens& sp = {}) {
  try {
    Utterance u;
    u.id = j.at("id").get<std::string>();
    u.tokens = j.at("tokens").get<std::vector<TokenId>>();
    const auto& al = j.at("alignments");
    if (al.size() != u.tokens.size()) throw Error(ErrorCode::Parse, u.id + ": alignment count mismatch");
    for (std::size_t i = 0; i < al.size(); ++i)
      u.alignments.push_back({u.tokens[i], al[i].at(0).get<std::int32_t>(), al[i].at(1).get<std::int32_t>()});
    const auto rows = j.at("num_frames").get<std::size_t>();
    const auto cols = j.at("frame_dim").get<std::size_t>();
    if (j.contains("frames")) {
      u.frames = FrameMatrix(rows, cols);
      u.frames.data = j.at("frames").get<std::vector<double>>();
      if (u.frames.data.size() != rows * cols) throw Error(ErrorCode::Parse, u.id + ": frames size mismatch");
    } else {
      const auto book = make_codebook(j.at("vocab_size").get<std::size_t>(), cols,
                                      j.at("codebook_seed").get<std::uint64_t>());
      u.frames = synthesize_frames(u.alignments, rows, book, j.at("noise_std").get<double>(),
                                   j.at("frames_seed").get<std::uint64_t>(), sp.pad);
    }
    validate_utterance(u, sp);
    return u;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, e.what());
  }
}

inline void write_corpus(std::ostream& os, std::span<const Utterance> corpus) {
  for (const auto& u : corpus) os << to_json(u).dump() << '\n';
}

inline std::vector<Utterance> read_corpus(std::istream& is, const SpecialTokens& sp = {}) {
  std::vector<Utterance> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(utterance_from_json(nlohmann::json::parse(line), sp));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Parse, e.what());
    }
  }
  return out;
}

/// Reads {"char": ..., "start_ms": ..., "end_ms": ...} records, one per line.
inline std::vector<CharAlignment> read_char_alignments(std::istream& is) {
  std::vector<CharAlignment> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("char").get<std::string>(), j.at("start_ms").get<std::int64_t>(),
                     j.at("end_ms").get<std::int64_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Parse, e.what());
    }
  }
  validate_char_alignments(out);
  return out;
}

}  // namespace uniasr
