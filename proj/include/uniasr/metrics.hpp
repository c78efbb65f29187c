#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uniasr/corpus.hpp"
#include "uniasr/engine.hpp"
#include "uniasr/error.hpp"
#include "uniasr/tokens.hpp"

namespace uniasr {

struct ErrorCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t ref_len = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  double wer() const {
    if (ref_len == 0) throw Error(ErrorCode::InvalidArgument, "WER undefined for an empty reference");
    return static_cast<double>(errors()) / static_cast<double>(ref_len);
  }
  ErrorCounts& operator+=(const ErrorCounts& o) {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    ref_len += o.ref_len;
    return *this;
  }
  friend bool operator==(const ErrorCounts&, const ErrorCounts&) = default;
};

enum class EditOp : std::uint8_t { Match, Substitute, Insert, Delete };

struct AlignedPair {
  EditOp op;
  std::optional<std::size_t> ref;  // absent for insertions
  std::optional<std::size_t> hyp;  // absent for deletions
};

struct EditAlignment {
  ErrorCounts counts;
  std::vector<AlignedPair> pairs;  // in reference order
};

/// Levenshtein alignment with unit costs. Among equal-cost alignments the
/// backtrace prefers match/substitution, then insertion, then deletion.
inline EditAlignment edit_alignment(std::span<const TokenId> ref, std::span<const TokenId> hyp) {
  const auto n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  const auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1] ? 1u : 0u), at(i, j - 1) + 1, at(i - 1, j) + 1});

  EditAlignment out;
  out.counts.ref_len = n;
  auto i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1] ? 1u : 0u)) {
      const bool same = ref[i - 1] == hyp[j - 1];
      out.pairs.push_back({same ? EditOp::Match : EditOp::Substitute, i - 1, j - 1});
      if (!same) ++out.counts.substitutions;
      --i;
      --j;
    } else if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      out.pairs.push_back({EditOp::Insert, std::nullopt, j - 1});
      ++out.counts.insertions;
      --j;
    } else {
      out.pairs.push_back({EditOp::Delete, i - 1, std::nullopt});
      ++out.counts.deletions;
      --i;
    }
  }
  std::reverse(out.pairs.begin(), out.pairs.end());
  return out;
}

inline ErrorCounts edit_distance(std::span<const TokenId> ref, std::span<const TokenId> hyp) {
  return edit_alignment(ref, hyp).counts;
}

struct LatencyReport {
  std::vector<double> emission_ms;      // per aligned reference token
  std::vector<double> finalization_ms;  // same order
  double mean_emission_ms = 0.0;
  double mean_finalization_ms = 0.0;
  double max_spike_ms = 0.0;  // largest finalization latency of any token
};

/// Latency of each hypothesis token aligned to a reference token, against the
/// time the token's last frame ends: (chunk + 1) * chunk_ms - (end_frame + 1) / fps * 1000,
/// clamped at 0. Chunk arrival is idealized as instantaneous compute.
inline LatencyReport emission_latency(std::span<const EmissionRecord> emissions, std::span<const TokenAlignment> ref,
                                      double chunk_ms, double fps) {
  std::vector<const EmissionRecord*> standing;
  std::vector<TokenId> hyp, ref_tokens;
  for (const auto& r : emissions)
    if (!r.dropped) {
      standing.push_back(&r);
      hyp.push_back(r.token);
    }
  for (const auto& a : ref) ref_tokens.push_back(a.token_id);

  const auto latency = [&](std::int64_t chunk, std::int32_t end_frame) {
    const double arrival = static_cast<double>(chunk + 1) * chunk_ms;
    const double spoken = static_cast<double>(end_frame + 1) / fps * 1000.0;
    return std::max(0.0, arrival - spoken);
  };

  LatencyReport rep;
  for (const auto& p : edit_alignment(ref_tokens, hyp).pairs) {
    if (!p.ref || !p.hyp) continue;
    const auto& rec = *standing[*p.hyp];
    const auto end = ref[*p.ref].end_frame;
    const auto fin = rec.finalize_chunk < 0 ? rec.emit_chunk : std::max(rec.finalize_chunk, rec.emit_chunk);
    rep.emission_ms.push_back(latency(rec.emit_chunk, end));
    rep.finalization_ms.push_back(latency(fin, end));
  }
  if (!rep.emission_ms.empty()) {
    const auto count = static_cast<double>(rep.emission_ms.size());
    for (std::size_t i = 0; i < rep.emission_ms.size(); ++i) {
      rep.mean_emission_ms += rep.emission_ms[i] / count;
      rep.mean_finalization_ms += rep.finalization_ms[i] / count;
      rep.max_spike_ms = std::max(rep.max_spike_ms, rep.finalization_ms[i]);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Ablation tables

/// Errors of one utterance decoded under one configuration. `set` names an
/// evaluation subset as "dataset/subset" (or just "dataset").
struct UtteranceResult {
  std::string set;
  double chunk_ms = 0.0;
  std::string strategy;
  std::string utterance_id;
  ErrorCounts errors;
};

struct ReportRow {
  double chunk_ms = 0.0;
  std::string strategy;
  std::vector<double> wer_percent;  // one per report set, in Report::sets order
  double avg_percent = 0.0;         // arithmetic mean over sets
};

struct Report {
  std::vector<std::string> sets;
  std::vector<ReportRow> rows;
};

/// The canonical strategy order of the ablation table.
inline std::vector<std::string> default_strategy_order() {
  return {"greedy", "greedy-fallback", "beam3", "beam3-fallback"};
}

/// One row per (chunk_ms, strategy): longer chunks first, strategies in
/// `strategy_order` (others after, by name). Sets appear in sorted order. A
/// set's WER pools errors over its utterances.
inline Report summarize(std::span<const UtteranceResult> results,
                        const std::vector<std::string>& strategy_order = default_strategy_order()) {
  if (results.empty()) throw Error(ErrorCode::InvalidArgument, "summarize needs at least one result");
  const auto rank = [&](const std::string& s) {
    const auto it = std::find(strategy_order.begin(), strategy_order.end(), s);
    return static_cast<std::size_t>(it - strategy_order.begin());
  };
  struct Key {
    double chunk_ms;
    std::size_t rank;
    std::string strategy;
    bool operator<(const Key& o) const {
      if (chunk_ms != o.chunk_ms) return chunk_ms > o.chunk_ms;
      if (rank != o.rank) return rank < o.rank;
      return strategy < o.strategy;
    }
  };
  std::map<Key, std::map<std::string, ErrorCounts>> cells;
  std::vector<std::string> sets;
  for (const auto& r : results) {
    cells[{r.chunk_ms, rank(r.strategy), r.strategy}][r.set] += r.errors;
    sets.push_back(r.set);
  }
  std::sort(sets.begin(), sets.end());
  sets.erase(std::unique(sets.begin(), sets.end()), sets.end());

  Report rep;
  rep.sets = sets;
  for (const auto& [key, by_set] : cells) {
    ReportRow row{key.chunk_ms, key.strategy, {}, 0.0};
    for (const auto& s : sets) {
      const auto it = by_set.find(s);
      const double w = it == by_set.end() || it->second.ref_len == 0 ? 0.0 : 100.0 * it->second.wer();
      row.wer_percent.push_back(w);
      row.avg_percent += w / static_cast<double>(sets.size());
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

inline std::string format_fixed(double v, int decimals = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

namespace detail {

inline std::string dataset_of(const std::string& set) { return set.substr(0, set.find('/')); }

}  // namespace detail

/// One line per row: subsets of a dataset joined by " | ", datasets by ", ",
/// then the average, e.g. "2.46 | 3.54, 2.74 | 6.65, avg 3.85".
inline std::string format_compact(const ReportRow& row, const std::vector<std::string>& sets) {
  std::string out;
  for (std::size_t i = 0; i < row.wer_percent.size(); ++i) {
    if (i > 0) out += detail::dataset_of(sets.at(i)) == detail::dataset_of(sets.at(i - 1)) ? " | " : ", ";
    out += format_fixed(row.wer_percent[i]);
  }
  return out + ", avg " + format_fixed(row.avg_percent);
}

inline std::string render_markdown(const Report& rep) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> head{"Chunk (ms)", "Method"};
  for (const auto& s : rep.sets) head.push_back(s);
  head.push_back("Avg");
  cells.push_back(head);
  for (const auto& r : rep.rows) {
    std::vector<std::string> line{format_fixed(r.chunk_ms, 0), r.strategy};
    for (double w : r.wer_percent) line.push_back(format_fixed(w));
    line.push_back(format_fixed(r.avg_percent));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(head.size(), 3);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  const auto emit = [&](const std::vector<std::string>& line) {
    std::string s = "|";
    for (std::size_t c = 0; c < line.size(); ++c) s += " " + line[c] + std::string(width[c] - line[c].size(), ' ') + " |";
    return s + "\n";
  };
  std::string out = emit(cells[0]) + "|";
  for (auto w : width) out += std::string(w + 2, '-') + "|";
  out += "\n";
  for (std::size_t i = 1; i < cells.size(); ++i) out += emit(cells[i]);
  return out;
}

inline std::string render_csv(const Report& rep) {
  std::string out = "chunk_ms,strategy";
  for (const auto& s : rep.sets) out += "," + s;
  out += ",avg\n";
  for (const auto& r : rep.rows) {
    out += format_fixed(r.chunk_ms, 0) + "," + r.strategy;
    for (double w : r.wer_percent) out += "," + format_fixed(w, 4);
    out += "," + format_fixed(r.avg_percent, 4) + "\n";
  }
  return out;
}

}  // namespace uniasr
