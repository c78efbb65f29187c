#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "uniasr/error.hpp"
#include "uniasr/tokens.hpp"

namespace uniasr {

/// Cache rows above some length, detached so they can be re-attached later.
/// Beam hypotheses each own one of these above the turn's prefill boundary.
struct KVSuffix {
  std::vector<std::vector<double>> keys;    // per layer, rows x width
  std::vector<std::vector<double>> values;  // per layer, rows x width
  std::vector<Position> positions;

  std::size_t size() const { return positions.size(); }
};

/// Per-layer append-only key/value store.
///
/// All layers share one length. `mark()` records a prefill boundary; rows below
/// the most recent mark are sealed and `rollback` refuses to cut into them.
/// Every row also remembers the Position it was computed for, which lets
/// oracle models and tests inspect the context.
class KVCache {
 public:
  KVCache() = default;
  KVCache(std::size_t num_layers, std::size_t width)
      : width_(width), keys_(num_layers), values_(num_layers) {}

  std::size_t size() const { return positions_.size(); }
  std::size_t num_layers() const { return keys_.size(); }
  std::size_t width() const { return width_; }
  const std::vector<Position>& positions() const { return positions_; }

  /// Grows every layer by `pos.size()` zeroed rows and returns the old length.
  /// The model fills the new rows through mutable_key / mutable_value.
  std::size_t extend(std::span<const Position> pos) {
    const auto old = size();
    positions_.insert(positions_.end(), pos.begin(), pos.end());
    for (std::size_t l = 0; l < num_layers(); ++l) {
      keys_[l].resize(size() * width_, 0.0);
      values_[l].resize(size() * width_, 0.0);
    }
    return old;
  }

  std::span<const double> key(std::size_t layer, std::size_t row) const {
    return {keys_[layer].data() + row * width_, width_};
  }
  std::span<const double> value(std::size_t layer, std::size_t row) const {
    return {values_[layer].data() + row * width_, width_};
  }
  std::span<double> mutable_key(std::size_t layer, std::size_t row) {
    check_writable(row);
    return {keys_[layer].data() + row * width_, width_};
  }
  std::span<double> mutable_value(std::size_t layer, std::size_t row) {
    check_writable(row);
    return {values_[layer].data() + row * width_, width_};
  }

  void mark() { marks_.push_back(size()); }
  const std::vector<std::size_t>& marks() const { return marks_; }
  std::size_t sealed_length() const { return marks_.empty() ? 0 : marks_.back(); }

  /// Truncates to `new_len`. Returns the number of rows removed.
  std::size_t rollback(std::size_t new_len) {
    if (new_len > size()) throw Error(ErrorCode::InvalidArgument, "rollback target beyond cache length");
    if (new_len < sealed_length())
      throw Error(ErrorCode::RollbackPastChunkBoundary, "rollback to " + std::to_string(new_len) +
                                                            " crosses sealed boundary " +
                                                            std::to_string(sealed_length()));
    const auto removed = size() - new_len;
    positions_.resize(new_len);
    for (std::size_t l = 0; l < num_layers(); ++l) {
      keys_[l].resize(new_len * width_);
      values_[l].resize(new_len * width_);
    }
    return removed;
  }

  KVSuffix suffix(std::size_t from) const {
    KVSuffix s;
    s.positions.assign(positions_.begin() + static_cast<std::ptrdiff_t>(from), positions_.end());
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const auto off = static_cast<std::ptrdiff_t>(from * width_);
      s.keys.emplace_back(keys_[l].begin() + off, keys_[l].end());
      s.values.emplace_back(values_[l].begin() + off, values_[l].end());
    }
    return s;
  }

  void append(const KVSuffix& s) {
    positions_.insert(positions_.end(), s.positions.begin(), s.positions.end());
    for (std::size_t l = 0; l < num_layers(); ++l) {
      keys_[l].insert(keys_[l].end(), s.keys[l].begin(), s.keys[l].end());
      values_[l].insert(values_[l].end(), s.values[l].begin(), s.values[l].end());
    }
  }

  /// FNV-1a over the raw bytes of rows [0, rows) in every layer plus their positions.
  std::uint64_t checksum(std::size_t rows) const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    const auto feed = [&h](const void* p, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001B3ULL;
      }
    };
    for (std::size_t l = 0; l < num_layers(); ++l) {
      feed(keys_[l].data(), rows * width_ * sizeof(double));
      feed(values_[l].data(), rows * width_ * sizeof(double));
    }
    for (std::size_t i = 0; i < rows; ++i) {
      feed(&positions_[i].kind, sizeof(positions_[i].kind));
      feed(&positions_[i].value, sizeof(positions_[i].value));
    }
    return h;
  }

  /// Fault injection for tests: flips one bit of key storage, bypassing the seal.
  void flip_key_byte_for_testing(std::size_t layer, std::size_t byte_offset) {
    auto* bytes = reinterpret_cast<unsigned char*>(keys_.at(layer).data());
    bytes[byte_offset] ^= 0x01;
  }

 private:
  void check_writable(std::size_t row) const {
    if (row < sealed_length())
      throw Error(ErrorCode::ImmutabilityViolation, "write to sealed cache row " + std::to_string(row));
  }

  std::size_t width_ = 0;
  std::vector<std::vector<double>> keys_;
  std::vector<std::vector<double>> values_;
  std::vector<Position> positions_;
  std::vector<std::size_t> marks_;
};

}  // namespace uniasr
