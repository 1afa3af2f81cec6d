// Copyright 2026 The Recog Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <random>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

namespace recog {

using RecordId = std::uint64_t;

enum class ErrorCode {
  DimMismatch,
  DuplicateId,
  UnsupportedOperation,
  UnknownId,
  LengthMismatch,
  ZeroVector,
  DimNotByteAligned,
  NonFinite,
  MetricMismatch,
  NotTrained,
  BadNprobe,
  TooFewSamples,
  EfTooSmall,
  BadK,
  ZeroFeature,
  BadLabel,
  ShapeMismatch,
  BadAlpha,
  BadArgument,
  DivergenceDetected,
  RowCountMismatch,
  MalformedRow,
  BadHeader,
  VersionMismatch,
  ChecksumMismatch,
  Truncated,
  IoError,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnsupportedOperation: return "UnsupportedOperation";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimNotByteAligned: return "DimNotByteAligned";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::MetricMismatch: return "MetricMismatch";
    case ErrorCode::NotTrained: return "NotTrained";
    case ErrorCode::BadNprobe: return "BadNprobe";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::EfTooSmall: return "EfTooSmall";
    case ErrorCode::BadK: return "BadK";
    case ErrorCode::ZeroFeature: return "ZeroFeature";
    case ErrorCode::BadLabel: return "BadLabel";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BadAlpha: return "BadAlpha";
    case ErrorCode::BadArgument: return "BadArgument";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::RowCountMismatch: return "RowCountMismatch";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::BadHeader: return "BadHeader";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure carries the operation that raised it ("index_ivf.search")
/// and a machine-checkable code. what() reads "<operation>: <Code>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string operation, const std::string& detail)
      : std::runtime_error(operation + ": " + std::string(to_string(code)) + ": " + detail),
        code_(code),
        operation_(std::move(operation)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& operation() const noexcept { return operation_; }

 private:
  ErrorCode code_;
  std::string operation_;
};

enum class MetricKind : std::uint8_t { L2 = 0, InnerProduct = 1, Cosine = 2, Hamming = 3 };
enum class PayloadKind : std::uint8_t { Float32 = 0, Binary = 1 };
enum class IndexKind : std::uint8_t { Flat = 0, Ivf = 1, Hnsw = 2 };

inline constexpr std::string_view to_string(MetricKind m) {
  switch (m) {
    case MetricKind::L2: return "l2";
    case MetricKind::InnerProduct: return "ip";
    case MetricKind::Cosine: return "cosine";
    case MetricKind::Hamming: return "hamming";
  }
  return "?";
}

inline constexpr std::string_view to_string(IndexKind k) {
  switch (k) {
    case IndexKind::Flat: return "flat";
    case IndexKind::Ivf: return "ivf";
    case IndexKind::Hnsw: return "hnsw";
  }
  return "?";
}

inline std::optional<MetricKind> parse_metric(std::string_view s) {
  if (s == "l2") return MetricKind::L2;
  if (s == "ip" || s == "inner_product") return MetricKind::InnerProduct;
  if (s == "cosine") return MetricKind::Cosine;
  if (s == "hamming") return MetricKind::Hamming;
  return std::nullopt;
}

inline std::optional<IndexKind> parse_index_kind(std::string_view s) {
  if (s == "flat") return IndexKind::Flat;
  if (s == "ivf") return IndexKind::Ivf;
  if (s == "hnsw") return IndexKind::Hnsw;
  return std::nullopt;
}

constexpr PayloadKind payload_kind_for(MetricKind m) {
  return m == MetricKind::Hamming ? PayloadKind::Binary : PayloadKind::Float32;
}

/// Fixed-dimension real feature vector. Components are always finite.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;

  explicit EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {
    if (values_.empty()) throw Error(ErrorCode::BadArgument, "core.EmbeddingVector", "dim must be positive");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) {
        throw Error(ErrorCode::NonFinite, "core.EmbeddingVector",
                    "component " + std::to_string(i) + " is not finite");
      }
    }
  }

  EmbeddingVector(std::initializer_list<float> values) : EmbeddingVector(std::vector<float>(values)) {}

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<float> values_;
};

/// Bit-packed hash code. Bit i lives in byte i/8 at position 7 - i%8
/// (most-significant bit holds the lowest component index).
class BinaryCode {
 public:
  BinaryCode() = default;

  BinaryCode(std::size_t nbits, std::vector<std::uint8_t> bytes) : nbits_(nbits), bytes_(std::move(bytes)) {
    if (nbits_ == 0 || nbits_ % 8 != 0) {
      throw Error(ErrorCode::DimNotByteAligned, "core.BinaryCode",
                  "nbits must be a positive multiple of 8, got " + std::to_string(nbits_));
    }
    if (bytes_.size() != nbits_ / 8) {
      throw Error(ErrorCode::LengthMismatch, "core.BinaryCode",
                  "expected " + std::to_string(nbits_ / 8) + " bytes, got " + std::to_string(bytes_.size()));
    }
  }

  std::size_t nbits() const noexcept { return nbits_; }
  std::size_t size_bytes() const noexcept { return bytes_.size(); }
  std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }

  bool bit(std::size_t i) const { return (bytes_[i / 8] >> (7 - i % 8)) & 1u; }

  friend bool operator==(const BinaryCode&, const BinaryCode&) = default;

 private:
  std::size_t nbits_ = 0;
  std::vector<std::uint8_t> bytes_;
};

using Payload = std::variant<EmbeddingVector, BinaryCode>;

inline PayloadKind kind_of(const Payload& p) {
  return std::holds_alternative<BinaryCode>(p) ? PayloadKind::Binary : PayloadKind::Float32;
}

/// Components for float payloads, bits for binary ones.
inline std::size_t width_of(const Payload& p) {
  return std::visit(
      [](const auto& v) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, BinaryCode>) {
          return v.nbits();
        } else {
          return v.dim();
        }
      },
      p);
}

struct GalleryRecord {
  RecordId id = 0;
  std::string label;
  Payload payload;
};

struct SearchResult {
  RecordId id = 0;
  std::string label;
  double distance = 0.0;

  friend bool operator==(const SearchResult&, const SearchResult&) = default;
};

/// The one ordering used everywhere: (distance, id) lexicographic.
struct Neighbor {
  double distance;
  RecordId id;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  }
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Bounded max-heap keeping the k smallest neighbors seen so far.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k + 1); }

  std::size_t capacity() const noexcept { return k_; }
  std::size_t size() const noexcept { return heap_.size(); }
  bool full() const noexcept { return heap_.size() >= k_; }

  /// Largest kept entry; only meaningful when size() > 0.
  const Neighbor& worst() const { return heap_.front(); }

  void push(Neighbor n) {
    if (k_ == 0) return;
    if (heap_.size() < k_) {
      heap_.push_back(n);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (n < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = n;
      std::push_heap(heap_.begin(), heap_.end());
    }
  }

  std::vector<Neighbor> take_sorted() && {
    std::sort(heap_.begin(), heap_.end());
    return std::move(heap_);
  }

 private:
  std::size_t k_;
  std::vector<Neighbor> heap_;
};

/// Optional per-call overrides. Indices ignore fields that do not apply to them.
struct SearchParams {
  std::optional<std::size_t> nprobe;
  std::optional<std::size_t> ef_search;
};

/// Uniform contract over Flat, IVF and HNSW. Search is const and never
/// mutates shared state, so many readers may search concurrently; add,
/// remove and training need exclusive access.
class Index {
 public:
  virtual ~Index() = default;

  virtual IndexKind kind() const = 0;
  virtual MetricKind metric() const = 0;
  /// Components for float indices, bits for Hamming indices.
  virtual std::size_t dim() const = 0;
  virtual std::size_t size() const = 0;
  virtual bool contains(RecordId id) const = 0;

  /// All-or-nothing: on error nothing is inserted.
  virtual std::size_t add(std::span<const GalleryRecord> records) = 0;
  virtual std::size_t remove(std::span<const RecordId> ids) = 0;
  virtual std::vector<SearchResult> search(const Payload& query, std::size_t k,
                                           const SearchParams& params) const = 0;

  std::vector<SearchResult> search(const Payload& query, std::size_t k) const { return search(query, k, {}); }
};

namespace detail {

inline std::vector<SearchResult> to_results(std::vector<Neighbor> neighbors, MetricKind metric) {
  std::vector<SearchResult> out;
  out.reserve(neighbors.size());
  for (const auto& n : neighbors) {
    // L2 is selected on squared distance and reported as Euclidean.
    double d = metric == MetricKind::L2 ? std::sqrt(n.distance) : n.distance;
    out.push_back({n.id, {}, d});
  }
  return out;
}

inline void check_k(std::size_t k, const char* op) {
  if (k == 0) throw Error(ErrorCode::BadK, op, "k must be >= 1");
}

/// Uniform in [0, 1) from the top 53 bits; identical on every standard library,
/// unlike std::uniform_real_distribution.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Standard normal via Box-Muller over uniform01, for the same reason.
inline double normal01(std::mt19937_64& rng) {
  double u1 = 1.0 - uniform01(rng);
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace detail

/// Thread count used when a caller does not specify one.
inline std::size_t default_threads() {
  auto n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

/// Runs fn(i) for i in [0, n) over at most `threads` workers. Each index is
/// visited exactly once and owns its output slot, so results do not depend on
/// scheduling.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(threads);
  std::exception_ptr failure;
  std::mutex failure_mu;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
}

/// Searches every query, one result list per query, in query order.
inline std::vector<std::vector<SearchResult>> search_batch(const Index& index, std::span<const Payload> queries,
                                                           std::size_t k, const SearchParams& params = {},
                                                           std::size_t threads = 1) {
  std::vector<std::vector<SearchResult>> out(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) { out[i] = index.search(queries[i], k, params); });
  return out;
}

}  // namespace recog
