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

#include <unordered_map>
#include <unordered_set>

#include "recog/metrics.hpp"

namespace recog::detail {

/// A payload converted to the form an index stores: float components or
/// packed code bytes. Under Cosine the components stay raw and norm
/// holds |x|.
struct PreparedPayload {
  std::vector<float> floats;
  std::vector<std::uint8_t> bytes;
  double norm = 1.0;
};

/// Validates payload kind and width against an index configuration and
/// converts it to storage form.
inline PreparedPayload prepare_payload(const Payload& p, MetricKind metric, std::size_t width, const char* op) {
  const PayloadKind want = payload_kind_for(metric);
  if (kind_of(p) != want) {
    throw Error(ErrorCode::MetricMismatch, op,
                std::string("metric ") + std::string(to_string(metric)) +
                    (want == PayloadKind::Binary ? " needs binary codes" : " needs float vectors"));
  }
  if (width_of(p) != width) {
    throw Error(ErrorCode::DimMismatch, op,
                "payload width " + std::to_string(width_of(p)) + " vs index width " + std::to_string(width));
  }
  PreparedPayload out;
  if (want == PayloadKind::Binary) {
    auto bytes = std::get<BinaryCode>(p).bytes();
    out.bytes.assign(bytes.begin(), bytes.end());
  } else {
    auto values = std::get<EmbeddingVector>(p).values();
    out.floats.assign(values.begin(), values.end());
    if (metric == MetricKind::Cosine) out.norm = kernels::norm(values, op);
  }
  return out;
}

/// Contiguous row-major payload array with a parallel id array.
class RowStore {
 public:
  RowStore() = default;
  RowStore(MetricKind metric, std::size_t width)
      : metric_(metric),
        kind_(payload_kind_for(metric)),
        width_(width),
        stride_(kind_ == PayloadKind::Binary ? width / 8 : width) {}

  MetricKind metric() const noexcept { return metric_; }
  PayloadKind kind() const noexcept { return kind_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t stride() const noexcept { return stride_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  RecordId id(std::size_t row) const { return ids_[row]; }
  std::span<const RecordId> ids() const noexcept { return ids_; }

  std::span<const float> floats(std::size_t row) const {
    return {floats_.data() + row * stride_, stride_};
  }
  std::span<const std::uint8_t> bytes(std::size_t row) const {
    return {bytes_.data() + row * stride_, stride_};
  }
  double norm(std::size_t row) const { return metric_ == MetricKind::Cosine ? norms_[row] : 1.0; }

  void append(RecordId id, const PreparedPayload& p) {
    ids_.push_back(id);
    if (kind_ == PayloadKind::Binary) {
      bytes_.insert(bytes_.end(), p.bytes.begin(), p.bytes.end());
    } else {
      floats_.insert(floats_.end(), p.floats.begin(), p.floats.end());
      if (metric_ == MetricKind::Cosine) norms_.push_back(p.norm);
    }
  }

  /// Moves the last row into `row` and drops the tail. Returns the id that
  /// now occupies `row`, or nullopt when `row` was the last one.
  std::optional<RecordId> swap_remove(std::size_t row) {
    const std::size_t last = size() - 1;
    std::optional<RecordId> moved;
    if (row != last) {
      ids_[row] = ids_[last];
      if (kind_ == PayloadKind::Binary) {
        std::copy_n(bytes_.begin() + last * stride_, stride_, bytes_.begin() + row * stride_);
      } else {
        std::copy_n(floats_.begin() + last * stride_, stride_, floats_.begin() + row * stride_);
        if (metric_ == MetricKind::Cosine) norms_[row] = norms_[last];
      }
      moved = ids_[row];
    }
    ids_.pop_back();
    if (kind_ == PayloadKind::Binary) {
      bytes_.resize(last * stride_);
    } else {
      floats_.resize(last * stride_);
      if (metric_ == MetricKind::Cosine) norms_.pop_back();
    }
    return moved;
  }

  /// Ranking distance between a stored row and a prepared query.
  double distance(std::size_t row, const PreparedPayload& q) const {
    if (kind_ == PayloadKind::Binary) return static_cast<double>(kernels::hamming(bytes(row), q.bytes));
    return kernels::ranking_distance(metric_, floats(row), q.floats, norm(row), q.norm);
  }

  /// Ranking distance between two stored rows.
  double distance(std::size_t a, std::size_t b) const {
    if (kind_ == PayloadKind::Binary) return static_cast<double>(kernels::hamming(bytes(a), bytes(b)));
    return kernels::ranking_distance(metric_, floats(a), floats(b), norm(a), norm(b));
  }

  std::size_t payload_bytes() const noexcept { return floats_.size() * sizeof(float) + bytes_.size(); }

  const std::vector<float>& raw_floats() const noexcept { return floats_; }
  const std::vector<std::uint8_t>& raw_bytes() const noexcept { return bytes_; }

  /// Restores a store from serialized parts; sizes must already be validated.
  static RowStore from_parts(MetricKind metric, std::size_t width, std::vector<RecordId> ids,
                             std::vector<float> floats, std::vector<std::uint8_t> bytes) {
    RowStore s(metric, width);
    s.ids_ = std::move(ids);
    s.floats_ = std::move(floats);
    s.bytes_ = std::move(bytes);
    if (metric == MetricKind::Cosine) {
      s.norms_.reserve(s.ids_.size());
      for (std::size_t r = 0; r < s.ids_.size(); ++r) {
        s.norms_.push_back(kernels::norm(s.floats(r), "storage.load"));
      }
    }
    return s;
  }

 private:
  MetricKind metric_ = MetricKind::L2;
  PayloadKind kind_ = PayloadKind::Float32;
  std::size_t width_ = 0;
  std::size_t stride_ = 0;
  std::vector<RecordId> ids_;
  std::vector<float> floats_;
  std::vector<std::uint8_t> bytes_;
  std::vector<double> norms_;  // Cosine only
};

/// Checks a batch for in-batch and already-present duplicate ids, then
/// prepares every payload. Throws before anything is inserted.
template <typename ContainsFn>
std::vector<PreparedPayload> prepare_batch(std::span<const GalleryRecord> records, MetricKind metric,
                                           std::size_t width, const char* op, ContainsFn&& contains) {
  std::unordered_set<RecordId> seen;
  seen.reserve(records.size());
  std::vector<PreparedPayload> prepared;
  prepared.reserve(records.size());
  for (const auto& r : records) {
    if (contains(r.id) || !seen.insert(r.id).second) {
      throw Error(ErrorCode::DuplicateId, op, "id " + std::to_string(r.id) + " already present");
    }
    prepared.push_back(prepare_payload(r.payload, metric, width, op));
  }
  return prepared;
}

}  // namespace recog::detail
