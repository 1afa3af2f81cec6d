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

#include "recog/serialize.hpp"
#include "recog/storage.hpp"

namespace recog {

/// Exhaustive exact search. Also serves as ground truth for IVF and HNSW.
class FlatIndex final : public Index {
 public:
  FlatIndex(MetricKind metric, std::size_t dim) : store_(metric, dim) {
    if (dim == 0) throw Error(ErrorCode::BadArgument, "index_flat.create", "dim must be positive");
    if (metric == MetricKind::Hamming && dim % 8 != 0) {
      throw Error(ErrorCode::DimNotByteAligned, "index_flat.create", "hamming width must be a multiple of 8");
    }
  }

  IndexKind kind() const override { return IndexKind::Flat; }
  MetricKind metric() const override { return store_.metric(); }
  std::size_t dim() const override { return store_.width(); }
  std::size_t size() const override { return store_.size(); }
  bool contains(RecordId id) const override { return rows_.contains(id); }

  std::size_t add(std::span<const GalleryRecord> records) override {
    auto prepared = detail::prepare_batch(records, metric(), dim(), "index_flat.add",
                                          [this](RecordId id) { return contains(id); });
    for (std::size_t i = 0; i < records.size(); ++i) {
      rows_.emplace(records[i].id, store_.size());
      store_.append(records[i].id, prepared[i]);
    }
    return records.size();
  }

  std::size_t remove(std::span<const RecordId> ids) override {
    std::size_t removed = 0;
    for (RecordId id : ids) {
      auto it = rows_.find(id);
      if (it == rows_.end()) continue;
      std::size_t row = it->second;
      rows_.erase(it);
      if (auto moved = store_.swap_remove(row)) rows_[*moved] = row;
      ++removed;
    }
    return removed;
  }

  using Index::search;
  std::vector<SearchResult> search(const Payload& query, std::size_t k, const SearchParams&) const override {
    detail::check_k(k, "index_flat.search");
    auto q = detail::prepare_payload(query, metric(), dim(), "index_flat.search");
    TopK top(std::min(k, size()));
    for (std::size_t row = 0; row < store_.size(); ++row) top.push({store_.distance(row, q), store_.id(row)});
    return detail::to_results(std::move(top).take_sorted(), metric());
  }

  std::size_t payload_bytes() const noexcept { return store_.payload_bytes(); }
  const detail::RowStore& store() const noexcept { return store_; }

  void serialize(io::ByteWriter& w) const {
    w.put<std::uint64_t>(store_.size());
    w.put_array<RecordId>(store_.ids());
    w.put_array<float>(store_.raw_floats());
    w.put_array<std::uint8_t>(store_.raw_bytes());
  }

  static FlatIndex deserialize(io::ByteReader& r, MetricKind metric, std::size_t dim) {
    FlatIndex index(metric, dim);
    auto n = r.get<std::uint64_t>();
    auto ids = r.get_array<RecordId>(n);
    const bool binary = payload_kind_for(metric) == PayloadKind::Binary;
    const std::size_t stride = binary ? dim / 8 : dim;
    auto floats = r.get_array<float>(binary ? 0 : n * stride);
    auto bytes = r.get_array<std::uint8_t>(binary ? n * stride : 0);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!index.rows_.emplace(ids[i], i).second) r.malformed("duplicate id in flat index body");
    }
    index.store_ = detail::RowStore::from_parts(metric, dim, std::move(ids), std::move(floats), std::move(bytes));
    return index;
  }

 private:
  detail::RowStore store_;
  std::unordered_map<RecordId, std::size_t> rows_;
};

}  // namespace recog
