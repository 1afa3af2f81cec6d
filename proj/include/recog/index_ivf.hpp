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

#include "recog/kmeans.hpp"
#include "recog/serialize.hpp"
#include "recog/storage.hpp"

namespace recog {

struct IvfParams {
  std::size_t nlist = 0;  // 0: pick default_nlist() at train time
  std::size_t max_iters = 25;
  std::uint64_t seed = 0;
  std::size_t nprobe = 1;  // used when a search does not override it
};

/// round(sqrt(n)), at least 1.
inline std::size_t default_nlist(std::size_t n) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n)))));
}

/// Inverted-file index: a k-means coarse quantizer over float vectors and one
/// posting list per cell. Each record lives in the cell of the centroid
/// nearest to it when it was added. Deletion is immediate.
///
/// For InnerProduct and Cosine the quantizer is trained on unit-normalized
/// samples (spherical k-means), and cells are ranked with the index metric.
class IvfIndex final : public Index {
 public:
  IvfIndex(MetricKind metric, std::size_t dim, IvfParams params = {}) : metric_(metric), dim_(dim), params_(params) {
    if (metric == MetricKind::Hamming) {
      throw Error(ErrorCode::UnsupportedOperation, "index_ivf.create", "IVF indexes float vectors only");
    }
    if (dim == 0) throw Error(ErrorCode::BadArgument, "index_ivf.create", "dim must be positive");
  }

  IndexKind kind() const override { return IndexKind::Ivf; }
  MetricKind metric() const override { return metric_; }
  std::size_t dim() const override { return dim_; }
  std::size_t size() const override { return locations_.size(); }
  bool contains(RecordId id) const override { return locations_.contains(id); }

  bool trained() const noexcept { return !centroids_.empty(); }
  const IvfParams& params() const noexcept { return params_; }
  std::size_t nlist() const noexcept { return cells_.size(); }
  std::span<const float> centroid(std::size_t c) const { return {centroids_.data() + c * dim_, dim_}; }
  std::size_t cell_size(std::size_t c) const { return cells_.at(c).size(); }

  /// Cell currently holding `id`; throws UnknownId.
  std::size_t cell_of(RecordId id) const {
    auto it = locations_.find(id);
    if (it == locations_.end()) throw Error(ErrorCode::UnknownId, "index_ivf.cell_of", std::to_string(id));
    return it->second.first;
  }

  void set_default_nprobe(std::size_t nprobe) { params_.nprobe = nprobe; }

  /// Trains the coarse quantizer. Existing records are discarded.
  KMeansResult train(std::span<const EmbeddingVector> samples) {
    constexpr const char* op = "index_ivf.train";
    std::vector<float> flat;
    flat.reserve(samples.size() * dim_);
    for (const auto& s : samples) {
      check_same_dim(s.dim(), dim_, op);
      if (spherical()) {
        auto v = s.values();
        double norm = std::sqrt(kernels::dot(v, v));
        for (float x : v) flat.push_back(norm > 0.0 ? static_cast<float>(x / norm) : 0.0f);
      } else {
        flat.insert(flat.end(), s.values().begin(), s.values().end());
      }
    }
    std::size_t nlist = params_.nlist == 0 ? default_nlist(samples.size()) : params_.nlist;
    auto res = kmeans(flat, samples.size(), dim_, nlist, params_.max_iters, params_.seed, spherical());
    params_.nlist = nlist;
    centroids_ = res.centroids;
    cells_.assign(nlist, detail::RowStore(metric_, dim_));
    locations_.clear();
    params_.nprobe = std::clamp<std::size_t>(params_.nprobe, 1, nlist);
    return res;
  }

  std::size_t add(std::span<const GalleryRecord> records) override {
    constexpr const char* op = "index_ivf.add";
    require_trained(op);
    auto prepared =
        detail::prepare_batch(records, metric_, dim_, op, [this](RecordId id) { return contains(id); });
    for (std::size_t i = 0; i < records.size(); ++i) {
      std::size_t c = nearest_cell(prepared[i].floats, prepared[i].norm);
      locations_.emplace(records[i].id, std::make_pair(c, cells_[c].size()));
      cells_[c].append(records[i].id, prepared[i]);
    }
    return records.size();
  }

  std::size_t remove(std::span<const RecordId> ids) override {
    require_trained("index_ivf.delete");
    std::size_t removed = 0;
    for (RecordId id : ids) {
      auto it = locations_.find(id);
      if (it == locations_.end()) continue;
      auto [cell, row] = it->second;
      locations_.erase(it);
      if (auto moved = cells_[cell].swap_remove(row)) locations_[*moved] = {cell, row};
      ++removed;
    }
    return removed;
  }

  using Index::search;
  std::vector<SearchResult> search(const Payload& query, std::size_t k, const SearchParams& params) const override {
    constexpr const char* op = "index_ivf.search";
    require_trained(op);
    detail::check_k(k, op);
    std::size_t nprobe = params.nprobe.value_or(params_.nprobe);
    if (nprobe < 1 || nprobe > nlist()) {
      throw Error(ErrorCode::BadNprobe, op,
                  "nprobe " + std::to_string(nprobe) + " outside [1, " + std::to_string(nlist()) + "]");
    }
    auto q = detail::prepare_payload(query, metric_, dim_, op);
    TopK top(std::min(k, size()));
    for (std::size_t c : probe_order(q.floats, nprobe, q.norm)) {
      const auto& cell = cells_[c];
      for (std::size_t row = 0; row < cell.size(); ++row) top.push({cell.distance(row, q), cell.id(row)});
    }
    return detail::to_results(std::move(top).take_sorted(), metric_);
  }

  /// The nprobe cells a query would scan, nearest first (ties: lower cell).
  std::vector<std::size_t> probe_order(std::span<const float> query, std::size_t nprobe, double norm = 1.0) const {
    std::vector<std::pair<double, std::size_t>> order(nlist());
    for (std::size_t c = 0; c < nlist(); ++c) {
      order[c] = {kernels::ranking_distance(metric_, query, centroid(c), norm), c};
    }
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(nprobe), order.end());
    std::vector<std::size_t> out(nprobe);
    for (std::size_t i = 0; i < nprobe; ++i) out[i] = order[i].second;
    return out;
  }

  std::size_t payload_bytes() const noexcept {
    std::size_t total = 0;
    for (const auto& c : cells_) total += c.payload_bytes();
    return total;
  }

  void serialize(io::ByteWriter& w) const {
    w.put<std::uint64_t>(params_.nlist);
    w.put<std::uint64_t>(params_.max_iters);
    w.put<std::uint64_t>(params_.seed);
    w.put<std::uint64_t>(params_.nprobe);
    w.put<std::uint8_t>(trained() ? 1 : 0);
    if (!trained()) return;
    w.put_array<float>(centroids_);
    for (const auto& cell : cells_) {
      w.put<std::uint64_t>(cell.size());
      w.put_array<RecordId>(cell.ids());
      w.put_array<float>(cell.raw_floats());
    }
  }

  static IvfIndex deserialize(io::ByteReader& r, MetricKind metric, std::size_t dim) {
    IvfParams p;
    p.nlist = r.get<std::uint64_t>();
    p.max_iters = r.get<std::uint64_t>();
    p.seed = r.get<std::uint64_t>();
    p.nprobe = r.get<std::uint64_t>();
    IvfIndex index(metric, dim, p);
    if (r.get<std::uint8_t>() == 0) return index;
    if (p.nlist == 0 || p.nprobe == 0 || p.nprobe > p.nlist) r.malformed("bad IVF parameters");
    index.centroids_ = r.get_array<float>(p.nlist * dim);
    index.cells_.reserve(p.nlist);
    for (std::size_t c = 0; c < p.nlist; ++c) {
      auto n = r.get<std::uint64_t>();
      auto ids = r.get_array<RecordId>(n);
      auto floats = r.get_array<float>(n * dim);
      for (std::size_t row = 0; row < ids.size(); ++row) {
        if (!index.locations_.emplace(ids[row], std::make_pair(c, row)).second) {
          r.malformed("duplicate id in IVF body");
        }
      }
      index.cells_.push_back(detail::RowStore::from_parts(metric, dim, std::move(ids), std::move(floats), {}));
    }
    return index;
  }

 private:
  bool spherical() const noexcept { return metric_ != MetricKind::L2; }

  void require_trained(const char* op) const {
    if (!trained()) throw Error(ErrorCode::NotTrained, op, "train the coarse quantizer first");
  }

  std::size_t nearest_cell(std::span<const float> x, double norm) const {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < nlist(); ++c) {
      double d = kernels::ranking_distance(metric_, x, centroid(c), norm);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    return best;
  }

  MetricKind metric_;
  std::size_t dim_;
  IvfParams params_;
  std::vector<float> centroids_;
  std::vector<detail::RowStore> cells_;
  std::unordered_map<RecordId, std::pair<std::size_t, std::size_t>> locations_;
};

}  // namespace recog
