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

#include <limits>
#include <queue>
#include <sstream>

#include "recog/serialize.hpp"
#include "recog/storage.hpp"

namespace recog {

struct HnswParams {
  std::size_t M = 32;  // max links per node on layers above 0; layer 0 allows 2*M
  std::size_t ef_construction = 200;
  std::size_t ef_search = 64;
  std::uint64_t seed = 100;
};

/// Hierarchical navigable small-world graph.
///
/// Nodes are numbered in insertion order. A node's level is
/// floor(-ln(U) / ln(M)) with U uniform on (0, 1] drawn from a seeded
/// generator whose state is persisted with the index. Neighbors are chosen as
/// the M closest candidates; reverse links that overflow a list are pruned
/// back to the closest ones. Insert-only: remove() always fails.
class HnswIndex final : public Index {
 public:
  using Node = std::uint32_t;

  HnswIndex(MetricKind metric, std::size_t dim, HnswParams params = {})
      : store_(metric, dim), params_(params), rng_(params.seed) {
    constexpr const char* op = "index_hnsw.create";
    if (dim == 0) throw Error(ErrorCode::BadArgument, op, "dim must be positive");
    if (metric == MetricKind::Hamming && dim % 8 != 0) {
      throw Error(ErrorCode::DimNotByteAligned, op, "hamming width must be a multiple of 8");
    }
    if (params_.M < 2) throw Error(ErrorCode::BadArgument, op, "M must be >= 2");
    if (params_.ef_construction < 1 || params_.ef_search < 1) {
      throw Error(ErrorCode::BadArgument, op, "ef values must be >= 1");
    }
    level_mult_ = 1.0 / std::log(static_cast<double>(params_.M));
  }

  IndexKind kind() const override { return IndexKind::Hnsw; }
  MetricKind metric() const override { return store_.metric(); }
  std::size_t dim() const override { return store_.width(); }
  std::size_t size() const override { return store_.size(); }
  bool contains(RecordId id) const override { return nodes_.contains(id); }

  const HnswParams& params() const noexcept { return params_; }
  std::size_t max_links(int layer) const noexcept { return layer == 0 ? 2 * params_.M : params_.M; }
  std::optional<Node> entry_point() const noexcept { return entry_; }
  int max_level() const noexcept { return max_level_; }
  int level(Node n) const { return static_cast<int>(links_.at(n).size()) - 1; }
  std::span<const Node> neighbors(Node n, int layer) const { return links_.at(n).at(static_cast<std::size_t>(layer)); }
  RecordId id_of(Node n) const { return store_.id(n); }
  void set_default_ef_search(std::size_t ef) { params_.ef_search = ef; }

  std::size_t add(std::span<const GalleryRecord> records) override {
    auto prepared = detail::prepare_batch(records, metric(), dim(), "index_hnsw.add",
                                          [this](RecordId id) { return contains(id); });
    for (std::size_t i = 0; i < records.size(); ++i) insert(records[i].id, prepared[i]);
    return records.size();
  }

  std::size_t remove(std::span<const RecordId>) override {
    throw Error(ErrorCode::UnsupportedOperation, "index_hnsw.delete",
                "HNSW graphs only support adding elements after construction");
  }

  using Index::search;
  std::vector<SearchResult> search(const Payload& query, std::size_t k, const SearchParams& params) const override {
    constexpr const char* op = "index_hnsw.search";
    detail::check_k(k, op);
    std::size_t ef = params.ef_search.value_or(params_.ef_search);
    if (ef < k) {
      throw Error(ErrorCode::EfTooSmall, op,
                  "ef_search " + std::to_string(ef) + " must be >= k " + std::to_string(k));
    }
    auto q = detail::prepare_payload(query, metric(), dim(), op);
    if (!entry_) return {};
    auto dist = [&](Node n) { return store_.distance(n, q); };
    Node ep = greedy_descend(*entry_, max_level_, 0, dist);
    auto found = search_layer({ep}, ef, 0, dist);

    std::vector<Neighbor> hits;
    hits.reserve(found.size());
    for (const auto& c : found) hits.push_back({c.distance, store_.id(c.node)});
    std::sort(hits.begin(), hits.end());
    if (hits.size() > k) hits.resize(k);
    return detail::to_results(std::move(hits), metric());
  }

  std::size_t payload_bytes() const noexcept { return store_.payload_bytes(); }

  void serialize(io::ByteWriter& w) const {
    w.put<std::uint64_t>(params_.M);
    w.put<std::uint64_t>(2 * params_.M);
    w.put<std::uint64_t>(params_.ef_construction);
    w.put<std::uint64_t>(params_.ef_search);
    w.put<std::uint64_t>(params_.seed);
    std::ostringstream rng_state;
    rng_state << rng_;
    w.put_string(rng_state.str());
    w.put<std::int64_t>(entry_ ? static_cast<std::int64_t>(*entry_) : -1);
    w.put<std::int32_t>(max_level_);
    w.put<std::uint64_t>(store_.size());
    w.put_array<RecordId>(store_.ids());
    w.put_array<float>(store_.raw_floats());
    w.put_array<std::uint8_t>(store_.raw_bytes());
    for (const auto& node_links : links_) w.put<std::uint8_t>(static_cast<std::uint8_t>(node_links.size() - 1));
    for (const auto& node_links : links_) {
      for (const auto& layer : node_links) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(layer.size()));
        w.put_array<Node>(layer);
      }
    }
  }

  static HnswIndex deserialize(io::ByteReader& r, MetricKind metric, std::size_t dim) {
    HnswParams p;
    p.M = r.get<std::uint64_t>();
    auto m0 = r.get<std::uint64_t>();
    p.ef_construction = r.get<std::uint64_t>();
    p.ef_search = r.get<std::uint64_t>();
    p.seed = r.get<std::uint64_t>();
    if (m0 != 2 * p.M) r.malformed("HNSW M0 must equal 2*M");
    HnswIndex index(metric, dim, p);
    std::istringstream rng_state(r.get_string());
    rng_state >> index.rng_;
    if (!rng_state) r.malformed("bad HNSW generator state");
    auto entry = r.get<std::int64_t>();
    index.max_level_ = r.get<std::int32_t>();
    auto n = r.get<std::uint64_t>();
    auto ids = r.get_array<RecordId>(n);
    const bool binary = payload_kind_for(metric) == PayloadKind::Binary;
    const std::size_t stride = binary ? dim / 8 : dim;
    auto floats = r.get_array<float>(binary ? 0 : n * stride);
    auto bytes = r.get_array<std::uint8_t>(binary ? n * stride : 0);
    auto levels = r.get_array<std::uint8_t>(n);
    index.links_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      index.links_[i].resize(static_cast<std::size_t>(levels[i]) + 1);
      for (auto& layer : index.links_[i]) {
        auto count = r.get<std::uint32_t>();
        layer = r.get_array<Node>(count);
        for (Node e : layer) {
          if (e >= n) r.malformed("HNSW link to a missing node");
        }
      }
      if (!index.nodes_.emplace(ids[i], static_cast<Node>(i)).second) r.malformed("duplicate id in HNSW body");
    }
    if (n == 0) {
      if (entry != -1) r.malformed("empty HNSW graph with an entry point");
    } else {
      if (entry < 0 || static_cast<std::uint64_t>(entry) >= n) r.malformed("bad HNSW entry point");
      index.entry_ = static_cast<Node>(entry);
    }
    index.store_ = detail::RowStore::from_parts(metric, dim, std::move(ids), std::move(floats), std::move(bytes));
    return index;
  }

 private:
  struct Candidate {
    double distance;
    Node node;
    friend bool operator<(const Candidate& a, const Candidate& b) {
      return a.distance < b.distance || (a.distance == b.distance && a.node < b.node);
    }
    friend bool operator>(const Candidate& a, const Candidate& b) { return b < a; }
  };

  int draw_level() {
    double u = 1.0 - detail::uniform01(rng_);  // (0, 1]
    return static_cast<int>(std::floor(-std::log(u) * level_mult_));
  }

  double node_distance(Node a, Node b) const { return store_.distance(a, b); }

  /// ef = 1 walk from `ep`, one layer at a time from `top` down to `bottom` + 1.
  template <typename DistFn>
  Node greedy_descend(Node ep, int top, int bottom, DistFn&& dist) const {
    double cur_d = dist(ep);
    for (int layer = top; layer > bottom; --layer) {
      bool changed = true;
      while (changed) {
        changed = false;
        for (Node e : links_[ep][static_cast<std::size_t>(layer)]) {
          double d = dist(e);
          if (Candidate{d, e} < Candidate{cur_d, ep}) {
            cur_d = d;
            ep = e;
            changed = true;
          }
        }
      }
    }
    return ep;
  }

  /// Best-first search on one layer. Returns up to ef candidates, ascending.
  template <typename DistFn>
  std::vector<Candidate> search_layer(const std::vector<Node>& entries, std::size_t ef, int layer,
                                      DistFn&& dist) const {
    std::vector<std::uint8_t> visited(store_.size(), 0);
    std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> frontier;
    std::priority_queue<Candidate> best;
    for (Node ep : entries) {
      if (visited[ep]) continue;
      visited[ep] = 1;
      Candidate c{dist(ep), ep};
      frontier.push(c);
      best.push(c);
      if (best.size() > ef) best.pop();
    }
    while (!frontier.empty()) {
      Candidate c = frontier.top();
      if (best.size() >= ef && best.top() < c) break;
      frontier.pop();
      for (Node e : links_[c.node][static_cast<std::size_t>(layer)]) {
        if (visited[e]) continue;
        visited[e] = 1;
        Candidate cand{dist(e), e};
        if (best.size() < ef || cand < best.top()) {
          frontier.push(cand);
          best.push(cand);
          if (best.size() > ef) best.pop();
        }
      }
    }
    std::vector<Candidate> out(best.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = best.top();
      best.pop();
    }
    return out;
  }

  void insert(RecordId id, const detail::PreparedPayload& payload) {
    const auto node = static_cast<Node>(store_.size());
    const int level = draw_level();
    store_.append(id, payload);
    nodes_.emplace(id, node);
    links_.emplace_back(static_cast<std::size_t>(level) + 1);

    if (!entry_) {
      entry_ = node;
      max_level_ = level;
      return;
    }

    auto dist = [&](Node n) { return store_.distance(n, payload); };
    Node ep = greedy_descend(*entry_, max_level_, level, dist);
    std::vector<Node> entries{ep};
    for (int layer = std::min(level, max_level_); layer >= 0; --layer) {
      auto found = search_layer(entries, params_.ef_construction, layer, dist);
      const std::size_t keep = std::min(params_.M, found.size());
      auto& own = links_[node][static_cast<std::size_t>(layer)];
      own.clear();
      for (std::size_t i = 0; i < keep; ++i) own.push_back(found[i].node);
      for (Node e : own) link_back(e, node, layer);
      entries.clear();
      for (const auto& c : found) entries.push_back(c.node);
    }
    if (level > max_level_) {
      entry_ = node;
      max_level_ = level;
    }
  }

  void link_back(Node from, Node to, int layer) {
    auto& list = links_[from][static_cast<std::size_t>(layer)];
    list.push_back(to);
    const std::size_t cap = max_links(layer);
    if (list.size() <= cap) return;
    std::vector<Candidate> ranked;
    ranked.reserve(list.size());
    for (Node e : list) ranked.push_back({node_distance(from, e), e});
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(cap), ranked.end());
    list.resize(cap);
    for (std::size_t i = 0; i < cap; ++i) list[i] = ranked[i].node;
  }

  detail::RowStore store_;
  HnswParams params_;
  double level_mult_ = 0.0;
  std::mt19937_64 rng_;
  std::unordered_map<RecordId, Node> nodes_;
  std::vector<std::vector<std::vector<Node>>> links_;  // node -> layer -> neighbors
  std::optional<Node> entry_;
  int max_level_ = -1;
};

}  // namespace recog
