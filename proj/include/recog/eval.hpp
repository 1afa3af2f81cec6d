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

#include <chrono>

#include "recog/gallery.hpp"

namespace recog {

struct RecallReport {
  std::size_t queries = 0;
  std::vector<double> recall;  // recall[j-1] = recall@j
};

/// A query counts as a hit at j when one of its top-j results carries the
/// query's label.
inline RecallReport recall_at_k(const Index& index, const LabelTable& labels, std::span<const Payload> queries,
                                const std::vector<std::string>& query_labels, std::size_t k,
                                const SearchParams& params = {}, std::size_t threads = 1) {
  constexpr const char* op = "eval.recall";
  detail::check_k(k, op);
  if (queries.size() != query_labels.size()) {
    throw Error(ErrorCode::RowCountMismatch, op,
                std::to_string(queries.size()) + " queries but " + std::to_string(query_labels.size()) + " labels");
  }
  auto results = search_batch(index, queries, k, params, threads);
  RecallReport rep;
  rep.queries = queries.size();
  rep.recall.assign(k, 0.0);
  for (std::size_t q = 0; q < results.size(); ++q) {
    for (std::size_t r = 0; r < results[q].size(); ++r) {
      if (labels.label(results[q][r].id) == query_labels[q]) {
        for (std::size_t j = r; j < k; ++j) rep.recall[j] += 1.0;
        break;
      }
    }
  }
  if (rep.queries) {
    for (auto& v : rep.recall) v /= static_cast<double>(rep.queries);
  }
  return rep;
}

struct LatencyStats {
  std::vector<double> samples_ms;  // one per repeat: mean per-query latency
  double mean_ms = 0.0, p50_ms = 0.0, p99_ms = 0.0;
};

/// Nearest-rank percentile of an ascending sample.
inline double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(sorted.size())));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

inline LatencyStats summarize(std::vector<double> samples) {
  LatencyStats s;
  s.samples_ms = samples;
  std::sort(samples.begin(), samples.end());
  if (!samples.empty()) {
    double sum = 0.0;
    for (double v : samples) sum += v;
    s.mean_ms = sum / static_cast<double>(samples.size());
  }
  s.p50_ms = percentile(samples, 50.0);
  s.p99_ms = percentile(samples, 99.0);
  return s;
}

/// Runs `warmup` untimed queries, then `repeats` timed passes over all queries
/// on a monotonic clock.
inline LatencyStats time_queries(const Index& index, std::span<const Payload> queries, std::size_t k,
                                 std::size_t repeats, const SearchParams& params = {}, std::size_t threads = 1,
                                 std::size_t warmup = 3) {
  if (queries.empty() || repeats == 0) throw Error(ErrorCode::BadArgument, "eval.bench", "need queries and repeats >= 1");
  for (std::size_t i = 0; i < warmup; ++i) (void)index.search(queries[i % queries.size()], k, params);
  std::vector<double> samples;
  samples.reserve(repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    auto res = search_batch(index, queries, k, params, threads);
    auto t1 = std::chrono::steady_clock::now();
    std::chrono::duration<double, std::milli> dt = t1 - t0;
    samples.push_back(dt.count() / static_cast<double>(queries.size()));
  }
  return summarize(std::move(samples));
}

/// Seeded N(0, 1) rows, generated in chunks and handed to `sink` so very
/// large galleries never exist twice in memory.
inline void generate_gaussian_records(std::size_t n, std::size_t dim, std::uint64_t seed, std::size_t chunk,
                                      const std::function<void(std::vector<GalleryRecord>&)>& sink) {
  std::mt19937_64 rng(seed);
  for (std::size_t start = 0; start < n; start += chunk) {
    std::size_t len = std::min(chunk, n - start);
    std::vector<GalleryRecord> recs;
    recs.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<float> row(dim);
      for (auto& x : row) x = static_cast<float>(detail::normal01(rng));
      recs.push_back({start + i, "r", EmbeddingVector(std::move(row))});
    }
    sink(recs);
  }
}

inline std::vector<Payload> gaussian_queries(std::size_t n, std::size_t dim, std::uint64_t seed, bool binary) {
  std::vector<Payload> out;
  generate_gaussian_records(n, dim, seed, n ? n : 1, [&](std::vector<GalleryRecord>& recs) {
    for (auto& r : recs) {
      if (binary) {
        out.emplace_back(binarize(std::get<EmbeddingVector>(r.payload)));
      } else {
        out.push_back(std::move(r.payload));
      }
    }
  });
  return out;
}

/// Replaces every float payload with its sign code.
inline void binarize_records(std::vector<GalleryRecord>& recs) {
  for (auto& r : recs) r.payload = binarize(std::get<EmbeddingVector>(r.payload));
}

}  // namespace recog
