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

#include "recog/metrics.hpp"

namespace recog {

struct KMeansResult {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<float> centroids;          // k x dim, row-major
  std::vector<std::uint32_t> assignment;  // one cell per sample
  std::vector<double> inertia_history;    // after the initial and every later assignment
  std::size_t iterations = 0;             // centroid updates performed

  std::span<const float> centroid(std::size_t c) const { return {centroids.data() + c * dim, dim}; }
};

namespace detail {

/// Nearest centroid by squared L2; ties go to the lower cell.
inline std::uint32_t nearest_centroid(std::span<const float> x, std::span<const float> centroids, std::size_t k,
                                      std::size_t dim, double* best_out = nullptr) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    double d = kernels::squared_l2(x, centroids.subspan(c * dim, dim));
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(c);
    }
  }
  if (best_out) *best_out = best_d;
  return best;
}

inline double assign_all(std::span<const float> samples, std::size_t n, std::size_t dim,
                         std::span<const float> centroids, std::size_t k, std::vector<std::uint32_t>& assignment) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d;
    assignment[i] = nearest_centroid(samples.subspan(i * dim, dim), centroids, k, dim, &d);
    inertia += d;
  }
  return inertia;
}

inline void normalize_in_place(std::span<float> v) {
  double norm = std::sqrt(kernels::dot(v, v));
  if (norm > 0.0) {
    for (auto& x : v) x = static_cast<float>(static_cast<double>(x) / norm);
  }
}

}  // namespace detail

/// Lloyd's k-means with k-means++ seeding.
///
/// Samples are row-major n x dim. With `spherical` set the caller passes
/// unit-norm samples and centroids are re-normalized after every update.
/// Iteration stops after `max_iters` centroid updates or as soon as an
/// assignment pass changes nothing. A cell left empty by an update is
/// re-seeded with the point of the largest cell farthest from that cell's
/// centroid, so every centroid is backed by at least one sample after each
/// update.
inline KMeansResult kmeans(std::span<const float> samples, std::size_t n, std::size_t dim, std::size_t k,
                           std::size_t max_iters, std::uint64_t seed, bool spherical = false) {
  constexpr const char* op = "index_ivf.train";
  if (k == 0) throw Error(ErrorCode::BadArgument, op, "nlist must be >= 1");
  if (n < k) {
    throw Error(ErrorCode::TooFewSamples, op,
                "need at least nlist=" + std::to_string(k) + " samples, got " + std::to_string(n));
  }
  if (samples.size() != n * dim) throw Error(ErrorCode::ShapeMismatch, op, "sample buffer is not n x dim");

  std::mt19937_64 rng(seed);
  KMeansResult res;
  res.k = k;
  res.dim = dim;
  res.centroids.resize(k * dim);
  res.assignment.assign(n, 0);

  auto sample = [&](std::size_t i) { return samples.subspan(i * dim, dim); };

  // k-means++ seeding
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = std::min(n - 1, static_cast<std::size_t>(detail::uniform01(rng) * static_cast<double>(n)));
  std::copy_n(sample(first).begin(), dim, res.centroids.begin());
  for (std::size_t c = 1; c < k; ++c) {
    auto prev = std::span<const float>(res.centroids).subspan((c - 1) * dim, dim);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], kernels::squared_l2(sample(i), prev));
      total += d2[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double r = detail::uniform01(rng) * total;
      double cum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cum += d2[i];
        if (d2[i] > 0.0 && r < cum) {
          pick = i;
          break;
        }
      }
      // Rounding can leave r >= cum; fall back to the last positive-weight point.
      if (!(d2[pick] > 0.0)) {
        for (std::size_t i = n; i-- > 0;) {
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      pick = std::min(n - 1, static_cast<std::size_t>(detail::uniform01(rng) * static_cast<double>(n)));
    }
    std::copy_n(sample(pick).begin(), dim, res.centroids.begin() + c * dim);
  }

  res.inertia_history.push_back(detail::assign_all(samples, n, dim, res.centroids, k, res.assignment));

  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);
  std::vector<std::uint32_t> next(n);
  for (std::size_t it = 0; it < max_iters; ++it) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto c = res.assignment[i];
      ++counts[c];
      auto x = sample(i);
      for (std::size_t j = 0; j < dim; ++j) sums[c * dim + j] += x[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto cen = std::span<float>(res.centroids).subspan(c * dim, dim);
      for (std::size_t j = 0; j < dim; ++j) {
        cen[j] = static_cast<float>(sums[c * dim + j] / static_cast<double>(counts[c]));
      }
      if (spherical) detail::normalize_in_place(cen);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t largest = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      auto lc = std::span<const float>(res.centroids).subspan(largest * dim, dim);
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (res.assignment[i] != largest) continue;
        double d = kernels::squared_l2(sample(i), lc);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      std::copy_n(sample(far).begin(), dim, res.centroids.begin() + c * dim);
      res.assignment[far] = static_cast<std::uint32_t>(c);
      --counts[largest];
      ++counts[c];
    }
    ++res.iterations;
    double inertia = detail::assign_all(samples, n, dim, res.centroids, k, next);
    res.inertia_history.push_back(inertia);
    bool stable = next == res.assignment;
    res.assignment.swap(next);
    if (stable) break;
  }
  return res;
}

}  // namespace recog
