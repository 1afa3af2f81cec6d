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

#include <bit>
#include <cstring>

#include "recog/core.hpp"

namespace recog {

namespace kernels {

// Float kernels accumulate in double over eight independent lanes. The lane
// layout is fixed, so results are bit-reproducible while still leaving the
// compiler room to vectorize.

inline double squared_l2(std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) {
      double d = static_cast<double>(a[i + l]) - static_cast<double>(b[i + l]);
      acc[l] += d * d;
    }
  }
  for (std::size_t l = 0; i < n; ++i, ++l) {
    double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc[l] += d * d;
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

inline double dot(std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) acc[l] += static_cast<double>(a[i + l]) * static_cast<double>(b[i + l]);
  }
  for (std::size_t l = 0; i < n; ++i, ++l) acc[l] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

inline std::uint64_t hamming(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  const std::size_t n = a.size();
  std::uint64_t count = 0;
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    std::uint64_t x, y;
    std::memcpy(&x, a.data() + i, 8);
    std::memcpy(&y, b.data() + i, 8);
    count += static_cast<std::uint64_t>(std::popcount(x ^ y));
  }
  for (; i < n; ++i) count += static_cast<std::uint64_t>(std::popcount(static_cast<unsigned>(a[i] ^ b[i])));
  return count;
}

/// |v| in double. Throws ZeroVector when it is zero.
inline double norm(std::span<const float> v, const char* op) {
  double n = std::sqrt(dot(v, v));
  if (!(n > 0.0)) throw Error(ErrorCode::ZeroVector, op, "cosine metric needs a non-zero vector");
  return n;
}

/// |a / na - b / nb|^2 / 2 in double.
inline double scaled_half_squared_l2(std::span<const float> a, double na, std::span<const float> b, double nb) {
  const std::size_t n = a.size();
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) {
      double d = static_cast<double>(a[i + l]) / na - static_cast<double>(b[i + l]) / nb;
      acc[l] += d * d;
    }
  }
  for (std::size_t l = 0; i < n; ++i, ++l) {
    double d = static_cast<double>(a[i]) / na - static_cast<double>(b[i]) / nb;
    acc[l] += d * d;
  }
  return 0.5 * (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])));
}

/// Unit-norm copy. Throws ZeroVector when the norm is zero.
inline std::vector<float> normalized(std::span<const float> v, const char* op) {
  double norm = std::sqrt(dot(v, v));
  if (!(norm > 0.0)) throw Error(ErrorCode::ZeroVector, op, "cosine metric needs a non-zero vector");
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(static_cast<double>(v[i]) / norm);
  return out;
}

/// Internal ranking distance for float metrics: squared L2, negated inner
/// product, or 1 - cos computed as |a / na - b / nb|^2 / 2 from the
/// operands' norms (exactly zero for identical stored payloads).
inline double ranking_distance(MetricKind metric, std::span<const float> a, std::span<const float> b, double na = 1.0,
                               double nb = 1.0) {
  switch (metric) {
    case MetricKind::L2: return squared_l2(a, b);
    case MetricKind::InnerProduct: return -dot(a, b);
    case MetricKind::Cosine: return scaled_half_squared_l2(a, na, b, nb);
    case MetricKind::Hamming: break;
  }
  throw Error(ErrorCode::MetricMismatch, "metrics.ranking_distance", "hamming needs binary payloads");
}

}  // namespace kernels

inline void check_same_dim(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw Error(ErrorCode::DimMismatch, op, "dims differ: " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

inline double l2_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
  check_same_dim(a.dim(), b.dim(), "metrics.l2_distance");
  return std::sqrt(kernels::squared_l2(a.values(), b.values()));
}

inline double inner_product(const EmbeddingVector& a, const EmbeddingVector& b) {
  check_same_dim(a.dim(), b.dim(), "metrics.inner_product");
  return kernels::dot(a.values(), b.values());
}

inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  check_same_dim(a.dim(), b.dim(), "metrics.cosine_similarity");
  double na = std::sqrt(kernels::dot(a.values(), a.values()));
  double nb = std::sqrt(kernels::dot(b.values(), b.values()));
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw Error(ErrorCode::ZeroVector, "metrics.cosine_similarity", "cosine undefined for a zero vector");
  }
  return std::clamp(kernels::dot(a.values(), b.values()) / (na * nb), -1.0, 1.0);
}

inline std::uint64_t hamming_distance(const BinaryCode& a, const BinaryCode& b) {
  if (a.nbits() != b.nbits()) {
    throw Error(ErrorCode::LengthMismatch, "metrics.hamming_distance",
                "nbits differ: " + std::to_string(a.nbits()) + " vs " + std::to_string(b.nbits()));
  }
  return kernels::hamming(a.bytes(), b.bytes());
}

/// Sign quantization: bit i is set iff v[i] > 0 (zero maps to 0).
inline std::vector<std::uint8_t> binarize_bytes(std::span<const float> v) {
  if (v.empty() || v.size() % 8 != 0) {
    throw Error(ErrorCode::DimNotByteAligned, "metrics.binarize",
                "dim must be a positive multiple of 8, got " + std::to_string(v.size()));
  }
  std::vector<std::uint8_t> bytes(v.size() / 8, 0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] > 0.0f) bytes[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  }
  return bytes;
}

inline BinaryCode binarize(const EmbeddingVector& v) { return BinaryCode(v.dim(), binarize_bytes(v.values())); }

/// Payload storage in bytes: 4 per float component, 1 per 8 code bits.
constexpr std::size_t payload_bytes(PayloadKind kind, std::size_t width) {
  return kind == PayloadKind::Float32 ? width * sizeof(float) : width / 8;
}

}  // namespace recog
