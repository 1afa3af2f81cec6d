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

#include "oracles.hpp"
#include "recog/metrics.hpp"
#include "test_util.hpp"

namespace recog {
namespace {

using testing::expect_error;

std::vector<std::uint8_t> random_bytes(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::uint8_t> b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

TEST(L2Distance, ThreeFourFive) {
  EXPECT_EQ(l2_distance(EmbeddingVector{0, 0}, EmbeddingVector{3, 4}), 5.0);
  EmbeddingVector a{0.25f, -7.5f, 3.0f};
  EXPECT_EQ(l2_distance(a, a), 0.0);
  expect_error(ErrorCode::DimMismatch, [] { l2_distance(EmbeddingVector{1, 2}, EmbeddingVector{1, 2, 3}); });
}

TEST(L2Distance, MatchesCompensatedOracleAt512) {
  auto rows = oracle::gaussian_rows(40, 512, 123, 3.0f);
  for (std::size_t i = 0; i + 1 < rows.size(); i += 2) {
    double got = l2_distance(EmbeddingVector(rows[i]), EmbeddingVector(rows[i + 1]));
    long double want = oracle::l2(rows[i], rows[i + 1]);
    EXPECT_TRUE(oracle::close_rel(got, want, 1e-5L)) << got << " vs " << static_cast<double>(want);
    // The double accumulator is much better than the stated bound.
    EXPECT_TRUE(oracle::close_rel(got, want, 1e-12L));
  }
}

TEST(L2Distance, SymmetricAndTriangle) {
  auto rows = oracle::gaussian_rows(300, 24, 5);
  for (std::size_t i = 0; i + 2 < rows.size(); i += 3) {
    EmbeddingVector a(rows[i]), b(rows[i + 1]), c(rows[i + 2]);
    EXPECT_EQ(l2_distance(a, b), l2_distance(b, a));
    EXPECT_LE(l2_distance(a, c), l2_distance(a, b) + l2_distance(b, c) + 1e-12);
  }
}

TEST(Cosine, Basics) {
  EmbeddingVector e1{1, 0, 0}, e2{0, 1, 0};
  EXPECT_DOUBLE_EQ(cosine_similarity(e1, e1), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(e1, e2), 0.0);
  EmbeddingVector a{0.3f, -1.2f, 2.0f}, a2{0.6f, -2.4f, 4.0f};
  EXPECT_NEAR(cosine_similarity(a, a2), 1.0, 1e-12);
  EXPECT_LE(cosine_similarity(a, a2), 1.0);
  expect_error(ErrorCode::ZeroVector, [] { cosine_similarity(EmbeddingVector{0, 0}, EmbeddingVector{1, 0}); });
  expect_error(ErrorCode::DimMismatch, [] { inner_product(EmbeddingVector{1}, EmbeddingVector{1, 2}); });
  EXPECT_EQ(inner_product(EmbeddingVector{1, 2, 3}, EmbeddingVector{4, 5, 6}), 32.0);
}

TEST(Cosine, ScaleInvariant) {
  std::mt19937_64 rng(17);
  auto rows = oracle::gaussian_rows(100, 32, 19);
  for (std::size_t i = 0; i + 1 < rows.size(); i += 2) {
    float lambda = 0.01f + static_cast<float>(detail::uniform01(rng)) * 50.0f;
    std::vector<float> scaled = rows[i + 1];
    for (auto& x : scaled) x *= lambda;
    EXPECT_NEAR(cosine_similarity(EmbeddingVector(rows[i]), EmbeddingVector(scaled)),
                cosine_similarity(EmbeddingVector(rows[i]), EmbeddingVector(rows[i + 1])), 1e-6);
  }
}

TEST(Hamming, ComplementAndIdentity) {
  BinaryCode zeros(8, {0x00}), ones(8, {0xFF});
  EXPECT_EQ(hamming_distance(zeros, ones), 8u);
  EXPECT_EQ(hamming_distance(ones, ones), 0u);
  expect_error(ErrorCode::LengthMismatch, [] { hamming_distance(BinaryCode(8, {0}), BinaryCode(16, {0, 0})); });
}

TEST(Hamming, PackedEqualsBitLoopOracle) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 1000; ++i) {
    // Mix of word-aligned and ragged lengths exercises the tail loop.
    std::size_t nbytes = i % 2 == 0 ? 64 : 1 + rng() % 70;
    auto a = random_bytes(nbytes, rng), b = random_bytes(nbytes, rng);
    EXPECT_EQ(hamming_distance(BinaryCode(nbytes * 8, a), BinaryCode(nbytes * 8, b)), oracle::hamming_bitloop(a, b));
  }
}

TEST(Hamming, SymmetricAndTriangle) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    BinaryCode a(512, random_bytes(64, rng)), b(512, random_bytes(64, rng)), c(512, random_bytes(64, rng));
    EXPECT_EQ(hamming_distance(a, b), hamming_distance(b, a));
    EXPECT_LE(hamming_distance(a, c), hamming_distance(a, b) + hamming_distance(b, c));
  }
}

TEST(Binarize, SignPatternMsbFirst) {
  auto code = binarize(EmbeddingVector{1, -1, 0.5f, -0.5f, 1, 1, -1, -1});
  ASSERT_EQ(code.size_bytes(), 1u);
  EXPECT_EQ(code.bytes()[0], 0b10101100);
}

TEST(Binarize, ZeroMapsToZeroBit) {
  auto code = binarize(EmbeddingVector{0, 0, 0, 0, 0, 0, 0, 1e-30f});
  EXPECT_EQ(code.bytes()[0], 0b00000001);
}

TEST(Binarize, AllPositiveSaturates) {
  auto code = binarize(EmbeddingVector(std::vector<float>(512, 0.1f)));
  EXPECT_EQ(code.nbits(), 512u);
  for (auto b : code.bytes()) EXPECT_EQ(b, 0xFF);
}

TEST(Binarize, StorageRatioIsExactly32) {
  EmbeddingVector v(oracle::gaussian_rows(1, 512, 8)[0]);
  auto code = binarize(v);
  EXPECT_EQ(code.size_bytes(), 512u / 8);
  EXPECT_EQ(payload_bytes(PayloadKind::Float32, 512) / payload_bytes(PayloadKind::Binary, 512), 32u);
  EXPECT_EQ(payload_bytes(PayloadKind::Float32, v.dim()), 32 * code.size_bytes());
}

TEST(Binarize, SelfXorIsZeroAndUnalignedRejected) {
  for (const auto& row : oracle::gaussian_rows(50, 64, 77)) {
    auto code = binarize(EmbeddingVector(row));
    EXPECT_EQ(hamming_distance(code, code), 0u);
  }
  expect_error(ErrorCode::DimNotByteAligned, [] { binarize(EmbeddingVector{1, 2, 3}); });
}

}  // namespace
}  // namespace recog
