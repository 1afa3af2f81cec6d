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

#include <memory>

#include "oracles.hpp"
#include "recog/gallery.hpp"
#include "test_util.hpp"

namespace recog {
namespace {

using testing::expect_error;
using testing::TempDir;
using testing::write_text;

FeatureMatrix float_matrix(const std::vector<std::vector<float>>& rows) {
  FeatureMatrix m;
  for (const auto& r : rows) m.append(EmbeddingVector(r));
  return m;
}

TEST(Ingest, ThreeRowsGetSequentialIds) {
  TempDir dir;
  write_features(dir.file("f.ppsg"), float_matrix({{1, 2}, {3, 4}, {5, 6}}));
  write_text(dir.file("l.txt"), "cat\ndog\ncat\n");
  auto store = GalleryStore::ingest(dir.file("f.ppsg"), dir.file("l.txt"));
  ASSERT_EQ(store.size(), 3u);
  for (RecordId i = 0; i < 3; ++i) EXPECT_EQ(store.records()[i].id, i);
  EXPECT_EQ(store.labels().label(1), "dog");
  EXPECT_EQ(store.labels().distinct_labels(), 2u);
  EXPECT_EQ(std::get<EmbeddingVector>(store.records()[2].payload).values()[1], 6.0f);
}

TEST(Ingest, CsvFallback) {
  TempDir dir;
  write_text(dir.file("f.csv"), "# header comment\n1.5, -2\n\n3,4e-1\r\n");
  write_text(dir.file("l.txt"), "a\nb");
  auto store = GalleryStore::ingest(dir.file("f.csv"), dir.file("l.txt"), true);
  ASSERT_EQ(store.size(), 2u);
  EXPECT_EQ(store.width(), 2u);
  EXPECT_EQ(std::get<EmbeddingVector>(store.records()[1].payload).values()[1], 0.4f);
}

TEST(Ingest, RowCountMismatchNamesBothCounts) {
  TempDir dir;
  write_features(dir.file("f.ppsg"), float_matrix({{1}, {2}, {3}}));
  write_text(dir.file("l.txt"), "a\nb\n");
  try {
    GalleryStore::ingest(dir.file("f.ppsg"), dir.file("l.txt"));
    FAIL() << "expected RowCountMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RowCountMismatch);
    std::string msg = e.what();
    EXPECT_NE(msg.find("3 rows"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2 lines"), std::string::npos) << msg;
    EXPECT_EQ(msg.rfind("gallery.ingest", 0), 0u) << msg;
  }
}

TEST(Ingest, MalformedRows) {
  expect_error(ErrorCode::MalformedRow, [] { parse_features_csv("1,2\n3,x\n"); });
  expect_error(ErrorCode::MalformedRow, [] { parse_features_csv("1,2\n3\n"); });
  expect_error(ErrorCode::MalformedRow, [] { parse_features_csv("1,,2\n"); });
  expect_error(ErrorCode::MalformedRow, [] { parse_features_csv("1,nan\n"); });
  expect_error(ErrorCode::MalformedRow, [] { parse_labels("a\n\nb\n"); });
  EXPECT_EQ(parse_labels("a\nb\n").size(), 2u);
}

TEST(Ingest, HeaderErrors) {
  auto good = encode_features(float_matrix({{1, 2}, {3, 4}}));
  auto bad_magic = good;
  bad_magic[1] = 'Q';
  expect_error(ErrorCode::BadHeader, [&] { decode_features(bad_magic); });
  auto bumped = good;
  bumped[4] += 1;
  expect_error(ErrorCode::VersionMismatch, [&] { decode_features(bumped); });
  auto corrupt = good;
  corrupt[good.size() - 6] ^= 0x40;
  expect_error(ErrorCode::ChecksumMismatch, [&] { decode_features(corrupt); });
  std::vector<std::uint8_t> cut(good.begin(), good.end() - 9);
  expect_error(ErrorCode::Truncated, [&] { decode_features(cut); });
  std::vector<std::uint8_t> stub(good.begin(), good.begin() + 6);
  expect_error(ErrorCode::Truncated, [&] { decode_features(stub); });

  FeatureMatrix binary;
  binary.append(BinaryCode(16, {0xAB, 0xCD}));
  auto odd = encode_features(binary);
  odd[9] = 12;  // nbits field
  expect_error(ErrorCode::BadHeader, [&] { decode_features(odd); });
  auto back = decode_features(encode_features(binary));
  EXPECT_EQ(back.bytes, binary.bytes);
  EXPECT_EQ(back.kind, PayloadKind::Binary);
}

TEST(GalleryBytes, LargeGalleryArithmetic) {
  const std::size_t n = 145235;
  auto f = GalleryStore::gallery_payload_bytes(PayloadKind::Float32, 512, n);
  auto b = GalleryStore::gallery_payload_bytes(PayloadKind::Binary, 512, n);
  EXPECT_EQ(f, n * 512u * 4u);
  EXPECT_EQ(b, n * 64u);
  EXPECT_EQ(f, 32u * b);
}

TEST(GalleryBytes, BinarizedStoreIsOneThirtySecond) {
  auto rows = oracle::gaussian_rows(100, 512, 3);
  std::vector<std::string> labels(rows.size(), "x");
  auto store = GalleryStore::from_rows(float_matrix(rows), labels);
  auto bin = store.binarized();
  EXPECT_EQ(store.payload_bytes(), 32u * bin.payload_bytes());
  EXPECT_EQ(bin.kind(), PayloadKind::Binary);
  EXPECT_EQ(bin.labels().label(99), "x");
}

TEST(LookupLabels, ResolvesInRankOrder) {
  GalleryStore store(PayloadKind::Float32, 2);
  for (int i = 0; i < 50; ++i) store.append(i == 42 ? "keyboard" : "item" + std::to_string(i), EmbeddingVector{1, 2});
  std::vector<SearchResult> hits{{42, "", 0.0}, {7, "", 0.5}, {13, "", 0.7}};
  auto out = store.lookup_labels(hits);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].label, "keyboard");
  EXPECT_EQ(out[1].label, "item7");
  EXPECT_EQ(out[2].label, "item13");
  EXPECT_EQ(out[1].distance, 0.5);
  std::vector<SearchResult> missing{{500, "", 0.0}};
  expect_error(ErrorCode::UnknownId, [&] { store.lookup_labels(missing); });
}

TEST(GalleryStore, SaveAndIngestRoundtrip) {
  TempDir dir;
  auto rows = oracle::gaussian_rows(20, 16, 4);
  std::vector<std::string> labels;
  for (int i = 0; i < 20; ++i) labels.push_back("l" + std::to_string(i % 3));
  auto store = GalleryStore::from_rows(float_matrix(rows), labels).binarized();
  store.save(dir.file("g.ppsg"), dir.file("g.txt"));
  auto back = GalleryStore::ingest(dir.file("g.ppsg"), dir.file("g.txt"));
  ASSERT_EQ(back.size(), 20u);
  EXPECT_EQ(back.kind(), PayloadKind::Binary);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(back.records()[i].label, store.records()[i].label);
    EXPECT_EQ(std::get<BinaryCode>(back.records()[i].payload), std::get<BinaryCode>(store.records()[i].payload));
  }
}

// Index persistence across every index type and payload kind.

struct PersistCase {
  std::string name;
  IndexKind kind;
  MetricKind metric;
};

void PrintTo(const PersistCase& c, std::ostream* os) { *os << c.name; }

std::unique_ptr<Index> build(const PersistCase& c, const GalleryStore& store) {
  std::unique_ptr<Index> index;
  switch (c.kind) {
    case IndexKind::Flat: index = std::make_unique<FlatIndex>(c.metric, store.width()); break;
    case IndexKind::Ivf: {
      auto ivf = std::make_unique<IvfIndex>(c.metric, store.width(), IvfParams{.nlist = 16, .seed = 5, .nprobe = 3});
      std::vector<EmbeddingVector> samples;
      for (const auto& r : store.records()) samples.push_back(std::get<EmbeddingVector>(r.payload));
      ivf->train(samples);
      index = std::move(ivf);
      break;
    }
    case IndexKind::Hnsw: index = std::make_unique<HnswIndex>(c.metric, store.width(), HnswParams{.M = 8}); break;
  }
  index->add(store.records());
  return index;
}

class Persistence : public ::testing::TestWithParam<PersistCase> {};

TEST_P(Persistence, RoundtripGivesIdenticalSearchOutput) {
  const auto& c = GetParam();
  auto rows = oracle::gaussian_rows(600, 32, 21);
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < rows.size(); ++i) labels.push_back("class" + std::to_string(i % 7));
  auto store = GalleryStore::from_rows(float_matrix(rows), labels);
  if (c.metric == MetricKind::Hamming) store = store.binarized();
  auto index = build(c, store);

  TempDir dir;
  save_index(dir.file("x.ppsi"), *index, store.labels());
  auto loaded = load_index(dir.file("x.ppsi"));
  EXPECT_EQ(loaded.index->kind(), c.kind);
  EXPECT_EQ(loaded.index->metric(), c.metric);
  EXPECT_EQ(loaded.index->size(), index->size());

  auto qrows = oracle::gaussian_rows(100, 32, 22);
  for (const auto& q : qrows) {
    EmbeddingVector v(q);
    Payload query = c.metric == MetricKind::Hamming ? Payload(binarize(v)) : Payload(v);
    auto want = store.lookup_labels(index->search(query, 10));
    auto got = loaded.search(query, 10);
    ASSERT_EQ(got, want);
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(got[i].distance), std::bit_cast<std::uint64_t>(want[i].distance));
    }
  }
  // Save of the loaded index reproduces the file byte for byte.
  EXPECT_EQ(encode_index(*loaded.index, loaded.labels), encode_index(*index, store.labels()));
}

TEST_P(Persistence, IntegrityErrors) {
  const auto& c = GetParam();
  auto rows = oracle::gaussian_rows(100, 32, 23);
  auto store = GalleryStore::from_rows(float_matrix(rows), std::vector<std::string>(rows.size(), "z"));
  if (c.metric == MetricKind::Hamming) store = store.binarized();
  auto bytes = encode_index(*build(c, store), store.labels());

  auto corrupt = bytes;
  corrupt[bytes.size() - 20] ^= 0x01;  // inside the payload rows
  expect_error(ErrorCode::ChecksumMismatch, [&] { decode_index(corrupt); });
  auto bumped = bytes;
  bumped[4] += 1;
  expect_error(ErrorCode::VersionMismatch, [&] { decode_index(bumped); });
  for (std::size_t keep : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + keep);
    expect_error(ErrorCode::Truncated, [&] { decode_index(cut); });
  }
}

INSTANTIATE_TEST_SUITE_P(
    AllKinds, Persistence,
    ::testing::Values(PersistCase{"flat_l2", IndexKind::Flat, MetricKind::L2},
                      PersistCase{"flat_cosine", IndexKind::Flat, MetricKind::Cosine},
                      PersistCase{"flat_hamming", IndexKind::Flat, MetricKind::Hamming},
                      PersistCase{"ivf_l2", IndexKind::Ivf, MetricKind::L2},
                      PersistCase{"ivf_ip", IndexKind::Ivf, MetricKind::InnerProduct},
                      PersistCase{"hnsw_cosine", IndexKind::Hnsw, MetricKind::Cosine},
                      PersistCase{"hnsw_hamming", IndexKind::Hnsw, MetricKind::Hamming}),
    [](const auto& info) { return info.param.name; });

TEST(Persistence, LoadedHnswKeepsGrowingLikeTheOriginal) {
  auto rows = oracle::gaussian_rows(400, 16, 30);
  auto store = GalleryStore::from_rows(float_matrix(rows), std::vector<std::string>(rows.size(), "a"));
  std::vector<GalleryRecord> first(store.records().begin(), store.records().begin() + 200);
  std::vector<GalleryRecord> rest(store.records().begin() + 200, store.records().end());
  HnswIndex index(MetricKind::L2, 16, {.M = 8});
  index.add(first);
  LabelTable labels;
  for (const auto& r : first) labels.set(r.id, r.label);
  auto loaded = decode_index(encode_index(index, labels));
  index.add(rest);
  loaded.index->add(rest);
  io::ByteWriter a, b;
  index.serialize(a);
  dynamic_cast<const HnswIndex&>(*loaded.index).serialize(b);
  EXPECT_EQ(a.data(), b.data());
}

}  // namespace
}  // namespace recog
