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

#include <charconv>
#include <memory>
#include <sstream>

#include "recog/index_flat.hpp"
#include "recog/index_hnsw.hpp"
#include "recog/index_ivf.hpp"
#include "recog/metrics.hpp"
#include "recog/serialize.hpp"

namespace recog {

// ---------------------------------------------------------------------------
// Feature files
//
// "PPSG" | u32 version | u8 payload kind | u32 dim-or-nbits | u64 count |
// count rows (f32 x dim, or nbits/8 bytes) | u32 CRC32 of the rows.

inline constexpr std::uint32_t kFeatureFileVersion = 1;

/// Row-major block of payloads of one kind and width.
struct FeatureMatrix {
  PayloadKind kind = PayloadKind::Float32;
  std::size_t width = 0;  // dim, or nbits for binary
  std::size_t count = 0;
  std::vector<float> floats;
  std::vector<std::uint8_t> bytes;

  std::size_t row_bytes() const { return payload_bytes(kind, width); }

  Payload row(std::size_t i) const {
    if (kind == PayloadKind::Float32) {
      return EmbeddingVector(std::vector<float>(floats.begin() + i * width, floats.begin() + (i + 1) * width));
    }
    const std::size_t nb = width / 8;
    return BinaryCode(width, std::vector<std::uint8_t>(bytes.begin() + i * nb, bytes.begin() + (i + 1) * nb));
  }

  void append(const Payload& p) {
    if (count == 0 && floats.empty() && bytes.empty() && width == 0) {
      kind = kind_of(p);
      width = width_of(p);
    }
    if (kind_of(p) != kind || width_of(p) != width) {
      throw Error(ErrorCode::DimMismatch, "gallery.features",
                  "row of width " + std::to_string(width_of(p)) + " in a file of width " + std::to_string(width));
    }
    if (kind == PayloadKind::Float32) {
      auto v = std::get<EmbeddingVector>(p).values();
      floats.insert(floats.end(), v.begin(), v.end());
    } else {
      auto b = std::get<BinaryCode>(p).bytes();
      bytes.insert(bytes.end(), b.begin(), b.end());
    }
    ++count;
  }
};

inline std::vector<std::uint8_t> encode_features(const FeatureMatrix& m) {
  io::ByteWriter w;
  w.put_bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("PPSG"), 4));
  w.put<std::uint32_t>(kFeatureFileVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(m.kind));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.width));
  w.put<std::uint64_t>(m.count);
  const std::size_t start = w.size();
  if (m.kind == PayloadKind::Float32) {
    w.put_array<float>(m.floats);
  } else {
    w.put_array<std::uint8_t>(m.bytes);
  }
  auto crc = io::crc32(std::span(w.data()).subspan(start));
  w.put<std::uint32_t>(crc);
  return std::move(w).take();
}

inline FeatureMatrix decode_features(std::span<const std::uint8_t> data) {
  constexpr const char* op = "gallery.ingest";
  io::ByteReader r(data, op);
  auto magic = r.get_bytes(4);
  if (std::memcmp(magic.data(), "PPSG", 4) != 0) r.malformed("bad magic, not a feature file");
  auto version = r.get<std::uint32_t>();
  if (version != kFeatureFileVersion) {
    throw Error(ErrorCode::VersionMismatch, op,
                "feature file version " + std::to_string(version) + ", expected " + std::to_string(kFeatureFileVersion));
  }
  FeatureMatrix m;
  auto kind = r.get<std::uint8_t>();
  if (kind > 1) r.malformed("unknown payload kind " + std::to_string(kind));
  m.kind = static_cast<PayloadKind>(kind);
  m.width = r.get<std::uint32_t>();
  m.count = r.get<std::uint64_t>();
  if (m.width == 0) r.malformed("zero width");
  if (m.kind == PayloadKind::Binary && m.width % 8 != 0) r.malformed("nbits " + std::to_string(m.width) + " not a multiple of 8");
  const std::size_t start = r.position();
  if (m.count > r.remaining() / m.row_bytes()) {
    throw Error(ErrorCode::Truncated, op,
                "header promises " + std::to_string(m.count) + " rows, file holds " +
                    std::to_string(r.remaining() / m.row_bytes()));
  }
  if (m.kind == PayloadKind::Float32) {
    m.floats = r.get_array<float>(m.count * m.width);
  } else {
    m.bytes = r.get_array<std::uint8_t>(m.count * m.width / 8);
  }
  auto rows = data.subspan(start, r.position() - start);
  auto crc = r.get<std::uint32_t>();
  if (r.remaining() != 0) r.malformed(std::to_string(r.remaining()) + " trailing bytes");
  if (crc != io::crc32(rows)) throw Error(ErrorCode::ChecksumMismatch, op, "feature rows fail CRC32");
  for (std::size_t i = 0; i < m.floats.size(); ++i) {
    if (!std::isfinite(m.floats[i])) {
      throw Error(ErrorCode::MalformedRow, op, "row " + std::to_string(i / m.width) + " has a non-finite value");
    }
  }
  return m;
}

/// One row of comma-separated floats per line; blank lines and '#' lines skipped.
inline FeatureMatrix parse_features_csv(std::string_view text) {
  constexpr const char* op = "gallery.ingest";
  FeatureMatrix m;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos || line.front() == '#') continue;
    std::vector<float> row;
    std::size_t p = 0;
    while (true) {
      std::size_t comma = line.find(',', p);
      std::string_view cell = line.substr(p, comma == std::string_view::npos ? std::string_view::npos : comma - p);
      while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
      while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
      float v = 0.0f;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw Error(ErrorCode::MalformedRow, op,
                    "line " + std::to_string(line_no) + ": cannot parse '" + std::string(cell) + "' as a float");
      }
      row.push_back(v);
      if (comma == std::string_view::npos) break;
      p = comma + 1;
    }
    if (m.count == 0) {
      m.width = row.size();
    } else if (row.size() != m.width) {
      throw Error(ErrorCode::MalformedRow, op,
                  "line " + std::to_string(line_no) + " has " + std::to_string(row.size()) + " values, expected " +
                      std::to_string(m.width));
    }
    m.floats.insert(m.floats.end(), row.begin(), row.end());
    ++m.count;
  }
  return m;
}

/// Reads a PPSG file, or CSV when `csv` is set.
inline FeatureMatrix read_features(const std::string& path, bool csv = false) {
  auto data = io::read_file(path, "gallery.ingest");
  if (csv) return parse_features_csv(std::string_view(reinterpret_cast<const char*>(data.data()), data.size()));
  return decode_features(data);
}

inline void write_features(const std::string& path, const FeatureMatrix& m) {
  io::write_file(path, encode_features(m), "gallery.save");
}

/// One label per line, UTF-8; a final newline is optional.
inline std::vector<std::string> parse_labels(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      throw Error(ErrorCode::MalformedRow, "gallery.ingest", "label line " + std::to_string(out.size() + 1) + " is empty");
    }
    out.emplace_back(line);
    pos = end + 1;
  }
  return out;
}

inline std::vector<std::string> read_labels(const std::string& path) {
  auto data = io::read_file(path, "gallery.ingest");
  return parse_labels(std::string_view(reinterpret_cast<const char*>(data.data()), data.size()));
}

inline void write_labels(const std::string& path, const std::vector<std::string>& labels) {
  std::string text;
  for (const auto& l : labels) {
    if (l.empty() || l.find('\n') != std::string::npos) {
      throw Error(ErrorCode::BadArgument, "gallery.save", "labels must be non-empty single lines");
    }
    text += l;
    text += '\n';
  }
  io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), "gallery.save");
}

// ---------------------------------------------------------------------------
// Labels

/// id -> label with interned label strings.
class LabelTable {
 public:
  void set(RecordId id, const std::string& label) {
    auto [it, fresh] = intern_.try_emplace(label, static_cast<std::uint32_t>(strings_.size()));
    if (fresh) strings_.push_back(label);
    by_id_[id] = it->second;
  }

  void erase(RecordId id) { by_id_.erase(id); }
  bool contains(RecordId id) const { return by_id_.contains(id); }
  std::size_t size() const { return by_id_.size(); }
  std::size_t distinct_labels() const { return strings_.size(); }

  const std::string& label(RecordId id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw Error(ErrorCode::UnknownId, "gallery.lookup_labels", "id " + std::to_string(id) + " not in gallery");
    return strings_[it->second];
  }

  /// Fills in the label of every result, keeping rank order.
  std::vector<SearchResult> lookup(std::vector<SearchResult> results) const {
    for (auto& r : results) r.label = label(r.id);
    return results;
  }

  void serialize(io::ByteWriter& w) const {
    w.put<std::uint64_t>(strings_.size());
    for (const auto& s : strings_) w.put_string(s);
    std::vector<std::pair<RecordId, std::uint32_t>> rows(by_id_.begin(), by_id_.end());
    std::sort(rows.begin(), rows.end());
    w.put<std::uint64_t>(rows.size());
    for (const auto& [id, l] : rows) {
      w.put<RecordId>(id);
      w.put<std::uint32_t>(l);
    }
  }

  static LabelTable deserialize(io::ByteReader& r) {
    LabelTable t;
    auto n = r.get<std::uint64_t>();
    if (n > r.remaining() / 4) r.malformed("label count exceeds file size");
    for (std::uint64_t i = 0; i < n; ++i) {
      auto s = r.get_string();
      if (!t.intern_.try_emplace(s, static_cast<std::uint32_t>(t.strings_.size())).second) r.malformed("duplicate label string");
      t.strings_.push_back(std::move(s));
    }
    auto rows = r.get<std::uint64_t>();
    if (rows > r.remaining() / 12) r.malformed("label rows exceed file size");
    for (std::uint64_t i = 0; i < rows; ++i) {
      auto id = r.get<RecordId>();
      auto l = r.get<std::uint32_t>();
      if (l >= t.strings_.size()) r.malformed("label index out of range");
      if (!t.by_id_.emplace(id, l).second) r.malformed("duplicate id in label table");
    }
    return t;
  }

 private:
  std::vector<std::string> strings_;
  std::unordered_map<std::string, std::uint32_t> intern_;
  std::unordered_map<RecordId, std::uint32_t> by_id_;
};

// ---------------------------------------------------------------------------
// Gallery store

/// Labeled payloads of one kind and width, ids assigned in insertion order.
class GalleryStore {
 public:
  GalleryStore(PayloadKind kind, std::size_t width) : kind_(kind), width_(width) {
    if (width == 0) throw Error(ErrorCode::BadArgument, "gallery.create", "width must be positive");
    if (kind == PayloadKind::Binary && width % 8 != 0) {
      throw Error(ErrorCode::DimNotByteAligned, "gallery.create", "nbits must be a multiple of 8");
    }
  }

  /// Pairs feature rows with label lines; ids run 0..n-1.
  static GalleryStore from_rows(const FeatureMatrix& features, const std::vector<std::string>& labels) {
    if (features.count != labels.size()) {
      throw Error(ErrorCode::RowCountMismatch, "gallery.ingest",
                  "feature file has " + std::to_string(features.count) + " rows but label file has " +
                      std::to_string(labels.size()) + " lines");
    }
    if (features.width == 0) throw Error(ErrorCode::BadHeader, "gallery.ingest", "feature file has no columns");
    GalleryStore store(features.kind, features.width);
    store.records_.reserve(features.count);
    for (std::size_t i = 0; i < features.count; ++i) store.append(labels[i], features.row(i));
    return store;
  }

  static GalleryStore ingest(const std::string& features_path, const std::string& labels_path, bool csv = false) {
    return from_rows(read_features(features_path, csv), read_labels(labels_path));
  }

  /// Appends a record under the next free id and returns that id.
  RecordId append(const std::string& label, Payload payload) {
    if (kind_of(payload) != kind_ || width_of(payload) != width_) {
      throw Error(ErrorCode::DimMismatch, "gallery.add",
                  "payload of width " + std::to_string(width_of(payload)) + " in a gallery of width " + std::to_string(width_));
    }
    RecordId id = next_id_++;
    labels_.set(id, label);
    records_.push_back({id, label, std::move(payload)});
    return id;
  }

  PayloadKind kind() const { return kind_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return records_.size(); }
  const std::vector<GalleryRecord>& records() const { return records_; }
  const LabelTable& labels() const { return labels_; }

  std::vector<SearchResult> lookup_labels(std::vector<SearchResult> results) const {
    return labels_.lookup(std::move(results));
  }

  std::size_t payload_bytes() const { return gallery_payload_bytes(kind_, width_, size()); }

  static std::size_t gallery_payload_bytes(PayloadKind kind, std::size_t width, std::size_t count) {
    return count * recog::payload_bytes(kind, width);
  }

  /// Same records with sign-binarized payloads.
  GalleryStore binarized() const {
    if (kind_ != PayloadKind::Float32) throw Error(ErrorCode::MetricMismatch, "gallery.binarize", "gallery is already binary");
    GalleryStore out(PayloadKind::Binary, width_);
    out.records_.reserve(records_.size());
    for (const auto& r : records_) {
      out.labels_.set(r.id, r.label);
      out.records_.push_back({r.id, r.label, binarize(std::get<EmbeddingVector>(r.payload))});
    }
    out.next_id_ = next_id_;
    return out;
  }

  FeatureMatrix features() const {
    FeatureMatrix m;
    m.kind = kind_;
    m.width = width_;
    for (const auto& r : records_) m.append(r.payload);
    return m;
  }

  void save(const std::string& features_path, const std::string& labels_path) const {
    write_features(features_path, features());
    std::vector<std::string> lines;
    for (const auto& r : records_) lines.push_back(r.label);
    write_labels(labels_path, lines);
  }

 private:
  PayloadKind kind_;
  std::size_t width_;
  std::vector<GalleryRecord> records_;
  LabelTable labels_;
  RecordId next_id_ = 0;
};

// ---------------------------------------------------------------------------
// Index container
//
// "PPSI" | u32 version | u64 body length | body | u32 CRC32 of body, where body is
// u8 index kind | u8 metric | u64 dim | label table | index serialization.

inline constexpr std::uint32_t kIndexFileVersion = 1;

/// A loaded index together with the labels of its records.
struct IndexBundle {
  std::unique_ptr<Index> index;
  LabelTable labels;

  std::vector<SearchResult> search(const Payload& query, std::size_t k, const SearchParams& params = {}) const {
    return labels.lookup(index->search(query, k, params));
  }
};

inline std::vector<std::uint8_t> encode_index(const Index& index, const LabelTable& labels) {
  io::ByteWriter body;
  body.put<std::uint8_t>(static_cast<std::uint8_t>(index.kind()));
  body.put<std::uint8_t>(static_cast<std::uint8_t>(index.metric()));
  body.put<std::uint64_t>(index.dim());
  labels.serialize(body);
  switch (index.kind()) {
    case IndexKind::Flat: dynamic_cast<const FlatIndex&>(index).serialize(body); break;
    case IndexKind::Ivf: dynamic_cast<const IvfIndex&>(index).serialize(body); break;
    case IndexKind::Hnsw: dynamic_cast<const HnswIndex&>(index).serialize(body); break;
  }
  io::ByteWriter out;
  out.put_bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("PPSI"), 4));
  out.put<std::uint32_t>(kIndexFileVersion);
  out.put<std::uint64_t>(body.size());
  out.put_bytes(body.data());
  out.put<std::uint32_t>(io::crc32(body.data()));
  return std::move(out).take();
}

inline IndexBundle decode_index(std::span<const std::uint8_t> data) {
  constexpr const char* op = "gallery.load";
  io::ByteReader head(data, op);
  auto magic = head.get_bytes(4);
  if (std::memcmp(magic.data(), "PPSI", 4) != 0) head.malformed("bad magic, not an index file");
  auto version = head.get<std::uint32_t>();
  if (version != kIndexFileVersion) {
    throw Error(ErrorCode::VersionMismatch, op,
                "index file version " + std::to_string(version) + ", expected " + std::to_string(kIndexFileVersion));
  }
  auto body_len = head.get<std::uint64_t>();
  if (body_len > head.remaining() || head.remaining() - body_len < 4) {
    throw Error(ErrorCode::Truncated, op,
                "body of " + std::to_string(body_len) + " bytes plus checksum, file holds " + std::to_string(head.remaining()));
  }
  auto body = head.get_bytes(body_len);
  auto crc = head.get<std::uint32_t>();
  if (head.remaining() != 0) head.malformed(std::to_string(head.remaining()) + " trailing bytes");
  if (crc != io::crc32(body)) throw Error(ErrorCode::ChecksumMismatch, op, "index body fails CRC32");

  io::ByteReader r(body, op);
  auto kind = r.get<std::uint8_t>();
  auto metric = r.get<std::uint8_t>();
  if (kind > 2) r.malformed("unknown index kind " + std::to_string(kind));
  if (metric > 3) r.malformed("unknown metric " + std::to_string(metric));
  auto dim = r.get<std::uint64_t>();
  IndexBundle out;
  out.labels = LabelTable::deserialize(r);
  auto m = static_cast<MetricKind>(metric);
  switch (static_cast<IndexKind>(kind)) {
    case IndexKind::Flat: out.index = std::make_unique<FlatIndex>(FlatIndex::deserialize(r, m, dim)); break;
    case IndexKind::Ivf: out.index = std::make_unique<IvfIndex>(IvfIndex::deserialize(r, m, dim)); break;
    case IndexKind::Hnsw: out.index = std::make_unique<HnswIndex>(HnswIndex::deserialize(r, m, dim)); break;
  }
  if (r.remaining() != 0) r.malformed(std::to_string(r.remaining()) + " trailing bytes in index body");
  if (out.labels.size() != out.index->size()) r.malformed("label table and index disagree on record count");
  return out;
}

inline void save_index(const std::string& path, const Index& index, const LabelTable& labels) {
  io::write_file(path, encode_index(index, labels), "gallery.save");
}

inline IndexBundle load_index(const std::string& path) { return decode_index(io::read_file(path, "gallery.load")); }

}  // namespace recog
