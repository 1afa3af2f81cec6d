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

#include <cstdio>
#include <numeric>

#include "recog/index_flat.hpp"
#include "recog/losses.hpp"
#include "recog/metrics.hpp"
#include "recog/serialize.hpp"

namespace recog {

// ---------------------------------------------------------------------------
// Toy embedder

struct DenseLayer {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
};

/// Dense layers with ReLU between them; the last layer is linear.
class ToyEmbedder {
 public:
  struct Trace {
    std::vector<Matrix> inputs;  // input of each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
  };

  ToyEmbedder() = default;

  /// widths = {input, [hidden,] embedding}. He-uniform weights, zero bias.
  ToyEmbedder(const std::vector<std::size_t>& widths, std::mt19937_64& rng) {
    if (widths.size() < 2 || widths.size() > 3) {
      throw Error(ErrorCode::BadArgument, "trainer.embedder", "one or two dense layers supported");
    }
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      if (widths[l] == 0 || widths[l + 1] == 0) throw Error(ErrorCode::BadArgument, "trainer.embedder", "zero width");
      DenseLayer layer;
      double bound = std::sqrt(6.0 / static_cast<double>(widths[l]));
      layer.weight.resize(widths[l], widths[l + 1]);
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
        layer.weight.data()[i] = (2.0 * detail::uniform01(rng) - 1.0) * bound;
      }
      layer.bias = Matrix::Zero(1, widths[l + 1]);
      layers_.push_back(std::move(layer));
    }
  }

  explicit ToyEmbedder(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {}

  std::size_t input_dim() const { return layers_.front().weight.rows(); }
  std::size_t embedding_dim() const { return layers_.back().weight.cols(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  Matrix forward(const Matrix& x, Trace* trace = nullptr) const {
    if (static_cast<std::size_t>(x.cols()) != input_dim()) {
      throw Error(ErrorCode::DimMismatch, "trainer.embed",
                  "input dim " + std::to_string(x.cols()) + " vs " + std::to_string(input_dim()));
    }
    Matrix a = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = a * layers_[l].weight;
      z.rowwise() += layers_[l].bias.row(0);
      if (trace) {
        trace->inputs.push_back(a);
        trace->pre.push_back(z);
      }
      a = l + 1 < layers_.size() ? Matrix(z.cwiseMax(0.0)) : std::move(z);
    }
    return a;
  }

  /// Gradients for every layer as (dW, db) pairs, in layer order.
  std::vector<DenseLayer> backward(const Trace& trace, Matrix dout) const {
    std::vector<DenseLayer> grads(layers_.size());
    for (std::size_t l = layers_.size(); l-- > 0;) {
      grads[l].weight = trace.inputs[l].transpose() * dout;
      grads[l].bias = dout.colwise().sum();
      if (l > 0) {
        dout = (dout * layers_[l].weight.transpose()).cwiseProduct((trace.pre[l - 1].array() > 0.0).cast<double>().matrix());
      }
    }
    return grads;
  }

 private:
  std::vector<DenseLayer> layers_;
};

/// One trainable network: embedder plus its classification head weights.
/// With `tanh_output` the embedding is tanh of the network output.
struct Model {
  ToyEmbedder net;
  Matrix head;  // classes x embedding_dim
  bool tanh_output = false;

  Matrix embed(const Matrix& x) const {
    Matrix f = net.forward(x);
    return tanh_output ? Matrix(f.array().tanh().matrix()) : f;
  }

  std::vector<Matrix*> parameters() {
    std::vector<Matrix*> out;
    for (auto& l : net.layers()) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    out.push_back(&head);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Synthetic data

struct Split {
  Matrix x;
  Labels y;
};

struct SyntheticDataset {
  std::size_t classes = 0;
  std::size_t input_dim = 0;
  Split train, gallery, query;
};

struct DatasetSpec {
  std::size_t classes = 8;
  std::size_t input_dim = 3;
  std::size_t train_per_class = 100;
  std::size_t gallery_per_class = 20;
  std::size_t query_per_class = 20;
  double center_scale = 1.0;  // class centers ~ N(0, center_scale^2)
  double noise = 0.1;
  std::uint64_t seed = 0;
};

/// Gaussian blobs. Each split draws fresh samples, so splits never share a point.
inline SyntheticDataset make_blobs(const DatasetSpec& spec) {
  if (spec.classes == 0 || spec.input_dim == 0) throw Error(ErrorCode::BadArgument, "trainer.dataset", "empty spec");
  std::mt19937_64 rng(spec.seed);
  Matrix centers(spec.classes, spec.input_dim);
  for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = spec.center_scale * detail::normal01(rng);
  auto draw = [&](std::size_t per_class) {
    Split s;
    s.x.resize(spec.classes * per_class, spec.input_dim);
    s.y.resize(spec.classes * per_class);
    for (std::size_t c = 0, r = 0; c < spec.classes; ++c) {
      for (std::size_t i = 0; i < per_class; ++i, ++r) {
        for (std::size_t k = 0; k < spec.input_dim; ++k) s.x(r, k) = centers(c, k) + spec.noise * detail::normal01(rng);
        s.y[r] = static_cast<int>(c);
      }
    }
    return s;
  };
  SyntheticDataset ds;
  ds.classes = spec.classes;
  ds.input_dim = spec.input_dim;
  ds.train = draw(spec.train_per_class);
  ds.gallery = draw(spec.gallery_per_class);
  ds.query = draw(spec.query_per_class);
  return ds;
}

// ---------------------------------------------------------------------------
// Training

enum class TrainMode { Baseline, Dml, Udml, Dshsd };
enum class LrSchedule { Constant, Cosine };

inline constexpr std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Baseline: return "baseline";
    case TrainMode::Dml: return "dml";
    case TrainMode::Udml: return "udml";
    case TrainMode::Dshsd: return "dshsd";
  }
  return "?";
}

inline TrainMode parse_train_mode(std::string_view s) {
  for (auto m : {TrainMode::Baseline, TrainMode::Dml, TrainMode::Udml, TrainMode::Dshsd}) {
    if (s == to_string(m)) return m;
  }
  throw Error(ErrorCode::BadArgument, "trainer.train", "unknown mode " + std::string(s));
}

struct TrainConfig {
  TrainMode mode = TrainMode::Baseline;
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  LrSchedule schedule = LrSchedule::Constant;
  std::uint64_t seed = 0;                    // batch order
  std::optional<std::uint64_t> model_seed;   // first network; defaults to seed
  std::optional<std::uint64_t> peer_seed;    // second network; defaults to model seed + 1
  std::size_t hidden = 64;                   // 0 = single linear layer
  std::size_t embedding_dim = 64;
  double scale = 30.0;
  double margin = 0.2;
  DshsdParams dshsd;

  std::uint64_t first_seed() const { return model_seed.value_or(seed); }
  std::uint64_t second_seed() const { return peer_seed.value_or(first_seed() + 1); }
  bool two_networks() const { return mode == TrainMode::Dml || mode == TrainMode::Udml; }
};

struct EpochStats {
  std::size_t epoch = 0;  // 0 = before training
  double lr = 0.0;
  double total = 0.0;
  std::map<std::string, double> components;
};

struct TrainResult {
  Model first;
  std::optional<Model> second;
  EpochStats initial;  // full training set, before any step
  EpochStats final;    // full training set, after the last step
  std::vector<EpochStats> history;  // mean over the batches of each epoch
};

inline Model init_model(const TrainConfig& cfg, std::size_t input_dim, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> widths{input_dim};
  if (cfg.hidden) widths.push_back(cfg.hidden);
  widths.push_back(cfg.embedding_dim);
  Model m;
  m.net = ToyEmbedder(widths, rng);
  m.head.resize(classes, cfg.embedding_dim);
  for (Eigen::Index i = 0; i < m.head.size(); ++i) m.head.data()[i] = detail::normal01(rng);
  m.tanh_output = cfg.mode == TrainMode::Dshsd;
  return m;
}

namespace detail {

struct StepResult {
  LossBundle loss;
  std::vector<std::vector<Matrix>> grads;  // per network, aligned with Model::parameters()
};

inline std::vector<Matrix> flatten_grads(std::vector<DenseLayer> layer_grads, Matrix head_grad) {
  std::vector<Matrix> out;
  for (auto& g : layer_grads) {
    out.push_back(std::move(g.weight));
    out.push_back(std::move(g.bias));
  }
  out.push_back(std::move(head_grad));
  return out;
}

inline StepResult objective(const TrainConfig& cfg, const std::vector<Model*>& nets, const Matrix& x, const Labels& y,
                            bool with_grads) {
  StepResult r;
  if (cfg.mode == TrainMode::Baseline || cfg.mode == TrainMode::Dshsd) {
    ToyEmbedder::Trace tr;
    Matrix f = nets[0]->net.forward(x, with_grads ? &tr : nullptr);
    Matrix dhead;
    if (cfg.mode == TrainMode::Baseline) {
      r.loss = arcmargin_forward(f, y, ArcMarginHead(nets[0]->head, cfg.scale, cfg.margin));
      r.loss.components = {{"arc", r.loss.value}};
      dhead = r.loss.gradient("weight");
    } else {
      r.loss = dshsd_loss(f, similarity_from_labels(y), y, nets[0]->head, cfg.dshsd);
      dhead = r.loss.gradient("weight");
    }
    if (with_grads) r.grads.push_back(flatten_grads(nets[0]->net.backward(tr, r.loss.gradient("features")), dhead));
    return r;
  }
  ToyEmbedder::Trace ts, tt;
  Matrix fs = nets[0]->net.forward(x, with_grads ? &ts : nullptr);
  Matrix ft = nets[1]->net.forward(x, with_grads ? &tt : nullptr);
  r.loss = udml_forward(fs, ft, ArcMarginHead(nets[0]->head, cfg.scale, cfg.margin),
                        ArcMarginHead(nets[1]->head, cfg.scale, cfg.margin), y, cfg.mode == TrainMode::Udml);
  if (with_grads) {
    r.grads.push_back(flatten_grads(nets[0]->net.backward(ts, r.loss.gradient("student.embedding")),
                                    r.loss.gradient("student.weight")));
    r.grads.push_back(flatten_grads(nets[1]->net.backward(tt, r.loss.gradient("teacher.embedding")),
                                    r.loss.gradient("teacher.weight")));
  }
  return r;
}

inline bool all_finite(Model& m) {
  for (auto* p : m.parameters()) {
    if (!p->allFinite()) return false;
  }
  return true;
}

}  // namespace detail

/// Loss of the current networks over a whole split, without updating anything.
inline EpochStats evaluate_objective(const TrainConfig& cfg, const std::vector<Model*>& nets, const Split& data) {
  auto r = detail::objective(cfg, nets, data.x, data.y, false);
  EpochStats s;
  s.total = r.loss.value;
  s.components = r.loss.components;
  return s;
}

inline double learning_rate(const TrainConfig& cfg, std::size_t epoch) {
  if (cfg.schedule == LrSchedule::Constant || cfg.epochs == 0) return cfg.lr;
  return 0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(cfg.epochs)));
}

/// Mini-batch SGD with momentum (v = mu v + g, w -= lr v) and L2 weight decay
/// on weight matrices. Both networks of a mutual pair take one step per batch
/// from a single combined backward pass.
inline TrainResult train(const TrainConfig& cfg, const SyntheticDataset& data) {
  constexpr const char* op = "trainer.train";
  if (cfg.batch_size == 0) throw Error(ErrorCode::BadArgument, op, "batch_size must be positive");
  if (!(cfg.lr >= 0.0)) throw Error(ErrorCode::BadArgument, op, "lr must be >= 0");
  if (cfg.embedding_dim == 0) throw Error(ErrorCode::BadArgument, op, "embedding_dim must be positive");
  if (data.train.y.empty()) throw Error(ErrorCode::BadArgument, op, "empty training split");

  TrainResult res;
  res.first = init_model(cfg, data.input_dim, data.classes, cfg.first_seed());
  if (cfg.two_networks()) res.second = init_model(cfg, data.input_dim, data.classes, cfg.second_seed());
  std::vector<Model*> nets{&res.first};
  if (res.second) nets.push_back(&*res.second);

  std::vector<std::vector<Matrix>> velocity;
  for (auto* m : nets) {
    std::vector<Matrix> v;
    for (auto* p : m->parameters()) v.push_back(Matrix::Zero(p->rows(), p->cols()));
    velocity.push_back(std::move(v));
  }

  res.initial = evaluate_objective(cfg, nets, data.train);
  std::mt19937_64 order_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  const std::size_t n = data.train.y.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[order_rng() % i]);
    const double lr = learning_rate(cfg, epoch - 1);
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::size_t len = std::min(cfg.batch_size, n - start);
      Matrix xb(len, data.input_dim);
      Labels yb(len);
      for (std::size_t r = 0; r < len; ++r) {
        xb.row(r) = data.train.x.row(order[start + r]);
        yb[r] = data.train.y[order[start + r]];
      }
      auto step = detail::objective(cfg, nets, xb, yb, true);
      if (!std::isfinite(step.loss.value)) {
        throw Error(ErrorCode::DivergenceDetected, op,
                    "loss is " + std::to_string(step.loss.value) + " at epoch " + std::to_string(epoch) + " batch " +
                        std::to_string(batches) + " (lr " + std::to_string(lr) + ")");
      }
      for (std::size_t k = 0; k < nets.size(); ++k) {
        auto params = nets[k]->parameters();
        for (std::size_t p = 0; p < params.size(); ++p) {
          Matrix g = step.grads[k][p];
          // Biases (1-row parameters of the embedder) are not decayed.
          bool is_bias = p + 1 < params.size() && p % 2 == 1;
          if (!is_bias && cfg.weight_decay != 0.0) g += cfg.weight_decay * *params[p];
          velocity[k][p] = cfg.momentum * velocity[k][p] + g;
          *params[p] -= lr * velocity[k][p];
        }
        if (!detail::all_finite(*nets[k])) {
          throw Error(ErrorCode::DivergenceDetected, op,
                      "non-finite weights after epoch " + std::to_string(epoch) + " batch " + std::to_string(batches));
        }
      }
      stats.total += step.loss.value;
      for (const auto& [name, v] : step.loss.components) stats.components[name] += v;
      ++batches;
    }
    stats.total /= static_cast<double>(batches);
    for (auto& [name, v] : stats.components) v /= static_cast<double>(batches);
    res.history.push_back(std::move(stats));
  }
  res.final = evaluate_objective(cfg, nets, data.train);
  return res;
}

/// Loss history as CSV: epoch, one column per loss component, total.
inline std::string history_csv(const TrainResult& res) {
  std::string out = "epoch,lr";
  const auto& names = res.initial.components;
  for (const auto& [name, v] : names) out += "," + name;
  out += ",total\n";
  char buf[64];
  for (const auto& e : res.history) {
    out += std::to_string(e.epoch);
    std::snprintf(buf, sizeof buf, ",%.10g", e.lr);
    out += buf;
    for (const auto& [name, v] : names) {
      std::snprintf(buf, sizeof buf, ",%.10g", e.components.at(name));
      out += buf;
    }
    std::snprintf(buf, sizeof buf, ",%.10g\n", e.total);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace detail {

inline std::vector<GalleryRecord> embedding_records(const Matrix& emb, const Labels& labels, bool binary) {
  std::vector<GalleryRecord> recs;
  recs.reserve(emb.rows());
  for (Eigen::Index i = 0; i < emb.rows(); ++i) {
    std::vector<float> row(emb.cols());
    for (Eigen::Index k = 0; k < emb.cols(); ++k) row[k] = static_cast<float>(emb(i, k));
    EmbeddingVector v(std::move(row));
    Payload p = binary ? Payload(binarize(v)) : Payload(std::move(v));
    recs.push_back({static_cast<RecordId>(i), std::to_string(labels[i]), std::move(p)});
  }
  return recs;
}

}  // namespace detail

/// recall@1..k: fraction of queries whose top-j gallery hits contain a record
/// of the query's class. Float embeddings use cosine; `binary` sign-binarizes
/// both sides and uses Hamming.
inline std::vector<double> evaluate_recall(const Model& model, const SyntheticDataset& data, std::size_t k,
                                           bool binary = false) {
  constexpr const char* op = "trainer.evaluate_recall";
  if (data.gallery.y.empty()) throw Error(ErrorCode::BadArgument, op, "empty gallery");
  detail::check_k(k, op);
  Matrix g = model.embed(data.gallery.x), q = model.embed(data.query.x);
  FlatIndex index(binary ? MetricKind::Hamming : MetricKind::Cosine, static_cast<std::size_t>(g.cols()));
  index.add(detail::embedding_records(g, data.gallery.y, binary));
  auto queries = detail::embedding_records(q, data.query.y, binary);
  std::vector<double> hits(k, 0.0);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    auto res = index.search(queries[i].payload, k);
    std::size_t first = k;
    for (std::size_t r = 0; r < res.size(); ++r) {
      if (data.gallery.y[res[r].id] == data.query.y[i]) {
        first = r;
        break;
      }
    }
    for (std::size_t r = first; r < k; ++r) hits[r] += 1.0;
  }
  for (auto& h : hits) h /= static_cast<double>(queries.size());
  return hits;
}

// ---------------------------------------------------------------------------
// Checkpoints: "PPSC", u32 version, u8 tanh flag, u32 layer count, then per
// layer (u32 rows, u32 cols, f64 weights, f64 bias), head (u32 rows, u32 cols,
// f64), u32 CRC32 of everything after the magic.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_matrix(io::ByteWriter& w, const Matrix& m) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
  w.put_array<double>(std::span<const double>(m.data(), m.size()));
}

inline Matrix get_matrix(io::ByteReader& r) {
  auto rows = r.get<std::uint32_t>(), cols = r.get<std::uint32_t>();
  auto v = r.get_array<double>(static_cast<std::size_t>(rows) * cols);
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Model& m) {
  io::ByteWriter body;
  body.put<std::uint32_t>(kCheckpointVersion);
  body.put<std::uint8_t>(m.tanh_output ? 1 : 0);
  body.put<std::uint32_t>(static_cast<std::uint32_t>(m.net.layers().size()));
  for (const auto& l : m.net.layers()) {
    detail::put_matrix(body, l.weight);
    detail::put_matrix(body, l.bias);
  }
  detail::put_matrix(body, m.head);
  io::ByteWriter out;
  out.put_bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("PPSC"), 4));
  out.put_bytes(body.data());
  out.put<std::uint32_t>(io::crc32(body.data()));
  return std::move(out).take();
}

inline Model deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  constexpr const char* op = "trainer.load_checkpoint";
  io::ByteReader r(bytes, op);
  auto magic = r.get_bytes(4);
  if (std::memcmp(magic.data(), "PPSC", 4) != 0) r.malformed("bad magic, not a checkpoint");
  if (bytes.size() < 8) throw Error(ErrorCode::Truncated, op, "file shorter than header and checksum");
  auto body = bytes.subspan(4, bytes.size() - 8);
  io::ByteReader tail(bytes.subspan(bytes.size() - 4), op);
  io::ByteReader br(body, op);
  auto version = br.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionMismatch, op,
                "file version " + std::to_string(version) + ", expected " + std::to_string(kCheckpointVersion));
  }
  if (tail.get<std::uint32_t>() != io::crc32(body)) throw Error(ErrorCode::ChecksumMismatch, op, "checkpoint CRC mismatch");
  Model m;
  m.tanh_output = br.get<std::uint8_t>() != 0;
  auto count = br.get<std::uint32_t>();
  if (count < 1 || count > 2) br.malformed("layer count " + std::to_string(count));
  std::vector<DenseLayer> layers(count);
  for (auto& l : layers) {
    l.weight = detail::get_matrix(br);
    l.bias = detail::get_matrix(br);
    if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols()) br.malformed("bias shape");
  }
  for (std::size_t i = 1; i < layers.size(); ++i) {
    if (layers[i].weight.rows() != layers[i - 1].weight.cols()) br.malformed("layer shapes do not chain");
  }
  m.net = ToyEmbedder(std::move(layers));
  m.head = detail::get_matrix(br);
  if (static_cast<std::size_t>(m.head.cols()) != m.net.embedding_dim()) br.malformed("head shape");
  if (br.remaining() != 0) br.malformed("trailing bytes");
  return m;
}

inline void save_checkpoint(const Model& m, const std::string& path) {
  io::write_file(path, serialize_checkpoint(m), "trainer.save_checkpoint");
}

inline Model load_checkpoint(const std::string& path) {
  return deserialize_checkpoint(io::read_file(path, "trainer.load_checkpoint"));
}

}  // namespace recog
