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

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "recog/eval.hpp"
#include "recog/gallery.hpp"
#include "recog/trainer.hpp"

namespace recog::cli {

// ---------------------------------------------------------------------------
// Config files: one key=value per line, '#' starts a comment line.

inline std::vector<std::pair<std::string, std::string>> parse_config(std::string_view text, const std::string& path) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t pos = 0, line_no = 0;
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos || trim(line.substr(0, eq)).empty()) {
      throw Error(ErrorCode::BadArgument, "cli.config", path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    out.emplace_back(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Option holders

struct Common {
  std::string config;
  std::size_t threads = 0;
};

struct BuildOpts {
  std::string features, labels, out, index = "flat", metric = "auto";
  bool csv = false;
  std::optional<std::size_t> nlist;
  std::size_t nprobe_default = 1, max_iters = 25, M = 32, ef_construction = 200, ef_search_default = 64;
  std::uint64_t seed = 0;
};

struct SearchOpts {
  std::string index_file, query_features;
  bool csv = false;
  std::size_t k = 5;
  std::optional<std::size_t> nprobe, ef_search;
};

struct EvalOpts {
  std::string index_file, query_features, query_labels;
  bool csv = false;
  std::size_t k = 10;
  std::optional<std::size_t> nprobe, ef_search;
};

struct BenchOpts {
  std::size_t gallery_size = 100000, dim = 512, queries = 100, repeats = 5, k = 10;
  std::string payload = "both", index = "flat", metric = "l2";
  std::size_t M = 32, ef_construction = 200, ef_search = 64;
  std::optional<std::size_t> nlist, nprobe;
  std::uint64_t seed = 1;
};

struct DataOpts {
  std::size_t classes = 8, input_dim = 3, train_per_class = 100, gallery_per_class = 20, query_per_class = 20;
  double center_scale = 1.0, noise = 0.1;
  std::uint64_t data_seed = 0;

  DatasetSpec spec() const {
    return {classes, input_dim, train_per_class, gallery_per_class, query_per_class, center_scale, noise, data_seed};
  }
};

struct TrainOpts {
  std::string mode = "baseline", schedule = "constant", checkpoint, peer_checkpoint, loss_csv;
  std::size_t epochs = 50, batch_size = 128, hidden = 64, embedding_dim = 64;
  double lr = 0.01, momentum = 0.9, weight_decay = 1e-5, scale = 30.0, margin = 0.2, alpha = 0.05;
  std::optional<double> hash_margin;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> model_seed, peer_seed;
};

struct SynthOpts {
  std::string out_prefix;
};

struct EmbedOpts {
  std::string checkpoint, features, out;
  bool csv = false;
};

struct BinarizeOpts {
  std::string features, out;
  bool csv = false;
};

struct DeleteOpts {
  std::string index_file, out;
  std::vector<RecordId> ids;
};

// ---------------------------------------------------------------------------
// Helpers

inline std::size_t resolve_threads(std::size_t flag) {
  if (flag) return flag;
  if (const char* env = std::getenv("SHITU_THREADS"); env && *env) {
    char* end = nullptr;
    unsigned long v = std::strtoul(env, &end, 10);
    if (*end != '\0' || v == 0) {
      throw Error(ErrorCode::BadArgument, "cli.threads", std::string("SHITU_THREADS must be a positive integer, got '") + env + "'");
    }
    return v;
  }
  return default_threads();
}

inline std::vector<Payload> load_payloads(const std::string& path, bool csv) {
  auto m = read_features(path, csv);
  std::vector<Payload> out;
  out.reserve(m.count);
  for (std::size_t i = 0; i < m.count; ++i) out.push_back(m.row(i));
  return out;
}

/// Float queries against a Hamming index are sign-binarized.
inline void match_payloads(std::vector<Payload>& queries, const Index& index, std::ostream& err) {
  if (index.metric() != MetricKind::Hamming || queries.empty() || kind_of(queries.front()) != PayloadKind::Float32) return;
  err << "note: binarizing float queries for a hamming index\n";
  for (auto& q : queries) q = binarize(std::get<EmbeddingVector>(q));
}

inline SearchParams search_params(const std::optional<std::size_t>& nprobe, const std::optional<std::size_t>& ef) {
  SearchParams p;
  p.nprobe = nprobe;
  if (ef) p.ef_search = *ef;
  return p;
}

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_build(const BuildOpts& o, std::size_t threads, std::ostream& out, std::ostream& err) {
  (void)threads;
  auto t0 = std::chrono::steady_clock::now();
  auto store = GalleryStore::ingest(o.features, o.labels, o.csv);
  MetricKind metric = store.kind() == PayloadKind::Binary ? MetricKind::Hamming : MetricKind::Cosine;
  if (o.metric != "auto") metric = *parse_metric(o.metric);
  if (metric == MetricKind::Hamming && store.kind() == PayloadKind::Float32) {
    err << "note: binarizing float features for a hamming index\n";
    store = store.binarized();
  }
  auto kind = *parse_index_kind(o.index);
  std::unique_ptr<Index> index;
  switch (kind) {
    case IndexKind::Flat: index = std::make_unique<FlatIndex>(metric, store.width()); break;
    case IndexKind::Ivf: {
      IvfParams p{.nlist = o.nlist.value_or(0), .max_iters = o.max_iters, .seed = o.seed, .nprobe = o.nprobe_default};
      auto ivf = std::make_unique<IvfIndex>(metric, store.width(), p);
      std::vector<EmbeddingVector> samples;
      samples.reserve(store.size());
      for (const auto& r : store.records()) samples.push_back(std::get<EmbeddingVector>(r.payload));
      auto km = ivf->train(samples);
      err << "ivf: nlist " << ivf->nlist() << ", k-means iterations " << km.iterations << "\n";
      if (o.nprobe_default > ivf->nlist()) {
        throw Error(ErrorCode::BadNprobe, "index_ivf.create",
                    "default nprobe " + std::to_string(o.nprobe_default) + " exceeds nlist " + std::to_string(ivf->nlist()));
      }
      index = std::move(ivf);
      break;
    }
    case IndexKind::Hnsw: {
      HnswParams p{.M = o.M, .ef_construction = o.ef_construction, .ef_search = o.ef_search_default, .seed = o.seed};
      index = std::make_unique<HnswIndex>(metric, store.width(), p);
      break;
    }
  }
  index->add(store.records());
  save_index(o.out, *index, store.labels());
  std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  out << "records\t" << index->size() << "\n";
  out << "file_bytes\t" << std::filesystem::file_size(o.out) << "\n";
  err << "build_seconds\t" << fmt("%.3f", dt.count()) << "\n";
  return 0;
}

inline int cmd_search(const SearchOpts& o, std::size_t threads, std::ostream& out, std::ostream& err) {
  auto bundle = load_index(o.index_file);
  auto queries = load_payloads(o.query_features, o.csv);
  match_payloads(queries, *bundle.index, err);
  auto results = search_batch(*bundle.index, queries, o.k, search_params(o.nprobe, o.ef_search), threads);
  for (std::size_t q = 0; q < results.size(); ++q) {
    auto labeled = bundle.labels.lookup(std::move(results[q]));
    for (std::size_t r = 0; r < labeled.size(); ++r) {
      out << q << '\t' << r + 1 << '\t' << labeled[r].id << '\t' << labeled[r].label << '\t'
          << fmt("%.9g", labeled[r].distance) << '\n';
    }
  }
  return 0;
}

inline int cmd_eval(const EvalOpts& o, std::size_t threads, std::ostream& out, std::ostream& err) {
  auto bundle = load_index(o.index_file);
  auto queries = load_payloads(o.query_features, o.csv);
  match_payloads(queries, *bundle.index, err);
  auto labels = read_labels(o.query_labels);
  auto rep = recall_at_k(*bundle.index, bundle.labels, queries, labels, o.k, search_params(o.nprobe, o.ef_search), threads);
  out << "queries\t" << rep.queries << "\n";
  for (std::size_t j = 0; j < rep.recall.size(); ++j) out << "recall@" << j + 1 << '\t' << fmt("%.6f", rep.recall[j]) << "\n";
  return 0;
}

inline int cmd_bench(const BenchOpts& o, std::size_t threads, std::ostream& out, std::ostream& err) {
  auto kind = *parse_index_kind(o.index);
  std::vector<bool> binaries;
  if (o.payload != "binary") binaries.push_back(false);
  if (o.payload != "float") binaries.push_back(true);
  if (o.dim % 8 != 0 && o.payload != "float") {
    throw Error(ErrorCode::DimNotByteAligned, "cli.bench", "binary payload needs dim divisible by 8");
  }
  MetricKind float_metric = *parse_metric(o.metric);
  if (float_metric == MetricKind::Hamming) throw Error(ErrorCode::BadArgument, "cli.bench", "--metric is the float metric");

  std::vector<std::unique_ptr<Index>> indexes;
  for (bool binary : binaries) {
    MetricKind m = binary ? MetricKind::Hamming : float_metric;
    switch (kind) {
      case IndexKind::Flat: indexes.push_back(std::make_unique<FlatIndex>(m, o.dim)); break;
      case IndexKind::Hnsw:
        indexes.push_back(std::make_unique<HnswIndex>(
            m, o.dim, HnswParams{.M = o.M, .ef_construction = o.ef_construction, .ef_search = o.ef_search, .seed = o.seed}));
        break;
      case IndexKind::Ivf: {
        if (binary) throw Error(ErrorCode::UnsupportedOperation, "cli.bench", "ivf has no binary payload");
        auto ivf = std::make_unique<IvfIndex>(m, o.dim, IvfParams{.nlist = o.nlist.value_or(0), .seed = o.seed});
        std::vector<EmbeddingVector> samples;
        generate_gaussian_records(o.gallery_size, o.dim, o.seed, 10000, [&](std::vector<GalleryRecord>& recs) {
          for (auto& r : recs) samples.push_back(std::get<EmbeddingVector>(r.payload));
        });
        ivf->train(samples);
        indexes.push_back(std::move(ivf));
        break;
      }
    }
  }
  auto t0 = std::chrono::steady_clock::now();
  generate_gaussian_records(o.gallery_size, o.dim, o.seed, 10000, [&](std::vector<GalleryRecord>& recs) {
    for (std::size_t i = 0; i < binaries.size(); ++i) {
      if (binaries[i]) {
        auto codes = recs;
        binarize_records(codes);
        indexes[i]->add(codes);
      } else {
        indexes[i]->add(recs);
      }
    }
  });
  std::chrono::duration<double> build = std::chrono::steady_clock::now() - t0;
  err << "gallery " << o.gallery_size << " x " << o.dim << " built in " << fmt("%.2f", build.count()) << " s\n";

  out << "payload\tindex_bytes\tmean_ms\tp50_ms\tp99_ms\n";
  std::vector<LatencyStats> stats;
  std::vector<std::size_t> bytes;
  for (std::size_t i = 0; i < binaries.size(); ++i) {
    auto queries = gaussian_queries(o.queries, o.dim, o.seed + 1, binaries[i]);
    SearchParams params;
    params.nprobe = o.nprobe;
    params.ef_search = o.ef_search;
    stats.push_back(time_queries(*indexes[i], queries, o.k, o.repeats, params, threads));
    bytes.push_back(GalleryStore::gallery_payload_bytes(binaries[i] ? PayloadKind::Binary : PayloadKind::Float32, o.dim,
                                                        indexes[i]->size()));
    const auto& s = stats.back();
    out << (binaries[i] ? "binary" : "float") << '\t' << bytes.back() << '\t' << fmt("%.6f", s.mean_ms) << '\t'
        << fmt("%.6f", s.p50_ms) << '\t' << fmt("%.6f", s.p99_ms) << '\n';
    err << (binaries[i] ? "binary" : "float") << " samples_ms";
    for (double v : s.samples_ms) err << ' ' << fmt("%.6f", v);
    err << '\n';
  }
  if (binaries.size() == 2) {
    out << "speed_ratio\t" << fmt("%.3f", stats[0].mean_ms / stats[1].mean_ms) << "\n";
    out << "bytes_ratio\t" << fmt("%.3f", static_cast<double>(bytes[0]) / static_cast<double>(bytes[1])) << "\n";
  }
  return 0;
}

inline TrainConfig train_config(const TrainOpts& o) {
  TrainConfig cfg;
  cfg.mode = parse_train_mode(o.mode);
  cfg.schedule = o.schedule == "cosine" ? LrSchedule::Cosine : LrSchedule::Constant;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.lr = o.lr;
  cfg.momentum = o.momentum;
  cfg.weight_decay = o.weight_decay;
  cfg.seed = o.seed;
  cfg.model_seed = o.model_seed;
  cfg.peer_seed = o.peer_seed;
  cfg.hidden = o.hidden;
  cfg.embedding_dim = o.embedding_dim;
  cfg.scale = o.scale;
  cfg.margin = o.margin;
  cfg.dshsd.alpha = o.alpha;
  cfg.dshsd.margin = o.hash_margin;
  return cfg;
}

inline int cmd_train(const TrainOpts& o, const DataOpts& d, std::ostream& out, std::ostream& err) {
  auto cfg = train_config(o);
  auto data = make_blobs(d.spec());
  auto res = train(cfg, data);
  save_checkpoint(res.first, o.checkpoint);
  if (res.second && !o.peer_checkpoint.empty()) save_checkpoint(*res.second, o.peer_checkpoint);
  auto csv = history_csv(res);
  io::write_file(o.loss_csv, std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()), "cli.train");
  err << "initial_loss\t" << fmt("%.6f", res.initial.total) << "\nfinal_loss\t" << fmt("%.6f", res.final.total) << "\n";
  out << "recall@1\tfirst\t" << fmt("%.6f", evaluate_recall(res.first, data, 1)[0]) << "\n";
  if (res.second) out << "recall@1\tsecond\t" << fmt("%.6f", evaluate_recall(*res.second, data, 1)[0]) << "\n";
  if (cfg.mode == TrainMode::Dshsd && cfg.embedding_dim % 8 == 0) {
    out << "recall@1\tbinary\t" << fmt("%.6f", evaluate_recall(res.first, data, 1, true)[0]) << "\n";
  }
  return 0;
}

inline void write_split(const std::string& prefix, const std::string& name, const Split& s) {
  FeatureMatrix m;
  m.kind = PayloadKind::Float32;
  m.width = static_cast<std::size_t>(s.x.cols());
  std::vector<std::string> labels;
  for (Eigen::Index i = 0; i < s.x.rows(); ++i) {
    std::vector<float> row(s.x.cols());
    for (Eigen::Index k = 0; k < s.x.cols(); ++k) row[k] = static_cast<float>(s.x(i, k));
    m.append(EmbeddingVector(std::move(row)));
    labels.push_back("class" + std::to_string(s.y[i]));
  }
  write_features(prefix + "." + name + ".ppsg", m);
  write_labels(prefix + "." + name + ".txt", labels);
}

inline int cmd_synth(const SynthOpts& o, const DataOpts& d, std::ostream& out) {
  auto data = make_blobs(d.spec());
  write_split(o.out_prefix, "train", data.train);
  write_split(o.out_prefix, "gallery", data.gallery);
  write_split(o.out_prefix, "query", data.query);
  out << "train\t" << data.train.y.size() << "\ngallery\t" << data.gallery.y.size() << "\nquery\t" << data.query.y.size()
      << "\n";
  return 0;
}

inline int cmd_embed(const EmbedOpts& o, std::ostream& out) {
  auto model = load_checkpoint(o.checkpoint);
  auto in = read_features(o.features, o.csv);
  if (in.kind != PayloadKind::Float32) throw Error(ErrorCode::MetricMismatch, "cli.embed", "input features must be float");
  Matrix x = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                 in.floats.data(), static_cast<Eigen::Index>(in.count), static_cast<Eigen::Index>(in.width))
                 .cast<double>();
  Matrix e = model.embed(x);
  FeatureMatrix m;
  m.kind = PayloadKind::Float32;
  m.width = static_cast<std::size_t>(e.cols());
  m.count = static_cast<std::size_t>(e.rows());
  m.floats.resize(e.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) m.floats[i] = static_cast<float>(e.data()[i]);
  write_features(o.out, m);
  out << "rows\t" << m.count << "\ndim\t" << m.width << "\n";
  return 0;
}

inline int cmd_binarize(const BinarizeOpts& o, std::ostream& out) {
  auto in = read_features(o.features, o.csv);
  if (in.kind != PayloadKind::Float32) throw Error(ErrorCode::MetricMismatch, "cli.binarize", "features are already binary");
  FeatureMatrix m;
  m.kind = PayloadKind::Binary;
  m.width = in.width;
  for (std::size_t i = 0; i < in.count; ++i) m.append(binarize(std::get<EmbeddingVector>(in.row(i))));
  write_features(o.out, m);
  out << "rows\t" << m.count << "\nnbits\t" << m.width << "\n";
  return 0;
}

inline int cmd_delete(const DeleteOpts& o, std::ostream& out) {
  auto bundle = load_index(o.index_file);
  std::size_t removed = bundle.index->remove(o.ids);
  for (auto id : o.ids) bundle.labels.erase(id);
  save_index(o.out.empty() ? o.index_file : o.out, *bundle.index, bundle.labels);
  out << "removed\t" << removed << "\nrecords\t" << bundle.index->size() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point

inline void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key=value file; command-line flags take precedence")->check(CLI::ExistingFile);
  sub->add_option("--threads", c.threads, "worker threads (default: $SHITU_THREADS, else hardware)")
      ->check(CLI::PositiveNumber);
}

inline void add_data_options(CLI::App* sub, DataOpts& d) {
  sub->add_option("--classes", d.classes)->check(CLI::PositiveNumber);
  sub->add_option("--input-dim", d.input_dim)->check(CLI::PositiveNumber);
  sub->add_option("--train-per-class", d.train_per_class)->check(CLI::PositiveNumber);
  sub->add_option("--gallery-per-class", d.gallery_per_class)->check(CLI::PositiveNumber);
  sub->add_option("--query-per-class", d.query_per_class)->check(CLI::PositiveNumber);
  sub->add_option("--center-scale", d.center_scale)->check(CLI::NonNegativeNumber);
  sub->add_option("--noise", d.noise)->check(CLI::NonNegativeNumber);
  sub->add_option("--data-seed", d.data_seed);
}

/// Appends `--key value` for every config entry whose flag is not already on
/// the command line.
inline std::vector<std::string> inject_config(CLI::App& app, const std::vector<std::string>& args) {
  if (args.size() < 2) return args;
  auto* sub = app.get_subcommand_ptr(args[1]).get();
  std::string path;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  auto data = io::read_file(path, "cli.config");
  auto entries = parse_config(std::string_view(reinterpret_cast<const char*>(data.data()), data.size()), path);
  std::vector<std::string> out = args;
  for (const auto& [key, value] : entries) {
    const std::string flag = "--" + key;
    if (key == "config") throw Error(ErrorCode::BadArgument, "cli.config", "config files cannot nest");
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (!opt) throw Error(ErrorCode::BadArgument, "cli.config", path + ": unknown key '" + key + "' for " + args[1]);
    bool given = std::any_of(args.begin() + 2, args.end(),
                             [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
    if (!given) out.push_back(flag + "=" + value);
  }
  return out;
}

inline int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Labeled embedding gallery: build, search, evaluate and benchmark indexes; train toy embedders."};
  app.name("recog");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough(false);

  Common common;
  BuildOpts build;
  SearchOpts search;
  EvalOpts ev;
  BenchOpts bench;
  TrainOpts tr;
  DataOpts data;
  SynthOpts synth;
  EmbedOpts embed;
  BinarizeOpts bin;
  DeleteOpts del;

  const std::vector<std::string> index_kinds{"flat", "ivf", "hnsw"};

  auto* b = app.add_subcommand("build", "Build and save an index over a labeled feature file");
  add_common(b, common);
  b->add_option("--features", build.features, "PPSG feature file (or CSV with --csv)")->required();
  b->add_option("--labels", build.labels, "one label per line, row-aligned")->required();
  b->add_flag("--csv", build.csv, "features are comma-separated text");
  b->add_option("--index", build.index)->check(CLI::IsMember(index_kinds));
  b->add_option("--metric", build.metric, "auto = cosine for float features, hamming for binary")
      ->check(CLI::IsMember({"auto", "l2", "ip", "cosine", "hamming"}));
  b->add_option("--out", build.out, "index file to write")->required();
  b->add_option("--nlist", build.nlist, "IVF cells (default round(sqrt n))")->check(CLI::PositiveNumber);
  b->add_option("--nprobe-default", build.nprobe_default)->check(CLI::PositiveNumber);
  b->add_option("--max-iters", build.max_iters)->check(CLI::PositiveNumber);
  b->add_option("--M", build.M)->check(CLI::Range(std::size_t{2}, std::size_t{1024}));
  b->add_option("--ef-construction", build.ef_construction)->check(CLI::PositiveNumber);
  b->add_option("--ef-search-default", build.ef_search_default)->check(CLI::PositiveNumber);
  b->add_option("--seed", build.seed);

  auto* s = app.add_subcommand("search", "k-NN search; TSV query_row, rank, id, label, distance");
  add_common(s, common);
  s->add_option("--index-file", search.index_file)->required();
  s->add_option("--query-features", search.query_features)->required();
  s->add_flag("--csv", search.csv);
  s->add_option("--k", search.k)->check(CLI::PositiveNumber);
  s->add_option("--nprobe", search.nprobe)->check(CLI::PositiveNumber);
  s->add_option("--ef-search", search.ef_search)->check(CLI::PositiveNumber);

  auto* e = app.add_subcommand("eval", "recall@1..k of labeled queries");
  add_common(e, common);
  e->add_option("--index-file", ev.index_file)->required();
  e->add_option("--query-features", ev.query_features)->required();
  e->add_option("--query-labels", ev.query_labels)->required();
  e->add_flag("--csv", ev.csv);
  e->add_option("--k", ev.k)->check(CLI::PositiveNumber);
  e->add_option("--nprobe", ev.nprobe)->check(CLI::PositiveNumber);
  e->add_option("--ef-search", ev.ef_search)->check(CLI::PositiveNumber);

  auto* be = app.add_subcommand("bench", "Search latency on a seeded random gallery");
  add_common(be, common);
  be->add_option("--gallery-size", bench.gallery_size)->check(CLI::PositiveNumber);
  be->add_option("--dim", bench.dim)->check(CLI::PositiveNumber);
  be->add_option("--payload", bench.payload)->check(CLI::IsMember({"float", "binary", "both"}));
  be->add_option("--index", bench.index)->check(CLI::IsMember(index_kinds));
  be->add_option("--metric", bench.metric, "float metric")->check(CLI::IsMember({"l2", "ip", "cosine"}));
  be->add_option("--queries", bench.queries)->check(CLI::PositiveNumber);
  be->add_option("--repeats", bench.repeats)->check(CLI::PositiveNumber);
  be->add_option("--k", bench.k)->check(CLI::PositiveNumber);
  be->add_option("--M", bench.M)->check(CLI::Range(std::size_t{2}, std::size_t{1024}));
  be->add_option("--ef-construction", bench.ef_construction)->check(CLI::PositiveNumber);
  be->add_option("--ef-search", bench.ef_search)->check(CLI::PositiveNumber);
  be->add_option("--nlist", bench.nlist)->check(CLI::PositiveNumber);
  be->add_option("--nprobe", bench.nprobe)->check(CLI::PositiveNumber);
  be->add_option("--seed", bench.seed);

  auto* t = app.add_subcommand("train", "Train a toy embedder on synthetic clusters");
  add_common(t, common);
  t->add_option("--mode", tr.mode)->check(CLI::IsMember({"baseline", "dml", "udml", "dshsd"}));
  t->add_option("--epochs", tr.epochs);
  t->add_option("--batch-size", tr.batch_size)->check(CLI::PositiveNumber);
  t->add_option("--lr", tr.lr)->check(CLI::NonNegativeNumber);
  t->add_option("--schedule", tr.schedule)->check(CLI::IsMember({"constant", "cosine"}));
  t->add_option("--momentum", tr.momentum)->check(CLI::Range(0.0, 1.0));
  t->add_option("--weight-decay", tr.weight_decay)->check(CLI::NonNegativeNumber);
  t->add_option("--hidden", tr.hidden, "hidden width, 0 for a single linear layer");
  t->add_option("--embedding-dim", tr.embedding_dim)->check(CLI::PositiveNumber);
  t->add_option("--scale", tr.scale)->check(CLI::PositiveNumber);
  t->add_option("--margin", tr.margin)->check(CLI::Range(0.0, 1.5707963));
  t->add_option("--alpha", tr.alpha, "hashing contrastive weight");
  t->add_option("--hash-margin", tr.hash_margin, "hashing contrastive margin (default 2 x embedding dim)");
  t->add_option("--seed", tr.seed, "batch order; also the first network's seed unless --model-seed");
  t->add_option("--model-seed", tr.model_seed);
  t->add_option("--peer-seed", tr.peer_seed, "second network of dml/udml (default model seed + 1)");
  t->add_option("--checkpoint", tr.checkpoint, "where to save the first (deployed) network")->required();
  t->add_option("--peer-checkpoint", tr.peer_checkpoint);
  t->add_option("--loss-csv", tr.loss_csv)->required();
  add_data_options(t, data);

  auto* sy = app.add_subcommand("synth", "Write the synthetic train/gallery/query splits as feature files");
  add_common(sy, common);
  sy->add_option("--out-prefix", synth.out_prefix)->required();
  add_data_options(sy, data);

  auto* em = app.add_subcommand("embed", "Embed raw feature rows with a trained checkpoint");
  add_common(em, common);
  em->add_option("--checkpoint", embed.checkpoint)->required();
  em->add_option("--features", embed.features)->required();
  em->add_flag("--csv", embed.csv);
  em->add_option("--out", embed.out)->required();

  auto* bz = app.add_subcommand("binarize", "Sign-binarize a float feature file");
  add_common(bz, common);
  bz->add_option("--features", bin.features)->required();
  bz->add_flag("--csv", bin.csv);
  bz->add_option("--out", bin.out)->required();

  auto* d = app.add_subcommand("delete", "Remove records from a saved index");
  add_common(d, common);
  d->add_option("--index-file", del.index_file)->required();
  d->add_option("--ids", del.ids, "comma-separated record ids")->required()->delimiter(',');
  d->add_option("--out", del.out, "output file (default: overwrite the input)");

  CLI::App* active = nullptr;
  try {
    auto args = argv;
    if (args.size() >= 2 && app.get_subcommand_ptr(args[1]) != nullptr) args = inject_config(app, args);
    std::vector<const char*> ptrs;
    for (const auto& a : args) ptrs.push_back(a.c_str());
    app.parse(static_cast<int>(ptrs.size()), ptrs.data());
    active = app.get_subcommands().front();
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::OptionNotFound&) {
    err << "error: unknown subcommand\n" << app.help();
    return 2;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return 2;
  }

  try {
    const std::size_t threads = resolve_threads(common.threads);
    err << "# " << active->get_name() << " resolved configuration\n" << active->config_to_str(true, false);
    err << "# threads in use: " << threads << "\n";
    const std::string& name = active->get_name();
    if (name == "build") return cmd_build(build, threads, out, err);
    if (name == "search") return cmd_search(search, threads, out, err);
    if (name == "eval") return cmd_eval(ev, threads, out, err);
    if (name == "bench") return cmd_bench(bench, threads, out, err);
    if (name == "train") return cmd_train(tr, data, out, err);
    if (name == "synth") return cmd_synth(synth, data, out);
    if (name == "embed") return cmd_embed(embed, out);
    if (name == "binarize") return cmd_binarize(bin, out);
    if (name == "delete") return cmd_delete(del, out);
    err << "error: unhandled subcommand " << name << "\n";
    return 2;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    err << "error: cli: " << ex.what() << "\n";
    return 1;
  }
}

}  // namespace recog::cli
