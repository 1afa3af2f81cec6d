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

#include "loss_fixtures.hpp"
#include "recog/trainer.hpp"
#include "test_util.hpp"

namespace recog {
namespace {

using fixtures::gradient_error;
using fixtures::random_matrix;
using testing::expect_error;

SyntheticDataset clusters(std::uint64_t seed = 1) { return make_blobs({.seed = seed}); }

TrainConfig small_config(TrainMode mode, std::size_t epochs) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.epochs = epochs;
  cfg.hidden = 32;
  cfg.embedding_dim = 16;
  cfg.seed = 3;
  return cfg;
}

TEST(ToyEmbedder, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  ToyEmbedder net({5, 7, 4}, rng);
  for (auto& l : net.layers()) l.bias = random_matrix(1, l.bias.cols(), rng, 0.3);
  Matrix x = random_matrix(6, 5, rng, 1.0), r = random_matrix(6, 4, rng, 1.0);
  // Scalar probe: sum(forward(x) .* r).
  ToyEmbedder::Trace tr;
  net.forward(x, &tr);
  auto grads = net.backward(tr, r);
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    auto probe = [&](const Matrix& w) {
      ToyEmbedder copy = net;
      copy.layers()[l].weight = w;
      return copy.forward(x).cwiseProduct(r).sum();
    };
    EXPECT_LT(gradient_error(probe, net.layers()[l].weight, grads[l].weight), 1e-6);
    auto probe_b = [&](const Matrix& b) {
      ToyEmbedder copy = net;
      copy.layers()[l].bias = b;
      return copy.forward(x).cwiseProduct(r).sum();
    };
    EXPECT_LT(gradient_error(probe_b, net.layers()[l].bias, grads[l].bias), 1e-6);
  }
}

TEST(Trainer, ZeroLearningRateLeavesWeightsUnchanged) {
  auto data = clusters();
  for (auto mode : {TrainMode::Baseline, TrainMode::Udml, TrainMode::Dshsd}) {
    auto cfg = small_config(mode, 3);
    cfg.lr = 0.0;
    auto res = train(cfg, data);
    auto init = init_model(cfg, data.input_dim, data.classes, cfg.first_seed());
    EXPECT_EQ(serialize_checkpoint(res.first), serialize_checkpoint(init)) << to_string(mode);
  }
}

TEST(Trainer, BaselineLowersArcMarginLoss) {
  auto data = clusters();
  auto cfg = small_config(TrainMode::Baseline, 50);
  auto res = train(cfg, data);
  ASSERT_EQ(res.history.size(), 50u);
  EXPECT_LT(res.final.total, res.initial.total);
  EXPECT_LT(res.history.back().total, res.initial.total);
}

TEST(Trainer, MutualLearningPullsFeaturesTogether) {
  auto data = clusters();
  auto res = train(small_config(TrainMode::Udml, 30), data);
  EXPECT_LT(res.final.components.at("feat"), res.initial.components.at("feat"));
  EXPECT_LT(res.final.total, res.initial.total);
}

TEST(Trainer, SeedDeterminism) {
  auto data = clusters();
  auto cfg = small_config(TrainMode::Udml, 4);
  auto a = train(cfg, data), b = train(cfg, data);
  EXPECT_EQ(history_csv(a), history_csv(b));
  EXPECT_EQ(serialize_checkpoint(a.first), serialize_checkpoint(b.first));
  EXPECT_EQ(serialize_checkpoint(*a.second), serialize_checkpoint(*b.second));
}

TEST(Trainer, SwappingPeerSeedsKeepsTotalTrajectory) {
  auto data = clusters();
  auto cfg = small_config(TrainMode::Udml, 5);
  cfg.model_seed = 11;
  cfg.peer_seed = 29;
  auto a = train(cfg, data);
  std::swap(cfg.model_seed, cfg.peer_seed);
  auto b = train(cfg, data);
  ASSERT_EQ(a.history.size(), b.history.size());
  EXPECT_EQ(a.initial.total, b.initial.total);
  for (std::size_t e = 0; e < a.history.size(); ++e) EXPECT_EQ(a.history[e].total, b.history[e].total) << "epoch " << e;
  EXPECT_EQ(serialize_checkpoint(a.first), serialize_checkpoint(*b.second));
  EXPECT_EQ(a.history.back().components.at("arc_s"), b.history.back().components.at("arc_t"));
}

TEST(Trainer, DivergenceIsReported) {
  auto cfg = small_config(TrainMode::Baseline, 5);
  cfg.lr = 1e300;
  expect_error(ErrorCode::DivergenceDetected, [&] { train(cfg, clusters()); });
}

TEST(Trainer, CsvHasOneRowPerEpochAndModeColumns) {
  auto data = make_blobs({.classes = 2, .seed = 4});
  auto res = train(small_config(TrainMode::Udml, 5), data);
  auto csv = history_csv(res);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,lr,arc_s,arc_t,dml,feat,total");
  auto base = history_csv(train(small_config(TrainMode::Baseline, 2), data));
  EXPECT_EQ(base.substr(0, base.find('\n')), "epoch,lr,arc,total");
  auto hash = history_csv(train(small_config(TrainMode::Dshsd, 2), data));
  EXPECT_EQ(hash.substr(0, hash.find('\n')), "epoch,lr,classification,contrastive,total");
}

TEST(Trainer, CosineScheduleDecays) {
  TrainConfig cfg;
  cfg.schedule = LrSchedule::Cosine;
  cfg.epochs = 10;
  EXPECT_EQ(learning_rate(cfg, 0), cfg.lr);
  for (std::size_t e = 1; e < 10; ++e) EXPECT_LT(learning_rate(cfg, e), learning_rate(cfg, e - 1));
  cfg.schedule = LrSchedule::Constant;
  EXPECT_EQ(learning_rate(cfg, 7), cfg.lr);
}

TEST(EvaluateRecall, UntrainedModelOnLabelFreeDataIsAtChance) {
  // Zero center scale: every class has the same input distribution.
  const std::size_t classes = 10;
  auto data = make_blobs({.classes = classes, .input_dim = 8, .gallery_per_class = 20, .query_per_class = 50,
                          .center_scale = 0.0, .seed = 7});
  auto cfg = small_config(TrainMode::Baseline, 0);
  auto model = init_model(cfg, data.input_dim, classes, 5);
  double r1 = evaluate_recall(model, data, 1)[0];
  const double p = 1.0 / classes, q = static_cast<double>(data.query.y.size());
  EXPECT_NEAR(r1, p, 3.0 * std::sqrt(p * (1 - p) / q));
}

TEST(EvaluateRecall, SeparatedClustersAfterTraining) {
  auto data = clusters(2);
  auto res = train(small_config(TrainMode::Baseline, 30), data);
  auto recall = evaluate_recall(res.first, data, 10);
  EXPECT_GE(recall[0], 0.95);
  for (std::size_t k = 1; k < recall.size(); ++k) EXPECT_GE(recall[k], recall[k - 1]);
  expect_error(ErrorCode::BadK, [&] { evaluate_recall(res.first, data, 0); });
}

TEST(EvaluateRecall, BinaryCodesFromHashingModel) {
  auto data = clusters(3);
  auto res = train(small_config(TrainMode::Dshsd, 30), data);
  EXPECT_LT(res.final.total, res.initial.total);
  double f = evaluate_recall(res.first, data, 1)[0];
  double b = evaluate_recall(res.first, data, 1, true)[0];
  EXPECT_GE(f, 0.9);
  EXPECT_GE(b, 0.8);
}

TEST(Checkpoint, RoundtripAndIntegrity) {
  auto data = clusters();
  auto res = train(small_config(TrainMode::Dshsd, 2), data);
  auto bytes = serialize_checkpoint(res.first);
  auto back = deserialize_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_TRUE(back.tanh_output);
  EXPECT_EQ(back.embed(data.query.x), res.first.embed(data.query.x));

  auto corrupt = bytes;
  corrupt[40] ^= 0x01;
  expect_error(ErrorCode::ChecksumMismatch, [&] { deserialize_checkpoint(corrupt); });
  auto bumped = bytes;
  bumped[4] += 1;
  expect_error(ErrorCode::VersionMismatch, [&] { deserialize_checkpoint(bumped); });
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 6);
  expect_error(ErrorCode::Truncated, [&] { deserialize_checkpoint(cut); });
  std::vector<std::uint8_t> wrong = bytes;
  wrong[0] = 'X';
  expect_error(ErrorCode::BadHeader, [&] { deserialize_checkpoint(wrong); });
}

}  // namespace
}  // namespace recog
