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
#include "test_util.hpp"

namespace recog {
namespace {

using namespace recog::fixtures;
using testing::expect_error;

constexpr int kInstances = 20;

TEST(ArcMargin, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < kInstances; ++t) {
    auto inst = arcmargin_instance(rng);
    double err = arcmargin_gradient_error(inst);
    EXPECT_LT(err, 1e-4) << "instance " << t;
  }
}

TEST(ArcMargin, SingleSampleHighPrecisionOracle) {
  Matrix x(1, 2), w(2, 2);
  x << 1, 0;
  w << 1, 0, 0, 1;
  auto b = arcmargin_forward(x, {0}, ArcMarginHead(w, 30.0, 0.2));
  // -log(e^t / (e^t + e^0)) with t = 30 cos(0.2).
  long double t = 30.0L * std::cos(0.2L);
  long double want = std::log1p(std::exp(-t));
  EXPECT_TRUE(oracle::close_rel(b.value, want, 1e-10L)) << b.value << " vs " << static_cast<double>(want);
  auto pass = arcmargin_logits(x, {0}, ArcMarginHead(w, 30.0, 0.2));
  EXPECT_NEAR(pass.logits(0, 0), static_cast<double>(t), 1e-12);
  EXPECT_EQ(pass.logits(0, 1), 0.0);
}

TEST(ArcMargin, NoMarginUnitScaleIsCrossEntropyOverCosines) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < kInstances; ++t) {
    auto inst = arcmargin_instance(rng);
    auto b = arcmargin_forward(inst.features, inst.labels, ArcMarginHead(inst.weight, 1.0, 0.0));
    EXPECT_NEAR(b.value, static_cast<double>(plain_cosine_cross_entropy(inst)), 1e-8);
  }
}

TEST(ArcMargin, LossStrictlyDecreasesInTargetCosine) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < kInstances; ++t) {
    const int n = 2 + static_cast<int>(rng() % 6);
    Matrix cos(1, n);
    for (int j = 0; j < n; ++j) cos(0, j) = 2.0 * detail::uniform01(rng) - 1.0;
    Labels y{static_cast<int>(rng() % n)};
    double prev = std::numeric_limits<double>::infinity();
    for (int step = 0; step <= 2000; ++step) {
      cos(0, y[0]) = -1.0 + step / 1000.0;
      double loss = cross_entropy(margin_logits(cos, y, 30.0, 0.2), y).value;
      ASSERT_LT(loss, prev) << "cos " << cos(0, y[0]);
      prev = loss;
    }
  }
}

TEST(ArcMargin, MarginFallbackRegionStaysMonotone) {
  const double m = 0.2, th = std::cos(std::numbers::pi - m);
  EXPECT_LT(margin_cosine(th, m), margin_cosine(th + 1e-9, m));
  EXPECT_LT(margin_cosine(-0.999, m), margin_cosine(-0.99, m));
  EXPECT_DOUBLE_EQ(margin_cosine(1.0, m), std::cos(m));
  EXPECT_DOUBLE_EQ(margin_cosine(0.3, 0.0), 0.3);
}

TEST(ArcMargin, FeatureScaleInvariant) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < kInstances; ++t) {
    auto inst = arcmargin_instance(rng);
    double base = arcmargin_forward(inst.features, inst.labels, inst.head()).value;
    for (double lambda : {1e-3, 0.5, 7.0, 1e4}) {
      Matrix scaled = lambda * inst.features;
      EXPECT_NEAR(arcmargin_forward(scaled, inst.labels, inst.head()).value, base, 1e-6);
    }
  }
}

TEST(ArcMargin, Errors) {
  Matrix x = Matrix::Ones(2, 3), w = Matrix::Ones(4, 3);
  Matrix zero = x;
  zero.row(1).setZero();
  expect_error(ErrorCode::ZeroFeature, [&] { arcmargin_forward(zero, {0, 1}, ArcMarginHead(w)); });
  expect_error(ErrorCode::BadLabel, [&] { arcmargin_forward(x, {0, 4}, ArcMarginHead(w)); });
  expect_error(ErrorCode::BadLabel, [&] { arcmargin_forward(x, {-1, 0}, ArcMarginHead(w)); });
  expect_error(ErrorCode::ShapeMismatch, [&] { arcmargin_forward(Matrix::Ones(2, 5), {0, 1}, ArcMarginHead(w)); });
}

TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < kInstances; ++t) {
    Matrix z = random_matrix(8, 1 + rng() % 50, rng, t < 10 ? 3.0 : 400.0);
    Matrix p = softmax_rows(z);
    for (Eigen::Index i = 0; i < p.rows(); ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-7);
  }
}

TEST(Dml, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < kInstances; ++t) {
    Matrix a = random_matrix(4, 5, rng, 2.0), b = random_matrix(4, 5, rng, 2.0);
    EXPECT_LT(dml_gradient_error(a, b), 1e-4) << "instance " << t;
  }
}

TEST(Dml, IdenticalLogitsGiveZero) {
  std::mt19937_64 rng(7);
  Matrix a = random_matrix(6, 4, rng, 3.0);
  auto b = dml_loss(a, a);
  EXPECT_EQ(b.value, 0.0);
  EXPECT_EQ(b.gradient("student").cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(b.gradient("teacher").cwiseAbs().maxCoeff(), 0.0);
}

TEST(Dml, SymmetricInArguments) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < kInstances; ++t) {
    Matrix a = random_matrix(5, 6, rng, 2.0), b = random_matrix(5, 6, rng, 2.0);
    EXPECT_NEAR(dml_loss(a, b).value, dml_loss(b, a).value, 1e-12);
  }
}

TEST(Dml, ScalarKlOracle) {
  Matrix a(1, 2), b(1, 2);
  a << std::log(0.9), std::log(0.1);
  b << std::log(0.5), std::log(0.5);
  EXPECT_NEAR(dml_loss(a, b).value, static_cast<double>(symmetric_kl({0.9L, 0.1L}, {0.5L, 0.5L})), 1e-8);
  expect_error(ErrorCode::ShapeMismatch, [] { dml_loss(Matrix::Zero(2, 3), Matrix::Zero(2, 4)); });
}

TEST(FeatureLoss, IdentityAndUnitOffset) {
  std::mt19937_64 rng(9);
  Matrix s = random_matrix(7, 5, rng, 1.0);
  EXPECT_EQ(feature_loss(s, s).value, 0.0);
  Matrix t = s.array() - 1.0;
  EXPECT_NEAR(feature_loss(s, t).value, 1.0, 1e-12);
  expect_error(ErrorCode::ShapeMismatch, [] { feature_loss(Matrix::Zero(2, 3), Matrix::Zero(3, 3)); });
}

TEST(FeatureLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(10);
  for (int t = 0; t < kInstances; ++t) {
    Matrix s = random_matrix(4, 6, rng, 1.0), u = random_matrix(4, 6, rng, 1.0);
    auto b = feature_loss(s, u);
    auto fs = [&](const Matrix& m) { return feature_loss(m, u).value; };
    auto ft = [&](const Matrix& m) { return feature_loss(s, m).value; };
    EXPECT_LT(gradient_error(fs, s, b.gradient("student")), 1e-5);
    EXPECT_LT(gradient_error(ft, u, b.gradient("teacher")), 1e-5);
  }
}

TEST(UdmlTotal, SumsValues) {
  LossBundle a, b, c, d;
  EXPECT_EQ(udml_total(a, b, c, d).value, 0.0);
  a.value = 1.0;
  b.value = 2.0;
  c.value = 0.5;
  d.value = 0.25;
  EXPECT_EQ(udml_total(a, b, c, d).value, 3.75);
}

TEST(UdmlTotal, GradientIsExactSumOfComponents) {
  std::mt19937_64 rng(11);
  LossBundle a, b, c, d;
  a.gradients["x"] = random_matrix(3, 4, rng, 1.0);
  b.gradients["y"] = random_matrix(3, 4, rng, 1.0);
  c.gradients["x"] = random_matrix(3, 4, rng, 1.0);
  c.gradients["y"] = random_matrix(3, 4, rng, 1.0);
  d.gradients["x"] = random_matrix(3, 4, rng, 1.0);
  auto total = udml_total(a, b, c, d);
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) {
      EXPECT_EQ(total.gradient("x")(i, j), (a.gradients["x"](i, j) + c.gradients["x"](i, j)) + d.gradients["x"](i, j));
      EXPECT_EQ(total.gradient("y")(i, j), b.gradients["y"](i, j) + c.gradients["y"](i, j));
    }
  }
}

TEST(UdmlTotal, ChainedGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < kInstances; ++t) {
    auto inst = udml_instance(rng);
    EXPECT_LT(udml_gradient_error(inst), 1e-4) << "instance " << t;
  }
}

TEST(UdmlTotal, ValueIsSumOfStandaloneTerms) {
  std::mt19937_64 rng(13);
  auto inst = udml_instance(rng);
  auto total = udml_forward(inst.student, inst.teacher, inst.head_s(), inst.head_t(), inst.labels);
  double arc_s = arcmargin_forward(inst.student, inst.labels, inst.head_s()).value;
  double arc_t = arcmargin_forward(inst.teacher, inst.labels, inst.head_t()).value;
  double dml = dml_loss(arcmargin_logits(inst.student, inst.labels, inst.head_s()).logits,
                        arcmargin_logits(inst.teacher, inst.labels, inst.head_t()).logits)
                   .value;
  double feat = feature_loss(inst.student, inst.teacher).value;
  EXPECT_NEAR(total.value, arc_s + arc_t + dml + feat, 1e-12);
  EXPECT_NEAR(total.components.at("feat"), feat, 1e-15);
}

TEST(Dshsd, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(14);
  for (int t = 0; t < kInstances; ++t) {
    auto inst = dshsd_instance(rng);
    EXPECT_LT(dshsd_gradient_error(inst), 1e-4) << "instance " << t;
  }
}

TEST(Dshsd, CoincidentSimilarPairHasNoContrastiveCost) {
  Matrix f(2, 4);
  f << 0.3, -0.2, 1.0, 0.5, 0.3, -0.2, 1.0, 0.5;
  auto b = dshsd_loss(f, similarity_from_labels({1, 1}), {1, 1}, Matrix::Ones(2, 4));
  EXPECT_EQ(b.components.at("contrastive"), 0.0);
}

TEST(Dshsd, SaturatedDissimilarPairHasNoContrastiveCost) {
  Matrix f(2, 4);
  f << 10, 10, 10, 10, -10, -10, -10, -10;
  // |a_i - a_j|^2 is close to 16, above the default margin 2d = 8.
  auto b = dshsd_loss(f, similarity_from_labels({0, 1}), {0, 1}, Matrix::Ones(2, 4));
  EXPECT_EQ(b.components.at("contrastive"), 0.0);
}

TEST(Dshsd, DefaultsAndErrors) {
  DshsdParams p;
  EXPECT_EQ(p.alpha, 0.05);
  EXPECT_EQ(p.margin_for(512), 1024.0);
  Matrix f = Matrix::Ones(3, 4);
  auto s = similarity_from_labels({0, 1, 0});
  expect_error(ErrorCode::BadAlpha, [&] { dshsd_loss(f, s, {0, 1, 0}, Matrix::Ones(2, 4), {.alpha = -0.1}); });
  expect_error(ErrorCode::ShapeMismatch, [&] { dshsd_loss(f, Matrix::Ones(2, 2), {0, 1, 0}, Matrix::Ones(2, 4)); });
  expect_error(ErrorCode::ShapeMismatch, [&] { dshsd_loss(f, s, {0, 1, 0}, Matrix::Ones(2, 5)); });
  expect_error(ErrorCode::BadLabel, [&] { dshsd_loss(f, s, {0, 2, 0}, Matrix::Ones(2, 4)); });
}

TEST(AllLosses, NonNegativeOnRandomInputs) {
  std::mt19937_64 rng(15);
  for (int t = 0; t < 200; ++t) {
    auto arc = arcmargin_instance(rng);
    EXPECT_GE(arcmargin_forward(arc.features, arc.labels, arc.head()).value, 0.0);
    Matrix a = random_matrix(3, 4, rng, 5.0), b = random_matrix(3, 4, rng, 5.0);
    EXPECT_GE(dml_loss(a, b).value, 0.0);
    EXPECT_GE(feature_loss(a, b).value, 0.0);
    auto u = udml_instance(rng);
    EXPECT_GE(udml_forward(u.student, u.teacher, u.head_s(), u.head_t(), u.labels).value, 0.0);
    auto h = dshsd_instance(rng);
    auto hb = dshsd_loss(h.features, similarity_from_labels(h.labels), h.labels, h.weight, h.params);
    EXPECT_GE(hb.value, 0.0);
    EXPECT_GE(hb.components.at("contrastive"), 0.0);
  }
}

}  // namespace
}  // namespace recog
