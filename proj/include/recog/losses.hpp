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

#include <Eigen/Dense>
#include <map>
#include <numbers>

#include "recog/core.hpp"

namespace recog {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;

/// Scalar loss plus its gradient for every differentiable input, keyed by name.
/// `components` carries the named sub-terms for reporting.
struct LossBundle {
  double value = 0.0;
  std::map<std::string, Matrix> gradients;
  std::map<std::string, double> components;

  const Matrix& gradient(const std::string& name) const {
    auto it = gradients.find(name);
    if (it == gradients.end()) throw Error(ErrorCode::BadArgument, "losses.gradient", "no gradient named " + name);
    return it->second;
  }

  /// Renames gradient keys; keys absent from `names` are kept.
  LossBundle renamed(const std::map<std::string, std::string>& names) const {
    LossBundle out;
    out.value = value;
    out.components = components;
    for (const auto& [key, g] : gradients) {
      auto it = names.find(key);
      out.gradients.emplace(it == names.end() ? key : it->second, g);
    }
    return out;
  }
};

struct ArcMarginHead {
  Matrix weight;  // n classes x d
  double s = 30.0;
  double m = 0.2;

  ArcMarginHead() = default;
  ArcMarginHead(Matrix w, double scale = 30.0, double margin = 0.2) : weight(std::move(w)), s(scale), m(margin) {}

  std::size_t classes() const { return static_cast<std::size_t>(weight.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(weight.cols()); }
};

namespace detail {

inline void check_labels(const Labels& labels, std::size_t rows, std::size_t classes, const char* op) {
  if (labels.size() != rows) {
    throw Error(ErrorCode::ShapeMismatch, op,
                std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw Error(ErrorCode::BadLabel, op, "label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

inline void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::ShapeMismatch, op,
                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()));
  }
}

// Floor on sin(theta) used only by the margin derivative near cos = +-1.
inline const double kSinFloor = std::sqrt(1.0 - (1.0 - 1e-7) * (1.0 - 1e-7));

}  // namespace detail

inline Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = logits.row(i).maxCoeff();
    double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

inline Matrix softmax_rows(const Matrix& logits) { return log_softmax_rows(logits).array().exp().matrix(); }

/// Mean softmax cross-entropy. Gradient key: "logits".
inline LossBundle cross_entropy(const Matrix& logits, const Labels& labels) {
  detail::check_labels(labels, logits.rows(), logits.cols(), "losses.cross_entropy");
  const double n = static_cast<double>(logits.rows());
  Matrix grad(logits.rows(), logits.cols());
  double value = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[i];
    const double zy = logits(i, y);
    double mx = logits.row(i).maxCoeff();
    if (zy == mx) {
      // Target is the max: log1p keeps full precision when the loss is tiny.
      grad.row(i) = (logits.row(i).array() - zy).exp();
      grad(i, y) = 0.0;
      double others = grad.row(i).sum();
      value += std::log1p(others);
      grad.row(i) /= 1.0 + others;
      grad(i, y) = -others / (1.0 + others);
    } else {
      grad.row(i) = (logits.row(i).array() - mx).exp();
      double sum = grad.row(i).sum();
      value += (mx - zy) + std::log(sum);
      grad.row(i) /= sum;
      grad(i, y) -= 1.0;
    }
  }
  LossBundle out;
  out.value = logits.rows() ? value / n : 0.0;
  out.gradients["logits"] = logits.rows() ? Matrix(grad / n) : grad;
  return out;
}

/// Target-class margin transform of a cosine: cos(theta + m) while theta + m
/// stays within [0, pi], otherwise the linear fallback c - m sin(m).
inline double margin_cosine(double c, double m) {
  c = std::clamp(c, -1.0, 1.0);
  if (c > std::cos(std::numbers::pi - m)) return c * std::cos(m) - std::sqrt(1.0 - c * c) * std::sin(m);
  return c - m * std::sin(m);
}

inline double margin_cosine_derivative(double c, double m) {
  c = std::clamp(c, -1.0, 1.0);
  if (c > std::cos(std::numbers::pi - m)) {
    double sin_t = std::max(std::sqrt(1.0 - c * c), detail::kSinFloor);
    return std::cos(m) + std::sin(m) * c / sin_t;
  }
  return 1.0;
}

/// s * cos for every class with the margin applied at the label.
inline Matrix margin_logits(const Matrix& cosines, const Labels& labels, double s, double m) {
  detail::check_labels(labels, cosines.rows(), cosines.cols(), "losses.arcmargin_forward");
  Matrix z = s * cosines.array().max(-1.0).min(1.0).matrix();
  for (Eigen::Index i = 0; i < cosines.rows(); ++i) z(i, labels[i]) = s * margin_cosine(cosines(i, labels[i]), m);
  return z;
}

/// Forward pass of the margin head, keeping what the backward pass needs.
struct ArcMarginPass {
  Matrix logits;
  Matrix xhat, what, cosines;
  Vector xnorm, wnorm;
  Labels labels;
  double s = 0.0, m = 0.0;
};

inline ArcMarginPass arcmargin_logits(const Matrix& features, const Labels& labels, const ArcMarginHead& head) {
  constexpr const char* op = "losses.arcmargin_forward";
  if (!(head.s > 0.0) || !(head.m >= 0.0) || !(head.m < std::numbers::pi / 2)) {
    throw Error(ErrorCode::BadArgument, op, "need s > 0 and 0 <= m < pi/2");
  }
  if (features.cols() != head.weight.cols()) {
    throw Error(ErrorCode::ShapeMismatch, op,
                "feature dim " + std::to_string(features.cols()) + " vs head dim " + std::to_string(head.weight.cols()));
  }
  detail::check_labels(labels, features.rows(), head.classes(), op);
  ArcMarginPass p;
  p.labels = labels;
  p.s = head.s;
  p.m = head.m;
  p.xnorm = features.rowwise().norm();
  p.wnorm = head.weight.rowwise().norm();
  for (Eigen::Index i = 0; i < p.xnorm.size(); ++i) {
    if (!(p.xnorm[i] > 0.0)) throw Error(ErrorCode::ZeroFeature, op, "feature row " + std::to_string(i) + " has zero norm");
  }
  for (Eigen::Index j = 0; j < p.wnorm.size(); ++j) {
    if (!(p.wnorm[j] > 0.0)) throw Error(ErrorCode::ZeroVector, op, "class weight " + std::to_string(j) + " has zero norm");
  }
  p.xhat = p.xnorm.cwiseInverse().asDiagonal() * features;
  p.what = p.wnorm.cwiseInverse().asDiagonal() * head.weight;
  p.cosines = p.xhat * p.what.transpose();
  p.logits = margin_logits(p.cosines, labels, head.s, head.m);
  return p;
}

/// Pulls a logits gradient back to (features, weight).
inline std::pair<Matrix, Matrix> arcmargin_backward(const ArcMarginPass& p, const Matrix& dlogits) {
  Matrix dc = p.s * dlogits;
  for (Eigen::Index i = 0; i < dc.rows(); ++i) {
    int y = p.labels[i];
    dc(i, y) *= margin_cosine_derivative(p.cosines(i, y), p.m);
  }
  // dc/dx = (w^ - c x^) / |x|,  dc/dw = (x^ - c w^) / |w|
  Matrix dxhat = dc * p.what;
  Matrix dx = dxhat - (dc.cwiseProduct(p.cosines).rowwise().sum()).asDiagonal() * p.xhat;
  dx = p.xnorm.cwiseInverse().asDiagonal() * dx;
  Matrix dwhat = dc.transpose() * p.xhat;
  Matrix dw = dwhat - (dc.cwiseProduct(p.cosines).colwise().sum().transpose()).asDiagonal() * p.what;
  dw = p.wnorm.cwiseInverse().asDiagonal() * dw;
  return {std::move(dx), std::move(dw)};
}

/// Mean additive-angular-margin softmax loss. Gradient keys: "features", "weight".
inline LossBundle arcmargin_forward(const Matrix& features, const Labels& labels, const ArcMarginHead& head) {
  auto pass = arcmargin_logits(features, labels, head);
  auto ce = cross_entropy(pass.logits, labels);
  auto [dx, dw] = arcmargin_backward(pass, ce.gradient("logits"));
  LossBundle out;
  out.value = ce.value;
  out.gradients["features"] = std::move(dx);
  out.gradients["weight"] = std::move(dw);
  return out;
}

/// Symmetric KL between row softmaxes, averaged over the batch.
/// Gradient keys: "student", "teacher".
inline LossBundle dml_loss(const Matrix& student_logits, const Matrix& teacher_logits) {
  detail::check_same_shape(student_logits, teacher_logits, "losses.dml_loss");
  const Eigen::Index n = student_logits.rows();
  Matrix lp = log_softmax_rows(student_logits), lq = log_softmax_rows(teacher_logits);
  Matrix p = lp.array().exp().matrix(), q = lq.array().exp().matrix();
  Matrix diff = lp - lq;
  Matrix ga(student_logits.rows(), student_logits.cols()), gb(ga.rows(), ga.cols());
  double value = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double kl_pq = p.row(i).dot(diff.row(i));
    double kl_qp = -q.row(i).dot(diff.row(i));
    value += 0.5 * (kl_pq + kl_qp);
    ga.row(i) = 0.5 * (p.row(i).array() * (diff.row(i).array() - kl_pq) + p.row(i).array() - q.row(i).array());
    gb.row(i) = 0.5 * (q.row(i).array() * (-diff.row(i).array() - kl_qp) + q.row(i).array() - p.row(i).array());
  }
  LossBundle out;
  double scale = n ? 1.0 / static_cast<double>(n) : 0.0;
  out.value = value * scale;
  out.gradients["student"] = ga * scale;
  out.gradients["teacher"] = gb * scale;
  return out;
}

/// Mean squared error over all elements. Gradient keys: "student", "teacher".
inline LossBundle feature_loss(const Matrix& student, const Matrix& teacher) {
  detail::check_same_shape(student, teacher, "losses.feature_loss");
  LossBundle out;
  double count = static_cast<double>(student.size());
  if (count == 0) {
    out.gradients["student"] = student;
    out.gradients["teacher"] = teacher;
    return out;
  }
  Matrix diff = student - teacher;
  out.value = diff.squaredNorm() / count;
  out.gradients["student"] = 2.0 * diff / count;
  out.gradients["teacher"] = -2.0 * diff / count;
  return out;
}

/// Sum of the four terms; gradients with the same key are added.
inline LossBundle udml_total(const LossBundle& arc_s, const LossBundle& arc_t, const LossBundle& dml,
                             const LossBundle& feat) {
  LossBundle out;
  out.value = (arc_s.value + arc_t.value) + dml.value + feat.value;
  out.components = {{"arc_s", arc_s.value}, {"arc_t", arc_t.value}, {"dml", dml.value}, {"feat", feat.value}};
  for (const LossBundle* b : {&arc_s, &arc_t, &dml, &feat}) {
    for (const auto& [key, g] : b->gradients) {
      auto [it, fresh] = out.gradients.try_emplace(key, g);
      if (!fresh) {
        detail::check_same_shape(it->second, g, "losses.udml_total");
        it->second += g;
      }
    }
  }
  return out;
}

/// Full mutual-learning objective for two embedding batches and their heads.
/// The peer term is computed on the head outputs. With `feature_term` off this
/// is plain DML. Gradient keys: "student.embedding", "student.weight",
/// "teacher.embedding", "teacher.weight".
inline LossBundle udml_forward(const Matrix& student_emb, const Matrix& teacher_emb, const ArcMarginHead& head_s,
                               const ArcMarginHead& head_t, const Labels& labels, bool feature_term = true) {
  auto ps = arcmargin_logits(student_emb, labels, head_s);
  auto pt = arcmargin_logits(teacher_emb, labels, head_t);
  auto arc_s = cross_entropy(ps.logits, labels).renamed({{"logits", "student.logits"}});
  auto arc_t = cross_entropy(pt.logits, labels).renamed({{"logits", "teacher.logits"}});
  auto dml = dml_loss(ps.logits, pt.logits).renamed({{"student", "student.logits"}, {"teacher", "teacher.logits"}});
  LossBundle feat;
  if (feature_term) {
    feat = feature_loss(student_emb, teacher_emb)
               .renamed({{"student", "student.embedding"}, {"teacher", "teacher.embedding"}});
  }
  auto total = udml_total(arc_s, arc_t, dml, feat);
  if (!feature_term) total.components.erase("feat");

  auto [dxs, dws] = arcmargin_backward(ps, total.gradients.at("student.logits"));
  auto [dxt, dwt] = arcmargin_backward(pt, total.gradients.at("teacher.logits"));
  total.gradients.erase("student.logits");
  total.gradients.erase("teacher.logits");
  for (auto [key, g] : {std::pair{"student.embedding", &dxs}, std::pair{"teacher.embedding", &dxt}}) {
    auto [it, fresh] = total.gradients.try_emplace(key, *g);
    if (!fresh) it->second += *g;
  }
  total.gradients["student.weight"] = std::move(dws);
  total.gradients["teacher.weight"] = std::move(dwt);
  return total;
}

struct DshsdParams {
  double alpha = 0.05;
  std::optional<double> margin;  // defaults to twice the embedding size

  double margin_for(std::size_t dim) const { return margin.value_or(2.0 * static_cast<double>(dim)); }
};

/// S[i][j] = 1 when rows i and j share a label.
inline Matrix similarity_from_labels(const Labels& labels) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  Matrix s(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) s(i, j) = labels[i] == labels[j] ? 1.0 : 0.0;
  }
  return s;
}

/// Hashing loss on a = tanh(features): softmax cross-entropy of a W^T plus
/// alpha times the mean pairwise contrastive term over i < j, where similar
/// pairs cost |a_i - a_j|^2 and dissimilar pairs max(0, margin - |a_i - a_j|^2).
/// Gradient keys: "features", "weight".
inline LossBundle dshsd_loss(const Matrix& features, const Matrix& similarity, const Labels& labels,
                             const Matrix& classifier, const DshsdParams& params = {}) {
  constexpr const char* op = "losses.dshsd_loss";
  if (!(params.alpha >= 0.0)) throw Error(ErrorCode::BadAlpha, op, "alpha must be >= 0");
  const Eigen::Index n = features.rows();
  if (similarity.rows() != n || similarity.cols() != n) {
    throw Error(ErrorCode::ShapeMismatch, op, "similarity matrix must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (classifier.cols() != features.cols()) {
    throw Error(ErrorCode::ShapeMismatch, op,
                "classifier dim " + std::to_string(classifier.cols()) + " vs feature dim " + std::to_string(features.cols()));
  }
  detail::check_labels(labels, n, classifier.rows(), op);
  const double margin = params.margin_for(features.cols());

  Matrix a = features.array().tanh().matrix();
  auto ce = cross_entropy(a * classifier.transpose(), labels);
  const Matrix& dz = ce.gradient("logits");
  Matrix da = dz * classifier;
  Matrix dw = dz.transpose() * a;

  double contrastive = 0.0;
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  if (pairs > 0) {
    Matrix dac = Matrix::Zero(n, a.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        double sij = similarity(i, j);
        if (sij != 0.0 && sij != 1.0) throw Error(ErrorCode::BadArgument, op, "similarity entries must be 0 or 1");
        Eigen::RowVectorXd diff = a.row(i) - a.row(j);
        double d2 = diff.squaredNorm();
        double coef = 0.0;
        if (sij == 1.0) {
          contrastive += d2;
          coef = 2.0;
        } else if (d2 < margin) {
          contrastive += margin - d2;
          coef = -2.0;
        }
        if (coef != 0.0) {
          dac.row(i) += coef * diff;
          dac.row(j) -= coef * diff;
        }
      }
    }
    contrastive /= pairs;
    da += params.alpha / pairs * dac;
  }

  LossBundle out;
  out.value = ce.value + params.alpha * contrastive;
  out.components = {{"classification", ce.value}, {"contrastive", contrastive}};
  out.gradients["features"] = da.cwiseProduct((1.0 - a.array().square()).matrix());
  out.gradients["weight"] = std::move(dw);
  return out;
}

}  // namespace recog
