#include "repsim/spectral.hpp"

#include <algorithm>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "repsim/errors.hpp"

namespace repsim {

namespace {

void orient(Eigen::Ref<Vector> u) {
  Eigen::Index arg = 0;
  u.cwiseAbs().maxCoeff(&arg);
  if (u[arg] < 0.0) u = -u;
}

}  // namespace

PcSummary principal_components(const Matrix& x, Eigen::Index k) {
  const Eigen::Index r = std::min(x.rows(), x.cols());
  if (k < 1 || k > r) throw ArgumentError("principal_components: k out of range");
  const double total = x.squaredNorm();
  if (!(total > 0.0)) throw DegenerateError("principal_components: zero matrix");

  Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU);
  PcSummary s;
  s.eigenvalues = svd.singularValues().head(k).array().square().matrix();
  s.components = svd.matrixU().leftCols(k);
  for (Eigen::Index i = 0; i < k; ++i) orient(s.components.col(i));
  s.total_variance = total;
  s.frac_first = std::min(1.0, s.eigenvalues[0] / total);
  return s;
}

double frac_first(const Matrix& x) {
  const double total = x.squaredNorm();
  if (!(total > 0.0)) throw DegenerateError("frac_first: zero matrix");
  const Matrix gram = x.rows() >= x.cols() ? Matrix(x.transpose() * x) : Matrix(x * x.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  return std::clamp(es.eigenvalues().maxCoeff() / total, 0.0, 1.0);
}

Vector project_first_pc(const Matrix& x, const PcSummary& summary) {
  if (summary.components.rows() != x.rows()) throw ArgumentError("summary does not match matrix");
  return std::sqrt(summary.eigenvalues[0]) * summary.components.col(0);
}

Vector feature_direction(const Matrix& x, const PcSummary& summary, Eigen::Index i) {
  if (summary.components.rows() != x.rows()) throw ArgumentError("summary does not match matrix");
  Vector d = x.transpose() * summary.components.col(i);
  const double nrm = d.norm();
  if (nrm > 0.0) d /= nrm;
  return d;
}

double pc_cosine_similarity(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ArgumentError("pc_cosine_similarity: length mismatch");
  const double na = a.squaredNorm();
  const double nb = b.squaredNorm();
  if (!(na > 0.0) || !(nb > 0.0)) throw ArgumentError("pc_cosine_similarity: zero vector");
  const double d = a.dot(b);
  return std::min(1.0, d * d / (na * nb));
}

Matrix remove_first_pc(const Matrix& x, const PcSummary& summary) {
  if (summary.components.rows() != x.rows()) throw ArgumentError("summary does not match matrix");
  const Vector u = summary.components.col(0);
  return x - u * (u.transpose() * x);
}

PowerStep power_iteration_step(const Matrix& x, const PowerIterState& state) {
  if (state.u.size() != x.cols()) throw ArgumentError("power iteration: vector length mismatch");
  const Vector v = x.transpose() * (x * state.u);
  const double lambda = v.norm();
  if (!(lambda > 0.0)) return {state, true};
  return {{v / lambda, lambda}, false};
}

}  // namespace repsim
