#include "repsim/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "repsim/errors.hpp"

namespace repsim {

std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::linear: return "linear";
    case KernelKind::cosine: return "cosine";
    case KernelKind::rbf: return "rbf";
  }
  return "?";
}

KernelKind parse_kernel_kind(const std::string& s) {
  if (s == "linear") return KernelKind::linear;
  if (s == "cosine") return KernelKind::cosine;
  if (s == "rbf") return KernelKind::rbf;
  throw ArgumentError("unknown kernel '" + s + "'");
}

void KernelSpec::check() const {
  if (kind == KernelKind::rbf) {
    if (!rbf_c || !(*rbf_c > 0.0) || !std::isfinite(*rbf_c))
      throw ArgumentError("rbf kernel needs a positive c");
  } else if (rbf_c) {
    throw ArgumentError("c is only meaningful for the rbf kernel");
  }
}

namespace {

Matrix squared_distances(const Matrix& x) {
  const Eigen::Index n = x.rows();
  Matrix d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double s = (x.row(i) - x.row(j)).squaredNorm();
      d(i, j) = s;
      d(j, i) = s;
    }
  }
  return d;
}

double median_of_pairs(const Matrix& sq) {
  const Eigen::Index n = sq.rows();
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) v.push_back(sq(i, j));
  const std::size_t m = v.size();
  const std::size_t hi = m / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(hi), v.end());
  double med = std::sqrt(v[hi]);
  if (m % 2 == 0) {
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(hi));
    med = 0.5 * (std::sqrt(lo) + med);
  }
  if (!(med > 0.0)) throw DegenerateError("all pairwise distances are zero");
  return med;
}

}  // namespace

KernelMatrix gram_linear(const Matrix& x) {
  if (x.rows() < 1) throw ArgumentError("kernel needs at least one example");
  KernelMatrix k;
  k.kind = KernelKind::linear;
  k.values = x * x.transpose();
  // exact symmetry regardless of the product's blocking
  k.values = k.values.triangularView<Eigen::Upper>();
  k.values.triangularView<Eigen::StrictlyLower>() = k.values.transpose();
  return k;
}

KernelMatrix gram_cosine(const Matrix& x) {
  if (x.rows() < 1) throw ArgumentError("kernel needs at least one example");
  Matrix z = x;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double nrm = z.row(i).norm();
    if (nrm > 0.0) z.row(i) /= nrm;
    else z.row(i).setZero();
  }
  KernelMatrix k = gram_linear(z);
  k.kind = KernelKind::cosine;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const bool nonzero = x.row(i).squaredNorm() > 0.0;
    k.values(i, i) = nonzero ? 1.0 : 0.0;
    for (Eigen::Index j = 0; j < z.rows(); ++j)
      if (j != i) k.values(i, j) = std::clamp(k.values(i, j), -1.0, 1.0);
  }
  return k;
}

double median_pairwise_distance(const Matrix& x) {
  if (x.rows() < 2) throw ArgumentError("median distance needs at least two examples");
  return median_of_pairs(squared_distances(x));
}

KernelMatrix gram_rbf(const Matrix& x, double c) {
  if (!(c > 0.0)) throw ArgumentError("rbf c must be positive");
  if (x.rows() < 2) throw ArgumentError("rbf kernel needs at least two examples");
  const Matrix sq = squared_distances(x);
  const double sigma = c * median_of_pairs(sq);
  KernelMatrix k;
  k.kind = KernelKind::rbf;
  k.bandwidth_sigma = sigma;
  const double scale = 1.0 / (2.0 * sigma * sigma);
  k.values = (-sq.array() * scale).exp().matrix();
  // underflow would leave the open interval (0, 1]
  k.values = k.values.cwiseMax(std::numeric_limits<double>::min());
  k.values.diagonal().setOnes();
  return k;
}

KernelMatrix make_kernel(const Matrix& x, const KernelSpec& spec) {
  switch (spec.kind) {
    case KernelKind::linear: return gram_linear(x);
    case KernelKind::cosine: return gram_cosine(x);
    case KernelKind::rbf: return gram_rbf(x, spec.rbf_c.value_or(1.0));
  }
  throw ArgumentError("unknown kernel");
}

}  // namespace repsim
