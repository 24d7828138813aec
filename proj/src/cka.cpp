#include "repsim/cka.hpp"

#include <cmath>

#include "repsim/errors.hpp"
#include "repsim/parallel.hpp"
#include "repsim/spectral.hpp"

namespace repsim {

CenteredTerms hsic_terms(const Matrix& k) {
  if (k.rows() != k.cols()) throw ArgumentError("kernel matrix must be square");
  CenteredTerms t;
  t.off = k;
  t.off.diagonal().setZero();
  t.row_sums = t.off.rowwise().sum();
  t.total = t.row_sums.sum();
  return t;
}

double hsic1(const CenteredTerms& k, const CenteredTerms& l) {
  const Eigen::Index n = k.off.rows();
  if (l.off.rows() != n) throw ArgumentError("hsic1: kernel sizes differ");
  if (n < 4) throw ArgumentError("hsic1 needs at least 4 examples");
  const double nd = static_cast<double>(n);
  // symmetric kernels: tr(KL) is the elementwise sum and 1'KL1 is a dot of row sums
  const double trace = (k.off.array() * l.off.array()).sum();
  const double sums = k.total * l.total / ((nd - 1.0) * (nd - 2.0));
  const double cross = 2.0 / (nd - 2.0) * k.row_sums.dot(l.row_sums);
  return (trace + sums - cross) / (nd * (nd - 3.0));
}

double hsic1(const Matrix& k, const Matrix& l) {
  if (k.rows() != l.rows() || k.cols() != l.cols()) throw ArgumentError("hsic1: kernel sizes differ");
  if (k.rows() < 4) throw ArgumentError("hsic1 needs at least 4 examples");
  return hsic1(hsic_terms(k), hsic_terms(l));
}

double hsic1(const KernelMatrix& k, const KernelMatrix& l) { return hsic1(k.values, l.values); }

CkaAccumulator accumulate(CkaAccumulator acc, const KernelMatrix& k, const KernelMatrix& l) {
  if (k.size() != l.size()) throw ArgumentError("accumulate: kernel sizes differ");
  const auto tk = hsic_terms(k.values);
  const auto tl = hsic_terms(l.values);
  acc.sum_xy += hsic1(tk, tl);
  acc.sum_xx += hsic1(tk, tk);
  acc.sum_yy += hsic1(tl, tl);
  ++acc.batch_count;
  return acc;
}

double finalize(const CkaAccumulator& acc) {
  if (acc.batch_count == 0) throw ArgumentError("finalize: no batches accumulated");
  if (!(acc.sum_xx > 0.0) || !(acc.sum_yy > 0.0))
    throw DegenerateError("nonpositive HSIC self-similarity");
  const double k = static_cast<double>(acc.batch_count);
  return (acc.sum_xy / k) / std::sqrt((acc.sum_xx / k) * (acc.sum_yy / k));
}

namespace {

std::vector<Matrix> layer_matrices(const ActivationArchive& a) {
  std::vector<Matrix> out;
  out.reserve(a.layers.size());
  for (const auto& l : a.layers) out.push_back(l.to_matrix());
  return out;
}

}  // namespace

CkaHeatmap cka_heatmap(const ActivationArchive& a, const ActivationArchive& b, const KernelSpec& spec,
                       const MinibatchSchedule& schedule, unsigned threads) {
  spec.check();
  const bool same = &a == &b;
  if (a.n() != b.n()) throw ConsistencyError("archives have different example counts");
  if (a.example_ids != b.example_ids) throw ConsistencyError("archives have different example ordering");
  if (schedule.n != a.n()) throw ArgumentError("schedule was built for a different example count");
  if (schedule.batches.empty()) throw ArgumentError("schedule has no batches");
  if (threads == 0) threads = default_workers();

  const auto xa = layer_matrices(a);
  const auto xb = same ? std::vector<Matrix>{} : layer_matrices(b);
  const std::size_t la = xa.size();
  const std::size_t lb = same ? la : xb.size();

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < la; ++i)
    for (std::size_t j = same ? i : 0; j < lb; ++j) pairs.emplace_back(i, j);

  std::vector<double> self_a(la, 0.0), self_b(lb, 0.0), cross(pairs.size(), 0.0);
  std::vector<CenteredTerms> ta(la), tb(same ? 0 : lb);

  for (const auto& batch : schedule.batches) {
    const std::size_t nk = la + (same ? 0 : lb);
    parallel_for(nk, threads, [&](std::size_t k) {
      if (k < la) ta[k] = hsic_terms(make_kernel(xa[k](batch, Eigen::all), spec).values);
      else tb[k - la] = hsic_terms(make_kernel(xb[k - la](batch, Eigen::all), spec).values);
    });
    const auto& tbr = same ? ta : tb;
    parallel_for(pairs.size(), threads, [&](std::size_t p) {
      const auto [i, j] = pairs[p];
      cross[p] += hsic1(ta[i], tbr[j]);
    });
    for (std::size_t i = 0; i < la; ++i) self_a[i] += hsic1(ta[i], ta[i]);
    if (!same)
      for (std::size_t j = 0; j < lb; ++j) self_b[j] += hsic1(tb[j], tb[j]);
  }
  if (same) self_b = self_a;

  CkaHeatmap h;
  h.values.resize(static_cast<Eigen::Index>(la), static_cast<Eigen::Index>(lb));
  const std::size_t nb = schedule.batches.size();
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    CkaAccumulator acc{cross[p], self_a[i], self_b[j], nb};
    double v;
    try {
      v = finalize(acc);
    } catch (const DegenerateError&) {
      throw DegenerateError("layer " + (self_a[i] > 0.0 ? b.layers[j].layer_id : a.layers[i].layer_id) +
                            " has nonpositive HSIC self-similarity");
    }
    h.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    if (same) h.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
  }
  h.row_labels = a.layer_ids();
  h.col_labels = b.layer_ids();
  h.kernel = spec;
  h.row_provenance = a.metadata;
  h.col_provenance = b.metadata;
  h.batch_size = schedule.batch_size;
  h.epochs = schedule.epochs;
  return h;
}

CkaHeatmap cka_heatmap(const ActivationArchive& a, const KernelSpec& spec, const MinibatchSchedule& schedule,
                       unsigned threads) {
  return cka_heatmap(a, a, spec, schedule, threads);
}

double linear_cka(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) throw ArgumentError("linear_cka: row counts differ");
  const double xy = (y.transpose() * x).squaredNorm();
  const double xx = (x.transpose() * x).norm();
  const double yy = (y.transpose() * y).norm();
  if (!(xx > 0.0) || !(yy > 0.0)) throw DegenerateError("linear_cka: zero input");
  return xy / (xx * yy);
}

double cka_pc_decomposition(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) throw ArgumentError("cka_pc_decomposition: row counts differ");
  if (x.rows() < 2) throw ArgumentError("cka_pc_decomposition needs at least 2 examples");
  const auto px = principal_components(x, std::min(x.rows(), x.cols()));
  const auto py = principal_components(y, std::min(y.rows(), y.cols()));
  const Matrix overlap = px.components.transpose() * py.components;
  double num = 0.0;
  for (Eigen::Index i = 0; i < overlap.rows(); ++i)
    for (Eigen::Index j = 0; j < overlap.cols(); ++j) {
      const double c = overlap(i, j);
      num += px.eigenvalues[i] * py.eigenvalues[j] * c * c;
    }
  return num / (px.eigenvalues.norm() * py.eigenvalues.norm());
}

}  // namespace repsim
