#include "repsim/block_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "repsim/errors.hpp"

namespace repsim {

std::size_t default_min_block_size(std::size_t layers) {
  return std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(layers) - 1e-9)));
}

namespace {

bool joins(const Matrix& v, std::size_t s, std::size_t e, std::size_t next, double threshold) {
  for (std::size_t i = s; i <= e; ++i) {
    const auto a = static_cast<Eigen::Index>(i);
    const auto b = static_cast<Eigen::Index>(next);
    if (!(v(a, b) > threshold) || !(v(b, a) > threshold)) return false;
  }
  return true;
}

double median_sorted(const std::vector<double>& v) {
  const std::size_t m = v.size();
  if (m == 0) return 0.0;
  return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return median_sorted(v);
}

}  // namespace

std::vector<BlockRegion> detect_blocks(const Matrix& values, double threshold, std::size_t min_size) {
  if (values.rows() != values.cols()) throw ArgumentError("detect_blocks needs a square heatmap");
  const auto L = static_cast<std::size_t>(values.rows());
  if (min_size == 0) min_size = default_min_block_size(L);
  std::vector<BlockRegion> out;
  std::size_t s = 0;
  while (s < L) {
    std::size_t e = s;
    while (e + 1 < L && joins(values, s, e, e + 1, threshold)) ++e;
    if (e - s + 1 >= min_size) {
      BlockRegion b{s, e, 0.0};
      double sum = 0.0;
      std::size_t cnt = 0;
      for (std::size_t i = s; i <= e; ++i)
        for (std::size_t j = s; j <= e; ++j)
          if (i != j) {
            sum += values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            ++cnt;
          }
      b.mean_internal_cka = cnt ? sum / static_cast<double>(cnt) : 1.0;
      out.push_back(b);
      s = e + 1;
    } else {
      ++s;
    }
  }
  return out;
}

std::vector<BlockRegion> detect_blocks(const CkaHeatmap& h, double threshold, std::size_t min_size) {
  if (h.row_labels != h.col_labels) throw ArgumentError("detect_blocks needs a same-archive heatmap");
  return detect_blocks(h.values, threshold, min_size);
}

const BlockRegion* largest_block(const std::vector<BlockRegion>& blocks) {
  const BlockRegion* best = nullptr;
  for (const auto& b : blocks)
    if (!best || b.size() > best->size()) best = &b;
  return best;
}

std::size_t fraction_count(double fraction, std::size_t n) {
  const double x = fraction * static_cast<double>(n);
  return static_cast<std::size_t>(std::max(0.0, std::ceil(x - 1e-9)));
}

std::vector<std::size_t> DominantReport::selected_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < selected_count; ++i) out.push_back(ranked[i].index);
  return out;
}

DominantReport detect_dominant(const Vector& projections, const std::vector<std::string>& example_ids,
                               const DominantPolicy& policy, const std::string& reference_layer) {
  const auto n = static_cast<std::size_t>(projections.size());
  if (n < 2) throw ArgumentError("detect_dominant needs at least 2 examples");
  if (example_ids.size() != n) throw ArgumentError("detect_dominant: id count mismatch");

  DominantReport r;
  r.reference_layer = reference_layer;
  std::vector<double> mags(n);
  for (std::size_t i = 0; i < n; ++i) mags[i] = std::abs(projections[static_cast<Eigen::Index>(i)]);
  r.median_abs_projection = median(mags);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mags[a] > mags[b]; });

  const double med = r.median_abs_projection;
  for (auto i : order) {
    const double ratio = med > 0.0 ? mags[i] / med
                                   : (mags[i] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    r.ranked.push_back({i, example_ids[i], projections[static_cast<Eigen::Index>(i)], ratio});
  }

  const bool all_zero = std::all_of(mags.begin(), mags.end(), [](double m) { return m == 0.0; });
  if (all_zero) return r;

  if (const auto* rp = std::get_if<RatioPolicy>(&policy)) {
    if (!(rp->tau > 0.0)) throw ArgumentError("ratio must be positive");
    while (r.selected_count < n && mags[order[r.selected_count]] > rp->tau * med) ++r.selected_count;
  } else {
    const double f = std::get<TopFractionPolicy>(policy).fraction;
    if (!(f > 0.0) || !(f <= 1.0)) throw ArgumentError("top fraction must be in (0, 1]");
    r.selected_count = std::min(n, fraction_count(f, n));
  }

  if (r.selected_count > 0 && r.selected_count < n) {
    double sel = 0.0;
    for (std::size_t i = 0; i < r.selected_count; ++i) sel += mags[order[i]];
    sel /= static_cast<double>(r.selected_count);
    std::vector<double> rest;
    for (std::size_t i = r.selected_count; i < n; ++i) rest.push_back(mags[order[i]]);
    const double rest_med = median(rest);
    r.bimodality_ratio = rest_med > 0.0 ? sel / rest_med : 0.0;
  }
  return r;
}

Vector layer_projections(const ActivationArchive& a, std::size_t layer) {
  const Matrix x = center_columns(a.layers.at(layer).to_matrix());
  const auto pcs = principal_components(x, 1);
  return project_first_pc(x, pcs);
}

AblationResult ablate_and_recompute(const ActivationArchive& a, const std::string& reference_layer, double fraction,
                                    const KernelSpec& spec, const AblationParams& params) {
  if (!(fraction > 0.0) || !(fraction < 1.0)) throw ArgumentError("fraction must be in (0, 1)");
  const int ref = a.find_layer(reference_layer);
  if (ref < 0) throw ArgumentError("unknown layer '" + reference_layer + "'");
  const std::size_t n = a.n();
  const std::size_t k = fraction_count(fraction, n);
  if (k >= n || n - k < 4) throw ArgumentError("too few examples remain after removal");

  AblationResult res;
  const Vector proj = layer_projections(a, static_cast<std::size_t>(ref));
  res.before = detect_dominant(proj, a.example_ids, TopFractionPolicy{fraction}, reference_layer);
  res.removed = res.before.selected_indices();
  std::sort(res.removed.begin(), res.removed.end());

  std::vector<std::size_t> keep;
  std::size_t r = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (r < res.removed.size() && res.removed[r] == i) {
      ++r;
      continue;
    }
    keep.push_back(i);
  }
  res.remaining = a.select(keep);

  const std::size_t bs = std::min(params.batch_size, keep.size());
  const auto schedule = make_schedule(keep.size(), bs, params.epochs, params.seed);
  res.heatmap = cka_heatmap(res.remaining, spec, schedule, params.threads);

  const Vector proj_after = layer_projections(res.remaining, static_cast<std::size_t>(ref));
  res.after = detect_dominant(proj_after, res.remaining.example_ids, TopFractionPolicy{fraction}, reference_layer);
  return res;
}

std::vector<double> NormProfile::ratios() const {
  std::vector<double> r(norms.size());
  for (std::size_t i = 0; i < norms.size(); ++i) r[i] = median_norms[i] > 0.0 ? norms[i] / median_norms[i] : 0.0;
  return r;
}

NormProfile norm_profile(const ActivationArchive& a, std::size_t example_index,
                         const std::vector<std::size_t>& reference_batch) {
  if (example_index >= a.n()) throw ArgumentError("example index out of range");
  for (auto i : reference_batch)
    if (i >= a.n()) throw ArgumentError("reference batch index out of range");
  NormProfile p;
  for (const auto& l : a.layers) {
    const auto rs = l.row_size();
    auto row_norm = [&](std::size_t i) {
      double s = 0.0;
      for (std::uint64_t j = 0; j < rs; ++j) {
        const double v = l.data[i * rs + j];
        s += v * v;
      }
      return std::sqrt(s);
    };
    p.norms.push_back(row_norm(example_index));
    std::vector<double> ref;
    for (auto i : reference_batch) ref.push_back(row_norm(i));
    p.median_norms.push_back(median(ref));
  }
  return p;
}

double norm_projection_correlation(const Matrix& x, const PcSummary& summary) {
  if (x.rows() < 3) throw ArgumentError("correlation needs at least 3 examples");
  const Vector norms = x.rowwise().norm();
  const Vector mags = project_first_pc(x, summary).cwiseAbs();
  const Vector a = norms.array() - norms.mean();
  const Vector b = mags.array() - mags.mean();
  const double den = a.norm() * b.norm();
  if (!(den > 0.0)) throw DegenerateError("correlation undefined for constant series");
  return std::clamp(a.dot(b) / den, -1.0, 1.0);
}

Image solid_color_probe(const Image& image) {
  if (image.h < 1 || image.w < 1 || image.c < 1) throw ArgumentError("probe needs a non-empty image");
  if (image.data.size() != image.h * image.w * image.c) throw ArgumentError("image data does not match shape");
  Image out = image;
  for (std::size_t p = 0; p < image.h * image.w; ++p)
    std::copy_n(image.data.begin(), image.c, out.data.begin() + static_cast<std::ptrdiff_t>(p * image.c));
  return out;
}

double jaccard(std::vector<std::size_t> a, std::vector<std::size_t> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  if (a.empty() && b.empty()) return 1.0;
  std::vector<std::size_t> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  return static_cast<double>(common.size()) / static_cast<double>(a.size() + b.size() - common.size());
}

Histogram histogram(const Vector& values, std::size_t bins) {
  if (bins < 1) throw ArgumentError("histogram needs at least one bin");
  if (values.size() == 0) throw ArgumentError("histogram of empty data");
  double lo = values.minCoeff(), hi = values.maxCoeff();
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  h.counts.assign(bins, 0);
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    auto b = static_cast<std::size_t>((values[i] - lo) / (hi - lo) * static_cast<double>(bins));
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

}  // namespace repsim
