#pragma once

#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "repsim/activation_data.hpp"
#include "repsim/cka.hpp"
#include "repsim/spectral.hpp"

namespace repsim {

struct BlockRegion {
  std::size_t start_layer = 0;
  std::size_t end_layer = 0;  // inclusive
  double mean_internal_cka = 0.0;
  std::size_t size() const { return end_layer - start_layer + 1; }
  std::size_t center() const { return (start_layer + end_layer) / 2; }
};

std::size_t default_min_block_size(std::size_t layers);

std::vector<BlockRegion> detect_blocks(const CkaHeatmap& h, double threshold = 0.95, std::size_t min_size = 0);
std::vector<BlockRegion> detect_blocks(const Matrix& values, double threshold, std::size_t min_size);
// first largest block, or nullptr
const BlockRegion* largest_block(const std::vector<BlockRegion>& blocks);

struct RatioPolicy {
  double tau = 10.0;
};
struct TopFractionPolicy {
  double fraction = 0.05;
};
using DominantPolicy = std::variant<RatioPolicy, TopFractionPolicy>;

// ceil(fraction * n), robust to representation error in the fraction
std::size_t fraction_count(double fraction, std::size_t n);

struct RankedExample {
  std::size_t index = 0;
  std::string id;
  double projection = 0.0;
  double ratio = 0.0;  // |projection| / median |projection|; infinite when the median is zero
};

struct DominantReport {
  std::vector<RankedExample> ranked;  // by |projection| descending, ties by index
  double median_abs_projection = 0.0;
  std::string reference_layer;
  std::size_t selected_count = 0;  // selected = ranked[0, selected_count)
  double bimodality_ratio = 0.0;   // 0 when either side is empty or the rest has zero median

  std::vector<std::size_t> selected_indices() const;
};

DominantReport detect_dominant(const Vector& projections, const std::vector<std::string>& example_ids,
                               const DominantPolicy& policy, const std::string& reference_layer = "");

// first-PC projections of one archive layer (flattened, centered)
Vector layer_projections(const ActivationArchive& a, std::size_t layer);

struct AblationResult {
  CkaHeatmap heatmap;
  DominantReport before;
  DominantReport after;
  std::vector<std::size_t> removed;  // indices into the original archive, ascending
  ActivationArchive remaining;
};

struct AblationParams {
  std::size_t batch_size = 256;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

AblationResult ablate_and_recompute(const ActivationArchive& a, const std::string& reference_layer, double fraction,
                                    const KernelSpec& spec, const AblationParams& params);

struct NormProfile {
  std::vector<double> norms;
  std::vector<double> median_norms;
  std::vector<double> ratios() const;
};

NormProfile norm_profile(const ActivationArchive& a, std::size_t example_index,
                         const std::vector<std::size_t>& reference_batch);

double norm_projection_correlation(const Matrix& x, const PcSummary& summary);

struct Image {
  std::size_t h = 0, w = 0, c = 0;
  std::vector<float> data;  // h x w x c row-major
};

Image solid_color_probe(const Image& image);

double jaccard(std::vector<std::size_t> a, std::vector<std::size_t> b);

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> counts;
};

Histogram histogram(const Vector& values, std::size_t bins);

}  // namespace repsim
