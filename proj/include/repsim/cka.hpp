#pragma once

#include <map>
#include <string>
#include <vector>

#include "repsim/activation_data.hpp"
#include "repsim/kernels.hpp"

namespace repsim {

double hsic1(const KernelMatrix& k, const KernelMatrix& l);
double hsic1(const Matrix& k, const Matrix& l);

// Kernel with its diagonal removed plus the sums HSIC1 needs; lets one
// minibatch kernel be paired with many others in O(n^2) each.
struct CenteredTerms {
  Matrix off;          // kernel with zero diagonal
  Vector row_sums;     // off * 1
  double total = 0.0;  // 1' off 1
};

CenteredTerms hsic_terms(const Matrix& k);
double hsic1(const CenteredTerms& k, const CenteredTerms& l);

struct CkaAccumulator {
  double sum_xy = 0.0;
  double sum_xx = 0.0;
  double sum_yy = 0.0;
  std::size_t batch_count = 0;
};

CkaAccumulator accumulate(CkaAccumulator acc, const KernelMatrix& k, const KernelMatrix& l);
// raw (unclamped) ratio
double finalize(const CkaAccumulator& acc);

struct CkaHeatmap {
  Matrix values;  // raw values, may be slightly outside [0, 1]
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  KernelSpec kernel;
  std::map<std::string, std::string> row_provenance;
  std::map<std::string, std::string> col_provenance;
  std::size_t batch_size = 0;
  std::size_t epochs = 0;
};

// a and b may be the same object; pass threads = 0 to use the default worker count.
CkaHeatmap cka_heatmap(const ActivationArchive& a, const ActivationArchive& b, const KernelSpec& spec,
                       const MinibatchSchedule& schedule, unsigned threads = 0);
CkaHeatmap cka_heatmap(const ActivationArchive& a, const KernelSpec& spec, const MinibatchSchedule& schedule,
                       unsigned threads = 0);

// Full-batch biased linear CKA, ||Y'X||^2 / (||X'X|| ||Y'Y||) on centered inputs.
double linear_cka(const Matrix& x, const Matrix& y);
double cka_pc_decomposition(const Matrix& x, const Matrix& y);

}  // namespace repsim
