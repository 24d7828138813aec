#pragma once

#include <optional>
#include <string>

#include "repsim/activation_data.hpp"

namespace repsim {

enum class KernelKind { linear, cosine, rbf };

std::string to_string(KernelKind k);
KernelKind parse_kernel_kind(const std::string& s);

struct KernelSpec {
  KernelKind kind = KernelKind::linear;
  std::optional<double> rbf_c;

  static KernelSpec linear() { return {KernelKind::linear, std::nullopt}; }
  static KernelSpec cosine() { return {KernelKind::cosine, std::nullopt}; }
  static KernelSpec rbf(double c) { return {KernelKind::rbf, c}; }

  void check() const;
};

struct KernelMatrix {
  Matrix values;
  KernelKind kind = KernelKind::linear;
  std::optional<double> bandwidth_sigma;

  Eigen::Index size() const { return values.rows(); }
};

KernelMatrix gram_linear(const Matrix& x);
KernelMatrix gram_cosine(const Matrix& x);
double median_pairwise_distance(const Matrix& x);
KernelMatrix gram_rbf(const Matrix& x, double c);

KernelMatrix make_kernel(const Matrix& x, const KernelSpec& spec);

}  // namespace repsim
