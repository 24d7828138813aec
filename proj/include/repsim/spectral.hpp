#pragma once

#include "repsim/activation_data.hpp"

namespace repsim {

struct PcSummary {
  Vector eigenvalues;  // descending, squared singular values of the centered matrix
  Matrix components;   // n x k, unit columns in example space
  double total_variance = 0.0;  // ||X||_F^2, the sum over all components
  double frac_first = 0.0;

  Eigen::Index k() const { return eigenvalues.size(); }
};

// Signs: the entry of largest magnitude in each component is positive.
PcSummary principal_components(const Matrix& x, Eigen::Index k);

// lambda_1 / ||X||_F^2 for a centered matrix
double frac_first(const Matrix& x);

Vector project_first_pc(const Matrix& x, const PcSummary& summary);
// unit feature-space direction of component i
Vector feature_direction(const Matrix& x, const PcSummary& summary, Eigen::Index i);

double pc_cosine_similarity(const Vector& a, const Vector& b);

Matrix remove_first_pc(const Matrix& x, const PcSummary& summary);

struct PowerIterState {
  Vector u;
  double lambda = 0.0;
};

struct PowerStep {
  PowerIterState state;
  bool restart = false;  // u was in the null space; state is unchanged
};

PowerStep power_iteration_step(const Matrix& x, const PowerIterState& state);

}  // namespace repsim
