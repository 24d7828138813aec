#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "repsim/errors.hpp"
#include "repsim/spectral.hpp"

using namespace repsim;

TEST_CASE("principal_components on structured inputs") {
  Rng rng(1);
  const Matrix r1 = center_columns(rng.normal_vector(20) * rng.normal_vector(6).transpose());
  CHECK(std::abs(principal_components(r1, 1).frac_first - 1.0) < 1e-10);

  Matrix two = Matrix::Zero(4, 2);
  two << 1, 0, -1, 0, 0, 1, 0, -1;
  CHECK(std::abs(principal_components(two, 2).frac_first - 0.5) < 1e-8);

  CHECK_THROWS_AS(principal_components(Matrix::Zero(5, 3), 1), DegenerateError);
  CHECK_THROWS_AS(principal_components(r1, 0), ArgumentError);
  CHECK_THROWS_AS(principal_components(r1, 7), ArgumentError);
}

TEST_CASE("principal_components agrees with a dense eigensolver") {
  Rng rng(2);
  const Matrix x = center_columns(rng.normal_matrix(64, 32));
  const auto s = principal_components(x, 32);
  const Vector ref = oracle::eigenvalues_desc(x);
  for (int i = 0; i < 32; ++i) CHECK(std::abs(s.eigenvalues[i] - ref[i]) <= 1e-8 * ref[0]);
  CHECK((s.components.transpose() * s.components - Matrix::Identity(32, 32)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(std::abs(s.eigenvalues.sum() - x.squaredNorm()) < 1e-8 * x.squaredNorm());
  CHECK(std::abs(s.frac_first - s.eigenvalues[0] / s.eigenvalues.sum()) < 1e-12);
  CHECK(std::abs(frac_first(x) - s.frac_first) < 1e-12);
  for (int i = 0; i + 1 < 32; ++i) CHECK(s.eigenvalues[i] >= s.eigenvalues[i + 1]);
}

TEST_CASE("sign convention puts the largest entry positive") {
  Rng rng(3);
  const Matrix x = center_columns(rng.normal_matrix(30, 5));
  const auto s = principal_components(x, 5);
  for (int c = 0; c < 5; ++c) {
    Eigen::Index arg;
    s.components.col(c).cwiseAbs().maxCoeff(&arg);
    CHECK(s.components(arg, c) > 0.0);
  }
  const auto neg = principal_components(-x, 5);
  CHECK((neg.components - s.components).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("project_first_pc") {
  Rng rng(4);
  const Vector v = rng.normal_vector(5);
  Matrix x(3, 5);
  x.row(0).setZero();
  x.row(1) = v.transpose();
  x.row(2) = 2.0 * v.transpose();
  const auto s = principal_components(x, 1);
  const Vector p = project_first_pc(x, s);
  CHECK(std::abs(std::abs(p[1]) - v.norm()) < 1e-10);
  CHECK(std::abs(std::abs(p[2]) - 2.0 * v.norm()) < 1e-10);
  CHECK(std::abs(p[0]) < 1e-12);

  Matrix pad = Matrix::Zero(4, 2);
  pad << 3, 0, -3, 0, 0, 0, 0, 0;
  const auto ps = principal_components(pad, 1);
  const Vector pp = project_first_pc(pad, ps);
  CHECK(std::abs(pp[2]) < 1e-12);
  CHECK(std::abs(pp[3]) < 1e-12);

  const Matrix r = center_columns(rng.normal_matrix(12, 6));
  const auto full = principal_components(r, 6);
  Matrix rec = Matrix::Zero(12, 6);
  for (int i = 0; i < 6; ++i)
    rec += std::sqrt(full.eigenvalues[i]) * full.components.col(i) * feature_direction(r, full, i).transpose();
  CHECK((rec - r).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((project_first_pc(r, full) - r * feature_direction(r, full, 0)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("pc_cosine_similarity") {
  Vector u(3), w(3);
  u << 1, 2, 3;
  w << 3, 0, -1;
  CHECK(pc_cosine_similarity(u, u) == doctest::Approx(1.0));
  CHECK(pc_cosine_similarity(u, -u) == doctest::Approx(1.0));
  CHECK(pc_cosine_similarity(u, w) == 0.0);
  CHECK_THROWS_AS(pc_cosine_similarity(u, Vector::Zero(3)), ArgumentError);
}

TEST_CASE("remove_first_pc") {
  Rng rng(5);
  const Matrix r1 = center_columns(rng.normal_vector(10) * rng.normal_vector(4).transpose());
  CHECK(remove_first_pc(r1, principal_components(r1, 1)).cwiseAbs().maxCoeff() < 1e-8);

  // eigenvalues 10 and 1 by construction
  Matrix x = Matrix::Zero(4, 2);
  const double a = std::sqrt(10.0 / 2.0), b = std::sqrt(1.0 / 2.0);
  x << a, 0, -a, 0, 0, b, 0, -b;
  const auto s = principal_components(x, 2);
  CHECK(std::abs(s.eigenvalues[0] - 10.0) < 1e-10);
  const Matrix y = remove_first_pc(x, s);
  CHECK(std::abs(oracle::top_eigenvalue(y) - 1.0) < 1e-8);

  const Matrix r = center_columns(rng.normal_matrix(20, 6));
  const auto sr = principal_components(r, 6);
  const Matrix once = remove_first_pc(r, sr);
  CHECK(std::abs(oracle::top_eigenvalue(once) - sr.eigenvalues[1]) < 1e-8 * sr.eigenvalues[0]);
  const Matrix rank1 = r - once;
  CHECK(std::abs(once.cwiseProduct(rank1).sum()) < 1e-8 * r.squaredNorm());
  const Matrix twice = remove_first_pc(once, principal_components(once, 5));
  CHECK(std::abs(oracle::top_eigenvalue(twice) - sr.eigenvalues[2]) < 1e-8 * sr.eigenvalues[0]);
}

TEST_CASE("power_iteration_step hand cases") {
  const Matrix x = Eigen::Vector2d(2.0, 1.0).asDiagonal();  // X'X = diag(4, 1)
  auto s = power_iteration_step(x, {Eigen::Vector2d(1, 0), 0.0});
  CHECK(!s.restart);
  CHECK(s.state.lambda == doctest::Approx(4.0));
  CHECK(s.state.u[0] == doctest::Approx(1.0));
  CHECK(s.state.u[1] == doctest::Approx(0.0));

  const double h = 1.0 / std::sqrt(2.0);
  s = power_iteration_step(x, {Eigen::Vector2d(h, h), 0.0});
  CHECK(s.state.lambda == doctest::Approx(std::sqrt(17.0 / 2.0)).epsilon(1e-14));
  CHECK(s.state.u[0] == doctest::Approx(4.0 / std::sqrt(17.0)).epsilon(1e-14));
  CHECK(s.state.u[1] == doctest::Approx(1.0 / std::sqrt(17.0)).epsilon(1e-14));
  CHECK(std::abs(s.state.u.norm() - 1.0) < 1e-10);

  Matrix null(2, 2);
  null << 1, 0, 1, 0;
  const auto r = power_iteration_step(null, {Eigen::Vector2d(0, 1), 0.0});
  CHECK(r.restart);
}

TEST_CASE("power iteration converges monotonically") {
  Rng rng(6);
  for (int t = 0; t < 5; ++t) {
    const Matrix x = center_columns(rng.normal_matrix(64, 32));
    PowerIterState st{rng.unit_vector(32), 0.0};
    double prev = 0.0;
    for (int i = 0; i < 200; ++i) {
      st = power_iteration_step(x, st).state;
      CHECK(st.lambda >= prev - 1e-12 * std::max(1.0, prev));
      prev = st.lambda;
    }
    const double top = oracle::top_eigenvalue(x);
    CHECK(std::abs(st.lambda - top) <= 1e-6 * top);
  }
}
