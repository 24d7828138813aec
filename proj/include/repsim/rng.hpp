#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace repsim {

// mt19937_64 with hand-rolled bounded integers and normals, so streams do not
// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }
  // uniform in [0, bound), rejection sampled
  std::uint64_t below(std::uint64_t bound);
  // uniform in (0, 1)
  double uniform();
  double normal();

  Eigen::VectorXd normal_vector(Eigen::Index n);
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);
  Eigen::VectorXd unit_vector(Eigen::Index n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t tag_hash(std::string_view tag);
std::uint64_t component_seed(std::uint64_t seed, std::string_view tag);

std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

}  // namespace repsim
