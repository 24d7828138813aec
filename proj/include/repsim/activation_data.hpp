#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace repsim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ActivationTensor {
  std::string layer_id;
  std::vector<std::uint64_t> shape;  // (n, p) or (n, h, w, c)
  std::vector<float> data;           // row-major

  std::uint64_t n() const { return shape.empty() ? 0 : shape[0]; }
  std::uint64_t row_size() const;
  std::size_t rank() const { return shape.size(); }

  // validates shape/data agreement and finiteness
  void check() const;

  // (n, row_size) copy in double precision
  Matrix to_matrix() const;
  static ActivationTensor from_matrix(std::string layer_id, const Matrix& m);
};

struct ActivationArchive {
  std::vector<ActivationTensor> layers;
  std::vector<std::string> example_ids;
  std::map<std::string, std::string> metadata;

  std::size_t n() const { return example_ids.size(); }
  std::size_t layer_count() const { return layers.size(); }
  std::vector<std::string> layer_ids() const;
  // index of the layer with this id, or -1
  int find_layer(const std::string& id) const;

  void check() const;

  // keeps the listed examples, in the listed order
  ActivationArchive select(const std::vector<std::size_t>& rows) const;
};

std::vector<std::string> default_ids(std::size_t n);

ActivationArchive load_archive(const std::filesystem::path& path);
void save_archive(const ActivationArchive& archive, const std::filesystem::path& path);

ActivationTensor flatten_feature_map(const ActivationTensor& t);

Matrix center_columns(const Matrix& x);

struct MinibatchSchedule {
  std::size_t n = 0;
  std::size_t batch_size = 0;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::size_t>> batches;
};

MinibatchSchedule make_schedule(std::size_t n, std::size_t batch_size, std::size_t epochs,
                                std::uint64_t seed);

}  // namespace repsim
