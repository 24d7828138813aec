#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "repsim/activation_data.hpp"
#include "repsim/block_analysis.hpp"
#include "repsim/cka.hpp"
#include "repsim/rng.hpp"

namespace repsim {

struct ToyNetConfig {
  std::size_t depth = 12;
  std::size_t width = 64;
  std::string activation = "relu";
  std::uint64_t seed = 0;
  double learning_rate = 0.002;
  double momentum = 0.9;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double weight_decay = 0.0;
  // linear learning-rate ramp over the first warmup_epochs epochs
  std::size_t warmup_epochs = 5;
  // multiplier on the He-initialized readout layer
  double readout_scale = 0.5;

  void check() const;
};

enum class PlantedMode {
  single_class,    // planted examples come from class 0 and share its mean direction
  class_balanced,  // planted examples spread over classes and share a random direction
};

std::string to_string(PlantedMode m);
PlantedMode parse_planted_mode(const std::string& s);

struct SynthDatasetConfig {
  std::size_t n_examples = 8000;
  std::size_t input_dim = 256;
  std::size_t n_classes = 10;
  double planted_fraction = 0.05;
  double planted_magnitude = 20.0;  // absolute scale of the shared component
  double noise_scale = 1.0;
  double class_separation = 4.0;    // norm of each class mean
  PlantedMode planted_mode = PlantedMode::single_class;
  std::uint64_t seed = 0;

  void check() const;
};

struct SynthDataset {
  Matrix inputs;
  std::vector<int> labels;
  std::vector<std::size_t> planted_ids;  // ascending
  Vector planted_direction;
};

SynthDataset make_synth_dataset(const SynthDatasetConfig& cfg);

struct ToySplit {
  Matrix train_x;
  std::vector<int> train_y;
  Matrix probe_x;
  std::vector<int> probe_y;
  std::vector<std::size_t> probe_index;    // rows of the full dataset, ascending
  std::vector<std::size_t> probe_planted;  // positions within the probe set
  std::vector<std::string> probe_ids;
};

// Held-out probe set, stratified on the planted flag.
ToySplit split_train_probe(const SynthDataset& data, double probe_fraction, std::uint64_t seed);

struct RegConfig {
  double alpha = 1.0;
  double delta = 0.2;
  std::vector<std::size_t> regularized_layers;

  // hidden layers from depth/3 onward
  static RegConfig standard(std::size_t depth, double alpha = 1.0, double delta = 0.2);
  void check(std::size_t depth) const;
};

double pc_reg_loss(double lambda, const Matrix& x, double alpha, double delta);

struct RegGradient {
  Matrix grad;
  bool restart = false;
};

RegGradient pc_reg_grad(const Matrix& x, const Vector& u_prev, double alpha, double delta);

struct ToyNet {
  std::vector<Matrix> weights;  // fan_in x fan_out
  std::vector<Vector> biases;

  // post-ReLU hidden activations, one per hidden layer
  std::vector<Matrix> hidden(const Matrix& x) const;
  Matrix logits(const Matrix& x) const;
  double accuracy(const Matrix& x, const std::vector<int>& y) const;
  ActivationArchive archive(const Matrix& x, const std::vector<std::string>& ids) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;      // mean objective over the epoch's batches (full pass at epoch 0)
  double reg_loss = 0.0;  // mean regularizer contribution
  double accuracy = 0.0;  // on the probe set
  std::vector<double> frac_first;      // per hidden layer, probe set
  std::vector<double> lambda_rel_error;  // per regularized layer, last batch of the epoch
};

struct TrainingTrace {
  std::vector<EpochRecord> records;
  std::map<std::size_t, ActivationArchive> checkpoints;  // by epoch
  ToyNet net;
};

TrainingTrace train(const ToyNetConfig& net_cfg, const ToySplit& data, const std::optional<RegConfig>& reg,
                    const std::vector<std::size_t>& checkpoint_epochs);

struct EvolutionParams {
  std::size_t batch_size = 256;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double threshold = 0.95;
  std::size_t min_size = 0;
  double top_fraction = 0.05;
  unsigned threads = 0;
};

struct CheckpointEvolution {
  std::string label;
  CkaHeatmap within;
  CkaHeatmap cross_to_final;
  std::vector<BlockRegion> blocks;
  DominantReport dominant;
  std::vector<double> final_dominant_projections;  // |projection| of each final dominant example
  double overlap_with_final = 0.0;                 // Jaccard of dominant sets
};

struct EvolutionReport {
  CkaHeatmap final_within;
  std::vector<BlockRegion> final_blocks;
  std::string reference_layer;
  DominantReport final_dominant;
  std::vector<CheckpointEvolution> checkpoints;
};

EvolutionReport evolution_report(const std::vector<std::pair<std::string, ActivationArchive>>& checkpoints,
                                 const ActivationArchive& final, const KernelSpec& spec,
                                 const EvolutionParams& params);

}  // namespace repsim
