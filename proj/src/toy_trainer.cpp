#include "repsim/toy_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Eigenvalues>

#include "repsim/errors.hpp"
#include "repsim/spectral.hpp"

namespace repsim {

void ToyNetConfig::check() const {
  if (depth < 2) throw ArgumentError("depth must be at least 2");
  if (width < 2) throw ArgumentError("width must be at least 2");
  if (activation != "relu") throw ArgumentError("only the relu activation is supported");
  if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
  if (!(momentum > 0.0) || !(momentum < 1.0)) throw ArgumentError("momentum must be in (0, 1)");
  if (batch_size < 1) throw ArgumentError("batch size must be positive");
  if (weight_decay < 0.0) throw ArgumentError("weight decay must be nonnegative");
  if (!(readout_scale > 0.0)) throw ArgumentError("readout scale must be positive");
}

std::string to_string(PlantedMode m) {
  return m == PlantedMode::single_class ? "single_class" : "class_balanced";
}

PlantedMode parse_planted_mode(const std::string& s) {
  if (s == "single_class") return PlantedMode::single_class;
  if (s == "class_balanced") return PlantedMode::class_balanced;
  throw ArgumentError("unknown planted mode '" + s + "'");
}

void SynthDatasetConfig::check() const {
  if (n_examples < 8) throw ArgumentError("need at least 8 examples");
  if (input_dim < 1) throw ArgumentError("input dimension must be positive");
  if (n_classes < 2) throw ArgumentError("need at least 2 classes");
  if (!(planted_fraction > 0.0) || !(planted_fraction < 0.5)) throw ArgumentError("planted fraction must be in (0, 0.5)");
  if (!(noise_scale > 0.0)) throw ArgumentError("noise scale must be positive");
  if (!(planted_magnitude >= 0.0)) throw ArgumentError("planted magnitude must be nonnegative");
  if (!(class_separation >= 0.0)) throw ArgumentError("class separation must be nonnegative");
}

SynthDataset make_synth_dataset(const SynthDatasetConfig& cfg) {
  cfg.check();
  Rng rng(cfg.seed);
  const auto n = cfg.n_examples;
  const auto d = static_cast<Eigen::Index>(cfg.input_dim);
  const auto C = cfg.n_classes;

  Matrix means = rng.normal_matrix(static_cast<Eigen::Index>(C), d);
  for (Eigen::Index c = 0; c < means.rows(); ++c) means.row(c) *= cfg.class_separation / means.row(c).norm();

  SynthDataset ds;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(i % C);
  rng.shuffle(ds.labels);

  ds.inputs = cfg.noise_scale * rng.normal_matrix(static_cast<Eigen::Index>(n), d);
  for (std::size_t i = 0; i < n; ++i) ds.inputs.row(static_cast<Eigen::Index>(i)) += means.row(ds.labels[i]);

  const std::size_t k = fraction_count(cfg.planted_fraction, n);
  std::vector<std::vector<std::size_t>> by_class(C);
  for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  for (auto& members : by_class) rng.shuffle(members);

  if (cfg.planted_mode == PlantedMode::single_class) {
    if (k > by_class[0].size()) throw ArgumentError("planted fraction exceeds the size of one class");
    ds.planted_ids.assign(by_class[0].begin(), by_class[0].begin() + static_cast<std::ptrdiff_t>(k));
    ds.planted_direction = means.row(0).transpose();
    const double nrm = ds.planted_direction.norm();
    if (!(nrm > 0.0)) throw ArgumentError("single_class planting needs a positive class separation");
    ds.planted_direction /= nrm;
  } else {
    const std::size_t per = (k + C - 1) / C;
    for (const auto& members : by_class) {
      if (per > members.size()) throw ArgumentError("planted fraction exceeds class sizes");
      ds.planted_ids.insert(ds.planted_ids.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(per));
    }
    ds.planted_ids.resize(k);
    ds.planted_direction = rng.unit_vector(d);
  }
  std::sort(ds.planted_ids.begin(), ds.planted_ids.end());
  for (auto i : ds.planted_ids)
    ds.inputs.row(static_cast<Eigen::Index>(i)) += cfg.planted_magnitude * ds.planted_direction.transpose();
  return ds;
}

ToySplit split_train_probe(const SynthDataset& data, double probe_fraction, std::uint64_t seed) {
  if (!(probe_fraction > 0.0) || !(probe_fraction < 1.0)) throw ArgumentError("probe fraction must be in (0, 1)");
  const auto n = static_cast<std::size_t>(data.inputs.rows());
  std::vector<bool> planted(n, false);
  for (auto i : data.planted_ids) planted[i] = true;

  Rng rng(seed);
  const auto perm = permutation(n, rng);
  std::vector<std::size_t> groups[2];
  for (auto i : perm) groups[planted[i] ? 1 : 0].push_back(i);

  std::vector<std::size_t> train_idx, probe_idx;
  for (const auto& g : groups) {
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(g.size()) * (1.0 - probe_fraction)));
    train_idx.insert(train_idx.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n_train));
    probe_idx.insert(probe_idx.end(), g.begin() + static_cast<std::ptrdiff_t>(n_train), g.end());
  }
  std::sort(probe_idx.begin(), probe_idx.end());
  rng.shuffle(train_idx);
  if (train_idx.empty() || probe_idx.size() < 4) throw ArgumentError("split leaves too few examples");

  ToySplit s;
  s.train_x = data.inputs(train_idx, Eigen::all);
  s.probe_x = data.inputs(probe_idx, Eigen::all);
  for (auto i : train_idx) s.train_y.push_back(data.labels[i]);
  for (auto i : probe_idx) s.probe_y.push_back(data.labels[i]);
  s.probe_index = probe_idx;
  for (std::size_t j = 0; j < probe_idx.size(); ++j) {
    if (planted[probe_idx[j]]) s.probe_planted.push_back(j);
    s.probe_ids.push_back(std::to_string(probe_idx[j]));
  }
  return s;
}

RegConfig RegConfig::standard(std::size_t depth, double alpha, double delta) {
  RegConfig r;
  r.alpha = alpha;
  r.delta = delta;
  for (std::size_t l = depth / 3; l < depth; ++l) r.regularized_layers.push_back(l);
  return r;
}

void RegConfig::check(std::size_t depth) const {
  if (!(alpha >= 0.0)) throw ArgumentError("alpha must be nonnegative");
  if (!(delta > 0.0) || !(delta < 1.0)) throw ArgumentError("delta must be in (0, 1)");
  std::set<std::size_t> seen;
  for (auto l : regularized_layers) {
    if (l >= depth) throw ArgumentError("regularized layer index out of range");
    if (!seen.insert(l).second) throw ArgumentError("regularized layer listed twice");
  }
}

double pc_reg_loss(double lambda, const Matrix& x, double alpha, double delta) {
  const double fro = x.squaredNorm();
  if (!(fro > 0.0)) throw DegenerateError("regularizer: zero activation matrix");
  if (lambda < 0.0) throw ArgumentError("regularizer: negative eigenvalue estimate");
  return alpha * std::max(lambda / fro - delta, 0.0);
}

RegGradient pc_reg_grad(const Matrix& x, const Vector& u_prev, double alpha, double delta) {
  RegGradient g;
  g.grad = Matrix::Zero(x.rows(), x.cols());
  const Vector xu = x * u_prev;
  const Vector v = x.transpose() * xu;
  const double lambda = v.norm();
  if (!(lambda > 0.0)) {
    g.restart = true;
    return g;
  }
  const double fro = x.squaredNorm();
  if (!(lambda / fro > delta)) return g;
  const Vector uh = v / lambda;
  const Vector xuh = x * uh;
  g.grad = alpha * ((xu * uh.transpose() + xuh * u_prev.transpose()) / fro - (2.0 * lambda / (fro * fro)) * x);
  return g;
}

namespace {

void relu_inplace(Matrix& m) { m = m.cwiseMax(0.0); }

double cross_entropy(const Matrix& logits, const std::vector<int>& y, Matrix* grad) {
  const Eigen::Index b = logits.rows();
  Matrix p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp().matrix();
  const Vector z = p.rowwise().sum();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    p.row(i) /= z[i];
    loss -= std::log(std::max(p(i, y[static_cast<std::size_t>(i)]), 1e-300));
  }
  if (grad) {
    *grad = p;
    for (Eigen::Index i = 0; i < b; ++i) (*grad)(i, y[static_cast<std::size_t>(i)]) -= 1.0;
    *grad /= static_cast<double>(b);
  }
  return loss / static_cast<double>(b);
}

double top_eigenvalue(const Matrix& x) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(x.transpose() * x, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

std::vector<double> layer_frac_first(const std::vector<Matrix>& hs) {
  std::vector<double> out;
  for (const auto& h : hs) {
    const Matrix c = center_columns(h);
    out.push_back(c.squaredNorm() > 0.0 ? frac_first(c) : 0.0);
  }
  return out;
}

}  // namespace

std::vector<Matrix> ToyNet::hidden(const Matrix& x) const {
  std::vector<Matrix> hs;
  Matrix h = x;
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    h = (h * weights[i]).rowwise() + biases[i].transpose();
    relu_inplace(h);
    hs.push_back(h);
  }
  return hs;
}

Matrix ToyNet::logits(const Matrix& x) const {
  const auto hs = hidden(x);
  return (hs.back() * weights.back()).rowwise() + biases.back().transpose();
}

double ToyNet::accuracy(const Matrix& x, const std::vector<int>& y) const {
  const Matrix lo = logits(x);
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < lo.rows(); ++i) {
    Eigen::Index arg;
    lo.row(i).maxCoeff(&arg);
    if (arg == y[static_cast<std::size_t>(i)]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(lo.rows());
}

ActivationArchive ToyNet::archive(const Matrix& x, const std::vector<std::string>& ids) const {
  ActivationArchive a;
  a.example_ids = ids;
  const auto hs = hidden(x);
  for (std::size_t l = 0; l < hs.size(); ++l) a.layers.push_back(ActivationTensor::from_matrix("h" + std::to_string(l), hs[l]));
  a.metadata["model"] = "toy-mlp";
  return a;
}

TrainingTrace train(const ToyNetConfig& cfg, const ToySplit& data, const std::optional<RegConfig>& reg,
                    const std::vector<std::size_t>& checkpoint_epochs) {
  cfg.check();
  if (reg) reg->check(cfg.depth);
  const auto n = static_cast<std::size_t>(data.train_x.rows());
  if (cfg.batch_size > n) throw ArgumentError("batch size exceeds training set size");
  if (data.train_y.size() != n) throw ArgumentError("label count mismatch");
  const int n_classes = 1 + std::max(*std::max_element(data.train_y.begin(), data.train_y.end()),
                                     *std::max_element(data.probe_y.begin(), data.probe_y.end()));
  for (auto e : checkpoint_epochs)
    if (e > cfg.epochs) throw ArgumentError("checkpoint epoch beyond the last epoch");

  Rng init_rng(component_seed(cfg.seed, "init"));
  Rng shuffle_rng(component_seed(cfg.seed, "shuffle"));
  Rng u_rng(component_seed(cfg.seed, "u0"));

  std::vector<Eigen::Index> dims{data.train_x.cols()};
  for (std::size_t i = 0; i < cfg.depth; ++i) dims.push_back(static_cast<Eigen::Index>(cfg.width));
  dims.push_back(n_classes);

  TrainingTrace trace;
  ToyNet& net = trace.net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    net.weights.push_back(init_rng.normal_matrix(dims[i], dims[i + 1]) * std::sqrt(2.0 / static_cast<double>(dims[i])));
    net.biases.push_back(Vector::Zero(dims[i + 1]));
  }
  net.weights.back() *= cfg.readout_scale;
  std::vector<Matrix> vel_w;
  std::vector<Vector> vel_b;
  for (std::size_t i = 0; i < net.weights.size(); ++i) {
    vel_w.push_back(Matrix::Zero(net.weights[i].rows(), net.weights[i].cols()));
    vel_b.push_back(Vector::Zero(net.biases[i].size()));
  }
  std::vector<Vector> us(cfg.depth);
  for (auto& u : us) u = u_rng.unit_vector(static_cast<Eigen::Index>(cfg.width));

  const std::set<std::size_t> ckpts(checkpoint_epochs.begin(), checkpoint_epochs.end());
  auto record = [&](std::size_t epoch, double loss, double reg_loss, std::vector<double> lam_err) {
    const auto hs = net.hidden(data.probe_x);
    EpochRecord r;
    r.epoch = epoch;
    r.loss = loss;
    r.reg_loss = reg_loss;
    r.accuracy = net.accuracy(data.probe_x, data.probe_y);
    r.frac_first = layer_frac_first(hs);
    r.lambda_rel_error = std::move(lam_err);
    trace.records.push_back(std::move(r));
    if (ckpts.count(epoch) || epoch == cfg.epochs) {
      auto a = net.archive(data.probe_x, data.probe_ids);
      a.metadata["epoch"] = std::to_string(epoch);
      trace.checkpoints[epoch] = std::move(a);
    }
  };

  record(0, cross_entropy(net.logits(data.train_x), data.train_y, nullptr), 0.0, {});

  const std::size_t nb = n / cfg.batch_size;
  const std::size_t L = net.weights.size();
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto perm = permutation(n, shuffle_rng);
    double loss_sum = 0.0, reg_sum = 0.0;
    std::vector<double> lam_err;
    for (std::size_t bi = 0; bi < nb; ++bi, ++step) {
      double lr = cfg.learning_rate;
      if (cfg.warmup_epochs > 0)
        lr *= std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_epochs * nb));

      std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(bi * cfg.batch_size),
                                   perm.begin() + static_cast<std::ptrdiff_t>((bi + 1) * cfg.batch_size));
      const Matrix xb = data.train_x(idx, Eigen::all);
      std::vector<int> yb;
      for (auto i : idx) yb.push_back(data.train_y[i]);

      const auto hs = net.hidden(xb);
      const Matrix logits = (hs.back() * net.weights.back()).rowwise() + net.biases.back().transpose();
      Matrix delta;
      double loss = cross_entropy(logits, yb, &delta);

      std::vector<Matrix> extra(cfg.depth);
      double reg_loss = 0.0;
      if (reg) {
        if (bi + 1 == nb) lam_err.clear();
        for (auto l : reg->regularized_layers) {
          const Matrix xt = center_columns(hs[l]);
          const auto ps = power_iteration_step(xt, {us[l], 0.0});
          if (ps.restart || !(xt.squaredNorm() > 0.0)) {
            us[l] = u_rng.unit_vector(static_cast<Eigen::Index>(cfg.width));
            continue;
          }
          reg_loss += pc_reg_loss(ps.state.lambda, xt, reg->alpha, reg->delta);
          const auto g = pc_reg_grad(xt, us[l], reg->alpha, reg->delta);
          us[l] = ps.state.u;
          if (bi + 1 == nb) {
            const double top = top_eigenvalue(xt);
            lam_err.push_back(top > 0.0 ? std::abs(ps.state.lambda - top) / top : 0.0);
          }
          if (g.grad.squaredNorm() > 0.0) extra[l] = g.grad.rowwise() - g.grad.colwise().mean();
        }
      }
      loss += reg_loss;
      if (!std::isfinite(loss))
        throw TrainingError("loss diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      loss_sum += loss;
      reg_sum += reg_loss;

      for (std::size_t i = L; i-- > 0;) {
        const Matrix& input = i == 0 ? xb : hs[i - 1];
        Matrix gw = input.transpose() * delta;
        if (cfg.weight_decay > 0.0) gw += cfg.weight_decay * net.weights[i];
        const Vector gb = delta.colwise().sum().transpose();
        if (i > 0) {
          Matrix dh = delta * net.weights[i].transpose();
          if (extra[i - 1].size() > 0) dh += extra[i - 1];
          delta = dh.cwiseProduct((hs[i - 1].array() > 0.0).cast<double>().matrix());
        }
        vel_w[i] = cfg.momentum * vel_w[i] + gw;
        net.weights[i] -= lr * vel_w[i];
        vel_b[i] = cfg.momentum * vel_b[i] + gb;
        net.biases[i] -= lr * vel_b[i];
      }
    }
    record(epoch, loss_sum / static_cast<double>(nb), reg_sum / static_cast<double>(nb), lam_err);
  }
  return trace;
}

EvolutionReport evolution_report(const std::vector<std::pair<std::string, ActivationArchive>>& checkpoints,
                                 const ActivationArchive& final, const KernelSpec& spec,
                                 const EvolutionParams& params) {
  for (const auto& [label, a] : checkpoints) {
    if (a.example_ids != final.example_ids) throw ConsistencyError("checkpoint " + label + " uses a different probe set");
    if (a.layer_count() != final.layer_count())
      throw ConsistencyError("checkpoint " + label + " has a different layer count");
  }
  const auto schedule = make_schedule(final.n(), std::min(params.batch_size, final.n()), params.epochs, params.seed);

  EvolutionReport rep;
  rep.final_within = cka_heatmap(final, spec, schedule, params.threads);
  rep.final_blocks = detect_blocks(rep.final_within, params.threshold, params.min_size);
  std::size_t ref = final.layer_count() / 2;
  if (const auto* b = largest_block(rep.final_blocks)) ref = b->center();
  rep.reference_layer = final.layers[ref].layer_id;
  rep.final_dominant = detect_dominant(layer_projections(final, ref), final.example_ids,
                                       TopFractionPolicy{params.top_fraction}, rep.reference_layer);
  const auto final_sel = rep.final_dominant.selected_indices();

  for (const auto& [label, a] : checkpoints) {
    CheckpointEvolution ce;
    ce.label = label;
    ce.within = cka_heatmap(a, spec, schedule, params.threads);
    ce.cross_to_final = cka_heatmap(a, final, spec, schedule, params.threads);
    ce.blocks = detect_blocks(ce.within, params.threshold, params.min_size);
    const Vector proj = layer_projections(a, ref);
    ce.dominant = detect_dominant(proj, a.example_ids, TopFractionPolicy{params.top_fraction}, rep.reference_layer);
    for (auto i : final_sel) ce.final_dominant_projections.push_back(std::abs(proj[static_cast<Eigen::Index>(i)]));
    ce.overlap_with_final = jaccard(ce.dominant.selected_indices(), final_sel);
    rep.checkpoints.push_back(std::move(ce));
  }
  return rep;
}

}  // namespace repsim
