#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "oracles.hpp"
#include "repsim/block_analysis.hpp"
#include "repsim/cka.hpp"
#include "repsim/kernels.hpp"
#include "repsim/spectral.hpp"
#include "repsim/toy_trainer.hpp"

using namespace repsim;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

const fs::path work = "acceptance-work";
const fs::path toy = work / "toy";
const fs::path toy_reg = work / "toy_reg";
const fs::path final_ckpt = toy / "checkpoints" / "epoch_0050.actv";

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + REPSIM_CLI + "\" " + args + " >> \"" + (work / "cli.log").string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void require_cli(const std::string& args) {
  const int rc = cli(args);
  if (rc != 0) throw std::runtime_error("repsim " + args + " exited with " + std::to_string(rc));
}

Json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("missing " + p.string());
  return Json::parse(in);
}

std::vector<BlockRegion> blocks_from(const Json& arr) {
  std::vector<BlockRegion> out;
  for (const auto& b : arr) out.push_back({b["start_layer"].get<std::size_t>(), b["end_layer"].get<std::size_t>(),
                                            b["mean_internal_cka"].get<double>()});
  return out;
}

std::vector<double> layer_fracs(const ActivationArchive& a) {
  std::vector<double> out;
  for (std::size_t l = 0; l < a.layer_count(); ++l) out.push_back(frac_first(center_columns(a.layers[l].to_matrix())));
  return out;
}

// the block whose layers all carry a dominant first PC, else the largest block
std::size_t reference_layer(const std::vector<BlockRegion>& blocks, const std::vector<double>& ff) {
  for (const auto& b : blocks) {
    bool all = true;
    for (std::size_t l = b.start_layer; l <= b.end_layer; ++l) all = all && ff[l] > 0.5;
    if (all) return b.center();
  }
  return largest_block(blocks)->center();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[fs::relative(e.path(), dir).string()] = s.str();
  }
  return out;
}

// ---- 1-6: exact checks ----

Outcome c1() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Matrix k = oracle::random_symmetric(8, rng);
    const Matrix l = oracle::random_symmetric(8, rng);
    worst = std::max(worst, std::abs(hsic1(k, l) - oracle::hsic_quadruple(k, l)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 10.0, "max |diff| " + num(worst) + ", " + num(secs) + " s"};
}

Outcome c2() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(102);
  const Matrix x = rng.normal_matrix(2048, 64);
  const Matrix y = x * rng.normal_matrix(64, 64) + 2.0 * rng.normal_matrix(2048, 64);
  ActivationArchive a;
  a.example_ids = default_ids(2048);
  a.layers.push_back(ActivationTensor::from_matrix("x", x));
  a.layers.push_back(ActivationTensor::from_matrix("y", y));
  std::vector<double> vals;
  for (std::size_t b : {64, 256, 512})
    vals.push_back(cka_heatmap(a, KernelSpec::linear(), make_schedule(2048, b, 10, 7)).values(0, 1));
  const double spread = *std::max_element(vals.begin(), vals.end()) - *std::min_element(vals.begin(), vals.end());
  const double secs = seconds_since(t0);
  return {spread <= 0.02 && secs < 30.0,
          "cka " + num(vals[0]) + " / " + num(vals[1]) + " / " + num(vals[2]) + ", " + num(secs) + " s"};
}

Outcome c3() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(103);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto n = static_cast<Eigen::Index>(8 + rng.below(121));
    const auto p = static_cast<Eigen::Index>(2 + rng.below(63));
    const auto q = static_cast<Eigen::Index>(2 + rng.below(63));
    const Matrix x = center_columns(rng.normal_matrix(n, p));
    const Matrix y = center_columns(x.leftCols(std::min(p, q)) * rng.normal_matrix(std::min(p, q), q) +
                                    rng.normal_matrix(n, q));
    worst = std::max(worst, std::abs(cka_pc_decomposition(x, y) - oracle::biased_linear_cka(x, y)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-8 && secs < 10.0, "max |diff| " + num(worst) + ", " + num(secs) + " s"};
}

double minibatch_cka(const Matrix& x, const Matrix& y, const MinibatchSchedule& s) {
  CkaAccumulator acc;
  for (const auto& batch : s.batches)
    acc = accumulate(acc, make_kernel(x(batch, Eigen::all), KernelSpec::linear()),
                     make_kernel(y(batch, Eigen::all), KernelSpec::linear()));
  return finalize(acc);
}

Outcome c4() {
  Rng rng(104);
  const auto s = make_schedule(64, 16, 2, 9);
  double self = 0.0, orth = 0.0, scale = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Matrix x = rng.normal_matrix(64, 16);
    const Matrix y = x * rng.normal_matrix(16, 12) + rng.normal_matrix(64, 12);
    const Matrix q = oracle::random_orthogonal(16, rng);
    const double c = 0.1 + 10.0 * rng.uniform();
    const double base = minibatch_cka(x, y, s);
    self = std::max(self, std::abs(minibatch_cka(x, x, s) - 1.0));
    orth = std::max(orth, std::abs(minibatch_cka(x * q, y, s) - base));
    scale = std::max(scale, std::abs(minibatch_cka(x, c * y, s) - base));

    const Matrix xc = center_columns(x), yc = center_columns(y);
    const double full = linear_cka(xc, yc);
    self = std::max(self, std::abs(linear_cka(xc, xc) - 1.0));
    orth = std::max(orth, std::abs(linear_cka(xc * q, yc) - full));
    scale = std::max(scale, std::abs(linear_cka(c * xc, yc) - full));
  }
  return {self <= 1e-10 && orth <= 1e-8 && scale <= 1e-8,
          "self " + num(self) + ", orthogonal " + num(orth) + ", scale " + num(scale)};
}

Outcome c5() {
  Rng rng(105);
  double worst = 0.0, drop = 0.0;
  int misses = 0;
  for (int t = 0; t < 50; ++t) {
    const Matrix x = center_columns(rng.normal_matrix(64, 32));
    PowerIterState st{rng.unit_vector(32), 0.0};
    double prev = 0.0;
    for (int i = 0; i < 200; ++i) {
      st = power_iteration_step(x, st).state;
      drop = std::max(drop, prev - st.lambda - 1e-12 * std::max(1.0, prev));
      prev = st.lambda;
    }
    const double top = oracle::top_eigenvalue(x);
    const double err = std::abs(st.lambda - top) / top;
    misses += err > 1e-6 ? 1 : 0;
    worst = std::max(worst, err);
  }
  return {worst <= 1e-6 && drop <= 0.0, "max rel err " + num(worst) + ", " + std::to_string(misses) +
                                            "/50 above 1e-6, largest decrease " + num(drop)};
}

Outcome c6() {
  Rng rng(106);
  double worst = 0.0;
  int done = 0;
  while (done < 100) {
    const Matrix x = center_columns(rng.normal_matrix(8, 4));
    const Vector u = rng.unit_vector(4);
    const auto g = pc_reg_grad(x, u, 1.0, 0.2);
    if (g.restart || g.grad.norm() == 0.0) continue;
    Matrix fd(8, 4);
    const double h = 1e-5;
    auto f = [&](const Matrix& m) { return pc_reg_loss((m.transpose() * (m * u)).norm(), m, 1.0, 0.2); };
    for (Eigen::Index i = 0; i < 8; ++i)
      for (Eigen::Index j = 0; j < 4; ++j) {
        Matrix xp = x, xm = x;
        xp(i, j) += h;
        xm(i, j) -= h;
        fd(i, j) = (f(xp) - f(xm)) / (2 * h);
      }
    worst = std::max(worst, (g.grad - fd).norm() / fd.norm());
    ++done;
  }
  return {worst < 1e-4, "max rel err " + num(worst)};
}

// ---- 7-12: toy system through the CLI ----

struct ToyState {
  std::vector<BlockRegion> blocks;
  std::vector<double> ff;
  std::size_t ref = 0;
  ActivationArchive final;
};

ToyState state;

Outcome c7() {
  const auto t0 = std::chrono::steady_clock::now();
  require_cli("train-toy --out " + toy.string() + " --checkpoint-epochs 1,5,20");
  const double secs = seconds_since(t0);
  state.final = load_archive(final_ckpt);
  require_cli("heatmap " + final_ckpt.string() + " --min-size 4 --out " + (work / "heat").string());
  state.blocks = blocks_from(read_json(work / "heat" / "blocks.json"));
  state.ff = layer_fracs(state.final);
  if (state.blocks.empty()) return {false, "no block detected"};

  bool dominant_pc = false;
  std::string spans;
  for (const auto& b : state.blocks) {
    double lo = 1.0;
    for (std::size_t l = b.start_layer; l <= b.end_layer; ++l) lo = std::min(lo, state.ff[l]);
    dominant_pc = dominant_pc || lo > 0.5;
    spans += " [" + std::to_string(b.start_layer) + "," + std::to_string(b.end_layer) + "] min frac " + num(lo);
  }
  state.ref = reference_layer(state.blocks, state.ff);
  const std::string layer = state.final.layers[state.ref].layer_id;
  require_cli("dominant " + final_ckpt.string() + " --layer " + layer + " --top-fraction 0.05 --out " +
              (work / "dominant").string());
  const auto sel = read_json(work / "dominant" / "dominant.json")["selected"].get<std::vector<std::string>>();
  const auto planted = read_json(toy / "run.json")["planted_probe_ids"].get<std::vector<std::string>>();
  const std::set<std::string> truth(planted.begin(), planted.end());
  std::size_t hit = 0;
  for (const auto& id : sel) hit += truth.count(id);
  const double precision = sel.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(sel.size());
  const double recall = static_cast<double>(hit) / static_cast<double>(truth.size());

  std::vector<std::size_t> all(state.final.n());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::string ratios;
  for (const auto& blk : state.blocks) {
    std::vector<double> mins;
    for (std::size_t i = 0; i < state.final.n(); ++i) {
      if (!truth.count(state.final.example_ids[i])) continue;
      const auto r = norm_profile(state.final, i, all).ratios();
      mins.push_back(*std::min_element(r.begin() + static_cast<std::ptrdiff_t>(blk.start_layer),
                                       r.begin() + static_cast<std::ptrdiff_t>(blk.end_layer) + 1));
    }
    std::sort(mins.begin(), mins.end());
    ratios += " [" + std::to_string(blk.start_layer) + "," + std::to_string(blk.end_layer) + "] min " + num(mins.front()) +
              " median " + num(mins[mins.size() / 2]);
  }
  std::cout << "INFO planted norm ratio per block:" << ratios << "\n";
  return {dominant_pc && precision >= 0.9 && recall >= 0.9 && secs < 300.0,
          "blocks" + spans + "; " + layer + " precision " + num(precision) + " recall " + num(recall) + "; train " +
              num(secs) + " s"};
}

double max_frac_after_removal(const std::vector<std::string>& removed_ids) {
  const std::set<std::string> gone(removed_ids.begin(), removed_ids.end());
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < state.final.n(); ++i)
    if (!gone.count(state.final.example_ids[i])) keep.push_back(i);
  const auto rest = state.final.select(keep);
  double worst = 0.0;
  for (const auto& b : state.blocks)
    for (std::size_t l = b.start_layer; l <= b.end_layer; ++l)
      worst = std::max(worst, frac_first(center_columns(rest.layers[l].to_matrix())));
  return worst;
}

Outcome c8() {
  if (state.blocks.empty()) return {false, "criterion 7 produced no block"};
  require_cli("ablate " + final_ckpt.string() + " --fraction 0.1 --min-size 4 --out " + (work / "ablate").string());
  const auto diff = read_json(work / "ablate" / "blocks_diff.json");
  const std::size_t post = diff["blocks_post"].size();
  const double worst = max_frac_after_removal(diff["removed_ids"].get<std::vector<std::string>>());
  return {post == 0 && worst < 0.35, diff["reference_layer"].get<std::string>() + " removed " +
                                         std::to_string(diff["removed_count"].get<std::size_t>()) + ", blocks after " +
                                         std::to_string(post) + ", max frac_first " + num(worst)};
}

Outcome c9() {
  require_cli("train-toy --reg on --out " + toy_reg.string());
  const fs::path ckpt = toy_reg / "checkpoints" / "epoch_0050.actv";
  const auto a = load_archive(ckpt);
  const auto ff = layer_fracs(a);
  const auto layers = RegConfig::standard(a.layer_count()).regularized_layers;
  double worst = 0.0;
  for (auto l : layers) worst = std::max(worst, ff[l]);
  require_cli("heatmap " + ckpt.string() + " --min-size 4 --out " + (work / "heat_reg").string());
  const std::size_t blocks = read_json(work / "heat_reg" / "blocks.json").size();
  const double acc = read_json(toy / "run.json")["final_accuracy"].get<double>();
  const double acc_reg = read_json(toy_reg / "run.json")["final_accuracy"].get<double>();

  double lam = 0.0;
  std::ifstream trace(toy_reg / "trace.jsonl");
  for (std::string line; std::getline(trace, line);) {
    const auto r = Json::parse(line);
    if (r["epoch"].get<std::size_t>() >= 1)
      for (double e : r["lambda_rel_error"]) lam = std::max(lam, e);
  }
  std::cout << "INFO power-iteration estimate after 50 steps: max rel err " << num(lam)
            << (lam < 0.05 ? " (within 5%)" : " (above 5%)") << "\n";

  const double gap = std::abs(acc - acc_reg);
  return {worst <= 0.25 && blocks == 0 && gap <= 0.02, "max frac_first " + num(worst) + ", blocks " +
                                                            std::to_string(blocks) + ", accuracy " + num(acc) + " vs " +
                                                            num(acc_reg)};
}

Outcome c10() {
  require_cli("evolution " + toy.string() + " --min-size 4 --out " + (work / "evolution").string());
  const auto rep = read_json(work / "evolution" / "evolution.json");
  double at1 = NAN, at20 = NAN;
  std::size_t blocks20 = 0;
  for (const auto& c : rep["checkpoints"]) {
    const auto e = c["epoch"].get<std::size_t>();
    if (e == 1) at1 = c["mean_cross_cka_block_layers"].get<double>();
    if (e == 20) {
      at20 = c["mean_cross_cka_block_layers"].get<double>();
      blocks20 = c["blocks"].size();
    }
  }
  return {blocks20 > 0 && at1 <= at20 - 0.2,
          "epoch 20 blocks " + std::to_string(blocks20) + ", cross-CKA epoch 1 " + num(at1) + " vs epoch 20 " + num(at20)};
}

Outcome c11() {
  if (state.blocks.empty()) return {false, "criterion 7 produced no block"};
  const std::string layer = state.final.layers[state.ref].layer_id;
  bool all_gone = true;
  std::string detail;
  for (const std::string k : {"linear", "cosine", "rbf"}) {
    const fs::path out = work / ("ablate_" + k);
    require_cli("ablate " + final_ckpt.string() + " --kernel " + k + " --layer " + layer +
                " --fraction 0.1 --min-size 4 --out " + out.string());
    const auto diff = read_json(out / "blocks_diff.json");
    const auto pre = diff["blocks_pre"].size(), post = diff["blocks_post"].size();
    all_gone = all_gone && post == 0;
    detail += k + " " + std::to_string(pre) + "->" + std::to_string(post) + "; ";
  }

  Rng rng(111);
  auto perm = permutation(state.final.n(), rng);
  perm.resize(1000);
  const auto batch = state.final.select(perm);
  bool kernel_ok = true;
  for (const auto& t : batch.layers) {
    const Matrix x = t.to_matrix();
    if (x.rowwise().squaredNorm().maxCoeff() == 0.0) continue;
    const auto k = make_kernel(x, KernelSpec::rbf(1.0)).values;
    for (Eigen::Index i = 0; i < k.rows(); ++i)
      for (Eigen::Index j = 0; j < k.cols(); ++j) {
        const double v = k(i, j);
        if (i == j ? v != 1.0 : !(v > 0.0 && v <= 1.0)) kernel_ok = false;
      }
  }
  detail += kernel_ok ? "rbf kernels well formed" : "rbf kernel entries out of range";
  return {all_gone && kernel_ok, detail};
}

Outcome c12() {
  ActivationArchive img;
  img.example_ids = {"a", "b", "c"};
  Rng rng(112);
  ActivationTensor t{"pixels", {3, 4, 4, 3}, {}};
  for (int i = 0; i < 3 * 4 * 4 * 3; ++i) t.data.push_back(static_cast<float>(rng.uniform()));
  img.layers.push_back(t);
  img.layers.push_back(ActivationTensor::from_matrix("feat", rng.normal_matrix(3, 5)));
  save_archive(img, work / "images.actv");

  const std::string ck = final_ckpt.string();
  const std::vector<std::pair<std::string, fs::path>> runs{
      {"heatmap " + ck + " --out %", work / "det_heatmap"},
      {"heatmap " + ck + " --kernel rbf --out %", work / "det_heatmap_rbf"},
      {"heatmap " + ck + " " + (toy / "checkpoints" / "epoch_0001.actv").string() + " --kernel cosine --out %",
       work / "det_cross"},
      {"dominant " + ck + " --layer h3 --out %", work / "det_dominant"},
      {"ablate " + ck + " --out %", work / "det_ablate"},
      {"train-toy --checkpoint-epochs 1,5,20 --out %", toy},
      {"evolution " + toy.string() + " --out %", work / "det_evolution"},
      {"probe " + (work / "images.actv").string() + " --index 1 --out %", work / "det_probe"},
  };
  std::string bad;
  for (const auto& [tmpl, dir] : runs) {
    std::string args = tmpl;
    args.replace(args.find('%'), 1, dir.string());
    if (dir != toy) require_cli(args);
    const auto first = snapshot(dir);
    require_cli(args);
    const auto second = snapshot(dir);
    if (first != second || first.empty()) bad += " " + args.substr(0, args.find(' '));
  }
  return {bad.empty(), bad.empty() ? std::to_string(runs.size()) + " command lines reproduced byte for byte"
                                   : "differences in" + bad};
}

}  // namespace

int main() {
  fs::remove_all(work);
  fs::create_directories(work);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"hsic1 matches the quadruple enumeration", c1},
      {"minibatch CKA independent of batch size", c2},
      {"PC decomposition equals full-batch linear CKA", c3},
      {"CKA self-similarity and invariances", c4},
      {"power iteration converges monotonically", c5},
      {"regularizer gradient matches finite differences", c6},
      {"toy block emergence and dominant recovery", c7},
      {"ablation eliminates the block", c8},
      {"regularizer eliminates the block", c9},
      {"block shape forms before representations settle", c10},
      {"removal eliminates blocks under every kernel", c11},
      {"CLI outputs are deterministic", c12},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << " (" << o.detail << ")"
              << std::endl;
  }
  std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
