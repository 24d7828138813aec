#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "config.hpp"
#include "output.hpp"
#include "repsim/block_analysis.hpp"
#include "repsim/errors.hpp"
#include "repsim/toy_trainer.hpp"

namespace repsim::cli {

namespace fs = std::filesystem;

namespace {

void warn(const std::string& msg) { std::cerr << "repsim: warning: " << msg << "\n"; }

struct Common {
  std::string out = "./repsim-out";
  std::uint64_t seed = 0;
};

struct KernelOpts {
  std::string kernel = "linear";
  std::optional<double> rbf_c;
  std::optional<std::size_t> batch;
  std::size_t epochs = 10;
  double threshold = 0.95;
  std::size_t min_size = 0;

  KernelSpec spec() const {
    KernelSpec s;
    s.kind = parse_kernel_kind(kernel);
    if (s.kind == KernelKind::rbf) s.rbf_c = rbf_c.value_or(1.0);
    else if (rbf_c) throw ArgumentError("--rbf-c only applies to the rbf kernel");
    s.check();
    return s;
  }

  std::size_t batch_for(std::size_t n) const {
    if (batch) return *batch;
    if (parse_kernel_kind(kernel) == KernelKind::rbf) {
      if (n >= 1000) return 1000;
      warn("fewer than 1000 examples; rbf uses batch size " + std::to_string(std::min<std::size_t>(256, n)));
    } else if (n < 256) {
      warn("fewer than 256 examples; using batch size " + std::to_string(n));
    }
    return std::min<std::size_t>(256, n);
  }
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--out", c.out, "output directory")->capture_default_str();
  app->add_option("--seed", c.seed, "global seed")->capture_default_str();
  app->set_version_flag("--version", kVersion);
}

void add_kernel(CLI::App* app, KernelOpts& k) {
  app->add_option("--kernel", k.kernel, "linear, cosine or rbf")
      ->check(CLI::IsMember({"linear", "cosine", "rbf"}))
      ->capture_default_str();
  app->add_option("--rbf-c", k.rbf_c, "rbf bandwidth as a multiple of the median distance (default 1)");
  app->add_option("--batch", k.batch, "minibatch size (default 256, rbf 1000)");
  app->add_option("--epochs", k.epochs, "passes over the examples")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--threshold", k.threshold, "block detection threshold")->capture_default_str();
  app->add_option("--min-size", k.min_size, "minimum block size (default 10% of layers)");
}

Json record_args(const CLI::App* app) {
  Json j = Json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_name();
    if (name == "--help" || name == "--version") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      if (opt->get_items_expected_max() > 1 || r.size() > 1) j[name] = r;
      else j[name] = r.empty() ? std::string() : r.front();
    } else if (!opt->get_default_str().empty()) {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

std::uint64_t schedule_seed(std::uint64_t seed) { return component_seed(seed, "schedule"); }

std::string epoch_tag(std::size_t e) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04zu", e);
  return buf;
}

std::vector<std::size_t> all_layers_of(const std::vector<BlockRegion>& blocks, std::size_t layers) {
  std::vector<std::size_t> out;
  for (const auto& b : blocks)
    for (std::size_t l = b.start_layer; l <= b.end_layer; ++l) out.push_back(l);
  if (out.empty())
    for (std::size_t l = 0; l < layers; ++l) out.push_back(l);
  return out;
}

ActivationArchive align_by_ids(const ActivationArchive& ref, const ActivationArchive& b) {
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < b.example_ids.size(); ++i)
    if (!pos.emplace(b.example_ids[i], i).second) throw ConsistencyError("duplicate example id " + b.example_ids[i]);
  if (b.n() != ref.n()) throw ConsistencyError("archives have different example counts");
  std::vector<std::size_t> rows;
  for (const auto& id : ref.example_ids) {
    auto it = pos.find(id);
    if (it == pos.end()) throw ConsistencyError("example id " + id + " missing from second archive");
    rows.push_back(it->second);
  }
  return b.select(rows);
}

// ---- heatmap ----

struct HeatmapArgs {
  Common common;
  KernelOpts kernel;
  std::vector<std::string> archives;
  bool align_ids = false;
};

int cmd_heatmap(const HeatmapArgs& a, const CLI::App* app) {
  const auto spec = a.kernel.spec();
  const auto first = load_archive(a.archives[0]);
  std::optional<ActivationArchive> second;
  if (a.archives.size() == 2) {
    second = load_archive(a.archives[1]);
    if (a.align_ids) second = align_by_ids(first, *second);
    if (second->n() != first.n()) throw ConsistencyError("archives have different example counts");
  }
  const auto schedule =
      make_schedule(first.n(), a.kernel.batch_for(first.n()), a.kernel.epochs, schedule_seed(a.common.seed));
  const auto h = second ? cka_heatmap(first, *second, spec, schedule) : cka_heatmap(first, spec, schedule);

  OutputDir out(a.common.out);
  out.write_heatmap("heatmap", h);
  if (!second) out.write_json("blocks.json", blocks_json(detect_blocks(h, a.kernel.threshold, a.kernel.min_size), h.row_labels));
  Manifest m{"heatmap", record_args(app), Json::object(), {}};
  m.seeds["schedule"] = schedule.seed;
  for (const auto& p : a.archives) m.inputs.emplace_back(p);
  write_manifest(out, m);
  return 0;
}

// ---- dominant ----

struct DominantArgs {
  Common common;
  std::string archive;
  std::string layer;
  std::optional<double> ratio;
  std::optional<double> top_fraction;
  std::size_t bins = 50;
};

int cmd_dominant(const DominantArgs& a, const CLI::App* app) {
  const auto archive = load_archive(a.archive);
  const int ref = archive.find_layer(a.layer);
  if (ref < 0) throw ArgumentError("unknown layer '" + a.layer + "'");
  DominantPolicy policy = RatioPolicy{10.0};
  if (a.top_fraction) policy = TopFractionPolicy{*a.top_fraction};
  if (a.ratio) policy = RatioPolicy{*a.ratio};

  const Vector proj = layer_projections(archive, static_cast<std::size_t>(ref));
  const auto report = detect_dominant(proj, archive.example_ids, policy, a.layer);
  const auto sel = report.selected_indices();

  Json j = dominant_json(report);
  Json policy_j;
  if (const auto* r = std::get_if<RatioPolicy>(&policy)) policy_j["ratio"] = r->tau;
  else policy_j["top_fraction"] = std::get<TopFractionPolicy>(policy).fraction;
  j["policy"] = policy_j;
  Json overlap = Json::array();
  for (std::size_t l = 0; l < archive.layer_count(); ++l) {
    Json e;
    e["layer"] = archive.layers[l].layer_id;
    try {
      const auto r = detect_dominant(layer_projections(archive, l), archive.example_ids, policy, archive.layers[l].layer_id);
      e["jaccard_with_reference"] = jaccard(r.selected_indices(), sel);
    } catch (const DegenerateError&) {
      e["jaccard_with_reference"] = nullptr;
    }
    overlap.push_back(e);
  }
  j["layer_overlap"] = overlap;

  OutputDir out(a.common.out);
  out.write_json("dominant.json", j);
  std::string csv = "index,id,projection\n";
  for (std::size_t i = 0; i < archive.n(); ++i)
    csv += std::to_string(i) + "," + archive.example_ids[i] + "," + fmt(proj[static_cast<Eigen::Index>(i)]) + "\n";
  out.write_text("projections.csv", csv);
  const auto hist = histogram(proj, a.bins);
  std::string hcsv = "bin_start,bin_end,count\n";
  for (std::size_t b = 0; b < hist.counts.size(); ++b)
    hcsv += fmt(hist.edges[b]) + "," + fmt(hist.edges[b + 1]) + "," + std::to_string(hist.counts[b]) + "\n";
  out.write_text("histogram.csv", hcsv);
  Manifest m{"dominant", record_args(app), Json::object(), {a.archive}};
  write_manifest(out, m);
  return 0;
}

// ---- ablate ----

struct AblateArgs {
  Common common;
  KernelOpts kernel;
  std::string archive;
  std::string layer;
  double fraction = 0.10;
};

int cmd_ablate(const AblateArgs& a, const CLI::App* app) {
  const auto spec = a.kernel.spec();
  const auto archive = load_archive(a.archive);
  if (!(a.fraction > 0.0) || !(a.fraction < 1.0)) throw ArgumentError("--fraction must be in (0, 1)");
  const std::size_t remaining = archive.n() - std::min(archive.n(), fraction_count(a.fraction, archive.n()));
  if (remaining < 4) throw ArgumentError("too few examples remain after removal");

  const std::size_t batch = a.kernel.batch_for(archive.n());
  const auto schedule = make_schedule(archive.n(), batch, a.kernel.epochs, schedule_seed(a.common.seed));
  const auto pre = cka_heatmap(archive, spec, schedule);
  const auto blocks_pre = detect_blocks(pre, a.kernel.threshold, a.kernel.min_size);

  std::string layer = a.layer;
  if (layer.empty()) {
    std::size_t ref = archive.layer_count() / 2;
    if (const auto* b = largest_block(blocks_pre)) ref = b->center();
    else warn("no block detected; using the middle layer as reference");
    layer = archive.layers[ref].layer_id;
  } else if (archive.find_layer(layer) < 0) {
    throw ArgumentError("unknown layer '" + layer + "'");
  }

  AblationParams params;
  params.batch_size = batch;
  params.epochs = a.kernel.epochs;
  params.seed = schedule_seed(a.common.seed);
  const auto res = ablate_and_recompute(archive, layer, a.fraction, spec, params);
  const auto blocks_post = detect_blocks(res.heatmap, a.kernel.threshold, a.kernel.min_size);

  OutputDir out(a.common.out);
  out.write_heatmap("heatmap_pre", pre);
  out.write_heatmap("heatmap_post", res.heatmap);
  out.write_json("dominant_before.json", dominant_json(res.before));
  out.write_json("dominant_after.json", dominant_json(res.after));
  Json diff;
  diff["reference_layer"] = layer;
  diff["fraction"] = a.fraction;
  diff["removed_count"] = res.removed.size();
  Json removed = Json::array();
  for (auto i : res.removed) removed.push_back(archive.example_ids[i]);
  diff["removed_ids"] = removed;
  diff["blocks_pre"] = blocks_json(blocks_pre, pre.row_labels);
  diff["blocks_post"] = blocks_json(blocks_post, res.heatmap.row_labels);
  diff["eliminated"] = !blocks_pre.empty() && blocks_post.empty();
  diff["max_abs_diff"] = (pre.values - res.heatmap.values).cwiseAbs().maxCoeff();
  out.write_json("blocks_diff.json", diff);
  Manifest m{"ablate", record_args(app), Json::object(), {a.archive}};
  m.seeds["schedule"] = params.seed;
  write_manifest(out, m);
  return 0;
}

// ---- train-toy ----

struct TrainArgs {
  Common common;
  bool seed_set = false;
  std::string config;
  std::string reg;
  std::vector<std::size_t> checkpoint_epochs;
  bool checkpoints_set = false;
};

struct ToyRun {
  std::uint64_t seed = 0;
  SynthDatasetConfig data;
  double probe_fraction = 0.25;
  ToyNetConfig net;
  bool reg_enabled = false;
  RegConfig reg = RegConfig::standard(12);
  bool reg_layers_set = false;
  std::vector<std::size_t> checkpoint_epochs{1, 5, 20};
};

template <class T>
void take(const Json& obj, const char* key, T& dst) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ArgumentError(std::string("config key '") + key + "' has the wrong type");
  }
}

void reject_unknown(const Json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ArgumentError("config section '" + where + "' must be a table");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) throw ArgumentError("unknown config key '" + (where.empty() ? "" : where + ".") + it.key() + "'");
  }
}

ToyRun parse_run(const Json& j) {
  ToyRun r;
  reject_unknown(j, "", {"seed", "probe_fraction", "checkpoint_epochs", "data", "net", "reg"});
  take(j, "seed", r.seed);
  take(j, "probe_fraction", r.probe_fraction);
  take(j, "checkpoint_epochs", r.checkpoint_epochs);
  if (j.contains("data")) {
    const auto& d = j["data"];
    reject_unknown(d, "data", {"n_examples", "input_dim", "n_classes", "planted_fraction", "planted_magnitude",
                               "noise_scale", "class_separation", "planted_mode"});
    take(d, "n_examples", r.data.n_examples);
    take(d, "input_dim", r.data.input_dim);
    take(d, "n_classes", r.data.n_classes);
    take(d, "planted_fraction", r.data.planted_fraction);
    take(d, "planted_magnitude", r.data.planted_magnitude);
    take(d, "noise_scale", r.data.noise_scale);
    take(d, "class_separation", r.data.class_separation);
    std::string mode = to_string(r.data.planted_mode);
    take(d, "planted_mode", mode);
    r.data.planted_mode = parse_planted_mode(mode);
  }
  if (j.contains("net")) {
    const auto& n = j["net"];
    reject_unknown(n, "net", {"depth", "width", "activation", "learning_rate", "momentum", "epochs", "batch_size",
                              "weight_decay", "warmup_epochs", "readout_scale"});
    take(n, "depth", r.net.depth);
    take(n, "width", r.net.width);
    take(n, "activation", r.net.activation);
    take(n, "learning_rate", r.net.learning_rate);
    take(n, "momentum", r.net.momentum);
    take(n, "epochs", r.net.epochs);
    take(n, "batch_size", r.net.batch_size);
    take(n, "weight_decay", r.net.weight_decay);
    take(n, "warmup_epochs", r.net.warmup_epochs);
    take(n, "readout_scale", r.net.readout_scale);
  }
  r.reg = RegConfig::standard(r.net.depth);
  if (j.contains("reg")) {
    const auto& g = j["reg"];
    reject_unknown(g, "reg", {"enabled", "alpha", "delta", "layers"});
    take(g, "enabled", r.reg_enabled);
    take(g, "alpha", r.reg.alpha);
    take(g, "delta", r.reg.delta);
    if (g.contains("layers")) {
      take(g, "layers", r.reg.regularized_layers);
      r.reg_layers_set = true;
    }
  }
  return r;
}

Json run_json(const ToyRun& r) {
  Json j;
  j["seed"] = r.seed;
  j["probe_fraction"] = r.probe_fraction;
  j["checkpoint_epochs"] = r.checkpoint_epochs;
  Json d;
  d["n_examples"] = r.data.n_examples;
  d["input_dim"] = r.data.input_dim;
  d["n_classes"] = r.data.n_classes;
  d["planted_fraction"] = r.data.planted_fraction;
  d["planted_magnitude"] = r.data.planted_magnitude;
  d["noise_scale"] = r.data.noise_scale;
  d["class_separation"] = r.data.class_separation;
  d["planted_mode"] = to_string(r.data.planted_mode);
  j["data"] = d;
  Json n;
  n["depth"] = r.net.depth;
  n["width"] = r.net.width;
  n["activation"] = r.net.activation;
  n["learning_rate"] = r.net.learning_rate;
  n["momentum"] = r.net.momentum;
  n["epochs"] = r.net.epochs;
  n["batch_size"] = r.net.batch_size;
  n["weight_decay"] = r.net.weight_decay;
  n["warmup_epochs"] = r.net.warmup_epochs;
  n["readout_scale"] = r.net.readout_scale;
  j["net"] = n;
  Json g;
  g["enabled"] = r.reg_enabled;
  g["alpha"] = r.reg.alpha;
  g["delta"] = r.reg.delta;
  g["layers"] = r.reg.regularized_layers;
  j["reg"] = g;
  return j;
}

int cmd_train_toy(const TrainArgs& a, const CLI::App* app) {
  ToyRun run;
  if (!a.config.empty()) run = parse_run(load_config(a.config));
  if (a.seed_set) run.seed = a.common.seed;
  if (a.reg == "on") run.reg_enabled = true;
  if (a.reg == "off") run.reg_enabled = false;
  if (a.checkpoints_set) run.checkpoint_epochs = a.checkpoint_epochs;
  if (!run.reg_layers_set) run.reg.regularized_layers = RegConfig::standard(run.net.depth).regularized_layers;

  run.data.seed = component_seed(run.seed, "synth");
  run.net.seed = run.seed;
  run.net.check();
  run.data.check();
  if (run.reg_enabled) run.reg.check(run.net.depth);

  const auto ds = make_synth_dataset(run.data);
  const auto split = split_train_probe(ds, run.probe_fraction, component_seed(run.seed, "split"));
  const auto trace = train(run.net, split, run.reg_enabled ? std::optional<RegConfig>(run.reg) : std::nullopt,
                           run.checkpoint_epochs);

  OutputDir out(a.common.out);
  out.write_json("config.json", run_json(run));
  std::string lines;
  for (const auto& r : trace.records) {
    Json j;
    j["epoch"] = r.epoch;
    j["loss"] = r.loss;
    j["reg_loss"] = r.reg_loss;
    j["accuracy"] = r.accuracy;
    j["frac_first"] = r.frac_first;
    j["lambda_rel_error"] = r.lambda_rel_error;
    const auto it = trace.checkpoints.find(r.epoch);
    j["checkpoint"] = it == trace.checkpoints.end() ? Json(nullptr) : Json("checkpoints/" + epoch_tag(r.epoch) + ".actv");
    lines += j.dump() + "\n";
  }
  out.write_text("trace.jsonl", lines);

  Json ck = Json::array();
  for (const auto& [epoch, archive] : trace.checkpoints) {
    const std::string rel = "checkpoints/" + epoch_tag(epoch) + ".actv";
    out.write_archive(rel, archive);
    Json e;
    e["epoch"] = epoch;
    e["file"] = rel;
    ck.push_back(e);
  }
  Json info;
  info["final_epoch"] = run.net.epochs;
  info["checkpoints"] = ck;
  info["regularized"] = run.reg_enabled;
  info["final_accuracy"] = trace.records.back().accuracy;
  Json planted = Json::array();
  for (auto i : split.probe_planted) planted.push_back(split.probe_ids[i]);
  info["planted_probe_ids"] = planted;
  out.write_json("run.json", info);

  Manifest m{"train-toy", record_args(app), Json::object(), {}};
  m.seeds["global"] = run.seed;
  m.seeds["synth"] = run.data.seed;
  m.seeds["split"] = component_seed(run.seed, "split");
  m.seeds["init"] = component_seed(run.seed, "init");
  m.seeds["shuffle"] = component_seed(run.seed, "shuffle");
  m.seeds["u0"] = component_seed(run.seed, "u0");
  if (!a.config.empty()) m.inputs.emplace_back(a.config);
  write_manifest(out, m);
  return 0;
}

// ---- evolution ----

struct EvolutionArgs {
  Common common;
  KernelOpts kernel;
  std::string run_dir;
  double top_fraction = 0.05;
};

int cmd_evolution(const EvolutionArgs& a, const CLI::App* app) {
  const auto spec = a.kernel.spec();
  const fs::path run_dir(a.run_dir);
  const fs::path info_path = run_dir / "run.json";
  if (!fs::exists(info_path)) throw DataError("missing " + info_path.string());
  Json info;
  try {
    std::ifstream in(info_path);
    info = Json::parse(in);
  } catch (const nlohmann::json::exception&) {
    throw FormatError(info_path.string() + " is not valid JSON");
  }
  Manifest m{"evolution", record_args(app), Json::object(), {info_path}};

  std::size_t final_epoch = 0;
  std::vector<std::pair<std::size_t, fs::path>> files;
  try {
    final_epoch = info.at("final_epoch").get<std::size_t>();
    for (const auto& e : info.at("checkpoints"))
      files.emplace_back(e.at("epoch").get<std::size_t>(), run_dir / e.at("file").get<std::string>());
  } catch (const nlohmann::json::exception&) {
    throw FormatError(info_path.string() + " is missing checkpoint entries");
  }

  std::optional<ActivationArchive> final;
  std::vector<std::pair<std::string, ActivationArchive>> others;
  std::vector<std::size_t> other_epochs;
  for (const auto& [epoch, path] : files) {
    if (!fs::exists(path)) throw DataError("missing checkpoint " + path.string());
    auto archive = load_archive(path);
    m.inputs.push_back(path);
    if (epoch == final_epoch) {
      final = std::move(archive);
    } else {
      others.emplace_back(epoch_tag(epoch), std::move(archive));
      other_epochs.push_back(epoch);
    }
  }
  if (!final) throw DataError("missing final checkpoint in " + info_path.string());

  EvolutionParams params;
  params.batch_size = a.kernel.batch_for(final->n());
  params.epochs = a.kernel.epochs;
  params.seed = schedule_seed(a.common.seed);
  params.threshold = a.kernel.threshold;
  params.min_size = a.kernel.min_size;
  params.top_fraction = a.top_fraction;
  const auto rep = evolution_report(others, *final, spec, params);

  OutputDir out(a.common.out);
  const auto block_layers = all_layers_of(rep.final_blocks, final->layer_count());
  std::string table = "checkpoint,epoch,jaccard_with_final,mean_cross_cka_block_layers,blocks\n";
  Json cps = Json::array();
  for (std::size_t i = 0; i < rep.checkpoints.size(); ++i) {
    const auto& c = rep.checkpoints[i];
    out.write_heatmap("within_" + c.label, c.within);
    out.write_heatmap("cross_" + c.label, c.cross_to_final);
    double mean = 0.0;
    for (auto l : block_layers) mean += c.cross_to_final.values(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(l));
    mean /= static_cast<double>(block_layers.size());
    table += c.label + "," + std::to_string(other_epochs[i]) + "," + fmt(c.overlap_with_final) + "," + fmt(mean) + "," +
             std::to_string(c.blocks.size()) + "\n";
    Json e;
    e["checkpoint"] = c.label;
    e["epoch"] = other_epochs[i];
    e["blocks"] = blocks_json(c.blocks, c.within.row_labels);
    e["jaccard_with_final"] = c.overlap_with_final;
    e["mean_cross_cka_block_layers"] = mean;
    e["final_dominant_projections"] = c.final_dominant_projections;
    e["dominant"] = dominant_json(c.dominant);
    cps.push_back(e);
  }
  out.write_heatmap("within_" + epoch_tag(final_epoch), rep.final_within);
  out.write_text("overlap.csv", table);

  Json summary;
  summary["final_epoch"] = final_epoch;
  summary["final_blocks"] = blocks_json(rep.final_blocks, rep.final_within.row_labels);
  summary["reference_layer"] = rep.reference_layer;
  summary["final_dominant"] = dominant_json(rep.final_dominant);
  summary["checkpoints"] = cps;
  out.write_json("evolution.json", summary);
  m.seeds["schedule"] = params.seed;
  write_manifest(out, m);
  return 0;
}

// ---- probe ----

struct ProbeArgs {
  Common common;
  std::string archive;
  long long index = -1;
  std::string layer;
};

int cmd_probe(const ProbeArgs& a, const CLI::App* app) {
  const auto archive = load_archive(a.archive);
  int li = -1;
  if (a.layer.empty()) {
    for (std::size_t i = 0; i < archive.layer_count(); ++i)
      if (archive.layers[i].rank() == 4) {
        li = static_cast<int>(i);
        break;
      }
    if (li < 0) throw ArgumentError("archive has no rank-4 image layer");
  } else {
    li = archive.find_layer(a.layer);
    if (li < 0) throw ArgumentError("unknown layer '" + a.layer + "'");
  }
  const auto& t = archive.layers[static_cast<std::size_t>(li)];
  if (t.rank() != 4) throw ArgumentError("layer " + t.layer_id + " is not a spatial image tensor");
  if (a.index < 0 || static_cast<std::uint64_t>(a.index) >= archive.n()) throw ArgumentError("image index out of range");

  Image img{t.shape[1], t.shape[2], t.shape[3], {}};
  const std::size_t per = img.h * img.w * img.c;
  const auto first = t.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(a.index) * per);
  img.data.assign(first, first + static_cast<std::ptrdiff_t>(per));
  const Image probe = solid_color_probe(img);

  ActivationArchive out_a;
  out_a.metadata = archive.metadata;
  out_a.metadata["probe"] = "solid_color";
  out_a.example_ids = {archive.example_ids[static_cast<std::size_t>(a.index)]};
  ActivationTensor pt;
  pt.layer_id = t.layer_id;
  pt.shape = {1, img.h, img.w, img.c};
  pt.data = probe.data;
  out_a.layers.push_back(std::move(pt));

  OutputDir out(a.common.out);
  out.write_archive("probe.actv", out_a);
  Manifest m{"probe", record_args(app), Json::object(), {a.archive}};
  write_manifest(out, m);
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Representational similarity toolkit", "repsim"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  HeatmapArgs heat;
  auto* h = app.add_subcommand("heatmap", "minibatch CKA heatmap between layers");
  add_common(h, heat.common);
  add_kernel(h, heat.kernel);
  h->add_option("archives", heat.archives, "one or two ACTV files")->required()->expected(1, 2)->check(CLI::ExistingFile);
  h->add_flag("--align-ids", heat.align_ids, "reorder the second archive by example id");

  DominantArgs dom;
  auto* d = app.add_subcommand("dominant", "dominant datapoints from first-PC projections");
  add_common(d, dom.common);
  d->add_option("archive", dom.archive, "ACTV file")->required()->check(CLI::ExistingFile);
  d->add_option("--layer", dom.layer, "reference layer id")->required();
  auto* ratio = d->add_option("--ratio", dom.ratio, "select |projection| above ratio x median (default 10)");
  auto* topf = d->add_option("--top-fraction", dom.top_fraction, "select the top fraction by |projection|");
  ratio->excludes(topf);
  d->add_option("--bins", dom.bins, "histogram bins")->check(CLI::PositiveNumber)->capture_default_str();

  AblateArgs abl;
  auto* b = app.add_subcommand("ablate", "remove dominant datapoints and recompute CKA");
  add_common(b, abl.common);
  add_kernel(b, abl.kernel);
  b->add_option("archive", abl.archive, "ACTV file")->required()->check(CLI::ExistingFile);
  b->add_option("--layer", abl.layer, "reference layer id (default: center of the largest block)");
  b->add_option("--fraction", abl.fraction, "fraction of examples to remove")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train-toy", "train the toy MLP on the planted dataset");
  add_common(t, tr.common);
  t->add_option("--config", tr.config, "JSON or TOML run config")->check(CLI::ExistingFile);
  t->add_option("--reg", tr.reg, "force the regularizer on or off")->check(CLI::IsMember({"on", "off"}));
  t->add_option("--checkpoint-epochs", tr.checkpoint_epochs, "comma separated epochs")->delimiter(',');

  EvolutionArgs evo;
  auto* e = app.add_subcommand("evolution", "compare checkpoints of a toy run to its final model");
  add_common(e, evo.common);
  add_kernel(e, evo.kernel);
  e->add_option("run_dir", evo.run_dir, "train-toy output directory")->required();
  e->add_option("--top-fraction", evo.top_fraction, "dominant selection fraction")->capture_default_str();

  ProbeArgs prb;
  auto* p = app.add_subcommand("probe", "solid-colour probe from an image tensor");
  add_common(p, prb.common);
  p->add_option("archive", prb.archive, "ACTV file with a rank-4 image layer")->required()->check(CLI::ExistingFile);
  p->add_option("--index", prb.index, "image index")->required();
  p->add_option("--layer", prb.layer, "image layer id (default: first rank-4 layer)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 2;
  }

  try {
    if (*h) return cmd_heatmap(heat, h);
    if (*d) return cmd_dominant(dom, d);
    if (*b) return cmd_ablate(abl, b);
    if (*t) {
      tr.seed_set = t->get_option("--seed")->count() > 0;
      tr.checkpoints_set = t->get_option("--checkpoint-epochs")->count() > 0;
      return cmd_train_toy(tr, t);
    }
    if (*e) return cmd_evolution(evo, e);
    if (*p) return cmd_probe(prb, p);
  } catch (const ArgumentError& ex) {
    std::cerr << "repsim: error: " << ex.what() << "\n";
    return 2;
  } catch (const DataError& ex) {
    std::cerr << "repsim: data error: " << ex.what() << "\n";
    return 3;
  } catch (const std::exception& ex) {
    std::cerr << "repsim: error: " << ex.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace repsim::cli
