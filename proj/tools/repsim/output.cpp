#include "output.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "repsim/errors.hpp"

namespace repsim::cli {

namespace fs = std::filesystem;

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string sha256_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

OutputDir::OutputDir(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw DataError("cannot create output directory " + root_.string() + ": " + ec.message());
}

void OutputDir::note(const std::string& rel) {
  if (std::find(files_.begin(), files_.end(), rel) == files_.end()) files_.push_back(rel);
}

void OutputDir::write_text(const std::string& rel, const std::string& text) {
  const fs::path p = path(rel);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw DataError("cannot write " + p.string());
  note(rel);
}

void OutputDir::write_json(const std::string& rel, const Json& j) { write_text(rel, j.dump(2) + "\n"); }

void OutputDir::write_archive(const std::string& rel, const ActivationArchive& a) {
  const fs::path p = path(rel);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  save_archive(a, p);
  note(rel);
}

void OutputDir::write_heatmap(const std::string& stem, const CkaHeatmap& h, bool pgm) {
  write_json(stem + ".json", heatmap_json(h));
  write_text(stem + ".csv", heatmap_csv(h));
  if (pgm) write_text(stem + ".pgm", heatmap_pgm(h));
}

void write_manifest(OutputDir& out, const Manifest& m) {
  Json j;
  j["command"] = m.command;
  j["arguments"] = m.arguments;
  j["seeds"] = m.seeds;
  Json inputs = Json::array();
  for (const auto& p : m.inputs) {
    Json e;
    e["path"] = p.string();
    e["sha256"] = sha256_file(p);
    e["bytes"] = fs::file_size(p);
    inputs.push_back(e);
  }
  j["inputs"] = inputs;
  auto files = out.files();
  files.push_back("manifest.json");
  j["outputs"] = files;
  j["toolkit_version"] = kVersion;
  out.write_json("manifest.json", j);
}

Json kernel_json(const KernelSpec& k) {
  Json j;
  j["kind"] = to_string(k.kind);
  if (k.rbf_c) j["c"] = *k.rbf_c;
  return j;
}

Json heatmap_json(const CkaHeatmap& h) {
  Json j;
  j["row_labels"] = h.row_labels;
  j["col_labels"] = h.col_labels;
  j["shape"] = {h.values.rows(), h.values.cols()};
  Json vals = Json::array();
  for (Eigen::Index i = 0; i < h.values.rows(); ++i)
    for (Eigen::Index k = 0; k < h.values.cols(); ++k) vals.push_back(h.values(i, k));
  j["values"] = vals;
  j["kernel"] = kernel_json(h.kernel);
  j["batch_size"] = h.batch_size;
  j["epochs"] = h.epochs;
  Json prov;
  prov["rows"] = Json(h.row_provenance);
  prov["cols"] = Json(h.col_provenance);
  j["provenance"] = prov;
  return j;
}

std::string heatmap_csv(const CkaHeatmap& h) {
  std::string s = "layer";
  for (const auto& c : h.col_labels) s += "," + c;
  s += "\n";
  for (Eigen::Index i = 0; i < h.values.rows(); ++i) {
    s += h.row_labels[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < h.values.cols(); ++k) s += "," + fmt(h.values(i, k));
    s += "\n";
  }
  return s;
}

std::string heatmap_pgm(const CkaHeatmap& h) {
  std::string s = "P5\n" + std::to_string(h.values.cols()) + " " + std::to_string(h.values.rows()) + "\n255\n";
  for (Eigen::Index i = 0; i < h.values.rows(); ++i)
    for (Eigen::Index k = 0; k < h.values.cols(); ++k) {
      const double v = std::clamp(h.values(i, k), 0.0, 1.0);
      s.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
    }
  return s;
}

Json blocks_json(const std::vector<BlockRegion>& blocks, const std::vector<std::string>& labels) {
  Json arr = Json::array();
  for (const auto& b : blocks) {
    Json j;
    j["start_layer"] = b.start_layer;
    j["end_layer"] = b.end_layer;
    j["start_id"] = labels.at(b.start_layer);
    j["end_id"] = labels.at(b.end_layer);
    j["size"] = b.size();
    j["mean_internal_cka"] = b.mean_internal_cka;
    arr.push_back(j);
  }
  return arr;
}

Json dominant_json(const DominantReport& r) {
  Json j;
  j["reference_layer"] = r.reference_layer;
  j["median_abs_projection"] = r.median_abs_projection;
  j["selected_count"] = r.selected_count;
  j["bimodality_ratio"] = r.bimodality_ratio;
  Json sel = Json::array();
  for (std::size_t i = 0; i < r.selected_count; ++i) sel.push_back(r.ranked[i].id);
  j["selected"] = sel;
  Json ranked = Json::array();
  for (const auto& e : r.ranked) {
    Json x;
    x["index"] = e.index;
    x["id"] = e.id;
    x["projection"] = e.projection;
    x["ratio"] = e.ratio;
    ranked.push_back(x);
  }
  j["ranked"] = ranked;
  return j;
}

}  // namespace repsim::cli
