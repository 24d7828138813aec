#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "repsim/block_analysis.hpp"
#include "repsim/cka.hpp"

namespace repsim::cli {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.3.0";

// shortest round-trip decimal
std::string fmt(double v);

std::string sha256_file(const std::filesystem::path& p);

// Tracks every file a command writes so the manifest can list them.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path(const std::string& rel) const { return root_ / rel; }

  void write_text(const std::string& rel, const std::string& text);
  void write_json(const std::string& rel, const Json& j);
  void write_archive(const std::string& rel, const ActivationArchive& a);
  void write_heatmap(const std::string& stem, const CkaHeatmap& h, bool pgm = true);

  const std::vector<std::string>& files() const { return files_; }

 private:
  void note(const std::string& rel);
  std::filesystem::path root_;
  std::vector<std::string> files_;
};

struct Manifest {
  std::string command;
  Json arguments = Json::object();
  Json seeds = Json::object();
  std::vector<std::filesystem::path> inputs;
};

void write_manifest(OutputDir& out, const Manifest& m);

Json heatmap_json(const CkaHeatmap& h);
std::string heatmap_csv(const CkaHeatmap& h);
std::string heatmap_pgm(const CkaHeatmap& h);
Json blocks_json(const std::vector<BlockRegion>& blocks, const std::vector<std::string>& labels);
Json dominant_json(const DominantReport& r);
Json kernel_json(const KernelSpec& k);

}  // namespace repsim::cli
