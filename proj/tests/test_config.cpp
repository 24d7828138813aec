#include <doctest.h>

#include <fstream>

#include "../tools/repsim/config.hpp"
#include "repsim/errors.hpp"

using repsim::ArgumentError;
using repsim::cli::Json;
using repsim::cli::load_config;
using repsim::cli::parse_toml;

TEST_CASE("toml scalars and tables") {
  const auto j = parse_toml(R"(# run config
seed = 7
probe_fraction = 0.25
name = "toy run"
path = 'C:\raw'

[data]
n_examples = 8_000
planted_mode = "single_class"   # trailing comment
[net]
epochs = 3
enabled = true
lr = 2e-3
[reg.extra]
alpha = -1.5
)");
  CHECK(j["seed"] == 7);
  CHECK(j["probe_fraction"] == 0.25);
  CHECK(j["name"] == "toy run");
  CHECK(j["path"] == "C:\\raw");
  CHECK(j["data"]["n_examples"] == 8000);
  CHECK(j["data"]["planted_mode"] == "single_class");
  CHECK(j["net"]["enabled"] == true);
  CHECK(j["net"]["lr"].get<double>() == doctest::Approx(0.002));
  CHECK(j["reg"]["extra"]["alpha"] == -1.5);
}

TEST_CASE("toml arrays") {
  const auto j = parse_toml("checkpoint_epochs = [0, 1,\n  5, 20, # mid\n]\nnames = [\"a\", \"b,c\"]\n");
  CHECK(j["checkpoint_epochs"] == Json::parse("[0,1,5,20]"));
  CHECK(j["names"] == Json::parse(R"(["a","b,c"])"));
}

TEST_CASE("toml errors") {
  CHECK_THROWS_AS(parse_toml("seed = \n"), ArgumentError);
  CHECK_THROWS_AS(parse_toml("seed = 1\nseed = 2\n"), ArgumentError);
  CHECK_THROWS_AS(parse_toml("[data\n"), ArgumentError);
  CHECK_THROWS_AS(parse_toml("name = \"open\n"), ArgumentError);
  CHECK_THROWS_AS(parse_toml("x = [1, 2\n"), ArgumentError);
  CHECK_THROWS_AS(parse_toml("just words\n"), ArgumentError);
}

TEST_CASE("load_config picks the format") {
  const auto dir = std::filesystem::temp_directory_path();
  {
    std::ofstream(dir / "repsim_cfg.json") << R"({"seed": 3})";
    std::ofstream(dir / "repsim_cfg.toml") << "seed = 4\n";
    std::ofstream(dir / "repsim_cfg.txt") << "seed = 5\n";
  }
  CHECK(load_config(dir / "repsim_cfg.json")["seed"] == 3);
  CHECK(load_config(dir / "repsim_cfg.toml")["seed"] == 4);
  CHECK(load_config(dir / "repsim_cfg.txt")["seed"] == 5);
  CHECK_THROWS(load_config(dir / "repsim_missing.toml"));
}
