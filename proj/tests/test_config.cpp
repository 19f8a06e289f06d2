#include "catch_amalgamated.hpp"

#include <filesystem>
#include <fstream>

#include "tickopt/config.hpp"

using namespace tickopt;
namespace fs = std::filesystem;

TEST_CASE("defaults expand to the working-point parameters", "[config]") {
  const ExperimentConfig cfg = ExperimentConfig::load("", {});
  const ModelParams p = cfg.model();
  CHECK(p.T == 40);
  CHECK(p.q_max == 5);
  CHECK(p.sigma == 0.01);
  CHECK(p.A == 0.1);
  CHECK(p.kappa == 10);
  CHECK(p.phi == 0.005);
  CHECK(p.lambda == 4);
  CHECK(cfg.number("ticks.eta_0") == 0.3);
  CHECK(cfg.number("ticks.alpha_0") == 0.01);
  CHECK(cfg.S0() == 10.5);
  CHECK(cfg.q0() == 0);
  CHECK(cfg.preset() == "custom");
}

TEST_CASE("unknown keys and bad values name the key", "[config]") {
  try {
    ExperimentConfig::load("", {"model.sigmaa=0.1"});
    FAIL("accepted an unknown key");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("model.sigmaa") != std::string::npos);
  }
  try {
    ExperimentConfig::load("", {"grid.ds=abc"});
    FAIL("accepted a non-number");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("grid.ds") != std::string::npos);
  }
  CHECK_THROWS_AS(ExperimentConfig::load("", {"model.sigma=-1"}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::load("", {"ticks.alpha_a=0.002"}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::load("", {"grid.scheme=crank"}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::load("", {"run.preset=fig8"}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::load("", {"noequals"}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::load("", {"point.q=6"}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent/x.ini", {}), ConfigError);
}

TEST_CASE("file, preset and overrides resolve in order", "[config]") {
  const fs::path dir = fs::temp_directory_path() / "tickopt_config_test";
  fs::create_directories(dir);
  const fs::path ini = dir / "c.ini";
  std::ofstream(ini) << "[run]\npreset = fig7\n\n[model]\nphi = 0.004\n\n[scan]\nalpha_step = 0.001\n";
  const ExperimentConfig cfg = ExperimentConfig::load(ini.string(), {"model.phi=0.003"});
  CHECK(cfg.preset() == "fig7");
  CHECK(cfg.model().phi == 0.003);
  const ScanSpec s = cfg.scan();
  CHECK(s.mode == ScanMode::fixed_ask);
  CHECK(s.fixed_alpha == 0.0045);
  CHECK(s.alpha_step == 0.001);
  CHECK(s.phi_minus == std::vector<double>{0.0, 0.0005, 0.005});

  std::ofstream(ini) << "[model]\nphi = 0.004\nbogus = 1\n";
  CHECK_THROWS_AS(ExperimentConfig::load(ini.string(), {}), ConfigError);
  std::ofstream(ini) << "orphan = 1\n";
  CHECK_THROWS_AS(ExperimentConfig::load(ini.string(), {}), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("every preset expands to an explicit config that reloads identically", "[config]") {
  const fs::path dir = fs::temp_directory_path() / "tickopt_config_dump";
  fs::create_directories(dir);
  for (const auto& preset : preset_names()) {
    const ExperimentConfig cfg = ExperimentConfig::load("", {}, preset);
    CHECK(cfg.preset() == preset);
    const fs::path ini = dir / (preset + ".ini");
    std::ofstream(ini) << cfg.dump();
    const ExperimentConfig again = ExperimentConfig::load(ini.string(), {});
    CHECK(again.dump() == cfg.dump());
  }
  const ExperimentConfig app = ExperimentConfig::load("", {}, "appendix");
  CHECK(app.ticks().alpha_a == 0.01);
  CHECK(app.ticks().alpha_b == 0.00625);
  const ExperimentConfig f1 = ExperimentConfig::load("", {}, "fig1");
  CHECK(f1.scan().on_grid);
  CHECK(f1.scan().mode == ScanMode::symmetric);
  fs::remove_all(dir);
}
