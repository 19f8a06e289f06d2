#pragma once

// Experiment configuration: a flat INI file with one section per module.
// Resolution order: built-in defaults, preset, file, --set overrides.
// Every key must be known; the fully expanded result can be written back out.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "tickopt/error.hpp"
#include "tickopt/exchange.hpp"
#include "tickopt/grid.hpp"
#include "tickopt/model.hpp"
#include "tickopt/sim.hpp"
#include "tickopt/zones.hpp"

namespace tickopt {

inline constexpr const char* kVersion = "tickopt 1.0.0";

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "appendix", "custom"};
  return names;
}

/// Ordered key list with defaults. Values are kept as text until typed access.
inline const std::vector<std::pair<std::string, std::string>>& default_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys{
      {"run.preset", "custom"},
      {"run.seed", "1"},
      {"run.out", "out"},
      {"run.threads", "1"},
      {"model.sigma", "0.01"},
      {"model.lambda", "4"},
      {"model.kappa", "10"},
      {"model.phi", "0.005"},
      {"model.phi_minus", "0"},
      {"model.A", "0.1"},
      {"model.q_max", "5"},
      {"model.T", "40"},
      {"model.c", "1"},
      {"ticks.alpha_a", "0.01"},
      {"ticks.alpha_b", "0.01"},
      {"ticks.eta_0", "0.3"},
      {"ticks.alpha_0", "0.01"},
      {"point.S", "10.5"},
      {"point.q", "0"},
      {"grid.ds", "0.0005"},
      {"grid.margin", "5"},
      {"grid.scheme", "imex"},
      {"grid.dt", "0.02"},
      {"grid.cfl", "0.5"},
      {"sim.dt_sim", "0.001"},
      {"sim.n_paths", "1000"},
      {"scan.mode", "symmetric"},
      {"scan.alpha_min", "0.0045"},
      {"scan.alpha_max", "0.05"},
      {"scan.alpha_step", "0.0005"},
      {"scan.fixed_alpha", "0.0045"},
      {"scan.on_grid", "false"},
      {"scan.phi_minus", "0"},
      {"scan.method", "pde"},
      {"scan.cell_average", "true"},
      {"estimate.input", ""},
      {"solve.all_times", "false"},
  };
  return keys;
}

/// Settings a preset pins down on top of the defaults.
inline std::vector<std::pair<std::string, std::string>> preset_keys(const std::string& preset) {
  const std::string phis = "0,0.0005,0.005";
  if (preset == "fig1" || preset == "fig2")
    return {{"scan.mode", "symmetric"}, {"scan.on_grid", "true"}, {"scan.phi_minus", phis}, {"scan.method", "pde"}};
  if (preset == "fig3")
    return {{"scan.mode", "fixed_bid"}, {"scan.fixed_alpha", "0.0124"}, {"scan.phi_minus", phis}, {"scan.method", "pde"}};
  if (preset == "fig4")
    return {{"scan.mode", "grid2d"}, {"scan.alpha_step", "0.0025"}, {"scan.phi_minus", "0"}, {"scan.method", "pde"}};
  if (preset == "fig5")
    return {{"scan.mode", "grid2d"}, {"scan.alpha_step", "0.0025"}, {"scan.phi_minus", "0.005"}, {"scan.method", "pde"}};
  if (preset == "fig6")
    return {{"scan.mode", "grid2d"}, {"scan.alpha_step", "0.0025"}, {"scan.phi_minus", "0,0.005"}, {"scan.method", "pde"}};
  if (preset == "fig7")
    return {{"scan.mode", "fixed_ask"}, {"scan.fixed_alpha", "0.0045"}, {"scan.phi_minus", phis}, {"scan.method", "pde"}};
  if (preset == "appendix")
    return {{"ticks.alpha_a", "0.01"}, {"ticks.alpha_b", "0.00625"}, {"point.q", "0"}};
  if (preset == "custom") return {};
  throw ConfigError("run.preset: unknown preset '" + preset + "'");
}

class ExperimentConfig {
public:
  ExperimentConfig() {
    for (const auto& [k, v] : default_keys()) values_[k] = v;
  }

  /// Builds a config from an optional INI file and key=value overrides.
  static ExperimentConfig load(const std::string& path, const std::vector<std::string>& overrides,
                               const std::string& preset_override = "") {
    std::map<std::string, std::string> file;
    if (!path.empty()) {
      std::ifstream in(path);
      if (!in) throw ConfigError("config: cannot open '" + path + "'");
      boost::property_tree::ptree tree;
      try {
        boost::property_tree::read_ini(in, tree);
      } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
      for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError("config: key '" + section + "' must be inside a section");
        for (const auto& [key, value] : body) file[section + "." + key] = value.get_value<std::string>();
      }
    }
    std::map<std::string, std::string> sets;
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + o + "'");
      sets[o.substr(0, eq)] = o.substr(eq + 1);
    }

    ExperimentConfig cfg;
    std::string preset = "custom";
    if (auto it = file.find("run.preset"); it != file.end()) preset = it->second;
    if (auto it = sets.find("run.preset"); it != sets.end()) preset = it->second;
    if (!preset_override.empty()) preset = preset_override;
    for (const auto& [k, v] : preset_keys(preset)) cfg.set(k, v);
    for (const auto& [k, v] : file) cfg.set(k, v);
    for (const auto& [k, v] : sets) cfg.set(k, v);
    cfg.set("run.preset", preset);
    cfg.validate();
    return cfg;
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw ConfigError("config: unknown key '" + key + "'");
    values_[key] = value;
  }

  const std::string& text(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
    return it->second;
  }

  double number(const std::string& key) const {
    const std::string& s = text(key);
    try {
      std::size_t used = 0;
      const double x = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return x;
    } catch (const std::exception&) {
      throw ConfigError("config: " + key + " must be a number (got '" + s + "')");
    }
  }

  std::int64_t integer(const std::string& key) const {
    const std::string& s = text(key);
    try {
      std::size_t used = 0;
      const long long x = std::stoll(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return x;
    } catch (const std::exception&) {
      throw ConfigError("config: " + key + " must be an integer (got '" + s + "')");
    }
  }

  bool flag(const std::string& key) const {
    const std::string& s = text(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("config: " + key + " must be true or false (got '" + s + "')");
  }

  std::vector<double> numbers(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(text(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError("config: " + key + " must be a comma-separated list of numbers (got '" + text(key) + "')");
      }
    }
    if (out.empty()) throw ConfigError("config: " + key + " must not be empty");
    return out;
  }

  std::string preset() const { return text("run.preset"); }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("run.seed")); }
  std::string out() const { return text("run.out"); }
  unsigned threads() const { return static_cast<unsigned>(integer("run.threads")); }

  ModelParams model() const {
    ModelParams p;
    p.sigma = number("model.sigma");
    p.lambda = number("model.lambda");
    p.kappa = number("model.kappa");
    p.phi = number("model.phi");
    p.phi_minus = number("model.phi_minus");
    p.A = number("model.A");
    p.q_max = static_cast<int>(integer("model.q_max"));
    p.T = number("model.T");
    p.c = number("model.c");
    return p;
  }

  TickConfig ticks() const {
    const double a0 = number("ticks.alpha_0");
    const double e0 = number("ticks.eta_0");
    require(a0 > 0, "ticks.alpha_0 must be > 0");
    require(e0 >= 0 && e0 <= 0.5, "ticks.eta_0 must lie in [0, 1/2]");
    require(number("ticks.alpha_a") > 0, "ticks.alpha_a must be > 0");
    require(number("ticks.alpha_b") > 0, "ticks.alpha_b must be > 0");
    const TickConfig cfg = make_tick_config(number("ticks.alpha_a"), number("ticks.alpha_b"), e0, a0);
    require(cfg.eta_a <= 0.5, "ticks.alpha_a is below the large-tick bound (eta_a > 1/2)");
    require(cfg.eta_b <= 0.5, "ticks.alpha_b is below the large-tick bound (eta_b > 1/2)");
    return cfg;
  }

  GridSpec grid() const {
    GridSpec g;
    g.s_ref = number("point.S");
    g.ds = number("grid.ds");
    g.margin = number("grid.margin");
    const std::string scheme = text("grid.scheme");
    if (scheme == "imex") g.scheme = TimeScheme::imex;
    else if (scheme == "explicit") g.scheme = TimeScheme::explicit_euler;
    else throw ConfigError("grid.scheme must be imex or explicit (got '" + scheme + "')");
    g.dt = number("grid.dt");
    g.cfl = number("grid.cfl");
    require(g.ds > 0, "grid.ds must be > 0");
    require(g.margin >= 3, "grid.margin must be >= 3");
    require(g.dt > 0, "grid.dt must be > 0");
    require(g.cfl > 0 && g.cfl <= 0.5, "grid.cfl must lie in (0, 0.5]");
    return g;
  }

  int q0() const { return static_cast<int>(integer("point.q")); }
  double S0() const { return number("point.S"); }

  SimConfig sim() const {
    SimConfig s;
    s.dt_sim = number("sim.dt_sim");
    const auto n = integer("sim.n_paths");
    require(n >= 1, "sim.n_paths must be >= 1");
    s.n_paths = static_cast<std::size_t>(n);
    s.seed = seed();
    s.S0 = S0();
    s.Q0 = q0();
    s.threads = threads();
    require(s.dt_sim > 0, "sim.dt_sim must be > 0");
    return s;
  }

  ScanSpec scan() const {
    ScanSpec s;
    s.mode = parse_scan_mode(text("scan.mode"));
    s.alpha_min = number("scan.alpha_min");
    s.alpha_max = number("scan.alpha_max");
    s.alpha_step = number("scan.alpha_step");
    s.fixed_alpha = number("scan.fixed_alpha");
    s.on_grid = flag("scan.on_grid");
    s.phi_minus = numbers("scan.phi_minus");
    s.method = parse_method(text("scan.method"));
    s.options.eta_0 = number("ticks.eta_0");
    s.options.alpha_0 = number("ticks.alpha_0");
    s.options.grid = grid();
    s.options.S = S0();
    s.options.q = q0();
    s.options.cell_average = flag("scan.cell_average");
    s.options.sim = sim();
    s.seed = seed();
    s.threads = threads();
    require(s.alpha_min > 0, "scan.alpha_min must be > 0");
    require(s.alpha_max >= s.alpha_min, "scan.alpha_max must be >= scan.alpha_min");
    require(s.on_grid || s.alpha_step > 0, "scan.alpha_step must be > 0");
    for (double f : s.phi_minus) require(f >= 0, "scan.phi_minus entries must be >= 0");
    return s;
  }

  /// Checks every typed accessor once so that errors surface before any work.
  void validate() const {
    bool known = false;
    for (const auto& p : preset_names()) known = known || p == preset();
    if (!known) throw ConfigError("run.preset: unknown preset '" + preset() + "'");
    require(integer("run.threads") >= 1, "run.threads must be >= 1");
    require(integer("run.seed") >= 0, "run.seed must be >= 0");
    require(!out().empty(), "run.out must not be empty");
    const ModelParams p = model();
    p.validate();
    require(std::abs(q0()) <= p.q_max, "point.q must lie in [-model.q_max, model.q_max]");
    ticks();
    grid();
    sim();
    scan();
    flag("solve.all_times");
  }

  /// INI text of every key, grouped by section in the canonical order.
  std::string dump() const {
    std::ostringstream os;
    std::string section;
    for (const auto& [key, def] : default_keys()) {
      const auto dot = key.find('.');
      const std::string sec = key.substr(0, dot);
      if (sec != section) {
        if (!section.empty()) os << '\n';
        os << '[' << sec << "]\n";
        section = sec;
      }
      os << key.substr(dot + 1) << " = " << values_.at(key) << '\n';
    }
    return os.str();
  }

private:
  std::map<std::string, std::string> values_;
};

} // namespace tickopt
