#pragma once

// Command-line front end. Each subcommand writes into its output directory
// together with config.ini (fully expanded) and VERSION.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tickopt/config.hpp"
#include "tickopt/error.hpp"
#include "tickopt/exchange.hpp"
#include "tickopt/grid.hpp"
#include "tickopt/hjb.hpp"
#include "tickopt/oracle.hpp"
#include "tickopt/sim.hpp"
#include "tickopt/zones.hpp"

namespace tickopt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;

inline fs::path prepare_output(const ExperimentConfig& cfg) {
  const fs::path dir(cfg.out());
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("run.out: cannot create '" + dir.string() + "': " + ec.message());
  std::ofstream(dir / "config.ini") << cfg.dump();
  std::ofstream(dir / "VERSION") << kVersion << '\n';
  return dir;
}

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw ConfigError("run.out: cannot write '" + p.string() + "'");
  return os;
}

inline void write_json(const fs::path& p, const json& j) { open_out(p) << j.dump(2) << '\n'; }

inline json estimate_json(const Estimate& e) { return {{"mean", e.mean}, {"se", e.se}, {"n", e.n}}; }

inline json grid_json(const StateGrid& g) {
  return {{"nodes", g.node_count()}, {"steps", g.steps}, {"dt", g.dt}, {"scheme", scheme_name(g.scheme)},
          {"s_min", g.nodes.front()}, {"s_max", g.nodes.back()}};
}

// ---- solve -----------------------------------------------------------------

inline int run_solve(const ExperimentConfig& cfg) {
  const TickConfig ticks = cfg.ticks();
  const ModelParams params = cfg.model();
  const StateGrid g = build_grid(ticks, params, cfg.grid());
  SolveOptions opts;
  opts.keep_all_values = cfg.flag("solve.all_times");
  opts.keep_policy = false;
  const Solution sol = solve(ticks, params, g, opts);
  const fs::path dir = prepare_output(cfg);

  auto os = open_out(dir / "value.csv");
  if (opts.keep_all_values) {
    write_value_csv(os, g, sol.values, sol.values.times);
  } else {
    const std::vector<std::size_t> ends{0, g.steps};
    write_value_csv(os, g, sol.values, ends);
  }
  const WorkingPoint wp = nearest_working_point(ticks, cfg.S0(), cfg.q0());
  write_json(dir / "summary.json",
             {{"version", kVersion},
              {"alpha_a", ticks.alpha_a}, {"alpha_b", ticks.alpha_b}, {"eta_a", ticks.eta_a}, {"eta_b", ticks.eta_b},
              {"grid", grid_json(g)},
              {"working_point", {{"S", wp.S}, {"ask_price", static_cast<double>(wp.ask_index) * ticks.alpha_a},
                                 {"bid_price", static_cast<double>(wp.bid_index) * ticks.alpha_b}, {"q", wp.q}}},
              {"h", value_at(g, sol.values.initial(), wp)}});
  return kExitOk;
}

// ---- simulate --------------------------------------------------------------

inline int run_simulate(const ExperimentConfig& cfg) {
  const TickConfig ticks = cfg.ticks();
  const ModelParams params = cfg.model();
  const StateGrid g = build_grid(ticks, params, cfg.grid());
  const Solution sol = solve(ticks, params, g);
  SimConfig sc = cfg.sim();
  sc.log_changes = true;
  require(sc.dt_sim <= g.dt * (1 + 1e-12), "sim.dt_sim must not exceed the solver time step grid.dt");
  const GridPolicy policy(g, sol.policy);
  const SimResult r = run_paths(policy, ticks, params, sc);
  const fs::path dir = prepare_output(cfg);

  {
    auto os = open_out(dir / "paths.csv");
    write_paths_csv(os, r);
  }
  {
    auto os = open_out(dir / "price_changes.csv");
    write_change_log_csv(os, r, ticks, sc);
  }
  const WorkingPoint wp = nearest_working_point(ticks, sc.S0, sc.Q0);
  const double h = value_at(g, sol.values.initial(), wp);
  const double z = r.mm_objective.se > 0 ? (r.mm_objective.mean - h) / r.mm_objective.se : 0.0;
  write_json(dir / "summary.json",
             {{"version", kVersion},
              {"grid", grid_json(g)},
              {"n_paths", sc.n_paths}, {"dt_sim", sc.dt_sim}, {"steps_per_path", r.steps_per_path},
              {"flagged_paths", r.flagged_paths},
              {"mm_objective", estimate_json(r.mm_objective)},
              {"h_pde", h},
              {"z_score", z},
              {"exchange_revenue_counting", estimate_json(r.revenue_count)},
              {"exchange_revenue_rate", estimate_json(r.revenue_rate)},
              {"N_a", estimate_json(r.N_a)}, {"N_b", estimate_json(r.N_b)},
              {"mean_Q", estimate_json(r.mean_Q)}, {"mean_Q2", estimate_json(r.mean_Q2)}});
  return kExitOk;
}

// ---- scan and figures ------------------------------------------------------

inline json argmax_json(const ScanResult& r, const std::vector<double>& phis) {
  json out = json::array();
  for (double phi : phis) {
    const auto iv = r.argmax_v(phi);
    const auto ih = r.argmax_h(phi);
    if (!iv || !ih) continue;
    out.push_back({{"phi_minus", phi},
                   {"argmax_v", {{"alpha_a", r.rows[*iv].alpha_a}, {"alpha_b", r.rows[*iv].alpha_b}, {"v", r.rows[*iv].value.v}}},
                   {"argmax_h", {{"alpha_a", r.rows[*ih].alpha_a}, {"alpha_b", r.rows[*ih].alpha_b}, {"h", r.rows[*ih].value.h}}}});
  }
  return out;
}

inline ScanResult run_grid_search(const ExperimentConfig& cfg, const ScanSpec& spec) {
  std::size_t done = 0;
  const std::size_t total = spec.points().size() * spec.phi_minus.size();
  return grid_search(spec, cfg.model(), [&](const ScanRow& row) {
    ++done;
    std::fprintf(stderr, "[%zu/%zu] alpha_a=%.6g alpha_b=%.6g phi_minus=%g v=%.6f h=%.6f\n", done, total, row.alpha_a,
                 row.alpha_b, row.phi_minus, row.value.v, row.value.h);
  });
}

inline void write_scan_outputs(const fs::path& dir, const ScanSpec& spec, const ScanResult& r) {
  {
    auto os = open_out(dir / "scan.csv");
    write_scan_csv(os, r);
  }
  {
    auto os = open_out(dir / "rejected.csv");
    os << "alpha_a,alpha_b\n";
    os.precision(12);
    for (const auto& [a, b] : r.rejected) os << a << ',' << b << '\n';
  }
  write_json(dir / "summary.json", {{"version", kVersion},
                                    {"mode", scan_mode_name(spec.mode)},
                                    {"method", method_name(spec.method)},
                                    {"points", r.rows.size()},
                                    {"rejected", r.rejected.size()},
                                    {"disagreements", r.disagreements},
                                    {"argmax", argmax_json(r, spec.phi_minus)}});
}

inline int run_scan(const ExperimentConfig& cfg) {
  const ScanSpec spec = cfg.scan();
  const ScanResult r = run_grid_search(cfg, spec);
  write_scan_outputs(prepare_output(cfg), spec, r);
  if (r.disagreements > 0) {
    std::fprintf(stderr, "scan: %zu points where MC and PDE disagree beyond 3 SE\n", r.disagreements);
    return kExitNumerical;
  }
  return kExitOk;
}

/// Per-row differences against the rows with phi_minus = 0 at the same ticks.
inline std::vector<std::pair<double, double>> differences_to_base(const ScanResult& r) {
  std::map<std::pair<double, double>, const PlatformValue*> base;
  for (const auto& row : r.rows)
    if (row.phi_minus == 0) base[{row.alpha_a, row.alpha_b}] = &row.value;
  if (base.empty()) throw ConfigError("scan.phi_minus must include 0 for a difference figure");
  std::vector<std::pair<double, double>> out;
  for (const auto& row : r.rows) {
    const PlatformValue* b = base.at({row.alpha_a, row.alpha_b});
    out.emplace_back(row.value.h - b->h, row.value.v - b->v);
  }
  return out;
}

/// fig1 and fig2 rows share this order; fig2 is fig1 minus the phi_minus = 0 row at the same alpha.
inline void write_symmetric_figure(std::ostream& os, const ScanResult& r, bool difference) {
  os.precision(12);
  os << (difference ? "alpha,phi_minus,dh,dv\n" : "alpha,phi_minus,h,v\n");
  const auto d = difference ? differences_to_base(r) : std::vector<std::pair<double, double>>{};
  for (std::size_t k = 0; k < r.rows.size(); ++k) {
    const auto& row = r.rows[k];
    os << row.alpha_a << ',' << row.phi_minus << ',';
    if (difference) os << d[k].first << ',' << d[k].second << '\n';
    else os << row.value.h << ',' << row.value.v << '\n';
  }
}

inline void write_pair_figure(std::ostream& os, const ScanResult& r, bool difference) {
  os.precision(12);
  os << (difference ? "alpha_a,alpha_b,phi_minus,dh,dv\n" : "alpha_a,alpha_b,phi_minus,h,v,v_se\n");
  const auto d = difference ? differences_to_base(r) : std::vector<std::pair<double, double>>{};
  for (std::size_t k = 0; k < r.rows.size(); ++k) {
    const auto& row = r.rows[k];
    if (difference && row.phi_minus == 0) continue;
    os << row.alpha_a << ',' << row.alpha_b << ',' << row.phi_minus << ',';
    if (difference) os << d[k].first << ',' << d[k].second << '\n';
    else os << row.value.h << ',' << row.value.v << ',' << row.value.v_se << '\n';
  }
}

/// Exchange losses relative to the phi_minus = 0 optimum, for fixed-ask scans.
inline json compensation_json(const ScanResult& r, const std::vector<double>& phis) {
  const auto base = r.argmax_v(0.0);
  if (!base) return nullptr;
  const double v0 = r.rows[*base].value.v;
  const double keep_b = r.rows[*base].alpha_b;
  json out = json::array();
  for (double phi : phis) {
    if (phi == 0) continue;
    const auto best = r.argmax_v(phi);
    std::optional<double> kept;
    for (const auto& row : r.rows)
      if (row.phi_minus == phi && row.alpha_b == keep_b) kept = row.value.v;
    if (!best || !kept) continue;
    out.push_back({{"phi_minus", phi},
                   {"alpha_b_reoptimized", r.rows[*best].alpha_b},
                   {"loss_reoptimized", 1 - r.rows[*best].value.v / v0},
                   {"alpha_b_kept", keep_b},
                   {"loss_kept", 1 - *kept / v0}});
  }
  return out;
}

struct AppendixRow {
  double S = 0;
  std::int64_t ask_lo = 0;
  std::int64_t bid_lo = 0;
  int ask_valid = 0;
  int bid_valid = 0;
  bool ask_edge = false;
  bool bid_edge = false;
  std::array<std::optional<double>, 4> values;  // (ask slot, bid slot) = (0,0) (0,1) (1,0) (1,1)
};

/// Value at t = 0 and q = 0 for every branch case the node carries.
inline std::vector<AppendixRow> appendix_rows(const StateGrid& g, std::span<const double> slice) {
  std::vector<AppendixRow> rows;
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    AppendixRow r;
    r.S = g.nodes[n];
    r.ask_lo = g.ask.lo[n];
    r.bid_lo = g.bid.lo[n];
    r.ask_valid = int(g.ask.valid(n, 0)) + int(g.ask.valid(n, 1));
    r.bid_valid = int(g.bid.valid(n, 0)) + int(g.bid.valid(n, 1));
    r.ask_edge = g.ask.edge(n);
    r.bid_edge = g.bid.edge(n);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        if (g.pde_cell(n, a, b)) r.values[a * 2 + b] = slice[g.index(n, a, b, 0)];
    rows.push_back(r);
  }
  return rows;
}

inline void write_appendix_csv(std::ostream& os, const std::vector<AppendixRow>& rows, const TickConfig& ticks) {
  os.precision(15);
  os << "S,ask_lo,ask_hi,bid_lo,bid_hi,ask_boundary,bid_boundary,curves,v_lo_lo,v_lo_hi,v_hi_lo,v_hi_hi\n";
  for (const auto& r : rows) {
    os << r.S << ',' << static_cast<double>(r.ask_lo) * ticks.alpha_a << ','
       << static_cast<double>(r.ask_lo + 1) * ticks.alpha_a << ',' << static_cast<double>(r.bid_lo) * ticks.alpha_b
       << ',' << static_cast<double>(r.bid_lo + 1) * ticks.alpha_b << ',' << int(r.ask_edge) << ',' << int(r.bid_edge)
       << ',' << r.ask_valid * r.bid_valid;
    for (const auto& v : r.values) {
      os << ',';
      if (v) os << *v;
    }
    os << '\n';
  }
}

inline int run_appendix(const ExperimentConfig& cfg) {
  const TickConfig ticks = cfg.ticks();
  const ModelParams params = cfg.model();
  const StateGrid g = build_grid(ticks, params, cfg.grid());
  SolveOptions opts;
  opts.keep_policy = false;
  const Solution sol = solve(ticks, params, g, opts);
  const fs::path dir = prepare_output(cfg);
  auto os = open_out(dir / "appendix.csv");
  write_appendix_csv(os, appendix_rows(g, sol.values.initial()), ticks);
  write_json(dir / "summary.json", {{"version", kVersion}, {"alpha_a", ticks.alpha_a}, {"alpha_b", ticks.alpha_b},
                                    {"q", 0}, {"t", 0.0}, {"grid", grid_json(g)}});
  return kExitOk;
}

inline int run_figure(const ExperimentConfig& cfg) {
  const std::string preset = cfg.preset();
  if (preset == "appendix") return run_appendix(cfg);
  if (preset == "custom") throw ConfigError("figure: preset must be one of fig1..fig7 or appendix");
  const ScanSpec spec = cfg.scan();
  const ScanResult r = run_grid_search(cfg, spec);
  const fs::path dir = prepare_output(cfg);
  write_scan_outputs(dir, spec, r);
  auto os = open_out(dir / (preset + ".csv"));
  if (preset == "fig1") write_symmetric_figure(os, r, false);
  else if (preset == "fig2") write_symmetric_figure(os, r, true);
  else if (preset == "fig6") write_pair_figure(os, r, true);
  else write_pair_figure(os, r, false);
  if (preset == "fig7") write_json(dir / "compensation.json", compensation_json(r, spec.phi_minus));
  return r.disagreements > 0 ? kExitNumerical : kExitOk;
}

// ---- estimate-eta ----------------------------------------------------------

inline int run_estimate_eta(const ExperimentConfig& cfg) {
  const std::string input = cfg.text("estimate.input");
  require(!input.empty(), "estimate.input must name a transaction CSV");
  std::ifstream in(input);
  if (!in) throw ConfigError("estimate.input: cannot open '" + input + "'");
  const auto rows = read_transactions(in);
  const TickConfig ticks = cfg.ticks();
  const fs::path dir = prepare_output(cfg);
  auto os = open_out(dir / "eta.csv");
  os.precision(12);
  os << "side,alpha,eta_hat,n_alt,n_cont\n";
  for (Side side : {Side::ask, Side::bid}) {
    const PriceChangeSeries series = extract_price_changes(rows, side, ticks.alpha(side));
    const auto counts = count_alternations_continuations(series);
    const AltContCounts c = counts.value_or(AltContCounts{});
    const auto eta = estimate_eta(c.n_cont, c.n_alt);
    os << side_name(side) << ',' << ticks.alpha(side) << ',';
    if (eta) os << *eta;
    os << ',' << c.n_alt << ',' << c.n_cont << '\n';
    std::printf("%s alpha=%g eta_hat=%s n_alt=%lld n_cont=%lld skipped=%zu\n", side_name(side), ticks.alpha(side),
                eta ? std::to_string(*eta).c_str() : "n/a", static_cast<long long>(c.n_alt),
                static_cast<long long>(c.n_cont), series.skipped_rows.size());
  }
  return kExitOk;
}

// ---- oracle-check ----------------------------------------------------------

inline constexpr double kOracleTolerance = 1e-8;

inline int run_oracle_check(const ExperimentConfig& cfg) {
  const CertificationCase c = certification_case();
  const StateGrid g = build_grid(c.cfg, c.params, c.grid);
  SolveOptions opts;
  opts.keep_all_values = true;
  opts.keep_policy = false;
  const Solution sol = solve(c.cfg, c.params, g, opts);
  const OracleTable table = oracle_value(LatticeSpec::from_grid(g), c.cfg, c.params);
  const Discrepancy d = compare(table, g, sol.values);
  const bool pass = d.max_abs <= kOracleTolerance;
  const fs::path dir = prepare_output(cfg);
  write_json(dir / "oracle_report.json",
             {{"version", kVersion},
              {"alpha_a", c.cfg.alpha_a}, {"eta_a", c.cfg.eta_a}, {"alpha_b", c.cfg.alpha_b}, {"eta_b", c.cfg.eta_b},
              {"T", c.params.T}, {"q_max", c.params.q_max}, {"phi_minus", c.params.phi_minus},
              {"grid", grid_json(g)},
              {"compared", d.compared},
              {"max_abs", d.max_abs},
              {"location", {{"t", g.time(d.time)}, {"S", d.S}, {"ask_index", d.ask_index}, {"bid_index", d.bid_index}, {"q", d.q}}},
              {"tolerance", kOracleTolerance},
              {"pass", pass}});
  std::printf("oracle-check: max |solver - oracle| = %.3e at t=%g S=%.6f q=%d over %zu values: %s\n", d.max_abs,
              g.time(d.time), d.S, d.q, d.compared, pass ? "PASS" : "FAIL");
  return pass ? kExitOk : kExitNumerical;
}

// ---- entry point -----------------------------------------------------------

inline int run(int argc, char** argv) {
  CLI::App app{"Tick-size optimization: market-maker HJB solver, Monte Carlo and exchange scans"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> threads;
  app.add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--set", sets, "Override one key, section.key=value (repeatable)");
  app.add_option("--seed", seed, "Random seed (run.seed)");
  app.add_option("--out", out, "Output directory (run.out)");
  app.add_option("--threads", threads, "Worker threads (run.threads)")->check(CLI::PositiveNumber);
  app.fallthrough();

  auto* solve_cmd = app.add_subcommand("solve", "One HJB solve; writes value.csv");
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo under the solved policy");
  auto* scan_cmd = app.add_subcommand("scan", "Tick grid search for the exchange");
  std::string eta_input;
  auto* eta_cmd = app.add_subcommand("estimate-eta", "Estimate eta from a transaction CSV");
  eta_cmd->add_option("input", eta_input, "Transaction CSV (overrides estimate.input)");
  auto* oracle_cmd = app.add_subcommand("oracle-check", "Solver against the brute-force lattice oracle");
  std::string preset;
  auto* fig_cmd = app.add_subcommand("figure", "End-to-end data for one figure preset");
  fig_cmd->add_option("preset", preset, "fig1..fig7 or appendix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (seed) sets.push_back("run.seed=" + std::to_string(*seed));
    if (out) sets.push_back("run.out=" + *out);
    if (threads) sets.push_back("run.threads=" + std::to_string(*threads));
    if (!eta_input.empty()) sets.push_back("estimate.input=" + eta_input);
    const ExperimentConfig cfg = ExperimentConfig::load(config_path, sets, fig_cmd->parsed() ? preset : "");
    if (solve_cmd->parsed()) return run_solve(cfg);
    if (sim_cmd->parsed()) return run_simulate(cfg);
    if (scan_cmd->parsed()) return run_scan(cfg);
    if (eta_cmd->parsed()) return run_estimate_eta(cfg);
    if (oracle_cmd->parsed()) return run_oracle_check(cfg);
    if (fig_cmd->parsed()) return run_figure(cfg);
  } catch (const NumericalAssertion& e) {
    std::fprintf(stderr, "numerical assertion failed: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  return kExitValidation;
}

} // namespace tickopt::cli
