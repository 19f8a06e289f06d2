#pragma once

// The exchange's problem: expected fee revenue v(alpha_a, alpha_b) under the
// market maker's optimal response, and its maximization over a tick grid.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "tickopt/error.hpp"
#include "tickopt/grid.hpp"
#include "tickopt/hjb.hpp"
#include "tickopt/model.hpp"
#include "tickopt/sim.hpp"
#include "tickopt/zones.hpp"

namespace tickopt {

enum class Method : std::uint8_t { mc, pde, both };

inline const char* method_name(Method m) { return m == Method::mc ? "mc" : m == Method::pde ? "pde" : "both"; }

inline Method parse_method(const std::string& s) {
  if (s == "mc") return Method::mc;
  if (s == "pde") return Method::pde;
  if (s == "both") return Method::both;
  throw ConfigError("scan.method must be one of mc, pde, both (got '" + s + "')");
}

/// Smallest tick that keeps eta_for_tick(eta_0, alpha_0, alpha) <= 1/2.
inline double large_tick_bounds(double eta_0, double alpha_0) {
  if (eta_0 < 0 || eta_0 > 0.5) throw DomainError("large_tick_bounds: eta_0 must lie in [0, 1/2]");
  if (!(alpha_0 > 0)) throw DomainError("large_tick_bounds: alpha_0 must be positive");
  return alpha_0 * (eta_0 / 0.5) * (eta_0 / 0.5);
}

/// Value function and expected fill counts from one backward pass.
struct FeeFlowSolution {
  StateGrid grid;
  std::vector<double> h0;     // value at t = 0
  std::vector<double> fills_a;  // expected N_a at t = 0
  std::vector<double> fills_b;
  PolicyGrid policy;          // filled when requested
};

/// Solves the value function and, alongside it, the linear fill-count equations
///   w_t + 1/2 sigma^2 w_SS + lambda_a ell_a (1 + w(q-1) - w(q)) + lambda_b ell_b (w(q+1) - w(q)) = 0,
/// w(T) = 0, one per side, with presence weights taken from the value at t_{m+1}.
/// Fee revenue is c times the summed counts.
inline FeeFlowSolution solve_fee_flow(const TickConfig& cfg, const ModelParams& params, const GridSpec& spec,
                                      bool cell_average = true, bool keep_policy = false) {
  FeeFlowSolution out;
  out.grid = build_grid(cfg, params, spec);
  const StateGrid& g = out.grid;
  BackwardStepper stepper(g, cfg, params);
  const std::size_t S = g.slice_size();
  const std::size_t M = g.steps;
  if (keep_policy) {
    out.policy.steps = M;
    out.policy.slice_size = S;
    out.policy.bits.resize((M + 1) * S);
  }
  std::vector<double> h = terminal_slice(g, params.A), h_next(S);
  std::vector<double> wa(S, 0.0), wb(S, 0.0), wa_next(S), wb_next(S);
  BackwardStepper::Presence pres;
  for (std::size_t m = M; m-- > 0;) {
    if (keep_policy) stepper.controls(h, std::span<std::uint8_t>(out.policy.bits.data() + (m + 1) * S, S));
    stepper.presence(h, pres, cell_average);
    const std::vector<BackwardStepper::LinearTerm> terms{{wa, wa_next, 1.0, 0.0}, {wb, wb_next, 0.0, 1.0}};
    stepper.step_linear_batch(terms, pres);
    std::swap(wa, wa_next);
    std::swap(wb, wb_next);
    stepper.step(h, h_next);
    std::swap(h, h_next);
  }
  if (keep_policy) stepper.controls(h, std::span<std::uint8_t>(out.policy.bits.data(), S));
  out.h0 = std::move(h);
  out.fills_a = std::move(wa);
  out.fills_b = std::move(wb);
  return out;
}

struct PlatformOptions {
  double eta_0 = 0.3;
  double alpha_0 = 0.01;
  GridSpec grid;
  double S = 10.5;                 // working point
  int q = 0;
  bool cell_average = true;        // presence weights of the pde method
  SimConfig sim;                   // mc settings (S0 and Q0 are taken from the working point)
};

struct PlatformValue {
  double alpha_a = 0;
  double alpha_b = 0;
  double v = 0;        // reported estimate (pde for method pde, mc otherwise)
  double v_se = 0;     // 0 for method pde
  double v_pde = std::numeric_limits<double>::quiet_NaN();
  double v_mc = std::numeric_limits<double>::quiet_NaN();
  double v_mc_se = std::numeric_limits<double>::quiet_NaN();
  double h = 0;        // market maker's value at the working point
  double Na = 0;       // expected fills (pde, or mc means)
  double Nb = 0;
  bool agree = true;   // method both: |mc - pde| <= 3 SE
  std::size_t nodes = 0;
  std::size_t steps = 0;
};

inline PlatformValue platform_value(double alpha_a, double alpha_b, const ModelParams& params, Method method,
                                    const PlatformOptions& opt) {
  const TickConfig cfg = make_tick_config(alpha_a, alpha_b, opt.eta_0, opt.alpha_0);
  if (!cfg.large_tick()) throw ConfigError("platform_value: ticks violate the large-tick constraint (eta > 1/2)");
  const bool need_mc = method != Method::pde;
  GridSpec spec = opt.grid;
  spec.s_ref = opt.S;
  const FeeFlowSolution sol = solve_fee_flow(cfg, params, spec, opt.cell_average, need_mc);
  const StateGrid& g = sol.grid;
  const WorkingPoint wp = nearest_working_point(cfg, opt.S, opt.q);

  PlatformValue r;
  r.alpha_a = alpha_a;
  r.alpha_b = alpha_b;
  r.nodes = g.node_count();
  r.steps = g.steps;
  r.h = value_at(g, sol.h0, wp);
  r.Na = value_at(g, sol.fills_a, wp);
  r.Nb = value_at(g, sol.fills_b, wp);
  r.v_pde = params.c * (r.Na + r.Nb);
  r.v = r.v_pde;
  if (need_mc) {
    SimConfig sc = opt.sim;
    sc.S0 = opt.S;
    sc.Q0 = opt.q;
    sc.nearest_fair = true;
    require(sc.dt_sim <= g.dt * (1 + 1e-12), "sim.dt_sim must not exceed the policy time step");
    const GridPolicy policy(g, sol.policy);
    const SimResult mc = run_paths(policy, cfg, params, sc);
    r.v_mc = mc.revenue_rate.mean;
    r.v_mc_se = mc.revenue_rate.se;
    r.v = r.v_mc;
    r.v_se = r.v_mc_se;
    r.Na = mc.N_a.mean;
    r.Nb = mc.N_b.mean;
    if (method == Method::both) r.agree = std::abs(r.v_mc - r.v_pde) <= 3 * r.v_mc_se;
  }
  return r;
}

enum class ScanMode : std::uint8_t { symmetric, fixed_ask, fixed_bid, grid2d };

inline ScanMode parse_scan_mode(const std::string& s) {
  if (s == "symmetric") return ScanMode::symmetric;
  if (s == "fixed_ask") return ScanMode::fixed_ask;
  if (s == "fixed_bid") return ScanMode::fixed_bid;
  if (s == "grid2d") return ScanMode::grid2d;
  throw ConfigError("scan.mode must be one of symmetric, fixed_ask, fixed_bid, grid2d (got '" + s + "')");
}

inline const char* scan_mode_name(ScanMode m) {
  switch (m) {
    case ScanMode::symmetric: return "symmetric";
    case ScanMode::fixed_ask: return "fixed_ask";
    case ScanMode::fixed_bid: return "fixed_bid";
    default: return "grid2d";
  }
}

struct ScanSpec {
  ScanMode mode = ScanMode::symmetric;
  double alpha_min = 0.0045;
  double alpha_max = 0.05;
  double alpha_step = 0.0005;
  double fixed_alpha = 0.0045;       // the fixed side of fixed_ask / fixed_bid
  bool on_grid = false;              // symmetric: alpha = 0.5 / n, n integer, instead of the step grid
  std::vector<double> phi_minus{0.0};
  Method method = Method::pde;
  PlatformOptions options;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  /// Candidate tick values of the scanned axis.
  std::vector<double> axis() const {
    require(alpha_min > 0 && alpha_max >= alpha_min, "scan: need 0 < alpha_min <= alpha_max");
    std::vector<double> xs;
    if (on_grid) {
      const auto n_hi = static_cast<std::int64_t>(std::floor(0.5 / alpha_min + 1e-9));
      const auto n_lo = static_cast<std::int64_t>(std::ceil(0.5 / alpha_max - 1e-9));
      for (std::int64_t n = n_hi; n >= n_lo; --n) xs.push_back(0.5 / static_cast<double>(n));
    } else {
      require(alpha_step > 0, "scan.alpha_step must be > 0");
      const auto K = static_cast<std::int64_t>(std::floor((alpha_max - alpha_min) / alpha_step + 1e-9));
      for (std::int64_t k = 0; k <= K; ++k) {
        // Round to 1e-12 so that printed ticks are the intended decimals.
        const double a = alpha_min + static_cast<double>(k) * alpha_step;
        xs.push_back(std::round(a * 1e12) / 1e12);
      }
    }
    return xs;
  }

  std::vector<std::pair<double, double>> points() const {
    const auto xs = axis();
    std::vector<std::pair<double, double>> pts;
    switch (mode) {
      case ScanMode::symmetric:
        for (double a : xs) pts.emplace_back(a, a);
        break;
      case ScanMode::fixed_ask:
        for (double b : xs) pts.emplace_back(fixed_alpha, b);
        break;
      case ScanMode::fixed_bid:
        for (double a : xs) pts.emplace_back(a, fixed_alpha);
        break;
      case ScanMode::grid2d:
        for (double a : xs)
          for (double b : xs) pts.emplace_back(a, b);
        break;
    }
    return pts;
  }
};

struct ScanRow {
  double alpha_a = 0;
  double alpha_b = 0;
  double phi_minus = 0;
  PlatformValue value;
};

struct ScanResult {
  std::vector<ScanRow> rows;                              // retained points, in scan order
  std::vector<std::pair<double, double>> rejected;        // large-tick violations
  std::size_t disagreements = 0;                          // method both
  /// Row index maximizing v (resp. h) among rows with the given phi_minus.
  std::optional<std::size_t> argmax_v(double phi_minus) const { return argmax(phi_minus, false); }
  std::optional<std::size_t> argmax_h(double phi_minus) const { return argmax(phi_minus, true); }

private:
  std::optional<std::size_t> argmax(double phi_minus, bool use_h) const {
    std::optional<std::size_t> best;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k].phi_minus != phi_minus) continue;
      const double x = use_h ? rows[k].value.h : rows[k].value.v;
      if (!best || x > (use_h ? rows[*best].value.h : rows[*best].value.v)) best = k;
    }
    return best;
  }
};

/// Seed of one scan point, derived from the run seed and the point's indices.
inline std::uint64_t point_seed(std::uint64_t seed, std::uint64_t i, std::uint64_t j) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

using ScanProgress = std::function<void(const ScanRow&)>;

inline ScanResult grid_search(const ScanSpec& spec, const ModelParams& params, const ScanProgress& progress = {}) {
  params.validate();
  require(!spec.phi_minus.empty(), "scan.phi_minus must list at least one value");
  require(spec.threads >= 1, "threads must be >= 1");
  const auto pts = spec.points();
  const double floor_alpha = large_tick_bounds(spec.options.eta_0, spec.options.alpha_0);

  struct Job {
    double a, b, phi;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  ScanResult out;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const auto [a, b] = pts[k];
    const TickConfig cfg = make_tick_config(a, b, spec.options.eta_0, spec.options.alpha_0);
    if (!cfg.large_tick() || a < floor_alpha * (1 - 1e-12) || b < floor_alpha * (1 - 1e-12)) {
      out.rejected.emplace_back(a, b);
      continue;
    }
    for (std::size_t f = 0; f < spec.phi_minus.size(); ++f) jobs.push_back({a, b, spec.phi_minus[f], point_seed(spec.seed, k, f)});
  }
  if (jobs.empty()) throw ConfigError("scan: every grid point violates the large-tick constraint");

  out.rows.resize(jobs.size());
  std::mutex report;
  auto run = [&](std::size_t k) {
    ModelParams p = params;
    p.phi_minus = jobs[k].phi;
    PlatformOptions opt = spec.options;
    opt.sim.seed = jobs[k].seed;
    opt.sim.threads = 1;
    ScanRow row{jobs[k].a, jobs[k].b, jobs[k].phi, platform_value(jobs[k].a, jobs[k].b, p, spec.method, opt)};
    out.rows[k] = row;
    if (progress) {
      const std::lock_guard<std::mutex> lock(report);
      progress(row);
    }
  };
  const unsigned nt = std::min<unsigned>(spec.threads, static_cast<unsigned>(jobs.size()));
  if (nt <= 1) {
    for (std::size_t k = 0; k < jobs.size(); ++k) run(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < nt; ++w)
      pool.emplace_back([&] {
        try {
          for (std::size_t k = next++; k < jobs.size(); k = next++) run(k);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(report);
          if (!failure) failure = std::current_exception();
          next = jobs.size();
        }
      });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  for (const auto& r : out.rows)
    if (!r.value.agree) ++out.disagreements;
  return out;
}

inline void write_scan_csv(std::ostream& os, const ScanResult& r) {
  os << "alpha_a,alpha_b,phi_minus,v,v_se,h_mm,Na_mean,Nb_mean\n";
  os.precision(12);
  for (const auto& row : r.rows)
    os << row.alpha_a << ',' << row.alpha_b << ',' << row.phi_minus << ',' << row.value.v << ',' << row.value.v_se
       << ',' << row.value.h << ',' << row.value.Na << ',' << row.value.Nb << '\n';
}

} // namespace tickopt
