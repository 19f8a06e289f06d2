#pragma once

// Brute-force dynamic program on a small explicit lattice. It shares only the
// price nodes and the time step with the solver; branch handling, transition
// probabilities and the control maximization are written out independently.
//
// Per step and state (node n, fair indices i, j, inventory q) the chain moves
// one node up or down with the trinomial probabilities
//   p_up = dt sigma^2 / (h+ (h- + h+)),  p_dn = dt sigma^2 / (h- (h- + h+)),
// which match mean 0 and variance sigma^2 dt, and fills each side with
// probability lambda_i dt when present. Fair prices that are no longer
// admissible at the new node are replaced by the admissible one.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "tickopt/error.hpp"
#include "tickopt/grid.hpp"
#include "tickopt/hjb.hpp"
#include "tickopt/model.hpp"
#include "tickopt/zones.hpp"

namespace tickopt {

struct LatticeSpec {
  std::vector<double> nodes;
  double dt = 0;
  std::size_t steps = 0;
  int q_max = 2;

  static constexpr std::size_t kMaxNodes = 200;
  static constexpr std::size_t kMaxSteps = 400;
  static constexpr int kMaxInventory = 2;

  static LatticeSpec from_grid(const StateGrid& g) { return {g.nodes, g.dt, g.steps, g.q_max}; }

  void validate(double sigma) const {
    require(nodes.size() >= 3 && nodes.size() <= kMaxNodes, "lattice: need 3 to 200 price nodes");
    require(steps >= 1 && steps <= kMaxSteps, "lattice: need 1 to 400 time steps");
    require(q_max >= 1 && q_max <= kMaxInventory, "lattice: q_max must lie in [1, 2]");
    for (std::size_t n = 1; n + 1 < nodes.size(); ++n) {
      const double hm = nodes[n] - nodes[n - 1];
      const double hp = nodes[n + 1] - nodes[n];
      const double up = dt * sigma * sigma / (hp * (hm + hp));
      const double dn = dt * sigma * sigma / (hm * (hm + hp));
      if (!(up >= 0 && dn >= 0 && up + dn <= 1)) throw ConfigError("lattice: trinomial probability out of [0, 1]");
      const double mean = up * hp - dn * hm;
      const double var = up * hp * hp + dn * hm * hm;
      if (std::abs(mean) > 1e-12 || std::abs(var - sigma * sigma * dt) > 1e-12 * std::max(1.0, sigma * sigma * dt))
        throw ConfigError("lattice: trinomial moments do not match");
    }
  }
};

/// Value table of the lattice DP: per time index, per (node, ask index, bid index), values over q.
class OracleTable {
public:
  using Key = std::tuple<std::size_t, std::int64_t, std::int64_t>;
  using Slice = std::map<Key, std::vector<double>>;

  OracleTable(LatticeSpec spec, TickConfig cfg) : spec_(std::move(spec)), cfg_(cfg) {}

  const LatticeSpec& spec() const { return spec_; }
  std::size_t time_count() const { return slices_.size(); }
  Slice& slice(std::size_t m) { return slices_[m]; }
  const Slice& slice(std::size_t m) const { return slices_[m]; }
  void resize(std::size_t n) { slices_.resize(n); }

  /// Admissible fair index at node n for a state that held index i (post-jump rule).
  std::int64_t admissible(Side side, std::size_t n, std::int64_t i) const {
    const BranchSet set = valid_branches(spec_.nodes[n], cfg_.alpha(side), cfg_.eta(side));
    if (set.contains(i)) return i;
    if (set.count == 1) return set.index[0];
    return std::abs(set.index[0] - i) <= std::abs(set.index[1] - i) ? set.index[0] : set.index[1];
  }

  double value(std::size_t m, std::size_t n, std::int64_t i, std::int64_t j, int q) const {
    const auto it = slices_[m].find({n, admissible(Side::ask, n, i), admissible(Side::bid, n, j)});
    if (it == slices_[m].end()) throw DomainError("oracle: state not in table");
    return it->second[static_cast<std::size_t>(q + spec_.q_max)];
  }

private:
  LatticeSpec spec_;
  TickConfig cfg_;
  std::vector<Slice> slices_;
};

inline OracleTable oracle_value(const LatticeSpec& spec, const TickConfig& cfg, const ModelParams& params) {
  cfg.validate();
  params.validate();
  spec.validate(params.sigma);
  require(params.q_max == spec.q_max, "oracle: params.q_max differs from the lattice");
  const double la = base_intensity(cfg.alpha_a, params) * spec.dt;
  const double lb = base_intensity(cfg.alpha_b, params) * spec.dt;

  OracleTable table(spec, cfg);
  table.resize(spec.steps + 1);
  const std::size_t N = spec.nodes.size();
  const int Q = spec.q_max;

  std::vector<std::vector<OracleTable::Key>> states(N);
  for (std::size_t n = 0; n < N; ++n) {
    const BranchSet as = valid_branches(spec.nodes[n], cfg.alpha_a, cfg.eta_a);
    const BranchSet bs = valid_branches(spec.nodes[n], cfg.alpha_b, cfg.eta_b);
    require(as.count >= 1 && bs.count >= 1, "oracle: node without an admissible fair price");
    for (int x = 0; x < as.count; ++x)
      for (int y = 0; y < bs.count; ++y) states[n].emplace_back(n, as.index[x], bs.index[y]);
  }

  auto& terminal = table.slice(spec.steps);
  for (std::size_t n = 0; n < N; ++n)
    for (const auto& key : states[n]) {
      std::vector<double> v;
      for (int q = -Q; q <= Q; ++q) v.push_back(terminal_value(spec.nodes[n], q, params.A));
      terminal[key] = v;
    }

  for (std::size_t m = spec.steps; m-- > 0;) {
    auto& cur = table.slice(m);
    for (std::size_t n = 0; n < N; ++n) {
      double up = 0, dn = 0;
      if (n > 0 && n + 1 < N) {
        const double hm = spec.nodes[n] - spec.nodes[n - 1];
        const double hp = spec.nodes[n + 1] - spec.nodes[n];
        const double s2dt = params.sigma * params.sigma * spec.dt;
        up = s2dt / (hp * (hm + hp));
        dn = s2dt / (hm * (hm + hp));
      }
      for (const auto& key : states[n]) {
        const std::int64_t i = std::get<1>(key);
        const std::int64_t j = std::get<2>(key);
        const double ask = static_cast<double>(i) * cfg.alpha_a;
        const double bid = static_cast<double>(j) * cfg.alpha_b;
        std::vector<double> out;
        for (int q = -Q; q <= Q; ++q) {
          const double here = table.value(m + 1, n, i, j, q);
          double diffusion = 0;
          if (up > 0) diffusion += up * (table.value(m + 1, n + 1, i, j, q) - here);
          if (dn > 0) diffusion += dn * (table.value(m + 1, n - 1, i, j, q) - here);
          double best = -std::numeric_limits<double>::infinity();
          for (int ea = 0; ea <= 1; ++ea)
            for (int eb = 0; eb <= 1; ++eb) {
              const double pa = (ea == 1 && q > -Q) ? la : 0.0;
              const double pb = (eb == 1 && q < Q) ? lb : 0.0;
              double x = here + diffusion + running_penalty(q, params) * spec.dt;
              if (pa > 0) x += pa * (ask + table.value(m + 1, n, i, j, q - 1) - here);
              if (pb > 0) x += pb * (-bid + table.value(m + 1, n, i, j, q + 1) - here);
              best = std::max(best, x);
            }
          out.push_back(best);
        }
        cur[key] = out;
      }
    }
  }
  return table;
}

/// Oracle controls at (m, n, i, j, q), from the table at m: ties mean absence.
inline Controls oracle_controls(const OracleTable& t, const TickConfig& cfg, std::size_t m, std::size_t n,
                                std::int64_t i, std::int64_t j, int q) {
  const int Q = t.spec().q_max;
  const std::int64_t ia = t.admissible(Side::ask, n, i);
  const std::int64_t jb = t.admissible(Side::bid, n, j);
  const double here = t.value(m, n, ia, jb, q);
  Controls c;
  if (q > -Q) c.ell_a = static_cast<double>(ia) * cfg.alpha_a + t.value(m, n, ia, jb, q - 1) - here > 0 ? 1 : 0;
  if (q < Q) c.ell_b = -static_cast<double>(jb) * cfg.alpha_b + t.value(m, n, ia, jb, q + 1) - here > 0 ? 1 : 0;
  return c;
}

struct Discrepancy {
  double max_abs = 0;
  std::size_t time = 0;
  double S = 0;
  std::int64_t ask_index = 0;
  std::int64_t bid_index = 0;
  int q = 0;
  std::size_t compared = 0;
};

/// Max |oracle - solver| over every stored solver time and admissible cell.
inline Discrepancy compare(const OracleTable& oracle, const StateGrid& g, const ValueGrid& values) {
  const auto& spec = oracle.spec();
  if (spec.nodes.size() != g.node_count() || spec.steps != g.steps || spec.q_max != g.q_max)
    throw ConfigError("compare: oracle lattice and solver grid differ in shape");
  for (std::size_t n = 0; n < g.node_count(); ++n)
    if (spec.nodes[n] != g.nodes[n]) throw ConfigError("compare: oracle lattice and solver grid differ in nodes");
  Discrepancy d;
  const int nq = g.inventory_count();
  for (std::size_t k = 0; k < values.times.size(); ++k) {
    const std::size_t m = values.times[k];
    const auto& slice = values.slices[k];
    for (std::size_t n = 0; n < g.node_count(); ++n)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          if (!g.admissible_cell(n, a, b)) continue;
          const std::int64_t i = g.ask.fair_index(n, a);
          const std::int64_t j = g.bid.fair_index(n, b);
          for (int q = -g.q_max; q <= g.q_max; ++q) {
            const double s = slice[g.cell(n, a, b) * nq + static_cast<std::size_t>(q + g.q_max)];
            const double o = oracle.value(m, n, i, j, q);
            const double e = std::abs(s - o);
            ++d.compared;
            if (e > d.max_abs || d.compared == 1) {
              d.max_abs = e;
              d.time = m;
              d.S = g.nodes[n];
              d.ask_index = i;
              d.bid_index = j;
              d.q = q;
            }
          }
        }
  }
  return d;
}

/// The certification instance: asymmetric ticks whose zone edges fall on a
/// 0.002 mesh, short horizon, q_max = 2, explicit scheme.
struct CertificationCase {
  TickConfig cfg;
  ModelParams params;
  GridSpec grid;
};

inline CertificationCase certification_case() {
  CertificationCase c;
  c.cfg.alpha_a = 0.01;
  c.cfg.eta_a = 0.3;
  c.cfg.alpha_b = 0.02;
  c.cfg.eta_b = 0.2;
  c.params.T = 2.0;
  c.params.q_max = 2;
  c.params.phi_minus = 0.005;
  c.grid.ds = 0.002;
  c.grid.scheme = TimeScheme::explicit_euler;
  return c;
}

} // namespace tickopt
