#pragma once

// Branch-indexed state space of the market maker's value function.
//
// Every price node carries two candidate fair prices per side: slot 0 is
// alpha * floor(S / alpha), slot 1 the next grid price up. A slot is
// `valid` when it lies strictly inside the domain (|S - S^i| < (1/2 + eta) alpha),
// `boundary` on the zone edge (where the continuity condition ties it to the
// post-jump fair price) and `invalid` otherwise. Zone edges of both sides are
// always grid nodes, so the strip of each (ask, bid) fair-price pair ends on nodes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tickopt/error.hpp"
#include "tickopt/model.hpp"
#include "tickopt/zones.hpp"

namespace tickopt {

enum class TimeScheme : std::uint8_t {
  explicit_euler,  // CFL-limited; reference scheme certified by the lattice oracle
  imex,            // implicit diffusion, explicit control terms; no CFL restriction
};

inline const char* scheme_name(TimeScheme s) { return s == TimeScheme::explicit_euler ? "explicit" : "imex"; }

enum class BranchStatus : std::uint8_t { valid, boundary, invalid };

struct SideLayout {
  double alpha = 0;
  double eta = 0;
  std::vector<std::int64_t> lo;                          // fair index of slot 0
  std::vector<std::array<BranchStatus, 2>> status;
  std::vector<std::array<std::uint8_t, 2>> target;       // slot holding the value of each slot

  std::int64_t fair_index(std::size_t n, int slot) const { return lo[n] + slot; }
  double fair_price(std::size_t n, int slot) const { return alpha * static_cast<double>(lo[n] + slot); }
  bool valid(std::size_t n, int slot) const { return status[n][slot] == BranchStatus::valid; }
  bool admissible(std::size_t n, int slot) const { return status[n][slot] != BranchStatus::invalid; }
  bool edge(std::size_t n) const {
    return status[n][0] == BranchStatus::boundary || status[n][1] == BranchStatus::boundary;
  }

  /// Slot of fair index i at node n, clamped to the stored pair. A clamped
  /// read can only happen on a zone edge, where the continuity condition makes
  /// the stored neighbour hold the right value.
  int slot_of(std::size_t n, std::int64_t i) const {
    const std::int64_t s = i - lo[n];
    return s <= 0 ? 0 : 1;
  }
};

struct GridSpec {
  double s_ref = 10.5;    // working price; always a node
  double ds = 0.001;      // base mesh step
  double margin = 5.0;    // domain half-width in units of sigma sqrt(T)
  TimeScheme scheme = TimeScheme::imex;
  double dt = 0.01;       // target step for the imex scheme
  double cfl = 0.5;       // explicit: dt <= cfl * min(h- h+) / sigma^2
};

struct StateGrid {
  std::vector<double> nodes;
  SideLayout ask;
  SideLayout bid;
  int q_max = 0;
  double T = 0;
  double dt = 0;
  std::size_t steps = 0;
  TimeScheme scheme = TimeScheme::imex;
  double s_ref = 0;
  std::size_t ref_node = 0;

  std::size_t node_count() const { return nodes.size(); }
  int inventory_count() const { return 2 * q_max + 1; }
  std::size_t entries_per_node() const { return 4 * static_cast<std::size_t>(inventory_count()); }
  std::size_t slice_size() const { return node_count() * entries_per_node(); }

  const SideLayout& side(Side s) const { return s == Side::ask ? ask : bid; }

  /// Flat index of (node, ask slot, bid slot) without the inventory axis.
  std::size_t cell(std::size_t n, int a, int b) const { return (n * 2 + a) * 2 + b; }
  std::size_t index(std::size_t n, int a, int b, int q) const {
    return cell(n, a, b) * inventory_count() + static_cast<std::size_t>(q + q_max);
  }

  bool pde_cell(std::size_t n, int a, int b) const { return ask.valid(n, a) && bid.valid(n, b); }
  bool admissible_cell(std::size_t n, int a, int b) const { return ask.admissible(n, a) && bid.admissible(n, b); }

  /// Cell whose value a (possibly non-valid) cell carries: boundary slots jump,
  /// invalid slots collapse onto the valid one.
  std::size_t canonical_cell(std::size_t n, int a, int b) const {
    return cell(n, ask.target[n][a], bid.target[n][b]);
  }

  /// Canonical cell of fair indices (i, j) at node n.
  std::size_t resolve(std::size_t n, std::int64_t i, std::int64_t j) const {
    return canonical_cell(n, ask.slot_of(n, i), bid.slot_of(n, j));
  }

  double time(std::size_t m) const { return m == steps ? T : static_cast<double>(m) * dt; }

  /// Index n with nodes[n] <= S < nodes[n + 1] (clamped to the grid).
  std::size_t bracket(double S) const {
    auto it = std::upper_bound(nodes.begin(), nodes.end(), S);
    if (it == nodes.begin()) return 0;
    const auto n = static_cast<std::size_t>(it - nodes.begin()) - 1;
    return std::min(n, nodes.size() - 2);
  }

  /// Node exactly at S (within 1e-12), or npos.
  std::size_t find_node(double S) const {
    const std::size_t n = bracket(S);
    for (std::size_t k : {n, n + 1})
      if (k < nodes.size() && std::abs(nodes[k] - S) <= 1e-12) return k;
    return npos;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

namespace detail {

inline SideLayout classify_side(const std::vector<double>& nodes, double alpha, double eta) {
  SideLayout side;
  side.alpha = alpha;
  side.eta = eta;
  const std::size_t N = nodes.size();
  side.lo.resize(N);
  side.status.resize(N);
  side.target.resize(N);
  const double reach = 0.5 + eta;
  for (std::size_t n = 0; n < N; ++n) {
    const double x = nodes[n] / alpha;
    const auto lo = static_cast<std::int64_t>(std::floor(x + kMembershipTol));
    side.lo[n] = lo;
    for (int s = 0; s < 2; ++s) {
      const double d = std::abs(x - static_cast<double>(lo + s));
      side.status[n][s] = d < reach - kMembershipTol    ? BranchStatus::valid
                          : d <= reach + kMembershipTol ? BranchStatus::boundary
                                                        : BranchStatus::invalid;
    }
    for (int s = 0; s < 2; ++s) {
      if (side.status[n][s] == BranchStatus::valid) {
        side.target[n][s] = static_cast<std::uint8_t>(s);
      } else {
        if (side.status[n][1 - s] != BranchStatus::valid)
          throw ConfigError("grid: no admissible fair price at node " + std::to_string(nodes[n]));
        side.target[n][s] = static_cast<std::uint8_t>(1 - s);
      }
    }
  }
  return side;
}

inline void add_zone_edges(std::vector<std::pair<double, bool>>& pts, double lo, double hi, double alpha,
                           double eta) {
  const auto k0 = static_cast<std::int64_t>(std::floor(lo / alpha)) - 2;
  const auto k1 = static_cast<std::int64_t>(std::ceil(hi / alpha)) + 2;
  for (std::int64_t k = k0; k <= k1; ++k) {
    const ZoneBounds z = zone_bounds(k, alpha, eta);
    for (double e : {z.lower, z.upper})
      if (e >= lo && e <= hi) pts.emplace_back(e, true);
  }
}

} // namespace detail

/// Domain half-width around the working price.
inline double domain_half_width(const TickConfig& cfg, const ModelParams& params, double margin) {
  return margin * params.sigma * std::sqrt(params.T) + 2.0 * std::max(cfg.alpha_a, cfg.alpha_b);
}

/// Uniform mesh anchored at s_ref, merged with every zone edge of both sides
/// in [S_min, S_max]. The time step is the CFL bound (explicit) or spec.dt (imex),
/// shrunk so that it divides T.
inline StateGrid build_grid(const TickConfig& cfg, const ModelParams& params, const GridSpec& spec) {
  cfg.validate();
  params.validate();
  require(spec.ds > 0, "grid.ds must be > 0");
  require(spec.margin >= 3, "grid.margin must be >= 3");
  require(cfg.eta_a > 0 && cfg.eta_b > 0, "grid: zones must have positive width (eta > 0)");

  const double half = domain_half_width(cfg, params, spec.margin);
  const double s_min = spec.s_ref - half;
  const double s_max = spec.s_ref + half;

  std::vector<std::pair<double, bool>> pts;
  const auto K = static_cast<std::int64_t>(std::floor(half / spec.ds + 1e-9));
  require(K >= 1, "grid: domain narrower than one mesh step");
  for (std::int64_t k = -K; k <= K; ++k) pts.emplace_back(spec.s_ref + static_cast<double>(k) * spec.ds, k == 0);
  detail::add_zone_edges(pts, s_min, s_max, cfg.alpha_a, cfg.eta_a);
  detail::add_zone_edges(pts, s_min, s_max, cfg.alpha_b, cfg.eta_b);
  std::sort(pts.begin(), pts.end());

  // Merge duplicates; a zone edge (or s_ref) wins over a plain mesh point.
  std::vector<std::pair<double, bool>> merged;
  for (const auto& p : pts) {
    if (!merged.empty() && std::abs(p.first - merged.back().first) <= 1e-12) {
      if (p.second && !merged.back().second) merged.back() = p;
      continue;
    }
    merged.push_back(p);
  }
  require(merged.size() >= 3, "grid: fewer than three price nodes");

  StateGrid g;
  g.nodes.reserve(merged.size());
  for (const auto& p : merged) g.nodes.push_back(p.first);
  g.s_ref = spec.s_ref;
  g.ref_node = g.find_node(spec.s_ref);
  if (g.ref_node == StateGrid::npos) {
    // s_ref merged into a zone edge within 1e-12; take that node.
    g.ref_node = g.bracket(spec.s_ref);
    if (std::abs(g.nodes[g.ref_node + 1] - spec.s_ref) < std::abs(g.nodes[g.ref_node] - spec.s_ref)) ++g.ref_node;
  }
  g.ask = detail::classify_side(g.nodes, cfg.alpha_a, cfg.eta_a);
  g.bid = detail::classify_side(g.nodes, cfg.alpha_b, cfg.eta_b);
  g.q_max = params.q_max;
  g.T = params.T;
  g.scheme = spec.scheme;

  const double rate = base_intensity(cfg.alpha_a, params) + base_intensity(cfg.alpha_b, params);
  double dt_max;
  if (spec.scheme == TimeScheme::explicit_euler) {
    double min_prod = std::numeric_limits<double>::infinity();
    for (std::size_t n = 1; n + 1 < g.nodes.size(); ++n)
      min_prod = std::min(min_prod, (g.nodes[n] - g.nodes[n - 1]) * (g.nodes[n + 1] - g.nodes[n]));
    dt_max = spec.cfl * min_prod / (params.sigma * params.sigma);
  } else {
    require(spec.dt > 0, "grid.dt must be > 0");
    dt_max = spec.dt;
  }
  // Control terms stay monotone when dt * (rate_a + rate_b) <= 1/2.
  if (rate > 0) dt_max = std::min(dt_max, 0.5 / rate);
  g.steps = static_cast<std::size_t>(std::ceil(params.T / dt_max - 1e-9));
  require(g.steps >= 1, "grid: no time steps");
  g.dt = params.T / static_cast<double>(g.steps);
  return g;
}

/// Largest explicit step allowed by the diffusion stability bound on this mesh.
inline double cfl_limit(const StateGrid& g, double sigma, double cfl = 0.5) {
  double min_prod = std::numeric_limits<double>::infinity();
  for (std::size_t n = 1; n + 1 < g.nodes.size(); ++n)
    min_prod = std::min(min_prod, (g.nodes[n] - g.nodes[n - 1]) * (g.nodes[n + 1] - g.nodes[n]));
  return cfl * min_prod / (sigma * sigma);
}

} // namespace tickopt
