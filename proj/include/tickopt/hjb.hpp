#pragma once

// Backward finite-difference solver for the market maker's value function
// on the branch-indexed grid, with extraction of the bang-bang controls.
//
// Per step, for every cell whose ask and bid slots are both valid:
//
//   h_m = h_{m+1} + dt [ 1/2 sigma^2 D_SS h + penalty(q)
//                        + lambda_a max(0, S^a + h(q-1) - h(q))
//                        + lambda_b max(0, -S^b + h(q+1) - h(q)) ]
//
// with D_SS the three-point second difference on the non-uniform mesh, read
// at t_{m+1} (explicit) or t_m (imex). Control terms always use t_{m+1}.
// Zone-edge and invalid cells are then overwritten with the value of the
// post-jump (resp. valid) cell, which is the continuity condition.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tickopt/detail/banded_lu.hpp"
#include "tickopt/error.hpp"
#include "tickopt/grid.hpp"
#include "tickopt/model.hpp"
#include "tickopt/zones.hpp"

namespace tickopt {

/// Value function slices on the grid. Layout per slice: [node][ask slot][bid slot][q].
struct ValueGrid {
  std::vector<std::size_t> times;             // stored time indices, ascending
  std::vector<std::vector<double>> slices;

  bool has_time(std::size_t m) const { return std::binary_search(times.begin(), times.end(), m); }

  const std::vector<double>& at_time(std::size_t m) const {
    auto it = std::lower_bound(times.begin(), times.end(), m);
    if (it == times.end() || *it != m) throw DomainError("value grid: time index " + std::to_string(m) + " not stored");
    return slices[static_cast<std::size_t>(it - times.begin())];
  }

  const std::vector<double>& initial() const { return at_time(times.front()); }
};

/// Controls per (time, node, ask slot, bid slot, q): bit 0 = ell_a, bit 1 = ell_b.
struct PolicyGrid {
  std::size_t steps = 0;
  std::size_t slice_size = 0;
  std::vector<std::uint8_t> bits;

  bool empty() const { return bits.empty(); }
  std::uint8_t at(std::size_t m, std::size_t entry) const { return bits[m * slice_size + entry]; }
  std::span<const std::uint8_t> slice(std::size_t m) const {
    return {bits.data() + m * slice_size, slice_size};
  }
};

struct Controls {
  int ell_a = 0;
  int ell_b = 0;
  friend bool operator==(const Controls&, const Controls&) = default;
};

/// Optimal presence on each side at stored cell (n, a, b) and inventory q.
/// Non-valid cells take the controls of the cell they resolve to.
/// Ties (zero margin) mean absence.
inline Controls optimal_controls(const StateGrid& g, std::span<const double> slice, std::size_t n, int a, int b,
                                 int q) {
  const std::size_t c = g.canonical_cell(n, a, b);
  const int ca = static_cast<int>((c / 2) % 2);
  const int cb = static_cast<int>(c % 2);
  const int nq = g.inventory_count();
  const std::size_t e = c * nq + static_cast<std::size_t>(q + g.q_max);
  Controls out;
  if (q > -g.q_max) {
    const double gain = g.ask.fair_price(n, ca) + slice[e - 1] - slice[e];
    out.ell_a = gain > 0 ? 1 : 0;
  }
  if (q < g.q_max) {
    const double gain = -g.bid.fair_price(n, cb) + slice[e + 1] - slice[e];
    out.ell_b = gain > 0 ? 1 : 0;
  }
  return out;
}

inline void controls_slice(const StateGrid& g, std::span<const double> slice, std::span<std::uint8_t> out) {
  const int nq = g.inventory_count();
  for (std::size_t n = 0; n < g.node_count(); ++n)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int q = -g.q_max; q <= g.q_max; ++q) {
          const Controls c = optimal_controls(g, slice, n, a, b, q);
          out[g.cell(n, a, b) * nq + static_cast<std::size_t>(q + g.q_max)] =
              static_cast<std::uint8_t>(c.ell_a | (c.ell_b << 1));
        }
}

inline std::vector<double> terminal_slice(const StateGrid& g, double A) {
  std::vector<double> out(g.slice_size());
  const int nq = g.inventory_count();
  for (std::size_t n = 0; n < g.node_count(); ++n)
    for (std::size_t c = 0; c < 4; ++c)
      for (int q = -g.q_max; q <= g.q_max; ++q)
        out[(n * 4 + c) * nq + static_cast<std::size_t>(q + g.q_max)] = terminal_value(g.nodes[n], q, A);
  return out;
}

/// Precomputed one-step operator for a grid. Reused across all time steps and
/// for the linear fee-flow equation, which shares the diffusion and couplings.
class BackwardStepper {
public:
  BackwardStepper(const StateGrid& grid, const TickConfig& cfg, const ModelParams& params)
      : g_(grid), nq_(grid.inventory_count()) {
    if (std::abs(cfg.alpha_a - grid.ask.alpha) > 1e-15 || std::abs(cfg.alpha_b - grid.bid.alpha) > 1e-15 ||
        std::abs(cfg.eta_a - grid.ask.eta) > 1e-15 || std::abs(cfg.eta_b - grid.bid.eta) > 1e-15)
      throw ConfigError("grid was built for a different tick configuration");
    if (params.q_max != grid.q_max || std::abs(params.T - grid.T) > 1e-12)
      throw ConfigError("grid was built for different model parameters");
    const double dt = grid.dt;
    const double s2 = params.sigma * params.sigma;
    if (grid.scheme == TimeScheme::explicit_euler && dt > cfl_limit(grid, params.sigma, 0.5) * (1 + 1e-9))
      throw ConfigError("explicit scheme: time step " + std::to_string(dt) + " violates the CFL bound " +
                        std::to_string(cfl_limit(grid, params.sigma, 0.5)));

    rate_a_ = dt * base_intensity(cfg.alpha_a, params);
    rate_b_ = dt * base_intensity(cfg.alpha_b, params);
    penalty_.resize(static_cast<std::size_t>(nq_));
    for (int q = -g_.q_max; q <= g_.q_max; ++q) penalty_[static_cast<std::size_t>(q + g_.q_max)] = dt * running_penalty(q, params);

    const std::size_t N = grid.node_count();
    std::vector<std::int64_t> row_of(N * 4, -1);
    for (std::size_t n = 0; n < N; ++n)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const std::size_t c = grid.cell(n, a, b);
          if (grid.pde_cell(n, a, b)) {
            row_of[c] = static_cast<std::int64_t>(rows_.size());
            Row r;
            r.cell = c;
            r.ask_price = grid.ask.fair_price(n, a);
            r.bid_price = grid.bid.fair_price(n, b);
            if (n > 0 && n + 1 < N) {
              const double hm = grid.nodes[n] - grid.nodes[n - 1];
              const double hp = grid.nodes[n + 1] - grid.nodes[n];
              r.w_left = dt * s2 / (hm * (hm + hp));
              r.w_right = dt * s2 / (hp * (hm + hp));
              const std::int64_t i = grid.ask.fair_index(n, a);
              const std::int64_t j = grid.bid.fair_index(n, b);
              r.left = grid.resolve(n - 1, i, j);
              r.right = grid.resolve(n + 1, i, j);
            }
            rows_.push_back(r);
          } else {
            copies_.emplace_back(c, grid.canonical_cell(n, a, b));
          }
        }
    for (auto& r : rows_) {
      if (r.w_left == 0 && r.w_right == 0) continue;
      r.left_row = row_of[r.left];
      r.right_row = row_of[r.right];
      if (r.left_row < 0 || r.right_row < 0) throw ConfigError("grid: stencil neighbour resolves to a non-valid cell");
    }

    if (grid.scheme == TimeScheme::imex) {
      std::vector<detail::BandedLU::Entry> entries;
      entries.reserve(3 * rows_.size());
      for (std::size_t k = 0; k < rows_.size(); ++k) {
        const Row& r = rows_[k];
        entries.push_back({k, k, 1.0 + r.w_left + r.w_right});
        if (r.left_row >= 0) entries.push_back({k, static_cast<std::size_t>(r.left_row), -r.w_left});
        if (r.right_row >= 0) entries.push_back({k, static_cast<std::size_t>(r.right_row), -r.w_right});
      }
      lu_ = detail::BandedLU(rows_.size(), entries);
    }
  }

  const StateGrid& grid() const { return g_; }
  std::size_t pde_cells() const { return rows_.size(); }

  /// One backward step of the value function: next = h(t_{m+1}) -> out = h(t_m).
  void step(std::span<const double> next, std::span<double> out) const {
    const std::size_t nq = static_cast<std::size_t>(nq_);
    const bool implicit = g_.scheme == TimeScheme::imex;
    if (implicit) rhs_.resize(rows_.size() * nq);
    for (std::size_t k = 0; k < rows_.size(); ++k) {
      const Row& r = rows_[k];
      const double* v = next.data() + r.cell * nq;
      const double* vl = next.data() + r.left * nq;
      const double* vr = next.data() + r.right * nq;
      const bool diffuse = !implicit && (r.w_left != 0 || r.w_right != 0);
      double* x = implicit ? rhs_.data() + k * nq : out.data() + r.cell * nq;
      for (std::size_t qi = 0; qi < nq; ++qi) {
        double y = v[qi] + penalty_[qi];
        if (qi > 0) y += rate_a_ * std::max(0.0, r.ask_price + v[qi - 1] - v[qi]);
        if (qi + 1 < nq) y += rate_b_ * std::max(0.0, -r.bid_price + v[qi + 1] - v[qi]);
        if (diffuse) y += r.w_left * (vl[qi] - v[qi]) + r.w_right * (vr[qi] - v[qi]);
        x[qi] = y;
      }
    }
    if (implicit) {
      lu_.solve(rhs_, nq);
      for (std::size_t k = 0; k < rows_.size(); ++k)
        std::copy_n(rhs_.data() + k * nq, nq, out.data() + rows_[k].cell * nq);
    }
    apply_continuity(out);
  }

  /// Controls of a whole slice; same result as optimal_controls on every cell.
  void controls(std::span<const double> slice, std::span<std::uint8_t> out) const {
    const std::size_t nq = static_cast<std::size_t>(nq_);
    for (const Row& r : rows_) {
      const double* v = slice.data() + r.cell * nq;
      std::uint8_t* u = out.data() + r.cell * nq;
      for (std::size_t qi = 0; qi < nq; ++qi) {
        std::uint8_t bits = 0;
        if (qi > 0 && r.ask_price + v[qi - 1] - v[qi] > 0) bits |= 1;
        if (qi + 1 < nq && -r.bid_price + v[qi + 1] - v[qi] > 0) bits |= 2;
        u[qi] = bits;
      }
    }
    for (const auto& [dst, src] : copies_) std::copy_n(out.data() + src * nq, nq, out.data() + dst * nq);
  }

  /// Presence weights per slice entry and side, in [0, 1]. Nodal weights are
  /// the bang-bang controls themselves. Cell-averaged weights are the fraction
  /// of the node's dual cell [s_n - h-/2, s_n + h+/2] where the margin, linear
  /// between nodes, is positive; they locate control switches between nodes.
  struct Presence {
    std::vector<double> a;
    std::vector<double> b;
  };

  void presence(std::span<const double> slice, Presence& out, bool cell_average) const {
    const std::size_t nq = static_cast<std::size_t>(nq_);
    out.a.resize(slice.size());
    out.b.resize(slice.size());
    for (const Row& r : rows_) {
      const double* v = slice.data() + r.cell * nq;
      const double* vl = slice.data() + r.left * nq;
      const double* vr = slice.data() + r.right * nq;
      double* wa = out.a.data() + r.cell * nq;
      double* wb = out.b.data() + r.cell * nq;
      const bool interior = cell_average && (r.w_left != 0 || r.w_right != 0);
      const double fl = r.w_right / (r.w_left + r.w_right);  // h- / (h- + h+)
      for (std::size_t qi = 0; qi < nq; ++qi) {
        wa[qi] = 0;
        wb[qi] = 0;
        if (qi > 0) {
          const double g = r.ask_price + v[qi - 1] - v[qi];
          wa[qi] = interior ? fl * positive_fraction(r.ask_price + vl[qi - 1] - vl[qi], g) +
                                  (1 - fl) * positive_fraction(r.ask_price + vr[qi - 1] - vr[qi], g)
                            : (g > 0 ? 1.0 : 0.0);
        }
        if (qi + 1 < nq) {
          const double g = -r.bid_price + v[qi + 1] - v[qi];
          wb[qi] = interior ? fl * positive_fraction(-r.bid_price + vl[qi + 1] - vl[qi], g) +
                                  (1 - fl) * positive_fraction(-r.bid_price + vr[qi + 1] - vr[qi], g)
                            : (g > 0 ? 1.0 : 0.0);
        }
      }
    }
    for (const auto& [dst, src] : copies_) {
      std::copy_n(out.a.data() + src * nq, nq, out.a.data() + dst * nq);
      std::copy_n(out.b.data() + src * nq, nq, out.b.data() + dst * nq);
    }
  }

  struct LinearTerm {
    std::span<const double> next;
    std::span<double> out;
    double weight_a;
    double weight_b;
  };

  /// Backward step of the expected fee flow under frozen presence weights
  /// (taken from t_{m+1}). weight_a / weight_b scale the per-fill source on
  /// each side, so (1, 0) gives expected ask fills and (c, c) the fee revenue.
  void step_linear(std::span<const double> next, const Presence& w, double weight_a, double weight_b,
                   std::span<double> out) const {
    const std::vector<LinearTerm> one{{next, out, weight_a, weight_b}};
    step_linear_batch(one, w);
  }

  /// Several linear equations sharing the same presence weights, solved in one pass.
  void step_linear_batch(std::span<const LinearTerm> terms, const Presence& w) const {
    const std::size_t nq = static_cast<std::size_t>(nq_);
    const std::size_t width = nq * terms.size();
    const bool implicit = g_.scheme == TimeScheme::imex;
    if (implicit) rhs_.resize(rows_.size() * width);
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const auto& term = terms[t];
      for (std::size_t k = 0; k < rows_.size(); ++k) {
        const Row& r = rows_[k];
        const double* v = term.next.data() + r.cell * nq;
        const double* vl = term.next.data() + r.left * nq;
        const double* vr = term.next.data() + r.right * nq;
        const double* pa = w.a.data() + r.cell * nq;
        const double* pb = w.b.data() + r.cell * nq;
        const bool diffuse = !implicit && (r.w_left != 0 || r.w_right != 0);
        double* x = implicit ? rhs_.data() + k * width + t * nq : term.out.data() + r.cell * nq;
        for (std::size_t qi = 0; qi < nq; ++qi) {
          double y = v[qi];
          if (qi > 0) y += rate_a_ * pa[qi] * (term.weight_a + v[qi - 1] - v[qi]);
          if (qi + 1 < nq) y += rate_b_ * pb[qi] * (term.weight_b + v[qi + 1] - v[qi]);
          if (diffuse) y += r.w_left * (vl[qi] - v[qi]) + r.w_right * (vr[qi] - v[qi]);
          x[qi] = y;
        }
      }
    }
    if (implicit) {
      lu_.solve(rhs_, width);
      for (std::size_t t = 0; t < terms.size(); ++t)
        for (std::size_t k = 0; k < rows_.size(); ++k)
          std::copy_n(rhs_.data() + k * width + t * nq, nq, terms[t].out.data() + rows_[k].cell * nq);
    }
    for (const auto& term : terms) apply_continuity(term.out);
  }

  /// Copy post-jump / valid values into zone-edge and invalid cells.
  void apply_continuity(std::span<double> slice) const {
    const std::size_t nq = static_cast<std::size_t>(nq_);
    for (const auto& [dst, src] : copies_)
      std::copy_n(slice.data() + src * nq, nq, slice.data() + dst * nq);
  }

private:
  // Share of the half-cell between a neighbour (margin g_nb) and the node
  // (margin g) on which the margin is positive; the half-cell ends midway.
  static double positive_fraction(double g_nb, double g) {
    const double mid = 0.5 * (g_nb + g);
    if (mid > 0 && g > 0) return 1.0;
    if (mid <= 0 && g <= 0) return 0.0;
    return g > 0 ? g / (g - mid) : mid / (mid - g);
  }

  struct Row {
    std::size_t cell = 0;
    std::size_t left = 0;
    std::size_t right = 0;
    std::int64_t left_row = -1;
    std::int64_t right_row = -1;
    double w_left = 0;    // dt * sigma^2 / (h- (h- + h+))
    double w_right = 0;   // dt * sigma^2 / (h+ (h- + h+))
    double ask_price = 0;
    double bid_price = 0;
  };

  const StateGrid& g_;
  int nq_;
  double rate_a_ = 0;
  double rate_b_ = 0;
  std::vector<double> penalty_;
  std::vector<Row> rows_;
  std::vector<std::pair<std::size_t, std::size_t>> copies_;
  detail::BandedLU lu_;              // I - dt L on the valid cells (imex only)
  mutable std::vector<double> rhs_;
};

/// Single backward step as a free function (builds the operator each call).
inline std::vector<double> backward_step(std::span<const double> next, const StateGrid& grid, const TickConfig& cfg,
                                         const ModelParams& params) {
  BackwardStepper stepper(grid, cfg, params);
  std::vector<double> out(grid.slice_size());
  stepper.step(next, out);
  return out;
}

struct SolveOptions {
  bool keep_all_values = false;  // otherwise only t = 0 and t = T are kept
  bool keep_policy = true;
};

struct Solution {
  ValueGrid values;
  PolicyGrid policy;
};

inline Solution solve(const TickConfig& cfg, const ModelParams& params, const StateGrid& grid,
                      const SolveOptions& opts = {}) {
  BackwardStepper stepper(grid, cfg, params);
  const std::size_t M = grid.steps;
  const std::size_t S = grid.slice_size();

  Solution sol;
  if (opts.keep_policy) {
    sol.policy.steps = M;
    sol.policy.slice_size = S;
    sol.policy.bits.resize((M + 1) * S);
  }

  std::vector<double> next = terminal_slice(grid, params.A);
  std::vector<double> cur(S);
  std::vector<std::vector<double>> kept;
  std::vector<std::size_t> kept_t;
  auto record = [&](std::size_t m, const std::vector<double>& slice) {
    if (opts.keep_policy)
      stepper.controls(slice, std::span<std::uint8_t>(sol.policy.bits.data() + m * S, S));
    if (opts.keep_all_values || m == 0 || m == M) {
      kept_t.push_back(m);
      kept.push_back(slice);
    }
  };
  record(M, next);
  for (std::size_t m = M; m-- > 0;) {
    stepper.step(next, cur);
    std::swap(next, cur);
    record(m, next);
  }
  std::reverse(kept_t.begin(), kept_t.end());
  std::reverse(kept.begin(), kept.end());
  sol.values.times = std::move(kept_t);
  sol.values.slices = std::move(kept);
  return sol;
}

/// State at which a value is read: efficient price, fair-price indices and inventory.
struct WorkingPoint {
  double S = 10.5;
  std::int64_t ask_index = 0;
  std::int64_t bid_index = 0;
  int q = 0;
};

/// Working point whose fair prices are the nearest grid prices to S.
inline WorkingPoint nearest_working_point(const TickConfig& cfg, double S, int q) {
  return {S, nearest_index(S, cfg.alpha_a), nearest_index(S, cfg.alpha_b), q};
}

/// Value at a working point; linear interpolation in S between bracketing nodes.
inline double value_at(const StateGrid& g, std::span<const double> slice, const WorkingPoint& wp) {
  const int nq = g.inventory_count();
  if (wp.q < -g.q_max || wp.q > g.q_max) throw DomainError("value_at: inventory outside [-q_max, q_max]");
  const auto read = [&](std::size_t n) {
    return slice[g.resolve(n, wp.ask_index, wp.bid_index) * nq + static_cast<std::size_t>(wp.q + g.q_max)];
  };
  const std::size_t exact = g.find_node(wp.S);
  if (exact != StateGrid::npos) return read(exact);
  if (wp.S < g.nodes.front() || wp.S > g.nodes.back()) throw DomainError("value_at: price outside the grid");
  const std::size_t n = g.bracket(wp.S);
  const double w = (wp.S - g.nodes[n]) / (g.nodes[n + 1] - g.nodes[n]);
  return (1 - w) * read(n) + w * read(n + 1);
}

/// CSV `t,S,branch_a,branch_b,q,value,ell_a,ell_b` for the given stored time
/// indices; admissible cells only. Controls are re-derived from the values.
inline void write_value_csv(std::ostream& os, const StateGrid& g, const ValueGrid& values,
                            std::span<const std::size_t> time_indices) {
  os << "t,S,branch_a,branch_b,q,value,ell_a,ell_b\n";
  os.precision(17);
  const int nq = g.inventory_count();
  for (std::size_t m : time_indices) {
    const auto& slice = values.at_time(m);
    for (std::size_t n = 0; n < g.node_count(); ++n)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          if (!g.admissible_cell(n, a, b)) continue;
          for (int q = -g.q_max; q <= g.q_max; ++q) {
            const Controls c = optimal_controls(g, slice, n, a, b, q);
            os << g.time(m) << ',' << g.nodes[n] << ',' << (a ? "hi" : "lo") << ',' << (b ? "hi" : "lo") << ','
               << q << ',' << slice[g.cell(n, a, b) * nq + static_cast<std::size_t>(q + g.q_max)] << ','
               << c.ell_a << ',' << c.ell_b << '\n';
          }
        }
  }
}

} // namespace tickopt
