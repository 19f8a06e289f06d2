#pragma once

// Monte Carlo simulation of the controlled market under a solved policy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "tickopt/error.hpp"
#include "tickopt/grid.hpp"
#include "tickopt/hjb.hpp"
#include "tickopt/model.hpp"
#include "tickopt/zones.hpp"

namespace tickopt {

/// Pairwise (cascade) summation; the result depends only on the order of xs.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t h = xs.size() / 2;
  return pairwise_sum(xs.first(h)) + pairwise_sum(xs.subspan(h));
}

struct Estimate {
  double mean = 0;
  double se = 0;
  std::size_t n = 0;
};

inline Estimate estimate(std::span<const double> xs) {
  Estimate e;
  e.n = xs.size();
  if (xs.empty()) return e;
  e.mean = pairwise_sum(xs) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    std::vector<double> dev(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) dev[k] = (xs[k] - e.mean) * (xs[k] - e.mean);
    const double var = pairwise_sum(dev) / static_cast<double>(xs.size() - 1);
    e.se = std::sqrt(var / static_cast<double>(xs.size()));
  }
  return e;
}

struct PriceChangeRecord {
  double time = 0;
  Side side = Side::ask;
  double price = 0;      // fair price after the change
  int direction = 0;
  double S = 0;          // efficient price at the step that detected the crossing
  double S_prev = 0;     // efficient price one step earlier
};

struct MarketState {
  double t = 0;
  double S = 0;
  std::int64_t ask_index = 0;
  std::int64_t bid_index = 0;
  int Q = 0;
  double X = 0;
  std::int64_t N_a = 0;
  std::int64_t N_b = 0;
  std::vector<PriceChangeRecord>* log = nullptr;  // optional
  mutable std::size_t node_hint = static_cast<std::size_t>(-1);  // lookup cache of GridPolicy

  double S_a(const TickConfig& cfg) const { return static_cast<double>(ask_index) * cfg.alpha_a; }
  double S_b(const TickConfig& cfg) const { return static_cast<double>(bid_index) * cfg.alpha_b; }
};

/// Controls of the market maker at a simulated state.
class PolicyLookup {
public:
  virtual ~PolicyLookup() = default;
  /// Returns bit 0 = ell_a, bit 1 = ell_b, or -1 if the state is outside the policy domain.
  virtual int controls(const MarketState& s) const = 0;
};

/// Fixed controls everywhere (inventory cutoffs still apply in step()).
class ConstantPolicy final : public PolicyLookup {
public:
  explicit ConstantPolicy(int bits) : bits_(bits) {}
  int controls(const MarketState&) const override { return bits_; }

private:
  int bits_;
};

/// Reads a PolicyGrid at the first time node strictly after t (controls are
/// predictable), the state's fair prices and Q. In price, the nearer of the two
/// bracketing nodes is used unless the state's fair prices are not valid there
/// (zone edge between S and that node), in which case the other one is taken.
///
/// The policy is repacked with time innermost at 2 bits per entry, so that a
/// path reads nearby bytes from one step to the next.
class GridPolicy final : public PolicyLookup {
public:
  GridPolicy(const StateGrid& g, const PolicyGrid& p)
      : g_(g), nq_(static_cast<std::size_t>(g.inventory_count())), inv_dt_(1.0 / g.dt) {
    if (p.empty() || p.slice_size != g.slice_size() || p.steps != g.steps)
      throw ConfigError("policy grid does not match the state grid");
    row_bytes_ = (g.steps + 1 + 3) / 4;
    packed_.assign(p.slice_size * row_bytes_, 0);
    for (std::size_t m = 0; m <= g.steps; ++m) {
      const std::uint8_t* src = p.bits.data() + m * p.slice_size;
      const std::size_t col = m / 4;
      const int shift = static_cast<int>(2 * (m % 4));
      for (std::size_t e = 0; e < p.slice_size; ++e)
        packed_[e * row_bytes_ + col] |= static_cast<std::uint8_t>((src[e] & 3) << shift);
    }
    build_cell_table();
  }

  int controls(const MarketState& s) const override {
    if (!(s.S >= g_.nodes.front() && s.S <= g_.nodes.back())) return -1;
    if (s.Q < -g_.q_max || s.Q > g_.q_max) return -1;
    std::size_t n = s.node_hint < g_.nodes.size() - 1 ? s.node_hint : g_.bracket(s.S);
    while (n + 2 < g_.nodes.size() && s.S >= g_.nodes[n + 1]) ++n;
    while (n > 0 && s.S < g_.nodes[n]) --n;
    s.node_hint = n;
    const std::int64_t da = s.ask_index - g_.ask.lo[n] + 1;
    const std::int64_t db = s.bid_index - g_.bid.lo[n] + 1;
    if (da < 0 || da > 3 || db < 0 || db > 3) return -1;
    const std::size_t half = s.S - g_.nodes[n] <= g_.nodes[n + 1] - s.S ? 0 : 1;
    const std::int32_t cell = cells_[((n * 2 + half) * 4 + static_cast<std::size_t>(da)) * 4 + static_cast<std::size_t>(db)];
    if (cell < 0) return -1;
    const auto m = std::min<std::size_t>(g_.steps, static_cast<std::size_t>(s.t * inv_dt_ + 1e-9) + 1);
    const std::size_t e = static_cast<std::size_t>(cell) * nq_ + static_cast<std::size_t>(s.Q + g_.q_max);
    return (packed_[e * row_bytes_ + m / 4] >> (2 * (m % 4))) & 3;
  }

private:
  bool valid_cell(std::size_t k, std::int64_t i, std::int64_t j, std::int32_t& cell) const {
    const std::int64_t a = i - g_.ask.lo[k];
    const std::int64_t b = j - g_.bid.lo[k];
    if (a < 0 || a > 1 || b < 0 || b > 1) return false;
    if (!g_.pde_cell(k, static_cast<int>(a), static_cast<int>(b))) return false;
    cell = static_cast<std::int32_t>(g_.cell(k, static_cast<int>(a), static_cast<int>(b)));
    return true;
  }

  // cells_[interval][half][ask offset][bid offset]: stored cell read for a state
  // in that half of the interval, offsets relative to the left node's slot 0.
  void build_cell_table() {
    const std::size_t intervals = g_.nodes.size() - 1;
    cells_.assign(intervals * 2 * 16, -1);
    for (std::size_t n = 0; n < intervals; ++n)
      for (std::size_t half = 0; half < 2; ++half)
        for (std::int64_t da = 0; da < 4; ++da)
          for (std::int64_t db = 0; db < 4; ++db) {
            const std::int64_t i = g_.ask.lo[n] + da - 1;
            const std::int64_t j = g_.bid.lo[n] + db - 1;
            const std::size_t first = half == 0 ? n : n + 1;
            const std::size_t second = half == 0 ? n + 1 : n;
            std::int32_t cell = -1;
            if (!valid_cell(first, i, j, cell) && !valid_cell(second, i, j, cell)) {
              if (i < g_.ask.lo[first] - 1 || i > g_.ask.lo[first] + 2 || j < g_.bid.lo[first] - 1 ||
                  j > g_.bid.lo[first] + 2)
                continue;
              cell = static_cast<std::int32_t>(g_.resolve(first, i, j));
            }
            cells_[((n * 2 + half) * 4 + static_cast<std::size_t>(da)) * 4 + static_cast<std::size_t>(db)] = cell;
          }
  }

  const StateGrid& g_;
  std::size_t nq_;
  double inv_dt_;
  std::size_t row_bytes_ = 0;
  std::vector<std::uint8_t> packed_;
  std::vector<std::int32_t> cells_;
};

struct SimConfig {
  double dt_sim = 1e-3;
  std::size_t n_paths = 1000;
  std::uint64_t seed = 1;
  double S0 = 10.5;
  int Q0 = 0;
  bool nearest_fair = true;        // initial fair prices = nearest grid prices to S0
  std::int64_t ask_index0 = 0;     // used when nearest_fair is false
  std::int64_t bid_index0 = 0;
  unsigned threads = 1;
  bool log_changes = false;        // keep the price-change log of path 0

  void validate(const ModelParams& params) const {
    require(dt_sim > 0, "sim.dt_sim must be > 0");
    require(n_paths >= 1, "sim.n_paths must be >= 1");
    require(std::abs(Q0) <= params.q_max, "sim.q0 must lie in [-q_max, q_max]");
    require(threads >= 1, "sim.threads must be >= 1");
  }
};

struct PathResult {
  double mm_objective = 0;
  double revenue_count = 0;   // c (N_a + N_b)
  double revenue_rate = 0;    // integral of c * sum of intensities
  std::int64_t N_a = 0;
  std::int64_t N_b = 0;
  int Q_T = 0;
  double X_T = 0;
  double S_T = 0;
  double mean_Q = 0;          // time averages
  double mean_Q2 = 0;
  bool flagged = false;
};

struct SimResult {
  std::vector<PathResult> paths;
  Estimate mm_objective;
  Estimate revenue_count;
  Estimate revenue_rate;
  Estimate N_a;
  Estimate N_b;
  Estimate mean_Q;
  Estimate mean_Q2;
  std::size_t flagged_paths = 0;
  std::vector<PriceChangeRecord> change_log;  // path 0 only, if requested
  std::size_t steps_per_path = 0;
};

/// Per-step constants shared by all paths.
struct StepConstants {
  double sd = 0;          // sigma sqrt(dt)
  double dt = 0;
  double p_a = 0;         // fill probability per step at full presence
  double p_b = 0;
  double rate_a = 0;
  double rate_b = 0;

  StepConstants(const TickConfig& cfg, const ModelParams& params, double dt_sim) {
    dt = dt_sim;
    sd = params.sigma * std::sqrt(dt_sim);
    rate_a = base_intensity(cfg.alpha_a, params);
    rate_b = base_intensity(cfg.alpha_b, params);
    p_a = -std::expm1(-rate_a * dt_sim);
    p_b = -std::expm1(-rate_b * dt_sim);
  }
};

/// Advances one step. Returns the controls used (bits), or -1 if the policy
/// lookup left its domain (the step is then not taken).
inline int step(MarketState& s, const PolicyLookup& policy, const TickConfig& cfg, const ModelParams& params,
                const StepConstants& k, std::mt19937_64& rng,
                boost::random::normal_distribution<double>& normal) {
  const double S_prev = s.S;
  s.S += k.sd * normal(rng);
  const std::int64_t ia = fair_index_update(s.ask_index, s.S, cfg.alpha_a, cfg.eta_a);
  const std::int64_t ib = fair_index_update(s.bid_index, s.S, cfg.alpha_b, cfg.eta_b);
  if (s.log) {
    for (std::int64_t i = s.ask_index; i != ia; i += ia > s.ask_index ? 1 : -1) {
      const int d = ia > s.ask_index ? 1 : -1;
      s.log->push_back({s.t + k.dt, Side::ask, static_cast<double>(i + d) * cfg.alpha_a, d, s.S, S_prev});
    }
    for (std::int64_t i = s.bid_index; i != ib; i += ib > s.bid_index ? 1 : -1) {
      const int d = ib > s.bid_index ? 1 : -1;
      s.log->push_back({s.t + k.dt, Side::bid, static_cast<double>(i + d) * cfg.alpha_b, d, s.S, S_prev});
    }
  }
  s.ask_index = ia;
  s.bid_index = ib;

  int bits = policy.controls(s);
  if (bits < 0) return -1;
  if (s.Q <= -params.q_max) bits &= ~1;
  if (s.Q >= params.q_max) bits &= ~2;
  bool fill_a = false, fill_b = false;
  if (bits) {
    // Two independent 32-bit uniforms from one draw.
    const std::uint64_t u = rng();
    fill_a = (bits & 1) && static_cast<double>(u >> 32) * 0x1.0p-32 < k.p_a;
    fill_b = (bits & 2) && static_cast<double>(u & 0xffffffffULL) * 0x1.0p-32 < k.p_b;
  }
  if (fill_a) {
    s.X += s.S_a(cfg);
    s.Q -= 1;
    s.N_a += 1;
  }
  if (fill_b) {
    s.X -= s.S_b(cfg);
    s.Q += 1;
    s.N_b += 1;
  }
  s.t += k.dt;
  return bits;
}

inline PathResult run_path(const PolicyLookup& policy, const TickConfig& cfg, const ModelParams& params,
                           const SimConfig& sc, std::size_t path, std::vector<PriceChangeRecord>* log = nullptr) {
  std::seed_seq seq{static_cast<std::uint32_t>(sc.seed), static_cast<std::uint32_t>(sc.seed >> 32),
                    static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)};
  std::mt19937_64 rng(seq);
  boost::random::normal_distribution<double> normal;
  const StepConstants k(cfg, params, sc.dt_sim);
  const auto steps = static_cast<std::size_t>(std::llround(params.T / sc.dt_sim));

  MarketState s;
  s.S = sc.S0;
  s.Q = sc.Q0;
  s.ask_index = sc.nearest_fair ? nearest_index(sc.S0, cfg.alpha_a) : sc.ask_index0;
  s.bid_index = sc.nearest_fair ? nearest_index(sc.S0, cfg.alpha_b) : sc.bid_index0;
  s.log = log;

  PathResult r;
  double penalty = 0, rate = 0, sq = 0, sq2 = 0;
  for (std::size_t n = 0; n < steps; ++n) {
    const double q = s.Q;
    penalty += running_penalty(s.Q, params);
    sq += q;
    sq2 += q * q;
    const int bits = step(s, policy, cfg, params, k, rng, normal);
    if (bits < 0) {
      r.flagged = true;
      break;
    }
    rate += ((bits & 1) ? k.rate_a : 0.0) + ((bits & 2) ? k.rate_b : 0.0);
  }
  const double dt = sc.dt_sim;
  r.N_a = s.N_a;
  r.N_b = s.N_b;
  r.Q_T = s.Q;
  r.X_T = s.X;
  r.S_T = s.S;
  r.mm_objective = s.X + terminal_value(s.S, s.Q, params.A) + penalty * dt;
  r.revenue_count = params.c * static_cast<double>(s.N_a + s.N_b);
  r.revenue_rate = params.c * rate * dt;
  r.mean_Q = sq / static_cast<double>(steps);
  r.mean_Q2 = sq2 / static_cast<double>(steps);
  return r;
}

inline SimResult run_paths(const PolicyLookup& policy, const TickConfig& cfg, const ModelParams& params,
                           const SimConfig& sc) {
  cfg.validate();
  params.validate();
  sc.validate(params);
  SimResult out;
  out.paths.resize(sc.n_paths);
  out.steps_per_path = static_cast<std::size_t>(std::llround(params.T / sc.dt_sim));

  const unsigned nt = std::min<unsigned>(sc.threads, static_cast<unsigned>(sc.n_paths));
  auto work = [&](unsigned w) {
    for (std::size_t p = w; p < sc.n_paths; p += nt)
      out.paths[p] = run_path(policy, cfg, params, sc, p, (p == 0 && sc.log_changes) ? &out.change_log : nullptr);
  };
  if (nt <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < nt; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }

  std::vector<double> obj, rc, rr, na, nb, mq, mq2;
  for (const auto& p : out.paths) {
    if (p.flagged) {
      ++out.flagged_paths;
      continue;
    }
    obj.push_back(p.mm_objective);
    rc.push_back(p.revenue_count);
    rr.push_back(p.revenue_rate);
    na.push_back(static_cast<double>(p.N_a));
    nb.push_back(static_cast<double>(p.N_b));
    mq.push_back(p.mean_Q);
    mq2.push_back(p.mean_Q2);
  }
  out.mm_objective = estimate(obj);
  out.revenue_count = estimate(rc);
  out.revenue_rate = estimate(rr);
  out.N_a = estimate(na);
  out.N_b = estimate(nb);
  out.mean_Q = estimate(mq);
  out.mean_Q2 = estimate(mq2);
  return out;
}

/// Exchange revenue from simulated paths: counting (c (N_a + N_b)) and rate
/// (integrated intensities) estimators.
struct RevenueEstimates {
  Estimate counting;
  Estimate rate;
};

inline RevenueEstimates exchange_revenue_estimators(const SimResult& r) { return {r.revenue_count, r.revenue_rate}; }

inline void write_paths_csv(std::ostream& os, const SimResult& r) {
  os << "path,mm_objective,exchange_revenue,N_a,N_b,Q_T\n";
  os.precision(17);
  for (std::size_t p = 0; p < r.paths.size(); ++p) {
    const auto& x = r.paths[p];
    os << p << ',' << x.mm_objective << ',' << x.revenue_count << ',' << x.N_a << ',' << x.N_b << ',' << x.Q_T
       << '\n';
  }
}

/// Price-change log in the transaction format read by read_transactions,
/// preceded by one row per side with the initial fair prices.
inline void write_change_log_csv(std::ostream& os, const SimResult& r, const TickConfig& cfg, const SimConfig& sc) {
  os << "time,price,side\n";
  os.precision(17);
  const double a0 = static_cast<double>(sc.nearest_fair ? nearest_index(sc.S0, cfg.alpha_a) : sc.ask_index0) * cfg.alpha_a;
  const double b0 = static_cast<double>(sc.nearest_fair ? nearest_index(sc.S0, cfg.alpha_b) : sc.bid_index0) * cfg.alpha_b;
  os << 0.0 << ',' << a0 << ",a\n" << 0.0 << ',' << b0 << ",b\n";
  for (const auto& c : r.change_log) os << c.time << ',' << c.price << ',' << side_name(c.side) << '\n';
}

} // namespace tickopt
