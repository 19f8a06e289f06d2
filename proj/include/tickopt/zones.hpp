#pragma once

// Geometry and statistics of the uncertainty-zones price model: tick grids,
// zone membership, the fair-price crossing rule, eta estimation from
// alternations/continuations and efficient-price reconstruction.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tickopt/error.hpp"

namespace tickopt {

enum class Side : std::uint8_t { ask = 0, bid = 1 };

inline const char* side_name(Side s) { return s == Side::ask ? "a" : "b"; }

/// Relative tolerance (in units of the tick) for grid and zone membership tests.
inline constexpr double kMembershipTol = 1e-9;

/// Tick sizes and zone half-widths of both sides, plus the reference pair
/// (eta_0, alpha_0) of the eta scaling rule.
struct TickConfig {
  double alpha_a = 0.01;
  double alpha_b = 0.01;
  double eta_a = 0.3;
  double eta_b = 0.3;
  double eta_0 = 0.3;
  double alpha_0 = 0.01;

  double alpha(Side s) const { return s == Side::ask ? alpha_a : alpha_b; }
  double eta(Side s) const { return s == Side::ask ? eta_a : eta_b; }

  bool large_tick() const { return eta_a <= 0.5 && eta_b <= 0.5; }

  void validate() const {
    require(alpha_a > 0 && alpha_b > 0, "ticks: alpha_a and alpha_b must be positive");
    require(eta_a >= 0 && eta_a <= 0.5, "ticks: eta_a must lie in [0, 1/2]");
    require(eta_b >= 0 && eta_b <= 0.5, "ticks: eta_b must lie in [0, 1/2]");
  }
};

/// eta of a side whose tick moves from alpha_0 to alpha: eta_0 * sqrt(alpha_0 / alpha).
/// No clamping; the caller checks the large-tick constraint.
inline double eta_for_tick(double eta_0, double alpha_0, double alpha) {
  if (!(alpha > 0) || !(alpha_0 > 0)) throw DomainError("eta_for_tick: tick sizes must be positive");
  if (eta_0 < 0 || eta_0 > 0.5) throw DomainError("eta_for_tick: eta_0 must lie in [0, 1/2]");
  return eta_0 * std::sqrt(alpha_0 / alpha);
}

/// TickConfig whose etas follow the scaling rule from (eta_0, alpha_0).
inline TickConfig make_tick_config(double alpha_a, double alpha_b, double eta_0, double alpha_0) {
  TickConfig cfg;
  cfg.alpha_a = alpha_a;
  cfg.alpha_b = alpha_b;
  cfg.eta_0 = eta_0;
  cfg.alpha_0 = alpha_0;
  cfg.eta_a = eta_for_tick(eta_0, alpha_0, alpha_a);
  cfg.eta_b = eta_for_tick(eta_0, alpha_0, alpha_b);
  return cfg;
}

struct ZoneBounds {
  double lower;
  double upper;
};

/// Uncertainty zone k: the open band ((k + 1/2 - eta) alpha, (k + 1/2 + eta) alpha).
inline ZoneBounds zone_bounds(std::int64_t k, double alpha, double eta) {
  if (eta < 0 || eta > 0.5) throw DomainError("zone_bounds: eta must lie in [0, 1/2]");
  const double kd = static_cast<double>(k);
  return {(kd + 0.5 - eta) * alpha, (kd + 0.5 + eta) * alpha};
}

/// Grid index of an on-grid price; throws if price is not a multiple of alpha.
inline std::int64_t grid_index(double price, double alpha) {
  const double x = price / alpha;
  const double k = std::round(x);
  if (std::abs(x - k) > kMembershipTol * std::max(1.0, std::abs(x)))
    throw DomainError("price " + std::to_string(price) + " is not on the tick grid " + std::to_string(alpha));
  return static_cast<std::int64_t>(k);
}

inline std::int64_t nearest_index(double price, double alpha) {
  return static_cast<std::int64_t>(std::llround(price / alpha));
}

/// Crossing rule on grid indices. The one-tick move is iterated until
/// |S - fair| <= (1/2 + eta) alpha, so coarse simulation steps cannot leave
/// the fair price outside the closed domain.
inline std::int64_t fair_index_update(std::int64_t prev, double S, double alpha, double eta) {
  const double reach = (0.5 + eta) * alpha;
  std::int64_t idx = prev;
  while (S - static_cast<double>(idx) * alpha > reach) ++idx;
  while (S - static_cast<double>(idx) * alpha < -reach) --idx;
  return idx;
}

inline double fair_price_update(double prev_fair, double S, double alpha, double eta) {
  const std::int64_t k = grid_index(prev_fair, alpha);
  return static_cast<double>(fair_index_update(k, S, alpha, eta)) * alpha;
}

/// Admissible fair-price indices at S: all i with |S - i alpha| < (1/2 + eta) alpha.
/// At a zone edge only the interior-side index is returned and on_boundary is set.
struct BranchSet {
  std::array<std::int64_t, 2> index{};
  int count = 0;
  bool on_boundary = false;

  bool contains(std::int64_t i) const {
    for (int k = 0; k < count; ++k)
      if (index[k] == i) return true;
    return false;
  }
};

inline BranchSet valid_branches(double S, double alpha, double eta) {
  BranchSet out;
  const double reach = 0.5 + eta;
  const double tol = kMembershipTol;
  const double x = S / alpha;
  const auto first = static_cast<std::int64_t>(std::floor(x - reach)) - 1;
  const auto last = static_cast<std::int64_t>(std::ceil(x + reach)) + 1;
  for (std::int64_t i = first; i <= last; ++i) {
    const double d = std::abs(x - static_cast<double>(i));
    if (d < reach - tol) {
      if (out.count < 2) out.index[out.count] = i;
      ++out.count;
    } else if (d <= reach + tol) {
      out.on_boundary = true;
    }
  }
  return out;
}

/// Efficient price at a change time from the traded prices before and after a one-tick change.
inline double reconstruct_efficient_price(double p_now, double p_prev, double alpha, double eta) {
  const double jump = p_now - p_prev;
  if (std::abs(std::abs(jump) - alpha) > 1e-6 * alpha)
    throw DomainError("reconstruct_efficient_price: price change is not exactly one tick");
  const double sign = jump > 0 ? 1.0 : -1.0;
  return p_now - alpha * (0.5 - eta) * sign;
}

struct Transaction {
  double time = 0;
  double price = 0;
  Side side = Side::ask;
};

/// Header `time,price,side`, side in {a,b}.
inline std::vector<Transaction> read_transactions(std::istream& in) {
  std::vector<Transaction> rows;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("transaction csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "time,price,side") throw ConfigError("transaction csv: expected header 'time,price,side', got '" + line + "'");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string t, p, s;
    if (!std::getline(ss, t, ',') || !std::getline(ss, p, ',') || !std::getline(ss, s))
      throw ConfigError("transaction csv: malformed row at line " + std::to_string(lineno));
    Transaction tr;
    try {
      tr.time = std::stod(t);
      tr.price = std::stod(p);
    } catch (const std::exception&) {
      throw ConfigError("transaction csv: bad number at line " + std::to_string(lineno));
    }
    if (s == "a") tr.side = Side::ask;
    else if (s == "b") tr.side = Side::bid;
    else throw ConfigError("transaction csv: side must be 'a' or 'b' at line " + std::to_string(lineno));
    rows.push_back(tr);
  }
  return rows;
}

struct PriceChange {
  double time = 0;
  double price = 0;
  int direction = 0;         // +1 up, -1 down
  bool after_gap = false;    // preceded by a skipped multi-tick jump
};

/// One side's price changes, extracted from transactions by run-length filtering.
struct PriceChangeSeries {
  Side side = Side::ask;
  double alpha = 0;
  std::vector<PriceChange> changes;
  std::vector<std::size_t> skipped_rows;  // rows violating the one-tick rule
};

inline PriceChangeSeries extract_price_changes(std::span<const Transaction> rows, Side side, double alpha) {
  if (!(alpha > 0)) throw DomainError("extract_price_changes: alpha must be positive");
  PriceChangeSeries out;
  out.side = side;
  out.alpha = alpha;
  bool have_ref = false;
  std::int64_t ref = 0;
  bool gap = false;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].side != side) continue;
    const std::int64_t k = nearest_index(rows[r].price, alpha);
    if (!have_ref) {
      have_ref = true;
      ref = k;
      continue;
    }
    const std::int64_t diff = k - ref;
    if (diff == 0) continue;
    if (diff == 1 || diff == -1) {
      out.changes.push_back({rows[r].time, static_cast<double>(k) * alpha, static_cast<int>(diff), gap});
      gap = false;
    } else {
      out.skipped_rows.push_back(r);
      gap = true;
    }
    ref = k;
  }
  return out;
}

struct AltContCounts {
  std::int64_t n_alt = 0;
  std::int64_t n_cont = 0;
};

/// Counts over consecutive pairs of price changes; empty when fewer than two.
inline std::optional<AltContCounts> count_alternations_continuations(std::span<const int> directions) {
  if (directions.size() < 2) return std::nullopt;
  AltContCounts c;
  for (std::size_t k = 1; k < directions.size(); ++k) {
    if (directions[k] == directions[k - 1]) ++c.n_cont;
    else ++c.n_alt;
  }
  return c;
}

inline std::optional<AltContCounts> count_alternations_continuations(const PriceChangeSeries& series) {
  if (series.changes.size() < 2) return std::nullopt;
  AltContCounts c;
  for (std::size_t k = 1; k < series.changes.size(); ++k) {
    if (series.changes[k].after_gap) continue;
    if (series.changes[k].direction == series.changes[k - 1].direction) ++c.n_cont;
    else ++c.n_alt;
  }
  return c;
}

/// eta_hat = N_cont / (2 N_alt); empty when there is no alternation.
inline std::optional<double> estimate_eta(std::int64_t n_cont, std::int64_t n_alt) {
  if (n_alt <= 0) return std::nullopt;
  return static_cast<double>(n_cont) / (2.0 * static_cast<double>(n_alt));
}

} // namespace tickopt
