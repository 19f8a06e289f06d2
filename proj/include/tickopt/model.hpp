#pragma once

#include <cmath>

#include "tickopt/error.hpp"
#include "tickopt/zones.hpp"

namespace tickopt {

/// Market and preference constants of the market maker's problem.
/// Defaults are the liquid-asset values used throughout the experiments.
struct ModelParams {
  double sigma = 0.01;      // price / sqrt(s)
  double lambda = 4.0;      // base market-order arrival rate, 1/s
  double kappa = 10.0;      // tick sensitivity of the arrival rate, 1/price
  double phi = 0.005;       // running inventory penalty
  double phi_minus = 0.0;   // extra running penalty on short inventory
  double A = 0.1;           // terminal inventory penalty
  int q_max = 5;            // inventory bound (risk limit and intensity cutoff)
  double T = 40.0;          // horizon, s
  double c = 1.0;           // exchange fee per market order

  void validate() const {
    require(sigma > 0, "model.sigma must be > 0");
    require(lambda >= 0, "model.lambda must be >= 0");
    require(kappa > 0, "model.kappa must be > 0");
    require(phi >= 0, "model.phi must be >= 0");
    require(phi_minus >= 0, "model.phi_minus must be >= 0");
    require(A >= 0, "model.A must be >= 0");
    require(q_max >= 1, "model.q_max must be >= 1");
    require(T > 0, "model.T must be > 0");
    require(c > 0, "model.c must be > 0");
  }
};

/// Arrival rate of the tick-dependent market orders when quoting at full presence.
inline double base_intensity(double alpha, const ModelParams& p) {
  const double ka = p.kappa * alpha;
  return p.lambda / (1.0 + ka * ka);
}

/// Execution intensity on one side; zero once the inventory bound on that side is hit.
inline double intensity(int ell, double alpha, int q, Side side, const ModelParams& p) {
  const bool open = side == Side::ask ? q > -p.q_max : q < p.q_max;
  if (ell == 0 || !open) return 0.0;
  return base_intensity(alpha, p);
}

inline double terminal_value(double S, int q, double A) {
  const double qd = q;
  return qd * (S - A * qd);
}

inline double running_penalty(int q, const ModelParams& p) {
  const double q2 = static_cast<double>(q) * q;
  return -p.phi * q2 - (q < 0 ? p.phi_minus * q2 : 0.0);
}

} // namespace tickopt
