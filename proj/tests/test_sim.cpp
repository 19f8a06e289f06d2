#include "catch_amalgamated.hpp"

#include <cmath>

#include "tickopt/hjb.hpp"
#include "tickopt/sim.hpp"

using namespace tickopt;
using Catch::Approx;

namespace {

struct Stepper {
  TickConfig cfg = make_tick_config(0.01, 0.01, 0.3, 0.01);
  ModelParams params;
  std::mt19937_64 rng{7};
  boost::random::normal_distribution<double> normal;
};

} // namespace

TEST_CASE("pairwise sum and estimates", "[sim]") {
  std::vector<double> xs(1000, 0.1);
  CHECK(pairwise_sum(xs) == Approx(100.0).epsilon(1e-15));
  const Estimate e = estimate(std::vector<double>{1, 2, 3, 4});
  CHECK(e.mean == Approx(2.5));
  CHECK(e.se == Approx(std::sqrt(5.0 / 3.0 / 4.0)));
  CHECK(e.n == 4);
}

TEST_CASE("frozen dynamics", "[sim]") {
  Stepper k;
  k.params.sigma = 0;
  MarketState s;
  s.S = 10.5;
  s.ask_index = 1050;
  s.bid_index = 1050;
  s.Q = 2;
  const StepConstants c(k.cfg, k.params, 1e-3);
  const ConstantPolicy none(0);
  for (int n = 0; n < 1000; ++n) step(s, none, k.cfg, k.params, c, k.rng, k.normal);
  CHECK(s.S == 10.5);
  CHECK(s.ask_index == 1050);
  CHECK(s.bid_index == 1050);
  CHECK(s.Q == 2);
  CHECK(s.X == 0);
  CHECK(s.t == Approx(1.0));
}

TEST_CASE("fill frequency matches exponential thinning", "[sim]") {
  Stepper k;
  const double dt = 0.1 / base_intensity(0.01, k.params);
  const StepConstants c(k.cfg, k.params, dt);
  const ConstantPolicy ask_only(1);
  MarketState s;
  s.S = 10.5;
  s.ask_index = 1050;
  s.bid_index = 1050;
  const int N = 1000000;
  std::int64_t fills = 0;
  for (int n = 0; n < N; ++n) {
    s.Q = 0;
    s.S = 10.5;
    s.ask_index = s.bid_index = 1050;
    const auto before = s.N_a;
    step(s, ask_only, k.cfg, k.params, c, k.rng, k.normal);
    fills += s.N_a - before;
  }
  const double p = 1 - std::exp(-0.1);
  const double freq = static_cast<double>(fills) / N;
  CHECK(std::abs(freq - p) <= 3 * std::sqrt(p * (1 - p) / N));
}

TEST_CASE("inventory cutoff blocks fills", "[sim]") {
  Stepper k;
  const StepConstants c(k.cfg, k.params, 0.01);
  const ConstantPolicy both(3);
  MarketState s;
  s.S = 10.5;
  s.ask_index = s.bid_index = 1050;
  s.Q = k.params.q_max;
  for (int n = 0; n < 100000; ++n) {
    s.Q = k.params.q_max;
    step(s, both, k.cfg, k.params, c, k.rng, k.normal);
  }
  CHECK(s.N_b == 0);
  CHECK(s.N_a > 0);
}

TEST_CASE("accounting and domain invariants along a path", "[sim][property]") {
  Stepper k;
  k.cfg = make_tick_config(0.0075, 0.0125, 0.3, 0.01);
  const StepConstants c(k.cfg, k.params, 1e-3);
  const ConstantPolicy both(3);
  MarketState s;
  s.S = 10.5;
  s.ask_index = nearest_index(10.5, k.cfg.alpha_a);
  s.bid_index = nearest_index(10.5, k.cfg.alpha_b);
  double cash = 0;
  for (int n = 0; n < 200000; ++n) {
    const auto na = s.N_a, nb = s.N_b;
    step(s, both, k.cfg, k.params, c, k.rng, k.normal);
    if (s.N_a > na) cash += s.S_a(k.cfg);
    if (s.N_b > nb) cash -= s.S_b(k.cfg);
    REQUIRE(std::abs(s.S - s.S_a(k.cfg)) <= (0.5 + k.cfg.eta_a) * k.cfg.alpha_a + 1e-12);
    REQUIRE(std::abs(s.S - s.S_b(k.cfg)) <= (0.5 + k.cfg.eta_b) * k.cfg.alpha_b + 1e-12);
    REQUIRE(s.Q == static_cast<int>(s.N_b - s.N_a));
    REQUIRE(std::abs(s.Q) <= k.params.q_max);
  }
  CHECK(s.X == cash);
  CHECK(s.N_a > 100);
}

TEST_CASE("zero intensity objective has the closed-form mean", "[sim]") {
  const TickConfig cfg = make_tick_config(0.01, 0.01, 0.3, 0.01);
  ModelParams p;
  p.lambda = 0;
  p.phi_minus = 0.005;
  p.T = 10;
  const ConstantPolicy both(3);
  for (int q0 : {2, -2, 0}) {
    SimConfig sc;
    sc.n_paths = 2000;
    sc.dt_sim = 0.01;
    sc.Q0 = q0;
    const SimResult r = run_paths(both, cfg, p, sc);
    const double qd = q0;
    const double exact = qd * 10.5 - p.A * qd * qd - (p.phi + (q0 < 0 ? p.phi_minus : 0)) * qd * qd * p.T;
    if (q0 == 0) CHECK(r.mm_objective.mean == 0.0);
    else CHECK(std::abs(r.mm_objective.mean - exact) <= 3 * r.mm_objective.se);
    CHECK(r.revenue_count.mean == 0.0);
    CHECK(r.revenue_rate.mean == 0.0);
  }
}

TEST_CASE("simulation is deterministic for a seed", "[sim]") {
  const TickConfig cfg = make_tick_config(0.01, 0.01, 0.3, 0.01);
  ModelParams p;
  p.T = 5;
  SimConfig sc;
  sc.n_paths = 1;
  sc.seed = 99;
  const ConstantPolicy both(3);
  const SimResult a = run_paths(both, cfg, p, sc);
  const SimResult b = run_paths(both, cfg, p, sc);
  CHECK(a.paths[0].mm_objective == b.paths[0].mm_objective);
  CHECK(a.paths[0].X_T == b.paths[0].X_T);
  CHECK(a.paths[0].S_T == b.paths[0].S_T);
  CHECK(a.paths[0].N_a == b.paths[0].N_a);

  sc.n_paths = 8;
  sc.threads = 1;
  const SimResult one = run_paths(both, cfg, p, sc);
  sc.threads = 3;
  const SimResult three = run_paths(both, cfg, p, sc);
  for (std::size_t k = 0; k < 8; ++k) CHECK(one.paths[k].mm_objective == three.paths[k].mm_objective);
}

TEST_CASE("exchange revenue estimators", "[sim]") {
  const TickConfig cfg = make_tick_config(0.0075, 0.0125, 0.3, 0.01);
  ModelParams p;
  p.T = 10;
  SimConfig sc;
  sc.n_paths = 400;
  sc.dt_sim = 0.005;

  const SimResult none = run_paths(ConstantPolicy(0), cfg, p, sc);
  CHECK(exchange_revenue_estimators(none).counting.mean == 0.0);
  CHECK(exchange_revenue_estimators(none).rate.mean == 0.0);

  const StateGrid g = build_grid(cfg, p, GridSpec{10.5, 0.002, 5.0, TimeScheme::imex, 0.02, 0.5});
  const Solution sol = solve(cfg, p, g);
  const GridPolicy policy(g, sol.policy);
  const SimResult r = run_paths(policy, cfg, p, sc);
  const RevenueEstimates e = exchange_revenue_estimators(r);
  CHECK(std::abs(e.counting.mean - e.rate.mean) <= 3 * std::hypot(e.counting.se, e.rate.se));

  ModelParams p2 = p;
  p2.c = 2;
  const SimResult r2 = run_paths(policy, cfg, p2, sc);
  CHECK(r2.revenue_count.mean == 2 * r.revenue_count.mean);
  CHECK(r2.revenue_rate.mean == 2 * r.revenue_rate.mean);
}

TEST_CASE("grid policy reproduces the stored controls on nodes", "[sim]") {
  const TickConfig cfg = make_tick_config(0.0075, 0.0125, 0.3, 0.01);
  ModelParams p;
  p.T = 2;
  const StateGrid g = build_grid(cfg, p, GridSpec{10.5, 0.002, 5.0, TimeScheme::imex, 0.02, 0.5});
  const Solution sol = solve(cfg, p, g);
  const GridPolicy policy(g, sol.policy);
  std::size_t checked = 0;
  for (std::size_t m = 0; m < g.steps; m += 13)
    for (std::size_t n = 1; n + 1 < g.node_count(); n += 3)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          if (!g.pde_cell(n, a, b)) continue;
          for (int q = -p.q_max; q <= p.q_max; ++q) {
            MarketState s;
            s.t = g.time(m) + 0.25 * g.dt;
            s.S = g.nodes[n];
            s.ask_index = g.ask.fair_index(n, a);
            s.bid_index = g.bid.fair_index(n, b);
            s.Q = q;
            CHECK(policy.controls(s) == sol.policy.at(m + 1, g.index(n, a, b, q)));
            ++checked;
          }
        }
  CHECK(checked > 100);

  MarketState outside;
  outside.S = g.nodes.back() + 1;
  outside.ask_index = nearest_index(outside.S, cfg.alpha_a);
  outside.bid_index = nearest_index(outside.S, cfg.alpha_b);
  CHECK(policy.controls(outside) == -1);
}

TEST_CASE("eta is recovered from a simulated price-change log", "[sim]") {
  const TickConfig cfg = make_tick_config(0.01, 0.01, 0.3, 0.01);
  ModelParams p;
  p.T = 8000;
  SimConfig sc;
  sc.n_paths = 1;
  sc.dt_sim = 1e-4;
  sc.log_changes = true;
  const SimResult r = run_paths(ConstantPolicy(0), cfg, p, sc);
  std::vector<int> dirs;
  for (const auto& c : r.change_log)
    if (c.side == Side::ask) dirs.push_back(c.direction);
  REQUIRE(dirs.size() >= 10000);
  const auto counts = count_alternations_continuations(dirs);
  REQUIRE(counts);
  const auto eta = estimate_eta(counts->n_cont, counts->n_alt);
  REQUIRE(eta);
  CHECK(std::abs(*eta - 0.3) <= 0.02);
}
