#include "catch_amalgamated.hpp"

#include <chrono>

#include "tickopt/oracle.hpp"

using namespace tickopt;
using Catch::Approx;

TEST_CASE("certification lattice: solver equals oracle", "[oracle]") {
  const auto t0 = std::chrono::steady_clock::now();
  const CertificationCase c = certification_case();
  const StateGrid g = build_grid(c.cfg, c.params, c.grid);
  REQUIRE(g.node_count() <= LatticeSpec::kMaxNodes);
  REQUIRE(g.steps <= LatticeSpec::kMaxSteps);
  SolveOptions o;
  o.keep_all_values = true;
  const Solution sol = solve(c.cfg, c.params, g, o);
  const OracleTable table = oracle_value(LatticeSpec::from_grid(g), c.cfg, c.params);
  const Discrepancy d = compare(table, g, sol.values);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(d.compared > 100000);
  CHECK(d.max_abs <= 1e-8);
  CHECK(secs < 30);

  SECTION("oracle controls agree wherever the margin is clear") {
    std::size_t checked = 0;
    for (std::size_t k = 0; k < sol.values.times.size(); k += 5) {
      const std::size_t m = sol.values.times[k];
      const auto& s = sol.values.slices[k];
      for (std::size_t n = 0; n < g.node_count(); ++n)
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) {
            if (!g.pde_cell(n, a, b)) continue;
            for (int q = -g.q_max; q <= g.q_max; ++q) {
              const double h = s[g.index(n, a, b, q)];
              const Controls mine = optimal_controls(g, s, n, a, b, q);
              const Controls ref = oracle_controls(table, c.cfg, m, n, g.ask.fair_index(n, a), g.bid.fair_index(n, b), q);
              if (q > -g.q_max && std::abs(g.ask.fair_price(n, a) + s[g.index(n, a, b, q - 1)] - h) > 1e-9) {
                CHECK(mine.ell_a == ref.ell_a);
                ++checked;
              }
              if (q < g.q_max && std::abs(-g.bid.fair_price(n, b) + s[g.index(n, a, b, q + 1)] - h) > 1e-9) {
                CHECK(mine.ell_b == ref.ell_b);
                ++checked;
              }
            }
          }
    }
    CHECK(checked > 1000);
  }

  SECTION("perturbing one solver value is reported exactly") {
    ValueGrid v = sol.values;
    const std::size_t k = v.times.size() / 2;
    const std::size_t n = g.node_count() / 2;
    int a = 0;
    while (!g.admissible_cell(n, a, 0)) ++a;
    v.slices[k][g.index(n, a, 0, 1)] += 1e-6;
    const Discrepancy dp = compare(table, g, v);
    CHECK(dp.max_abs == Approx(1e-6).margin(1e-12));
    CHECK(dp.time == v.times[k]);
    CHECK(dp.S == g.nodes[n]);
    CHECK(dp.q == 1);
  }
}

TEST_CASE("oracle with zero intensity is the closed form", "[oracle]") {
  CertificationCase c = certification_case();
  c.params.lambda = 0;
  const StateGrid g = build_grid(c.cfg, c.params, c.grid);
  const OracleTable table = oracle_value(LatticeSpec::from_grid(g), c.cfg, c.params);
  double worst = 0;
  for (std::size_t m = 0; m <= g.steps; m += 10)
    for (const auto& [key, values] : table.slice(m)) {
      const double S = g.nodes[std::get<0>(key)];
      const double t = g.time(m);
      for (int q = -g.q_max; q <= g.q_max; ++q) {
        const double qd = q;
        const double exact = qd * S - c.params.A * qd * qd -
                             (c.params.phi + (q < 0 ? c.params.phi_minus : 0)) * qd * qd * (c.params.T - t);
        worst = std::max(worst, std::abs(values[static_cast<std::size_t>(q + g.q_max)] - exact));
      }
    }
  CHECK(worst <= 1e-10);
}

TEST_CASE("one-period lattice by hand", "[oracle]") {
  TickConfig cfg = make_tick_config(0.01, 0.01, 0.3, 0.01);
  ModelParams p;
  p.q_max = 1;
  p.A = 0;
  p.phi = 0;
  p.T = 0.001;
  LatticeSpec spec;
  spec.nodes = {10.495, 10.5, 10.505, 10.51, 10.515};
  spec.dt = 0.001;
  spec.steps = 1;
  spec.q_max = 1;
  const OracleTable t = oracle_value(spec, cfg, p);
  const double l = base_intensity(0.01, p) * spec.dt;
  CHECK(t.value(0, 2, 1050, 1050, 0) == Approx(l * 0.005).margin(1e-15));
  CHECK(t.value(0, 2, 1051, 1050, 0) == Approx(l * 0.010).margin(1e-15));
  CHECK(t.value(0, 2, 1051, 1051, 0) == Approx(l * 0.005).margin(1e-15));
  CHECK(t.value(0, 2, 1050, 1051, 0) == Approx(0.0).margin(1e-15));
  // q = 1 cannot buy; selling at 10.51 gains S^a - S.
  CHECK(t.value(0, 2, 1051, 1050, 1) == Approx(10.505 + l * 0.005).margin(1e-12));
}

TEST_CASE("oracle value is non-increasing in phi_minus", "[oracle][property]") {
  CertificationCase c = certification_case();
  c.params.T = 0.5;
  const StateGrid g = build_grid(c.cfg, c.params, c.grid);
  std::vector<OracleTable> tables;
  for (double f : {0.0, 0.0005, 0.005}) {
    c.params.phi_minus = f;
    tables.push_back(oracle_value(LatticeSpec::from_grid(g), c.cfg, c.params));
  }
  for (std::size_t k = 1; k < tables.size(); ++k)
    for (const auto& [key, values] : tables[k].slice(0)) {
      const auto& prev = tables[k - 1].slice(0).at(key);
      for (std::size_t e = 0; e < values.size(); ++e) REQUIRE(values[e] <= prev[e] + 1e-12);
    }
}

TEST_CASE("lattice limits", "[oracle]") {
  LatticeSpec spec;
  spec.nodes.resize(201);
  for (std::size_t n = 0; n < spec.nodes.size(); ++n) spec.nodes[n] = 10 + 0.002 * static_cast<double>(n);
  spec.dt = 0.01;
  spec.steps = 10;
  CHECK_THROWS_AS(spec.validate(0.01), ConfigError);
  spec.nodes.resize(100);
  CHECK_NOTHROW(spec.validate(0.01));
  spec.steps = 401;
  CHECK_THROWS_AS(spec.validate(0.01), ConfigError);
  spec.steps = 10;
  spec.q_max = 3;
  CHECK_THROWS_AS(spec.validate(0.01), ConfigError);
  spec.q_max = 2;
  spec.dt = 1.0;
  CHECK_THROWS_AS(spec.validate(0.01), ConfigError);
}
