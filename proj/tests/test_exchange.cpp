#include "catch_amalgamated.hpp"

#include <sstream>

#include "tickopt/exchange.hpp"

using namespace tickopt;
using Catch::Approx;

namespace {

ModelParams quick() {
  ModelParams p;
  p.T = 5;
  return p;
}

PlatformOptions coarse() {
  PlatformOptions o;
  o.grid.ds = 0.002;
  o.grid.dt = 0.02;
  o.sim.n_paths = 2000;
  o.sim.dt_sim = 0.002;
  return o;
}

} // namespace

TEST_CASE("large-tick floor", "[exchange]") {
  CHECK(large_tick_bounds(0.3, 0.01) == Approx(0.0036));
  CHECK(large_tick_bounds(0.5, 0.01) == Approx(0.01));
  CHECK_THROWS_AS(large_tick_bounds(0.7, 0.01), DomainError);

  ScanSpec s;
  s.mode = ScanMode::grid2d;
  s.alpha_step = 0.0005;
  const auto pts = s.points();
  CHECK(pts.size() == 92 * 92);
  for (const auto& [a, b] : pts) {
    CHECK(make_tick_config(a, b, 0.3, 0.01).large_tick());
    CHECK(a >= large_tick_bounds(0.3, 0.01));
  }
}

TEST_CASE("scan axes", "[exchange]") {
  ScanSpec s;
  const auto xs = s.axis();
  REQUIRE(xs.size() == 92);
  CHECK(xs.front() == 0.0045);
  CHECK(xs.back() == 0.05);
  CHECK(xs[15] == 0.012);

  s.on_grid = true;
  const auto ys = s.axis();
  CHECK(ys.front() == Approx(0.5 / 111));
  CHECK(ys.back() == Approx(0.05));
  CHECK(ys.size() == 102);
  for (double a : ys) CHECK(std::abs(0.5 / a - std::round(0.5 / a)) < 1e-9);
}

TEST_CASE("no orders, no revenue", "[exchange]") {
  ModelParams p = quick();
  p.lambda = 0;
  const PlatformValue v = platform_value(0.01, 0.01, p, Method::pde, coarse());
  CHECK(v.v == 0.0);
}

TEST_CASE("revenue is linear in the fee", "[exchange][property]") {
  const ModelParams p1 = quick();
  ModelParams p3 = p1;
  p3.c = 3;
  for (auto [a, b] : {std::pair{0.01, 0.01}, std::pair{0.0045, 0.025}}) {
    const PlatformValue v1 = platform_value(a, b, p1, Method::pde, coarse());
    const PlatformValue v3 = platform_value(a, b, p3, Method::pde, coarse());
    CHECK(v3.v == 3 * v1.v);
    CHECK(v3.h == v1.h);
  }

  ScanSpec s;
  s.alpha_min = 0.006;
  s.alpha_max = 0.02;
  s.alpha_step = 0.002;
  s.options = coarse();
  const ScanResult r1 = grid_search(s, p1);
  const ScanResult r3 = grid_search(s, p3);
  REQUIRE(r1.argmax_v(0.0));
  CHECK(*r1.argmax_v(0.0) == *r3.argmax_v(0.0));
}

TEST_CASE("fee-flow pde agrees with monte carlo", "[exchange]") {
  const ModelParams p = quick();
  const PlatformValue v = platform_value(0.0075, 0.0125, p, Method::both, coarse());
  CHECK(v.v_pde > 0);
  CHECK(v.agree);
  CHECK(std::abs(v.v_mc - v.v_pde) <= 3 * v.v_mc_se);
}

TEST_CASE("tick swap symmetry at phi_minus = 0", "[exchange][property]") {
  const ModelParams p = quick();
  for (auto [a, b] : {std::pair{0.005, 0.0175}, std::pair{0.0125, 0.025}}) {
    const PlatformValue x = platform_value(a, b, p, Method::pde, coarse());
    const PlatformValue y = platform_value(b, a, p, Method::pde, coarse());
    CHECK(x.h == Approx(y.h).margin(1e-9));
    CHECK(x.v == Approx(y.v).epsilon(1e-6));
    CHECK(x.Na == Approx(y.Nb).epsilon(1e-6));
  }
}

TEST_CASE("revenue is non-increasing in phi_minus", "[exchange][property]") {
  ModelParams p = quick();
  ScanSpec s;
  s.mode = ScanMode::fixed_ask;
  s.fixed_alpha = 0.0045;
  s.alpha_min = 0.005;
  s.alpha_max = 0.045;
  s.alpha_step = 0.01;
  s.phi_minus = {0.0, 0.0005, 0.005};
  s.options = coarse();
  const ScanResult r = grid_search(s, p);
  REQUIRE(r.rows.size() == 15);
  for (std::size_t k = 0; k < r.rows.size(); k += 3) {
    CHECK(r.rows[k + 1].value.v <= r.rows[k].value.v + 1e-10);
    CHECK(r.rows[k + 2].value.v <= r.rows[k + 1].value.v + 1e-10);
    CHECK(r.rows[k + 1].value.h <= r.rows[k].value.h + 1e-10);
    CHECK(r.rows[k + 2].value.h <= r.rows[k + 1].value.h + 1e-10);
  }
}

TEST_CASE("scan bookkeeping", "[exchange]") {
  ScanSpec s;
  s.alpha_min = 0.003;
  s.alpha_max = 0.005;
  s.alpha_step = 0.001;
  s.options = coarse();
  const ScanResult r = grid_search(s, quick());
  REQUIRE(r.rejected.size() == 1);
  CHECK(r.rejected[0].first == 0.003);
  CHECK(r.rows.size() == 2);

  s.threads = 2;
  const ScanResult r2 = grid_search(s, quick());
  for (std::size_t k = 0; k < r.rows.size(); ++k) CHECK(r.rows[k].value.v == r2.rows[k].value.v);

  std::ostringstream os;
  write_scan_csv(os, r);
  CHECK(os.str().rfind("alpha_a,alpha_b,phi_minus,v,v_se,h_mm,Na_mean,Nb_mean\n", 0) == 0);

  s.alpha_max = 0.0035;
  CHECK_THROWS_AS(grid_search(s, quick()), ConfigError);
  CHECK_THROWS_AS(platform_value(0.002, 0.01, quick(), Method::pde, coarse()), ConfigError);
}

TEST_CASE("method names", "[exchange]") {
  CHECK(parse_method("mc") == Method::mc);
  CHECK(parse_method("both") == Method::both);
  CHECK_THROWS_AS(parse_method("x"), ConfigError);
  CHECK(parse_scan_mode("grid2d") == ScanMode::grid2d);
  CHECK_THROWS_AS(parse_scan_mode("diag"), ConfigError);
}
