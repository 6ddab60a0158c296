#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "periodic_harris/sde.hpp"
#include "periodic_harris/spikes.hpp"

using namespace periodic_harris;

namespace {

Point cir_start() {
  Point x = attainable_point(ModelSpec::cir());
  return x;
}

struct MeanSe {
  double mean;
  double se;
};

MeanSe mean_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace

TEST(SimConfig, Validation) {
  const auto cir = ModelSpec::cir();
  SimConfig c = default_sim_config(cir);
  EXPECT_EQ(c.scheme, Scheme::CirFullTruncation);
  EXPECT_NO_THROW(c.validate(cir));
  c.dt = 0.0;
  EXPECT_THROW(c.validate(cir), ConfigError);
  c.dt = 0.01;
  c.scheme = Scheme::EulerMaruyama;
  EXPECT_THROW(c.validate(cir), ConfigError);
  EXPECT_THROW(Stepper(cir, {0, 0.3, 0.05, 0.6, -1.0}, 0.0, 0.01, Scheme::CirFullTruncation), DomainError);
}

TEST(SimulatePath, DeterministicAndSeedSensitive) {
  const auto spec = ModelSpec::cir();
  SimConfig c = default_sim_config(spec);
  c.horizon = 50.0;
  c.seed = 7;
  const auto a = simulate_path(spec, cir_start(), 0.0, c);
  const auto b = simulate_path(spec, cir_start(), 0.0, c);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(a.size(), a.noise.size() + 1);
  EXPECT_EQ(0, std::memcmp(a.states.data(), b.states.data(), a.states.size() * sizeof(Point)));
  c.seed = 8;
  const auto d = simulate_path(spec, cir_start(), 0.0, c);
  EXPECT_NE(a.states.back()[4], d.states.back()[4]);
}

TEST(SimulatePath, ZeroNoiseOuEquilibriumIsStationary) {
  const auto spec = ModelSpec::ou(Signal::constant(0.0, 10.0));
  Point x = attainable_point(spec);
  SimConfig c = default_sim_config(spec);
  c.horizon = 10.0;
  const std::vector<double> zeros(c.steps(), 0.0);
  const auto path = simulate_path(spec, x, 0.0, c, zeros);
  for (const auto& s : path.states) EXPECT_LT(distance(s, x, 5), 1e-6);
}

TEST(SimulatePath, RecordEveryThinsTheOutput) {
  const auto spec = ModelSpec::ou();
  SimConfig c = default_sim_config(spec);
  c.horizon = 10.0;
  c.record_every = 10;
  const auto thin = simulate_path(spec, attainable_point(spec), 0.0, c);
  c.record_every = 1;
  const auto full = simulate_path(spec, attainable_point(spec), 0.0, c);
  ASSERT_EQ(thin.size(), 101u);
  EXPECT_DOUBLE_EQ(thin.dt, 0.1);
  for (std::size_t i = 0; i < thin.size(); ++i) EXPECT_EQ(thin.states[i][0], full.states[10 * i][0]);
  double acc = 0.0;
  for (std::size_t i = 0; i < 10; ++i) acc += full.noise[i];
  EXPECT_NEAR(thin.noise[0], acc, 1e-15);
}

TEST(SimulatePath, GatesStayInUnitInterval) {
  const auto spec = ModelSpec::ou();
  SimConfig c = default_sim_config(spec);
  c.horizon = 2000.0;
  const auto path = simulate_path(spec, attainable_point(spec), 0.0, c);
  for (const auto& s : path.states)
    for (int j = 1; j <= 3; ++j) {
      EXPECT_GE(s[static_cast<std::size_t>(j)], 0.0);
      EXPECT_LE(s[static_cast<std::size_t>(j)], 1.0);
    }
  EXPECT_LT(static_cast<double>(path.counters.clamps), 1e-5 * static_cast<double>(path.counters.steps));
}

TEST(ToyClosedForm, Limits) {
  const auto m0 = toy_closed_form(1.0, 2.5, 0.0);
  EXPECT_DOUBLE_EQ(m0.mean, 2.5);
  EXPECT_DOUBLE_EQ(m0.variance, 0.0);
  const auto free = toy_closed_form(0.0, 2.5, 3.0);
  EXPECT_DOUBLE_EQ(free.mean, 2.5);
  EXPECT_NEAR(free.variance, 3.0, 1e-12);
  const auto one = toy_closed_form(1.0, 2.0, 1.0);
  EXPECT_NEAR(one.mean, 2.0 * std::exp(-0.5), 1e-14);
  EXPECT_NEAR(toy_integrated_rate(1.0, 1.0), 0.5, 1e-15);
  EXPECT_THROW(toy_closed_form(1.0, 1.0, -1.0), DomainError);
}

TEST(ToyClosedForm, VarianceMatchesQuadratureByOtherMeans) {
  // int_0^1 e^{-2(S(1)-S(r))} dr with a plain composite Simpson rule
  const double c = 1.7;
  const int n = 20000;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double r = static_cast<double>(i) / n;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * std::exp(-2.0 * (toy_integrated_rate(c, 1.0) - toy_integrated_rate(c, r)));
  }
  s /= 3.0 * n;
  EXPECT_NEAR(toy_closed_form(c, 1.0, 1.0).variance, s, 1e-10);
}

TEST(ToyMonteCarlo, MeanAndVarianceOfFirstCoordinate) {
  const auto spec = ModelSpec::toy(1.0);
  SimConfig c = default_sim_config(spec);
  c.horizon = 1.0;
  c.dt = 0.001;
  c.seed = 11;
  const auto xs = terminal_states(spec, {2.0, 1.0}, 0.0, c, 10000);
  std::vector<double> xi;
  for (const auto& x : xs) xi.push_back(x[0]);
  const auto [m, se] = mean_se(xi);
  const auto cf = toy_closed_form(1.0, 2.0, 1.0);
  EXPECT_LT(std::abs(m - cf.mean), 3.0 * se);
  double var = 0.0;
  for (double v : xi) var += (v - m) * (v - m);
  var /= static_cast<double>(xi.size() - 1);
  // sample variance of a Gaussian has relative sd sqrt(2/(n-1))
  EXPECT_LT(std::abs(var - cf.variance), 4.0 * cf.variance * std::sqrt(2.0 / 9999.0));
}

TEST(ToyMonteCarlo, SecondCoordinateMeanAgainstClosedFormAndFineGrid) {
  const auto spec = ModelSpec::toy(1.0);
  SimConfig coarse = default_sim_config(spec);
  coarse.horizon = 1.0;
  coarse.dt = 0.01;
  coarse.seed = 3;
  SimConfig fine = coarse;
  fine.dt = 0.001;
  fine.seed = 4;
  auto psi = [&](const SimConfig& c) {
    std::vector<double> out;
    for (const auto& x : terminal_states(spec, {0.0, 0.5}, 0.0, c, 20000)) out.push_back(x[1]);
    return mean_se(out);
  };
  const auto a = psi(coarse);
  const auto b = psi(fine);
  const double exact = toy_psi_mean(0.5, 1.0);
  EXPECT_LT(std::abs(b.mean - exact), 3.0 * b.se);
  // the coarse mean carries an O(dt) bias on top of the statistical error
  EXPECT_LT(std::abs(a.mean - b.mean), 3.0 * std::hypot(a.se, b.se) + 0.01);
}

TEST(Skeleton, EmptyAndDecayPerPeriod) {
  const auto spec = ModelSpec::toy(1.0);
  SimConfig c = default_sim_config(spec);
  EXPECT_TRUE(simulate_skeleton(spec, {1.0, 1.0}, 0, c).empty());
  const std::size_t reps = 4000;
  std::vector<std::vector<double>> by_k(3);
  for (std::size_t i = 0; i < reps; ++i) {
    c.stream = i;
    const auto sk = simulate_skeleton(spec, {3.0, 1.0}, 3, c);
    ASSERT_EQ(sk.size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) by_k[k].push_back(sk[k][0]);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    const auto [m, se] = mean_se(by_k[k]);
    EXPECT_LT(std::abs(m - 3.0 * std::exp(-0.5 * static_cast<double>(k + 1))), 3.0 * se + 1e-3) << "k=" << k + 1;
  }
}

TEST(Skeleton, SemigroupIdentityOnXiMarginal) {
  const auto spec = ModelSpec::cir();
  SimConfig c = default_sim_config(spec);
  c.seed = 21;
  const std::size_t n = 10000;
  std::vector<double> two(n), restarted(n);
  parallel_for(n, [&](std::size_t i) {
    SimConfig a = c;
    a.stream = i;
    const auto sk = simulate_skeleton(spec, cir_start(), 2, a);
    two[i] = sk[1][4];
    SimConfig b = c;
    b.stream = n + 2 * i;
    const Point mid = simulate_skeleton(spec, cir_start(), 1, b).back();
    b.stream = n + 2 * i + 1;
    restarted[i] = simulate_skeleton(spec, mid, 1, b).back()[4];
  });
  const double ks = ks_distance(EmpiricalCDF(two), EmpiricalCDF(restarted));
  EXPECT_LT(ks, 1.63 / std::sqrt(n / 2.0));
}

TEST(Resolvent, GeometricMeanOfK) {
  const auto spec = ModelSpec::toy(1.0);
  SimConfig c = default_sim_config(spec);
  c.dt = 0.05;
  const double p = 0.5;
  const auto rs = resolvent_sample(spec, {1.0, 1.0}, p, 100000, c);
  std::vector<double> ks(rs.periods.begin(), rs.periods.end());
  const auto [m, se] = mean_se(ks);
  EXPECT_LT(std::abs(m - 1.0 / (1.0 - p)), 3.0 * se);
  for (auto k : rs.periods) EXPECT_GE(k, 1u);
}

TEST(Resolvent, TinyParameterGivesOnePeriod) {
  const auto spec = ModelSpec::toy(1.0);
  SimConfig c = default_sim_config(spec);
  const auto rs = resolvent_sample(spec, {1.0, 1.0}, 1e-9, 2000, c);
  for (auto k : rs.periods) EXPECT_EQ(k, 1u);
  // and the sample equals the one-period skeleton of the same stream
  SimConfig s = c;
  s.stream = 2 * 5 + 1;
  EXPECT_EQ(rs.states[5][0], simulate_skeleton(spec, {1.0, 1.0}, 1, s).back()[0]);
  EXPECT_THROW(resolvent_sample(spec, {1.0, 1.0}, 1.0, 1, c), ConfigError);
}

TEST(Resolvent, ToyMeanMatchesGeometricSeries) {
  const double cc = 1.0, p = 0.6, xi0 = 2.0;
  const auto spec = ModelSpec::toy(cc);
  SimConfig c = default_sim_config(spec);
  c.seed = 5;
  const auto rs = resolvent_sample(spec, {xi0, 1.0}, p, 20000, c);
  std::vector<double> xi;
  for (const auto& x : rs.states) xi.push_back(x[0]);
  const auto [m, se] = mean_se(xi);
  const double q = std::exp(-cc / 2.0);
  const double expected = xi0 * (1.0 - p) * q / (1.0 - p * q);
  EXPECT_LT(std::abs(m - expected), 3.0 * se + 1e-3);
}

TEST(CirScheme, PositivityAndTruncationRate) {
  const auto spec = ModelSpec::cir();
  SimConfig c = default_sim_config(spec);
  c.horizon = 1000.0;
  c.seed = 99;
  const std::size_t paths = 1000;
  std::vector<std::size_t> zero_steps(paths);
  std::vector<StepCounters> counters(paths);
  parallel_for(paths, [&](std::size_t i) {
    Stepper st(spec, cir_start(), 0.0, c.dt, c.scheme);
    Rng rng(c.seed, i);
    for (std::size_t k = 0; k < c.steps(); ++k) {
      st.step(st.sqrt_dt() * rng.gaussian());
      if (!(st.state()[4] > 0.0)) ++zero_steps[i];
    }
    counters[i] = st.counters();
  });
  StepCounters total;
  for (const auto& k : counters) total += k;
  const double steps = static_cast<double>(total.steps);
  // every step that reports xi <= 0 is a logged truncation, and those are rare
  EXPECT_EQ(std::accumulate(zero_steps.begin(), zero_steps.end(), std::size_t{0}), total.truncations);
  EXPECT_LT(static_cast<double>(total.truncations), 1e-4 * steps);
  EXPECT_LT(static_cast<double>(total.clamps), 1e-5 * steps);
}

TEST(StrongOrder, HalvingDtRoughlyHalvesTheGap) {
  const auto spec = ModelSpec::ou();
  const double horizon = 5.0;
  const double dt = 0.02;
  const int refine = 16;
  const std::size_t paths = 200;
  const Point x0{2.0, 0.35, 0.08, 0.55, 1.0};
  double gap1 = 0.0, gap2 = 0.0;
  for (std::size_t p = 0; p < paths; ++p) {
    Rng rng(77, p);
    const std::size_t nf = static_cast<std::size_t>(std::llround(horizon / dt)) * refine;
    std::vector<double> fine(nf);
    const double sq = std::sqrt(dt / refine);
    for (auto& w : fine) w = sq * rng.gaussian();
    auto coarsen = [&](int factor) {
      std::vector<double> out(nf / static_cast<std::size_t>(factor), 0.0);
      for (std::size_t i = 0; i < nf; ++i) out[i / static_cast<std::size_t>(factor)] += fine[i];
      return out;
    };
    auto run = [&](int factor) {
      SimConfig c = default_sim_config(spec);
      c.dt = dt / refine * factor;
      const auto inc = coarsen(factor);
      return simulate_path(spec, x0, 0.0, c, inc).states.back();
    };
    const Point ref = run(1);
    const Point a = run(refine);
    const Point b = run(refine / 2);
    gap1 += std::pow(distance(a, ref, 5), 2);
    gap2 += std::pow(distance(b, ref, 5), 2);
  }
  const double ratio = std::sqrt(gap1 / gap2);
  EXPECT_GE(ratio, 1.5);
  EXPECT_LE(ratio, 3.0);
}

TEST(Export, CsvLayout) {
  const auto spec = ModelSpec::cir();
  SimConfig c = default_sim_config(spec);
  c.horizon = 0.03;
  const auto path = simulate_path(spec, cir_start(), 0.0, c);
  std::ostringstream os;
  write_path_csv(os, spec, path);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "t,v,n,m,h,xi");
  int rows = 0;
  while (std::getline(is, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5);
    ++rows;
  }
  EXPECT_EQ(rows, 4);
}

TEST(Export, BinaryFrameLayout) {
  const auto spec = ModelSpec::toy(1.0);
  SimConfig c = default_sim_config(spec);
  c.horizon = 0.02;
  const auto path = simulate_path(spec, {1.5, 0.25}, 0.0, c);
  std::ostringstream os;
  write_path_binary(os, path);
  const std::string bytes = os.str();
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 8 + 3 * 3 * 8);
  EXPECT_EQ(bytes.substr(0, 4), "PHPR");
  auto u = [&](std::size_t off, std::size_t len) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < len; ++i) v |= std::uint64_t(static_cast<unsigned char>(bytes[off + i])) << (8 * i);
    return v;
  };
  EXPECT_EQ(u(4, 4), kPathFrameVersion);
  EXPECT_EQ(u(8, 4), 2u);
  EXPECT_EQ(u(12, 8), 3u);
  EXPECT_EQ(std::bit_cast<double>(u(20, 8)), 0.0);
  EXPECT_EQ(std::bit_cast<double>(u(28, 8)), 1.5);
  EXPECT_EQ(std::bit_cast<double>(u(36, 8)), 0.25);
  EXPECT_EQ(std::bit_cast<double>(u(20 + 48, 8)), path.time(2));
}
