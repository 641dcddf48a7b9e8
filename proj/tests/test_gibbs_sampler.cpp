#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fd_oracle.hpp"
#include "macrotex/gibbs.hpp"
#include "macrotex/sampler.hpp"

using namespace macrotex;

namespace {

Image row_image(std::initializer_list<double> values) {
  Image x(1, static_cast<int>(values.size()), 1);
  int i = 0;
  for (double v : values) x.at(0, i++) = v;
  return x;
}

GibbsModel identity_mean_model(double theta, double target, double epsilon) {
  GibbsModel m;
  m.spec = FirstOrderSpec{{nonlinearity("identity")}};
  m.target = {target};
  m.theta = {theta};
  m.epsilon = epsilon;
  return m;
}

// Model with empty feature set: potential reduces to epsilon * ||x||^2.
GibbsModel quadratic_model(double epsilon) {
  GibbsModel m;
  m.spec = FirstOrderSpec{{}};
  m.epsilon = epsilon;
  return m;
}

}  // namespace

TEST_CASE("potential: closed forms") {
  Image x = row_image({1, 2, 3});
  CHECK(potential(identity_mean_model(0.0, 0.0, 0.0), x) == 0.0);
  CHECK(potential(identity_mean_model(1.0, 0.0, 0.0), x) == doctest::Approx(2.0));
  Image y = row_image({3, 4});
  CHECK(potential(identity_mean_model(0.0, 0.0, 1.0), y) == doctest::Approx(25.0));
}

TEST_CASE("potential vanishes at the exemplar when epsilon = 0") {
  RandomStream rs(3);
  Image x0 = white_noise_image(5, 5, 1, 0.2, 1.0, rs);
  GibbsModel m;
  m.spec = FirstOrderSpec{{nonlinearity("identity"), nonlinearity("tanh")}};
  m.target = eval_features(m.spec, x0);
  m.theta = {0.8, -1.3};
  m.epsilon = 0.0;
  CHECK(potential(m, x0) == 0.0);
}

TEST_CASE("potential_gradient") {
  RandomStream rs(4);
  Image x = white_noise_image(4, 4, 1, 0.0, 1.0, rs);

  SUBCASE("zero model gives zero gradient") {
    Image g = potential_gradient(identity_mean_model(0.0, 0.0, 0.0), x);
    for (double v : g.data) CHECK(v == 0.0);
  }
  SUBCASE("epsilon = 1/2 gives exactly x") {
    Image g = potential_gradient(identity_mean_model(0.0, 0.0, 0.5), x);
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(g.data[i] == x.data[i]);
  }
  SUBCASE("matches finite differences of the potential") {
    GibbsModel m;
    m.spec = FirstOrderSpec{{nonlinearity("tanh"), nonlinearity("softplus")}};
    m.target = {0.1, 0.3};
    m.theta = {1.2, -0.7};
    m.epsilon = 0.05;
    Image g = potential_gradient(m, x);
    Image fd(x.height, x.width, x.channels);
    const double h = 1e-5;
    Image probe = x;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      probe.data[i] = x.data[i] + h;
      const double up = potential(m, probe);
      probe.data[i] = x.data[i] - h;
      const double dn = potential(m, probe);
      probe.data[i] = x.data[i];
      fd.data[i] = (up - dn) / (2 * h);
    }
    CHECK(testing::relative_gradient_error(g, fd) < 1e-4);
  }
}

TEST_CASE("potential is coercive along rays when epsilon > 0") {
  RandomStream rs(6);
  GibbsModel m;
  m.spec = FirstOrderSpec{{nonlinearity("tanh"), nonlinearity("softplus")}};
  m.target = {0.0, 0.5};
  m.theta = {2.0, -3.0};
  m.epsilon = 1e-4;
  for (int ray = 0; ray < 10; ++ray) {
    Image dir = white_noise_image(3, 3, 1, 0.0, 1.0, rs);
    // The sub-linear feature term can dominate at moderate radii; only the
    // eventual growth (where the quadratic takes over) is guaranteed.
    double prev = -1e300;
    for (double r : {1e4, 1e5, 1e6}) {
      Image x = dir;
      for (double& v : x.data) v *= r;
      const double u = potential(m, x);
      CHECK(u > prev);
      prev = u;
    }
    CHECK(prev > 1e4);  // grows beyond any fixed bound
  }
}

TEST_CASE("check_maxent_conditions") {
  RandomStream rs(12);
  Image x0 = white_noise_image(6, 6, 1, 0.5, 0.2, rs);

  SUBCASE("softplus features with epsilon > 0 and full rank pass") {
    GibbsModel m;
    m.spec = FirstOrderSpec{{nonlinearity("identity"), nonlinearity("softplus")}};
    m.target = eval_features(m.spec, x0);
    m.theta = {0.0, 0.0};
    m.epsilon = 0.01;
    auto rep = check_maxent_conditions(m, x0);
    CHECK(rep.overall == Verdict::Pass);
    CHECK(rep.full_row_rank);
  }
  SUBCASE("epsilon = 0 warns about divergence risk") {
    GibbsModel m;
    m.spec = FirstOrderSpec{{nonlinearity("identity")}};
    m.target = {0.5};
    m.theta = {0.0};
    m.epsilon = 0.0;
    auto rep = check_maxent_conditions(m, x0);
    CHECK(rep.overall == Verdict::Warn);
    CHECK(rep.message.find("diverge") != std::string::npos);
  }
  SUBCASE("constant feature map fails the rank condition") {
    GibbsModel m;
    m.spec = FirstOrderSpec{{nonlinearity("one")}};
    m.target = {1.0};
    m.theta = {0.0};
    m.epsilon = 0.01;
    auto rep = check_maxent_conditions(m, x0);
    CHECK(rep.rank_condition == Verdict::Fail);
    CHECK(rep.overall == Verdict::Fail);
  }
}

TEST_CASE("ula_step: pure diffusion when the drift vanishes") {
  RandomStream chain(21), replay(21);
  Image x0 = row_image({0.4, -0.2, 1.1});
  ChainState state(x0);
  const double gamma = 0.03;
  ula_step(identity_mean_model(0.0, 0.0, 0.0), state, gamma, chain);
  for (std::size_t i = 0; i < x0.data.size(); ++i)
    CHECK(state.x.data[i] ==
          doctest::Approx(x0.data[i] + std::sqrt(2 * gamma) * replay.normal())
              .epsilon(1e-15));
}

TEST_CASE("ula_step: linear recursion on the quadratic potential") {
  // potential a||x||^2/2 via epsilon = a/2: x' = (1 - gamma a) x + sqrt(2 gamma) z
  const double a = 1.4, gamma = 0.05;
  RandomStream chain(22), replay(22);
  Image x0 = row_image({1.0, -3.0});
  ChainState state(x0);
  ula_step(quadratic_model(a / 2), state, gamma, chain);
  for (std::size_t i = 0; i < x0.data.size(); ++i)
    CHECK(state.x.data[i] ==
          doctest::Approx((1 - gamma * a) * x0.data[i] +
                          std::sqrt(2 * gamma) * replay.normal())
              .epsilon(1e-15));
}

TEST_CASE("ula_step: diverged state is rejected") {
  ChainState state(row_image({0.0}));
  state.diverged = true;
  RandomStream rs(1);
  CHECK_THROWS_AS(ula_step(quadratic_model(0.5), state, 0.1, rs), state_error);
}

TEST_CASE("run_chain") {
  SUBCASE("steps = 1 equals a single ula_step") {
    RandomStream a(30), b(30);
    ChainState s1(row_image({0.5})), s2(row_image({0.5}));
    GibbsModel m = identity_mean_model(0.3, 0.0, 0.5);
    FeatureVector avg = run_chain(m, s1, 1, 0.05, a);
    s2.reset_batch(m.p());
    ula_step(m, s2, 0.05, b);
    CHECK(s1.x.data == s2.x.data);
    CHECK(avg[0] == s2.batch_average()[0]);
  }
  SUBCASE("standard Gaussian target: ergodic mean near 0") {
    RandomStream rs(31);
    GibbsModel m = identity_mean_model(0.0, 0.0, 0.5);
    ChainState state(row_image({0.0}));
    // correlation time ~ 2/(gamma a) makes the effective sample size ~5e3;
    // 0.06 is about three standard errors of the ergodic average
    FeatureVector avg = run_chain(m, state, 100000, 0.05, rs);
    CHECK(std::fabs(avg[0]) < 0.06);
  }
  SUBCASE("deterministic replay is bitwise identical") {
    GibbsModel m = identity_mean_model(0.2, 0.1, 0.5);
    RandomStream a(32), b(32);
    ChainState s1(row_image({0.3, 0.4})), s2(row_image({0.3, 0.4}));
    FeatureVector avg1 = run_chain(m, s1, 200, 0.05, a);
    FeatureVector avg2 = run_chain(m, s2, 200, 0.05, b);
    CHECK(s1.x.data == s2.x.data);
    CHECK(avg1 == avg2);
  }
}

TEST_CASE("ULA noise increments have covariance 2 gamma Id") {
  const double gamma = 0.07;
  RandomStream rs(40);
  GibbsModel m = quadratic_model(0.0);  // zero drift
  ChainState state(Image(1, 2, 1));
  double s11 = 0.0, s22 = 0.0, s12 = 0.0;
  const int n = 200000;
  Image prev = state.x;
  for (int i = 0; i < n; ++i) {
    prev = state.x;
    ula_step(m, state, gamma, rs);
    const double d1 = state.x.data[0] - prev.data[0];
    const double d2 = state.x.data[1] - prev.data[1];
    s11 += d1 * d1;
    s22 += d2 * d2;
    s12 += d1 * d2;
  }
  CHECK(s11 / n == doctest::Approx(2 * gamma).epsilon(0.02));
  CHECK(s22 / n == doctest::Approx(2 * gamma).epsilon(0.02));
  CHECK(std::fabs(s12 / n) < 0.02 * 2 * gamma);
}

TEST_CASE("ULA stability boundary: gamma = 3/a diverges") {
  const double a = 1.0;
  GibbsModel m = quadratic_model(a / 2);
  RandomStream rs(41);
  ChainState state(row_image({1.0}));
  for (int i = 0; i < 10000 && !state.diverged; ++i)
    ula_step(m, state, 3.0 / a, rs);
  CHECK(state.diverged);
}

TEST_CASE("step schedules") {
  StepSchedule sched;
  sched.delta = StepSequence::power(0.5, 1.0);
  sched.gamma = StepSequence::constant(0.05);
  sched.inner = StepSequence::constant(1);
  CHECK(sched.delta_at(1) == doctest::Approx(0.5));
  CHECK(sched.delta_at(10) == doctest::Approx(0.05));
  CHECK(sched.gamma_at(7) == doctest::Approx(0.05));
  CHECK(sched.inner_at(3) == 1);
  // power family is monotone non-increasing
  for (int n = 1; n < 100; ++n)
    CHECK(sched.delta_at(n + 1) <= sched.delta_at(n));
  CHECK_THROWS_AS(StepSequence::power(1.0, -0.5), std::invalid_argument);
}
