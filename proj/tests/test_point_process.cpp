#include <catch2/catch.hpp>

#include "fcs/point_process.hpp"
#include "test_util.hpp"

using fcs::CellSet;
using fcs::complexd;
using fcs::GeneratorHandle;
using fcs::OutcomeGrid;
using fcs::TestFunction;

namespace {

OutcomeGrid simple_grid(int n_bins, double width = 1.0) {
  OutcomeGrid g;
  for (int b = 0; b <= n_bins; ++b) g.edges.push_back(b * width);
  g.detectors = {"d"};
  return g;
}

// Joint distribution over two regions by a two-dimensional inversion of the
// characteristic function.
std::vector<std::vector<double>> joint_distribution(const GeneratorHandle& h, const CellSet& y1,
                                                    const CellSet& y2, int n_max) {
  const int n = 4 * (n_max + 1);
  std::vector<std::vector<double>> p(n_max + 1, std::vector<double>(n_max + 1, 0.0));
  std::vector<std::vector<complexd>> samples(n, std::vector<complexd>(n));
  for (int k1 = 0; k1 < n; ++k1)
    for (int k2 = 0; k2 < n; ++k2) {
      const double l1 = 2.0 * fcs::pi * k1 / n;
      const double l2 = 2.0 * fcs::pi * k2 / n;
      samples[k1][k2] = fcs::joint_count_cf(h, {y1, y2}, {l1, l2});
    }
  for (int n1 = 0; n1 <= n_max; ++n1)
    for (int n2 = 0; n2 <= n_max; ++n2) {
      complexd acc = 0.0;
      for (int k1 = 0; k1 < n; ++k1)
        for (int k2 = 0; k2 < n; ++k2)
          acc += samples[k1][k2] *
                 std::exp(complexd(0.0, -2.0 * fcs::pi * (k1 * n1 + k2 * n2) / n));
      p[n1][n2] = acc.real() / (n * n);
    }
  return p;
}

}  // namespace

TEST_CASE("Poisson generator evaluates the exponential formula") {
  auto h = fcs::poisson_generator(simple_grid(1), {1.0});
  TestFunction f = TestFunction::zero(h.grid());
  CHECK(std::abs(h.characteristic(f) - 1.0) < 1e-15);
  f.set(0, fcs::pi);
  CHECK(std::abs(h.characteristic(f) - std::exp(-2.0)) < 1e-14);
}

TEST_CASE("Poisson number distribution on a unit-intensity region") {
  auto h = fcs::poisson_generator(simple_grid(2), {0.4, 0.6});
  const auto dist = fcs::number_distribution(h, {0, 1}, 20);
  double factorial = 1.0;
  for (int n = 0; n <= 10; ++n) {
    if (n > 0) factorial *= n;
    CHECK(dist.probs[n] == Approx(std::exp(-1.0) / factorial).margin(1e-12));
  }
  CHECK(dist.tail_bound < 1e-12);
}

TEST_CASE("zero process puts all mass at zero counts") {
  auto h = GeneratorHandle::custom(simple_grid(2), [](const TestFunction&) {
    return complexd(1.0, 0.0);
  });
  const auto dist = fcs::number_distribution(h, {0, 1}, 5);
  CHECK(dist.probs[0] == Approx(1.0));
  for (int n = 1; n <= 5; ++n) CHECK(std::abs(dist.probs[n]) < 1e-12);
}

TEST_CASE("void probabilities from the factorial gauge") {
  auto h = fcs::poisson_generator(simple_grid(2), {2.0, 1.0});
  CHECK(fcs::void_probability(h, {}) == Approx(1.0));
  CHECK(fcs::void_probability(h, {0}) == Approx(std::exp(-2.0)));
}

TEST_CASE("joint counting characteristic function over disjoint regions") {
  auto h = fcs::poisson_generator(simple_grid(2), {1.0, 1.0});
  CHECK(std::abs(fcs::joint_count_cf(h, {{0}, {1}}, {0.0, 0.0}) - 1.0) < 1e-15);

  TestFunction f = TestFunction::zero(h.grid());
  f.set(0, 0.37);
  CHECK(std::abs(fcs::joint_count_cf(h, {{0}}, {0.37}) - h.characteristic(f)) < 1e-15);

  CHECK(std::abs(fcs::joint_count_cf(h, {{0}, {1}}, {fcs::pi, fcs::pi}) - std::exp(-4.0)) <
        1e-14);

  CHECK_THROWS_AS(fcs::joint_count_cf(h, {{0}, {0}}, {1.0, 1.0}), fcs::Error);
}

TEST_CASE("counts in disjoint regions of a Poisson process are independent") {
  auto h = fcs::poisson_generator(simple_grid(2), {0.7, 1.3});
  const auto joint = joint_distribution(h, {0}, {1}, 6);
  const auto d1 = fcs::number_distribution(h, {0}, 12);
  const auto d2 = fcs::number_distribution(h, {1}, 12);
  for (int n1 = 0; n1 <= 6; ++n1)
    for (int n2 = 0; n2 <= 6; ++n2)
      CHECK(joint[n1][n2] == Approx(d1.probs[n1] * d2.probs[n2]).margin(1e-10));
}

TEST_CASE("gauge transformation links the two generating functionals") {
  auto gen = testutil::rng(77);
  auto h = fcs::poisson_generator(simple_grid(3), {0.5, 1.1, 0.2});
  std::uniform_real_distribution<double> ud(-2.0, 2.0);
  for (int trial = 0; trial < 25; ++trial) {
    TestFunction f = TestFunction::zero(h.grid());
    for (int c = 0; c < 3; ++c) f.set(c, ud(gen));
    TestFunction g = TestFunction::zero(h.grid());
    for (int c = 0; c < 3; ++c)
      g.set(c, std::exp(complexd(0, 1) * f.values[c]) - 1.0);
    CHECK(std::abs(h.characteristic(f) - h.factorial(g)) < 1e-10);
  }
}

TEST_CASE("heavy tails at the truncation are reported, not hidden") {
  auto h = fcs::poisson_generator(simple_grid(1), {5.0});
  CHECK_THROWS_AS(fcs::number_distribution(h, {0}, 5), fcs::Error);
  bool code_ok = false;
  try {
    fcs::number_distribution(h, {0}, 5);
  } catch (const fcs::Error& e) {
    code_ok = e.code() == fcs::errc::non_convergent;
  }
  CHECK(code_ok);
}

TEST_CASE("waiting-time density recovers the exponential law of a Poisson beam") {
  const double rate = 0.8;
  auto p0 = [rate](double t1, double t2) { return std::exp(-rate * std::max(t2 - t1, 0.0)); };
  const double h = 1e-3 / rate;
  for (double tau : {0.0, 0.3, 1.0, 4.0, 10.0}) {
    const double w = fcs::waiting_time_density(p0, 2.0, tau / rate, h);
    CHECK(w == Approx(rate * std::exp(-tau)).epsilon(1e-6));
  }
}

TEST_CASE("waiting-time density recovers the inverse-cube law of a thermal beam") {
  const double rate = 1.3;
  auto p0 = [rate](double t1, double t2) { return 1.0 / (1.0 + rate * std::max(t2 - t1, 0.0)); };
  const double h = 1e-3 / rate;
  for (double tau_scaled : {0.0, 0.5, 2.0, 6.0, 10.0}) {
    const double tau = tau_scaled / rate;
    const double expected = 2.0 * rate / std::pow(1.0 + rate * tau, 3.0);
    CHECK(fcs::waiting_time_density(p0, 0.0, tau, h) == Approx(expected).epsilon(1e-6));
  }
  // zero delay equals twice the rate
  CHECK(fcs::waiting_time_density(p0, 0.0, 0.0, h) == Approx(2.0 * rate).epsilon(1e-6));
}

TEST_CASE("waiting-time density rejects silent and drifting processes") {
  auto silent = [](double, double) { return 1.0; };
  CHECK_THROWS_AS(fcs::waiting_time_density(silent, 0.0, 1.0, 1e-3), fcs::Error);

  auto drifting = [](double t1, double t2) {
    const double m = std::max(t2 - t1, 0.0) * (1.0 + 0.5 * t1);
    return std::exp(-m);
  };
  bool code_ok = false;
  try {
    fcs::waiting_time_density(drifting, 1.0, 1.0, 1e-3);
  } catch (const fcs::Error& e) {
    code_ok = e.code() == fcs::errc::not_stationary;
  }
  CHECK(code_ok);
}

TEST_CASE("count distributions are normalized including the tail") {
  auto h = fcs::poisson_generator(simple_grid(1), {2.5});
  const auto dist = fcs::number_distribution(h, {0}, 25);
  double sum = dist.tail_bound;
  for (double p : dist.probs) {
    CHECK(p >= -1e-12);
    sum += p;
  }
  CHECK(sum == Approx(1.0).margin(1e-9));
}
