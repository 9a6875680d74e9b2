#include <catch2/catch.hpp>

#include <sstream>

#include "fcs/quasifree.hpp"
#include "fcs/sampler.hpp"
#include "test_util.hpp"

using fcs::complexd;
using fcs::Matrix;
using fcs::OutcomeGrid;
using fcs::Statistics;

namespace {

OutcomeGrid cells(int n) {
  OutcomeGrid g;
  for (int b = 0; b <= n; ++b) g.edges.push_back(b);
  g.detectors = {"d"};
  return g;
}

// Generating-function inversion of an arbitrary handle, independent of the
// per-eigenvalue convolution route.
std::vector<double> dft_route(const fcs::GeneratorHandle& h, const fcs::CellSet& y, int n_max) {
  const int n_samples = 8 * (n_max + 1);
  std::vector<double> p(n_max + 1, 0.0);
  for (int n = 0; n <= n_max; ++n) {
    complexd acc = 0.0;
    for (int k = 0; k < n_samples; ++k) {
      const complexd z = std::exp(complexd(0.0, 2.0 * fcs::pi * k / n_samples));
      fcs::TestFunction f = fcs::TestFunction::zero(h.grid());
      for (int c : y) f.set(c, z - 1.0);
      acc += h.factorial(f) * std::exp(complexd(0.0, -2.0 * fcs::pi * k * n / n_samples));
    }
    p[n] = acc.real() / n_samples;
  }
  return p;
}

}  // namespace

TEST_CASE("per-eigenvalue convolutions agree with generating-function inversion") {
  auto gen = testutil::rng(707);
  for (Statistics s : {Statistics::bose(), Statistics::fermi(), Statistics::parabose(2),
                       Statistics::parafermi(3), Statistics::boltzmann()}) {
    Matrix w = testutil::random_complex(4, 4, gen);
    w *= 0.7 / fcs::operator_norm(w);
    fcs::QuasiFreeSource src(w, s);
    auto h = fcs::make_quasifree_handle(src, cells(2), {testutil::random_psd(4, gen, 0.5),
                                                        testutil::random_psd(4, gen, 0.5)});
    const auto exact = fcs::number_distribution(h, {0, 1}, 25);
    const auto inverted = dft_route(h, {0, 1}, 12);
    for (int n = 0; n <= 12; ++n) {
      INFO(s.name() << " n = " << n);
      CHECK(exact.probs[n] == Approx(inverted[n]).margin(1e-9));
    }
  }
}

TEST_CASE("mean of the count distribution equals the first factorial moment") {
  auto gen = testutil::rng(711);
  for (Statistics s : {Statistics::bose(), Statistics::fermi(), Statistics::parabose(3)}) {
    Matrix w = testutil::random_complex(5, 5, gen);
    w *= 0.6 / fcs::operator_norm(w);
    fcs::QuasiFreeSource src(w, s);
    const Matrix eff = testutil::random_psd(5, gen, 0.6);
    auto h = fcs::make_quasifree_handle(src, cells(1), {eff});
    const auto dist = fcs::number_distribution(h, {0}, 160);
    const double m1 = fcs::mu_ell(src, {eff}).real();
    CHECK(dist.mean() == Approx(m1).margin(1e-8));
  }
}

TEST_CASE("chi-squared tail probabilities at reference points") {
  CHECK(fcs::chi2_tail(0.0, 5) == Approx(1.0));
  // dof 2: survival exp(-x/2)
  CHECK(fcs::chi2_tail(2.0, 2) == Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(fcs::chi2_tail(10.0, 2) == Approx(std::exp(-5.0)).epsilon(1e-12));
  // dof 1: survival 2 Q(x) with the normal tail
  CHECK(fcs::chi2_tail(1.0, 1) == Approx(0.31731050786291415).epsilon(1e-10));
  CHECK(fcs::chi2_tail(100.0, 3) < 1e-20);
}

TEST_CASE("stream moments of the deterministic generator") {
  fcs::rng::Stream st(424242);
  const int n = 200000;
  double su = 0, suu = 0, sn = 0, snn = 0;
  for (int i = 0; i < n; ++i) {
    const double u = st.uniform();
    su += u;
    suu += u * u;
    const double z = st.normal();
    sn += z;
    snn += z * z;
  }
  CHECK(su / n == Approx(0.5).margin(0.005));
  CHECK(suu / n == Approx(1.0 / 3.0).margin(0.005));
  CHECK(sn / n == Approx(0.0).margin(0.01));
  CHECK(snn / n == Approx(1.0).margin(0.02));

  // chunked product sampler keeps the mean at large intensity
  double sp = 0;
  for (int i = 0; i < 20000; ++i) sp += st.poisson(75.0);
  CHECK(sp / 20000.0 == Approx(75.0).margin(0.5));
}

TEST_CASE("click-train reader rejects malformed input") {
  const std::vector<std::string> detectors = {"d"};
  std::istringstream no_window("0.5\td\n");
  CHECK_THROWS_AS(fcs::read_click_train(no_window, detectors), fcs::Error);
  std::istringstream bad_label("# window 0 1\n0.5\tx\n");
  CHECK_THROWS_AS(fcs::read_click_train(bad_label, detectors), fcs::Error);
  std::istringstream bad_row("# window 0 1\nnot-a-number\td\n");
  CHECK_THROWS_AS(fcs::read_click_train(bad_row, detectors), fcs::Error);
}

TEST_CASE("time-quadrature void profile matches the direct determinant") {
  const auto space = fcs::DirectIntegralSpace::uniform(0.05, 20.0, 200, 2);
  const auto dil = fcs::kijowski_free_1d(space);
  auto gen = testutil::rng(909);
  std::vector<Matrix> blocks;
  for (int i = 0; i < space.n_nodes(); ++i) blocks.push_back(testutil::random_psd(2, gen, 0.7));
  const fcs::StationaryState state(space, std::move(blocks));

  for (Statistics s : {Statistics::bose(), Statistics::fermi(), Statistics::parabose(2)}) {
    const auto src = state.to_source(s);
    const auto fast = fcs::make_void_profile(src, space, dil, dil.labels);
    for (auto [t1, t2] : std::vector<std::pair<double, double>>{{0.0, 0.4}, {0.3, 2.3}}) {
      fcs::OutcomeGrid grid;
      grid.edges = {t1, t2};
      grid.detectors = dil.labels;
      std::vector<complexd> chi(grid.n_cells(), complexd(1.0, 0.0));
      const Matrix eff = fcs::assemble_test_function_effect(space, dil, grid, chi);
      const double direct =
          fcs::det_power(-(src.w.adjoint() * eff * src.w), src.stats).real();
      CHECK(fast(t1, t2) == Approx(direct).margin(1e-11));
    }
    CHECK(fast(1.0, 1.0) == 1.0);
  }
}

TEST_CASE("factored and assembled window determinants coincide") {
  // same source and window evaluated through the plain assembler and the
  // Gram-factored route
  const auto space = fcs::DirectIntegralSpace::uniform(-6.0, 6.0, 241, 1);
  fcs::DilationData dil;
  dil.k_dim = 1;
  for (int i = 0; i < space.n_nodes(); ++i) dil.v.push_back(Matrix::Identity(1, 1));
  dil.povm = {Matrix::Identity(1, 1)};
  dil.labels = {"d"};
  dil.validate(space);

  std::vector<Matrix> blocks;
  for (int i = 0; i < space.n_nodes(); ++i) {
    Matrix b(1, 1);
    b(0, 0) = 0.4 / (space.nodes[i] * space.nodes[i] + 0.3);
    blocks.push_back(b);
  }
  const fcs::StationaryState state(space, std::move(blocks));
  const auto src = state.to_source(Statistics::bose());

  OutcomeGrid grid;
  grid.edges = {0.0, 0.7, 1.5};
  grid.detectors = {"d"};
  auto factored = fcs::make_quasifree_handle(src, space, dil, grid);  // large space: factored

  auto assemble = [&](const std::vector<complexd>& values) {
    return fcs::assemble_test_function_effect(space, dil, grid, values);
  };
  auto plain = fcs::GeneratorHandle::quasifree(grid, src.stats, src.w, assemble);

  auto gen = testutil::rng(31);
  std::uniform_real_distribution<double> ud(-2.0, 2.0);
  for (int trial = 0; trial < 12; ++trial) {
    fcs::TestFunction f = fcs::TestFunction::zero(grid);
    f.set(0, ud(gen));
    f.set(1, ud(gen));
    const complexd a = factored.characteristic(f);
    const complexd b = plain.characteristic(f);
    CHECK(std::abs(a - b) <= 1e-10 * std::abs(a));
  }
  const auto ev_f = factored.kernel_eigenvalues({0, 1});
  const auto ev_p = plain.kernel_eigenvalues({0, 1});
  const double top_f = ev_f[ev_f.size() - 1];
  const double top_p = ev_p[ev_p.size() - 1];
  CHECK(top_f == Approx(top_p).epsilon(1e-10));
  CHECK(fcs::void_probability(factored, {0, 1}) ==
        Approx(fcs::void_probability(plain, {0, 1})).epsilon(1e-10));
}
