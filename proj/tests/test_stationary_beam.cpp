#include <catch2/catch.hpp>

#include "fcs/stationary_beam.hpp"
#include "test_util.hpp"

using fcs::complexd;
using fcs::DilationData;
using fcs::DirectIntegralSpace;
using fcs::Matrix;
using fcs::OutcomeGrid;
using fcs::StationaryState;
using fcs::Statistics;

namespace {

DilationData scalar_dilation(const DirectIntegralSpace& space) {
  DilationData dil;
  dil.k_dim = 1;
  for (int i = 0; i < space.n_nodes(); ++i) dil.v.push_back(Matrix::Identity(1, 1));
  dil.povm = {Matrix::Identity(1, 1)};
  dil.labels = {"d"};
  dil.validate(space);
  return dil;
}

// Scalar Lorentzian beam profile on a wide symmetric grid.
StationaryState lorentzian_state(const DirectIntegralSpace& space, double e0, double beta,
                                 double amp) {
  std::vector<Matrix> blocks;
  for (int i = 0; i < space.n_nodes(); ++i) {
    Matrix b(1, 1);
    const double de = space.nodes[i] - e0;
    b(0, 0) = amp / (de * de + beta * beta);
    blocks.push_back(b);
  }
  return StationaryState(space, std::move(blocks));
}

OutcomeGrid window_grid(double t1, double t2, int bins = 1) {
  OutcomeGrid g;
  for (int b = 0; b <= bins; ++b) g.edges.push_back(t1 + (t2 - t1) * b / bins);
  g.detectors = {"right", "left"};
  return g;
}

OutcomeGrid scalar_window(double t1, double t2) {
  OutcomeGrid g;
  g.edges = {t1, t2};
  g.detectors = {"d"};
  return g;
}

// Wide fine grid so that truncation tails and periodization aliases stay
// below the 1e-4 oracle tolerance.
const DirectIntegralSpace& wide_line_space() {
  static const DirectIntegralSpace space = DirectIntegralSpace::uniform(-6400.0, 6400.0, 85335, 1);
  return space;
}

}  // namespace

TEST_CASE("plane-wave beam has rate kappa/(2 pi) at the matching detector") {
  const auto space = DirectIntegralSpace::uniform_rectangle(0.5, 1.5, 9, 2);
  const auto dil = fcs::kijowski_free_1d(space);
  const double kappa = 2.0 * fcs::pi;
  const auto state = fcs::plane_wave_state(space, 4, kappa, 0);

  CHECK(state.rate() == Approx(kappa / (2.0 * fcs::pi)).epsilon(1e-12));

  const auto s = fcs::s_kernel(state, dil);
  CHECK(s.s0().trace().real() == Approx(state.rate()).epsilon(1e-12));
  CHECK(fcs::detector_rate(s, dil.povm[0]) == Approx(kappa / (2.0 * fcs::pi)).epsilon(1e-12));
  CHECK(fcs::detector_rate(s, dil.povm[1]) == Approx(0.0).margin(1e-15));

  // a negative-momentum beam never reaches the right-going detector
  const auto left_state = fcs::plane_wave_state(space, 4, kappa, 1);
  const auto sl = fcs::s_kernel(left_state, dil);
  CHECK(fcs::detector_rate(sl, dil.povm[0]) == Approx(0.0).margin(1e-15));

  // the completed POVM rate never exceeds the beam rate
  CHECK(fcs::detector_rate(s, Matrix::Identity(2, 2)) <= state.rate() * (1.0 + 1e-12));

  // void probability of a window of length ell is 1/(1 + gamma ell)
  const double ell = 2.5;
  const auto src = state.to_source(Statistics::bose());
  auto handle = fcs::make_quasifree_handle(src, space, dil, window_grid(0.0, ell));
  CHECK(fcs::void_probability(handle, {0, 1}) == Approx(1.0 / (1.0 + ell)).margin(1e-12));
}

TEST_CASE("single-node kernels have constant modulus in time") {
  const auto space = DirectIntegralSpace::uniform_rectangle(0.5, 1.5, 5, 2);
  const auto dil = fcs::kijowski_free_1d(space);
  const auto state = fcs::plane_wave_state(space, 2, 3.0, 0);
  const auto s = fcs::s_kernel(state, dil);
  const double m0 = s.at(0.0).norm();
  for (double t : {0.3, 1.7, 5.0}) CHECK(s.at(t).norm() == Approx(m0).epsilon(1e-12));
}

TEST_CASE("Lorentzian spectral density gives exponentially decaying correlations") {
  const double beta = 0.5, e0 = 0.0, amp = 0.37;
  const auto& space = wide_line_space();
  const auto dil = scalar_dilation(space);
  const auto state = lorentzian_state(space, e0, beta, amp);
  const auto s = fcs::s_kernel(state, dil);
  for (double t : {0.0, 1.0, 3.0, 6.0, 10.0}) {
    const complexd expected = (amp / (2.0 * beta)) * std::exp(complexd(0.0, e0 * t) - beta * t);
    CHECK(std::abs(s.at(t)(0, 0) - expected) < 1e-4 * std::abs(expected));
  }
}

TEST_CASE("evaluation beyond the grid horizon is refused") {
  const auto space = DirectIntegralSpace::uniform_rectangle(-5.0, 5.0, 11, 1);
  const auto dil = scalar_dilation(space);
  const auto state = lorentzian_state(space, 0.0, 1.0, 0.2);
  const auto s = fcs::s_kernel(state, dil);
  bool hit = false;
  try {
    s.at(1.5 * s.horizon());
  } catch (const fcs::Error& e) {
    hit = e.code() == fcs::errc::alias_risk;
  }
  CHECK(hit);
}

TEST_CASE("two-time correlations: thermal pile-up, Boltzmann flatness, decay to one") {
  const double beta = 0.5;
  const auto& space = wide_line_space();
  const auto dil = scalar_dilation(space);
  const auto state = lorentzian_state(space, 0.0, beta, 0.3);
  const auto s = fcs::s_kernel(state, dil);
  const Matrix g = dil.povm[0];

  CHECK(fcs::g2_xy(s, g, g, 0.0, Statistics::bose()) == Approx(2.0).epsilon(1e-10));
  CHECK(fcs::g2_xy(s, g, g, 1.3, Statistics::boltzmann()) == Approx(1.0));
  CHECK(fcs::g2_xy(s, g, g, 12.0, Statistics::bose()) == Approx(1.0).margin(1e-5));
  // exponential profile at intermediate delays
  for (double t : {1.0, 2.5, 5.0})
    CHECK(fcs::g2_xy(s, g, g, t, Statistics::bose()) ==
          Approx(1.0 + std::exp(-2.0 * beta * t)).margin(3e-4));
}

TEST_CASE("sign law of pair correlations for random beams") {
  auto gen = testutil::rng(131);
  const auto space = DirectIntegralSpace::uniform_rectangle(0.5, 2.5, 6, 2);
  const auto dil = fcs::kijowski_free_1d(space);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Matrix> blocks;
    for (int i = 0; i < space.n_nodes(); ++i) blocks.push_back(testutil::random_psd(2, gen, 0.9 * ud(gen) + 0.05));
    const StationaryState state(space, std::move(blocks));
    const auto s = fcs::s_kernel(state, dil);
    const double tau = 3.0 * ud(gen);
    const double gb = fcs::g2_xy(s, dil.povm[0], dil.povm[1], tau, Statistics::bose());
    const double gf = fcs::g2_xy(s, dil.povm[0], dil.povm[1], tau, Statistics::fermi());
    CHECK(gb >= 1.0 - 1e-10);
    CHECK(gf <= 1.0 + 1e-10);
  }
}

TEST_CASE("local trace bound: zero function, rank-one saturation, random states") {
  const auto space = DirectIntegralSpace::uniform_rectangle(0.5, 1.5, 9, 2);
  const auto dil = fcs::kijowski_free_1d(space);
  const auto grid = window_grid(0.0, 2.0);

  const auto state = fcs::plane_wave_state(space, 4, 2.0 * fcs::pi, 0);
  std::vector<complexd> zero(grid.n_cells(), complexd(0.0, 0.0));
  const auto z = fcs::local_trace_bound_check(state, dil, grid, zero, 0.0, 2.0);
  CHECK(z.lhs == Approx(0.0).margin(1e-15));
  CHECK(z.rhs == Approx(0.0).margin(1e-15));

  // indicator over both detectors saturates the bound for a plane wave
  std::vector<complexd> chi(grid.n_cells(), complexd(1.0, 0.0));
  const auto r = fcs::local_trace_bound_check(state, dil, grid, chi, 0.0, 2.0);
  CHECK(r.lhs == Approx(r.rhs).epsilon(1e-9));
  CHECK(r.rhs == Approx(state.rate() * 2.0).epsilon(1e-12));

  auto gen = testutil::rng(141);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Matrix> blocks;
    for (int i = 0; i < space.n_nodes(); ++i) blocks.push_back(testutil::random_psd(2, gen, 0.8));
    const StationaryState rnd(space, std::move(blocks));
    const auto sides = fcs::local_trace_bound_check(rnd, dil, grid, chi, 0.0, 2.0);
    CHECK(sides.lhs <= sides.rhs * (1.0 + 1e-6));
    CHECK(sides.rhs == Approx(rnd.rate() * 2.0).epsilon(1e-12));
  }
}

TEST_CASE("window statistics are invariant under rigid time shifts") {
  const auto space = DirectIntegralSpace::uniform(-12.0, 12.0, 241, 1);
  const auto dil = scalar_dilation(space);
  const auto state = lorentzian_state(space, 0.0, 0.5, 0.3);
  const auto src = state.to_source(Statistics::bose());

  const double ell = 1.5;
  std::vector<double> voids;
  for (double t0 : {0.0, 3.7}) {
    auto h = fcs::make_quasifree_handle(src, state.space, dil, scalar_window(t0, t0 + ell));
    voids.push_back(fcs::void_probability(h, {0}));
  }
  CHECK(voids[0] == Approx(voids[1]).margin(1e-8));
}

TEST_CASE("correlation kernel is Hermitian under time reversal") {
  const auto space = DirectIntegralSpace::uniform(-12.0, 12.0, 121, 1);
  const auto dil = scalar_dilation(space);
  const auto state = lorentzian_state(space, 1.0, 0.7, 0.4);
  const auto s = fcs::s_kernel(state, dil);
  for (double t : {0.4, 1.9, 6.2})
    CHECK((s.at(-t) - s.at(t).adjoint()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("detector rates over a complete POVM match the windowed first moment") {
  const auto space = DirectIntegralSpace::uniform_rectangle(0.5, 2.5, 17, 2);
  const auto dil = fcs::kijowski_free_1d(space);
  auto gen = testutil::rng(151);
  std::vector<Matrix> blocks;
  for (int i = 0; i < space.n_nodes(); ++i) blocks.push_back(testutil::random_psd(2, gen, 0.7));
  const StationaryState state(space, std::move(blocks));
  const auto s = fcs::s_kernel(state, dil);

  const double total = fcs::detector_rate(s, dil.povm[0]) + fcs::detector_rate(s, dil.povm[1]);
  CHECK(total == Approx(s.s0().trace().real()).epsilon(1e-12));

  // first factorial moment of the window, per unit time
  const double ell = 0.8;
  const auto grid = window_grid(0.0, ell);
  std::vector<complexd> chi(grid.n_cells(), complexd(1.0, 0.0));
  const Matrix eff = fcs::assemble_test_function_effect(space, dil, grid, chi);
  const auto src = state.to_source(Statistics::bose());
  const double m1 = fcs::mu_ell(src, {eff}).real();
  CHECK(m1 / ell == Approx(total).epsilon(1e-8));
}

TEST_CASE("time truncation reaches the stationary form at the grid horizon") {
  const auto space = DirectIntegralSpace::uniform_rectangle(-6.0, 6.0, 25, 1);
  const auto dil = scalar_dilation(space);
  const auto state = lorentzian_state(space, 0.0, 1.0, 0.25);
  const double h = space.nodes[1] - space.nodes[0];

  const auto truncated = fcs::finite_beam_truncation(state, fcs::pi / h, Statistics::bose());
  const Matrix sigma_t = truncated.hatsigma();
  Matrix sigma_inf = Matrix::Zero(space.total_dim, space.total_dim);
  for (int i = 0; i < space.n_nodes(); ++i) sigma_inf(i, i) = state.blocks[i](0, 0);
  CHECK((sigma_t - sigma_inf).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("truncated beams converge to the stationary statistics on a window") {
  const double beta = 0.5, ell = 1.0;
  const auto space = DirectIntegralSpace::uniform_rectangle(-13.0, 13.0, 261, 1);
  const auto dil = scalar_dilation(space);
  const auto state = lorentzian_state(space, 0.0, beta, 0.3);

  OutcomeGrid grid;
  grid.edges = {0.0, 0.5 * ell, ell};
  grid.detectors = {"d"};
  fcs::TestFunction f = fcs::TestFunction::zero(grid);
  f.set(0, 1.0);
  f.set(1, 0.6);

  const auto stationary = state.to_source(Statistics::bose());
  auto h_inf = fcs::make_quasifree_handle(stationary, space, dil, grid);
  const complexd c_inf = h_inf.characteristic(f);

  double prev = 1e9;
  std::vector<double> gaps;
  for (double mult : {5.0, 10.0, 20.0}) {
    const auto trunc = fcs::finite_beam_truncation(state, mult * ell, Statistics::bose());
    auto h_t = fcs::make_quasifree_handle(trunc, space, dil, grid);
    const double gap = std::abs(h_t.characteristic(f) - c_inf);
    gaps.push_back(gap);
    CHECK(gap < prev * (1.0 + 1e-12));
    prev = gap;
  }
  CHECK(gaps.back() < 1e-2);

  // a truncation shorter than the window misses order-one statistics
  const auto tiny = fcs::finite_beam_truncation(state, 0.4 * ell, Statistics::bose());
  auto h_tiny = fcs::make_quasifree_handle(tiny, space, dil, grid);
  CHECK(std::abs(h_tiny.characteristic(f) - c_inf) > 0.02);
}

TEST_CASE("Fermi-side beams require blocks below the occupation bound") {
  const auto space = DirectIntegralSpace::uniform_rectangle(0.5, 1.5, 5, 1);
  std::vector<Matrix> blocks;
  for (int i = 0; i < space.n_nodes(); ++i) blocks.push_back(1.4 * Matrix::Identity(1, 1));
  const StationaryState state(space, std::move(blocks));
  CHECK_THROWS_AS(state.to_source(Statistics::fermi()), fcs::Error);
  CHECK_NOTHROW(state.to_source(Statistics::bose()));
}
