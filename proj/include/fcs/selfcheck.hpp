#pragma once

// Structural-identity suite: every distributed invariant of the library,
// runnable by name. Each check draws its own seeded data, evaluates both
// sides of an identity or bound, and reports a pass/fail with the measured
// residual. One deliberate mutation check verifies that the sign-law
// detector actually rejects a wrong-signed pair correction.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fcs/sampler.hpp"
#include "fcs/source_model.hpp"

namespace fcs {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace selfcheck_detail {

inline Matrix rnd_complex(int r, int c, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = complexd(nd(gen), nd(gen));
  return m;
}

inline Matrix rnd_psd(int n, std::mt19937_64& gen, double norm) {
  Matrix a = rnd_complex(n, n, gen);
  Matrix p = a * a.adjoint();
  Eigen::SelfAdjointEigenSolver<Matrix> es(p, Eigen::EigenvaluesOnly);
  return p * (norm / es.eigenvalues().maxCoeff());
}

inline Matrix rnd_w(int n, std::mt19937_64& gen, double opnorm) {
  Matrix w = rnd_complex(n, n, gen);
  return w * (opnorm / operator_norm(w));
}

inline std::vector<Matrix> rnd_povm(int dim, int count, std::mt19937_64& gen) {
  std::vector<Matrix> eff;
  Matrix sum = Matrix::Zero(dim, dim);
  for (int c = 0; c < count; ++c) {
    eff.push_back(rnd_psd(dim, gen, 1.0));
    sum += eff.back();
  }
  const double scale = operator_norm(sum) * 1.02;
  for (Matrix& f : eff) f /= scale;
  return eff;
}

inline DilationData scalar_dilation(const DirectIntegralSpace& space) {
  DilationData dil;
  dil.k_dim = 1;
  for (int i = 0; i < space.n_nodes(); ++i) dil.v.push_back(Matrix::Identity(1, 1));
  dil.povm = {Matrix::Identity(1, 1)};
  dil.labels = {"d"};
  dil.validate(space);
  return dil;
}

inline std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

struct Reporter {
  std::vector<CheckResult> results;
  const std::string* filter = nullptr;

  bool wants(const std::string& name) const {
    return !filter || filter->empty() || name.find(*filter) != std::string::npos;
  }

  void add(const std::string& name, bool pass, const std::string& detail) {
    results.push_back({name, pass, detail});
  }

  void metric(const std::string& name, double value, double limit) {
    add(name, value <= limit, "value " + sci(value) + " <= " + sci(limit));
  }
};

}  // namespace selfcheck_detail

// Runs the property suite (optionally filtered by substring). Deterministic
// for a fixed seed.
inline std::vector<CheckResult> run_selfcheck(const std::string& filter = "",
                                              std::uint64_t seed = 20240901) {
  using namespace selfcheck_detail;
  Reporter rep;
  rep.filter = &filter;
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> ud(-2.0, 2.0);

  if (rep.wants("det-commutation")) {
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix a = rnd_complex(6, 4, gen, 0.3);
      const Matrix b = rnd_complex(4, 6, gen, 0.3);
      for (Statistics s : {Statistics::bose(), Statistics::fermi(), Statistics::parabose(3)}) {
        const complexd lhs = det_power(a * b, s);
        const complexd rhs = det_power(b * a, s);
        worst = std::max(worst, std::abs(lhs - rhs) / std::abs(lhs));
      }
    }
    rep.metric("det-commutation", worst, 1e-10);
  }

  if (rep.wants("trace-norm-domination")) {
    double worst = -1.0;
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix a = rnd_psd(6, gen, 0.9);
      const Matrix b = rnd_psd(6, gen, 1.2);
      const Matrix ra = hatsigma_sqrt(HermitianPSD(a));
      worst = std::max(worst, (ra * b * ra).trace().real() - trace_norm(a * b));
    }
    rep.metric("trace-norm-domination", worst, 1e-10);
  }

  if (rep.wants("lipschitz-determinant")) {
    double worst = -1.0;
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix a = rnd_complex(5, 5, gen, 0.4);
      const Matrix b = a + rnd_complex(5, 5, gen, 0.1);
      const double gap = std::abs(det_power(a, Statistics::fermi()) -
                                  det_power(b, Statistics::fermi()));
      const double bound =
          trace_norm(a - b) * std::exp(trace_norm(a) + trace_norm(b) + 1.0);
      worst = std::max(worst, gap - bound);
    }
    rep.metric("lipschitz-determinant", worst, 0.0);
  }

  if (rep.wants("gauge-identity")) {
    double worst = 0.0;
    for (Statistics s : {Statistics::bose(), Statistics::fermi(), Statistics::parafermi(2)}) {
      QuasiFreeSource src(rnd_w(5, gen, 0.6), s);
      const auto effects = rnd_povm(5, 3, gen);
      for (int trial = 0; trial < 10; ++trial) {
        std::vector<complexd> f(3), g(3);
        for (int c = 0; c < 3; ++c) {
          f[c] = ud(gen);
          g[c] = std::exp(complexd(0, 1) * f[c]) - 1.0;
        }
        worst = std::max(worst, std::abs(characteristic_function(src, effects, f) -
                                         factorial_generating(src, effects, g)));
      }
    }
    rep.metric("gauge-identity", worst, 1e-10);
  }

  if (rep.wants("lemma-invariance")) {
    Matrix w = rnd_complex(6, 3, gen);
    w *= 0.6 / operator_norm(w);
    const Matrix wsym = hatsigma_sqrt(HermitianPSD(w * w.adjoint()));
    const auto effects = rnd_povm(6, 2, gen);
    double worst = 0.0;
    for (Statistics s : {Statistics::bose(), Statistics::fermi()}) {
      const std::vector<complexd> f = {complexd(0.9, 0.0), complexd(-0.7, 0.0)};
      const complexd ca = characteristic_function(QuasiFreeSource(w, s), effects, f);
      const complexd cb = characteristic_function(QuasiFreeSource(wsym, s), effects, f);
      worst = std::max(worst, std::abs(ca - cb) / std::abs(ca));
    }
    rep.metric("lemma-invariance", worst, 1e-10);
  }

  if (rep.wants("weak-beam-bound")) {
    double worst = -1.0;
    for (int trial = 0; trial < 25; ++trial) {
      const Statistics s = (trial % 2) ? Statistics::bose() : Statistics::parafermi(2);
      QuasiFreeSource src(hatsigma_sqrt(HermitianPSD(rnd_psd(6, gen, 0.2))), s);
      const auto effects = rnd_povm(6, 2, gen);
      const std::vector<complexd> f = {complexd(ud(gen), 0.0), complexd(ud(gen), 0.0)};
      const auto r = weak_beam_gap(src, effects, f);
      worst = std::max(worst, r.gap - r.bound * (1.0 + 1e-9));
    }
    rep.metric("weak-beam-bound", worst, 1e-12);
  }

  if (rep.wants("pair-sign-law")) {
    double worst = -1.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Statistics s = (trial % 2) ? Statistics::bose() : Statistics::fermi();
      QuasiFreeSource src(rnd_w(5, gen, 0.7), s);
      const Matrix f = rnd_psd(5, gen, 1.0);
      const complexd m1 = mu_ell(src, {f});
      const complexd m2 = factorial_moment_2(src, f, f);
      worst = std::max(worst, -s.value() * (m2 - m1 * m1).real());
    }
    rep.metric("pair-sign-law", worst, 1e-10);
  }

  const auto space2 = DirectIntegralSpace::uniform_rectangle(0.5, 2.5, 9, 2);
  const auto kij = kijowski_free_1d(space2);

  if (rep.wants("g2-sign-law")) {
    double worst = -1.0;
    for (int trial = 0; trial < 40; ++trial) {
      std::vector<Matrix> blocks;
      for (int i = 0; i < space2.n_nodes(); ++i) blocks.push_back(rnd_psd(2, gen, 0.8));
      const StationaryState state(space2, std::move(blocks));
      const auto s = s_kernel(state, kij);
      const double tau = 1.5 * std::abs(ud(gen));
      worst = std::max(worst,
                       1.0 - g2_xy(s, kij.povm[0], kij.povm[1], tau, Statistics::bose()));
      worst = std::max(worst,
                       g2_xy(s, kij.povm[0], kij.povm[1], tau, Statistics::fermi()) - 1.0);
    }
    rep.metric("g2-sign-law", worst, 1e-10);
  }

  if (rep.wants("sign-law-mutation")) {
    // deliberately flip the s-weighted term; the sign law must now fail
    std::vector<Matrix> blocks;
    for (int i = 0; i < space2.n_nodes(); ++i) blocks.push_back(rnd_psd(2, gen, 0.8));
    const StationaryState state(space2, std::move(blocks));
    const auto s = s_kernel(state, kij);
    const double rx = detector_rate(s, kij.povm[0]);
    const double ry = detector_rate(s, kij.povm[1]);
    const Matrix st = s.at(0.4);
    const double term = (st.adjoint() * kij.povm[0] * st * kij.povm[1]).trace().real();
    const double mutated = 1.0 - term / (rx * ry);  // wrong sign for Bose
    rep.add("sign-law-mutation", mutated < 1.0 - 1e-10,
            "mutated g2 = " + sci(mutated) + " correctly violates the Bose bound");
  }

  if (rep.wants("local-trace-bound")) {
    const auto state = plane_wave_state(space2, 4, 2.0 * pi, 0);
    OutcomeGrid grid;
    grid.edges = {0.0, 2.0};
    grid.detectors = kij.labels;
    std::vector<complexd> chi(grid.n_cells(), complexd(1.0, 0.0));
    const auto sides = local_trace_bound_check(state, kij, grid, chi, 0.0, 2.0);
    const double saturation = std::abs(sides.lhs - sides.rhs) / sides.rhs;
    bool random_ok = true;
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<Matrix> blocks;
      for (int i = 0; i < space2.n_nodes(); ++i) blocks.push_back(rnd_psd(2, gen, 0.8));
      const StationaryState rnd(space2, std::move(blocks));
      const auto r = local_trace_bound_check(rnd, kij, grid, chi, 0.0, 2.0);
      random_ok = random_ok && r.lhs <= r.rhs * (1.0 + 1e-6);
    }
    rep.add("local-trace-bound", saturation <= 1e-9 && random_ok,
            "plane-wave saturation residual " + sci(saturation));
  }

  if (rep.wants("effect-covariance")) {
    const auto space =
        DirectIntegralSpace::from_data({0.5, 1.1, 2.0}, {0.3, 0.5, 0.4}, {1, 1, 1});
    const auto dil = scalar_dilation(space);
    const double delta = 0.77;
    const Matrix base = assemble_effect(space, dil, 0.2, 1.4, "d").matrix.mat();
    const Matrix shifted =
        assemble_effect(space, dil, 0.2 + delta, 1.4 + delta, "d").matrix.mat();
    Vector phases(3);
    for (int i = 0; i < 3; ++i) phases[i] = std::exp(complexd(0.0, space.nodes[i] * delta));
    const Matrix conj = phases.asDiagonal() * base * phases.conjugate().asDiagonal();
    rep.metric("effect-covariance", (shifted - conj).cwiseAbs().maxCoeff(), 1e-12);
  }

  if (rep.wants("effect-additivity")) {
    const auto space = DirectIntegralSpace::uniform_rectangle(0.2, 3.0, 12, 1);
    const auto dil = scalar_dilation(space);
    const Matrix sum = assemble_effect(space, dil, 0.0, 0.9, "d").matrix.mat() +
                       assemble_effect(space, dil, 0.9, 2.0, "d").matrix.mat();
    const Matrix whole = assemble_effect(space, dil, 0.0, 2.0, "d").matrix.mat();
    rep.metric("effect-additivity", (sum - whole).cwiseAbs().maxCoeff(), 1e-13);
  }

  if (rep.wants("effect-subnormalization")) {
    const auto space = DirectIntegralSpace::uniform_rectangle(0.1, 6.5, 48, 1);
    const auto dil = scalar_dilation(space);
    double worst = -1.0;
    for (double len : {0.5, 2.0, 8.0}) {
      const auto eff = assemble_effect(space, dil, 0.0, len, "d");
      worst = std::max(worst, eff.matrix.eigenvalues().maxCoeff() - 1.0);
    }
    rep.metric("effect-subnormalization", worst, 1e-8);
  }

  if (rep.wants("skernel-hermiticity")) {
    const auto space = DirectIntegralSpace::uniform(-12.0, 12.0, 121, 1);
    const auto dil = scalar_dilation(space);
    std::vector<Matrix> blocks;
    for (int i = 0; i < space.n_nodes(); ++i) {
      const double de = space.nodes[i] - 1.0;
      Matrix b(1, 1);
      b(0, 0) = 0.4 / (de * de + 0.49);
      blocks.push_back(b);
    }
    const auto s = s_kernel(StationaryState(space, std::move(blocks)), dil);
    double worst = 0.0;
    for (double t : {0.4, 1.9, 6.2})
      worst = std::max(worst, (s.at(-t) - s.at(t).adjoint()).cwiseAbs().maxCoeff());
    rep.metric("skernel-hermiticity", worst, 1e-12);
  }

  if (rep.wants("rate-consistency")) {
    std::vector<Matrix> blocks;
    for (int i = 0; i < space2.n_nodes(); ++i) blocks.push_back(rnd_psd(2, gen, 0.7));
    const StationaryState state(space2, std::move(blocks));
    const auto s = s_kernel(state, kij);
    const double total = detector_rate(s, kij.povm[0]) + detector_rate(s, kij.povm[1]);
    OutcomeGrid grid;
    grid.edges = {0.0, 0.8};
    grid.detectors = kij.labels;
    std::vector<complexd> chi(grid.n_cells(), complexd(1.0, 0.0));
    const Matrix eff = assemble_test_function_effect(space2, kij, grid, chi);
    const double m1 = mu_ell(state.to_source(Statistics::bose()), {eff}).real() / 0.8;
    rep.metric("rate-consistency", std::abs(m1 - total) / total, 1e-8);
  }

  if (rep.wants("stationarity-shift")) {
    const auto space = DirectIntegralSpace::uniform(-12.0, 12.0, 241, 1);
    const auto dil = scalar_dilation(space);
    std::vector<Matrix> blocks;
    for (int i = 0; i < space.n_nodes(); ++i) {
      Matrix b(1, 1);
      b(0, 0) = 0.3 / (space.nodes[i] * space.nodes[i] + 0.25);
      blocks.push_back(b);
    }
    const StationaryState state(space, std::move(blocks));
    const auto src = state.to_source(Statistics::bose());
    std::vector<double> voids;
    for (double t0 : {0.0, 3.7}) {
      OutcomeGrid grid;
      grid.edges = {t0, t0 + 1.5};
      grid.detectors = {"d"};
      voids.push_back(void_probability(make_quasifree_handle(src, space, dil, grid), {0}));
    }
    rep.metric("stationarity-shift", std::abs(voids[0] - voids[1]), 1e-8);
  }

  if (rep.wants("count-normalization")) {
    QuasiFreeSource src(rnd_w(4, gen, 0.6), Statistics::bose());
    OutcomeGrid grid;
    grid.edges = {0.0, 1.0};
    grid.detectors = {"d"};
    auto handle = make_quasifree_handle(src, grid, {rnd_povm(4, 1, gen)[0]});
    const auto dist = number_distribution(handle, {0}, 80);
    double sum = dist.tail_bound;
    double min_p = 0.0;
    for (double p : dist.probs) {
      sum += p;
      min_p = std::min(min_p, p);
    }
    rep.add("count-normalization", std::abs(sum - 1.0) <= 1e-9 && min_p >= -1e-12,
            "total mass deviation " + sci(std::abs(sum - 1.0)));
  }

  if (rep.wants("poisson-factorization")) {
    OutcomeGrid grid;
    grid.edges = {0.0, 1.0, 2.0};
    grid.detectors = {"d"};
    auto h = poisson_generator(grid, {0.7, 1.3});
    const auto d1 = number_distribution(h, {0}, 16);
    const auto d2 = number_distribution(h, {1}, 16);
    // joint distribution from the two-region characteristic function
    double worst = 0.0;
    const int nn = 20;
    for (int n1 = 0; n1 <= 3; ++n1)
      for (int n2 = 0; n2 <= 3; ++n2) {
        complexd acc = 0.0;
        for (int k1 = 0; k1 < nn; ++k1)
          for (int k2 = 0; k2 < nn; ++k2) {
            const double l1 = 2.0 * pi * k1 / nn, l2 = 2.0 * pi * k2 / nn;
            acc += joint_count_cf(h, {{0}, {1}}, {l1, l2}) *
                   std::exp(complexd(0.0, -(l1 * n1 + l2 * n2)));
          }
        worst = std::max(worst,
                         std::abs(acc.real() / (nn * nn) - d1.probs[n1] * d2.probs[n2]));
      }
    rep.metric("poisson-factorization", worst, 1e-10);
  }

  if (rep.wants("waiting-oracle")) {
    const auto state = plane_wave_state(space2, 4, 2.0 * pi, 0);  // unit rate
    const auto src = state.to_source(Statistics::bose());
    auto p0 = [&](double t1, double t2) -> double {
      if (t2 <= t1) return 1.0;
      OutcomeGrid grid;
      grid.edges = {t1, t2};
      grid.detectors = kij.labels;
      std::vector<complexd> chi(grid.n_cells(), complexd(1.0, 0.0));
      const Matrix eff = assemble_test_function_effect(space2, kij, grid, chi);
      return std::clamp(det_power(-(src.w.adjoint() * eff * src.w), src.stats).real(), 0.0, 1.0);
    };
    double worst = 0.0;
    for (double tau : {0.0, 1.0, 4.0, 10.0}) {
      const double w = waiting_time_density(p0, 0.0, tau, 1e-3);
      const double expected = 2.0 / std::pow(1.0 + tau, 3.0);
      worst = std::max(worst, std::abs(w - expected) / expected);
    }
    rep.metric("waiting-oracle", worst, 1e-4);
  }

  if (rep.wants("chaotic-consistency")) {
    Matrix w = Matrix::Zero(2, 2);
    w(0, 0) = std::sqrt(0.5);
    w(1, 1) = std::sqrt(0.5);
    OutcomeGrid grid;
    grid.edges = {0.0, 1.0};
    grid.detectors = {"d"};
    auto handle = make_quasifree_handle(QuasiFreeSource(w, Statistics::bose()), grid,
                                        {Matrix::Identity(2, 2)});
    const auto det_route = number_distribution(handle, {0}, 40);
    const auto conv_route = chaotic_consistency({0.5, 0.5}, 40);
    double worst = 0.0;
    for (int n = 0; n <= 40; ++n)
      worst = std::max(worst, std::abs(det_route.probs[n] - conv_route.probs[n]));
    rep.metric("chaotic-consistency", worst, 1e-12);
  }

  if (rep.wants("g2-route-agreement")) {
    const auto space = DirectIntegralSpace::uniform(0.02, 40.0, 1025, 1);
    const auto dil = scalar_dilation(space);
    const auto src = SourceSpec::lorentzian(space, 20.0, 1.0, 0.2);
    std::vector<double> taus = {0.0, 0.7, 1.9, 4.0};
    const auto g2_chi = g2_from_chi(chi_tau(src, dil, "d", taus));
    const auto sk = s_kernel(stationary_sigma(src), dil);
    double worst = 0.0;
    for (std::size_t k = 0; k < taus.size(); ++k) {
      const double g2_s = g2_xy(sk, dil.povm[0], dil.povm[0], taus[k], Statistics::bose());
      worst = std::max(worst, std::abs(g2_chi[k] - g2_s));
    }
    rep.metric("g2-route-agreement", worst, 1e-9);
  }

  if (rep.wants("pv-selftest")) {
    const auto space = DirectIntegralSpace::uniform(-5.0, 5.0, 201, 1);
    std::vector<double> ones(space.n_nodes(), 1.0);
    const auto g = gamma_check(space, ones);
    double worst = 0.0;
    for (const auto& v : g) worst = std::max(worst, std::abs(v.imag()));
    rep.metric("pv-selftest", worst, 1e-8);
  }

  if (rep.wants("sampler-reproducibility")) {
    Matrix k(2, 2);
    k << complexd(0.8), complexd(0.3, 0.1), complexd(0.3, -0.1), complexd(0.6);
    BinnedKernel kern;
    kern.edges = {0.0, 1.0, 2.0};
    kern.detectors = {"d"};
    kern.k = k;
    std::ostringstream a, b;
    for (int i = 0; i < 50; ++i) {
      const auto ta = sample_bose(kern, rng::stream_seed(99, i));
      write_click_train(a, ta, kern.detectors);
      const auto tb = sample_bose(kern, rng::stream_seed(99, i));
      write_click_train(b, tb, kern.detectors);
    }
    const std::string ha = fnv1a_hex(a.str());
    rep.add("sampler-reproducibility", a.str() == b.str(), "train batch hash " + ha);
  }

  return rep.results;
}

}  // namespace fcs
