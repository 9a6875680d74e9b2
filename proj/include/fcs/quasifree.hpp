#pragma once

// Counting statistics of quasi-free and coherent sources: determinant
// characteristic functions, factorial moments through order three,
// normalized correlation functions, the weak-beam bound, and the
// construction of generator handles over an outcome grid.

#include <utility>
#include <vector>

#include "fcs/arrival_time.hpp"
#include "fcs/point_process.hpp"

namespace fcs {

// Source operator W with sigma-hat = W W^dag. W maps an auxiliary space
// into the discretized one-particle space and need not be square; only the
// product W W^dag enters any statistic.
struct QuasiFreeSource {
  Matrix w;
  Statistics stats;

  QuasiFreeSource(Matrix w_, Statistics stats_) : w(std::move(w_)), stats(stats_) {
    require(w.size() > 0 && w.allFinite(), errc::invalid_argument,
            "source operator must be finite and non-empty");
    if (stats.sign() < 0) {
      const double n = operator_norm(w);
      require(n * n < stats.order(), errc::fermi_bound_violation,
              "Fermi-side source requires ||W||^2 < p");
    }
  }

  Matrix hatsigma() const { return w * w.adjoint(); }
};

// Coherent source amplitude on the discretized space.
struct CoherentSource {
  Vector phi;

  explicit CoherentSource(Vector phi_) : phi(std::move(phi_)) {
    require(phi.allFinite(), errc::invalid_argument, "amplitude must be finite");
  }
};

// Hermitian positive window kernel W^dag F[chi_window] W with cached
// spectrum; the object every determinant and the sampler consume.
struct WindowKernel {
  HermitianPSD matrix;
  RealVector eigenvalues;
  std::vector<std::pair<double, double>> window;

  WindowKernel(const Matrix& k, std::vector<std::pair<double, double>> bands)
      : matrix(k), eigenvalues(matrix.eigenvalues()), window(std::move(bands)) {}
};

namespace detail {

inline Matrix combine_effects(const std::vector<Matrix>& effects,
                              const std::vector<complexd>& f) {
  require(!effects.empty() && effects.size() == f.size(), errc::invalid_argument,
          "effects and test-function values must align");
  Matrix out = Matrix::Zero(effects[0].rows(), effects[0].cols());
  for (std::size_t c = 0; c < effects.size(); ++c) out += f[c] * effects[c];
  return out;
}

inline std::vector<complexd> phase_minus_one(const std::vector<complexd>& f) {
  std::vector<complexd> g(f.size());
  for (std::size_t c = 0; c < f.size(); ++c) g[c] = std::exp(complexd(0, 1) * f[c]) - 1.0;
  return g;
}

}  // namespace detail

// Combined effect F[f] = sum_c f_c F_c over all cells of an outcome grid,
// assembled in one pass. Uniform grids reuse the per-offset band transforms.
inline Matrix assemble_test_function_effect(const DirectIntegralSpace& space,
                                            const DilationData& dil, const OutcomeGrid& grid,
                                            const std::vector<complexd>& values) {
  require(static_cast<int>(values.size()) == grid.n_cells(), errc::invalid_argument,
          "one value per cell required");
  const int n = space.n_nodes();
  const int n_det = grid.n_detectors();
  for (int b = 0; b < grid.n_bins(); ++b)
    detail::check_band_resolution(space, grid.edges[b], grid.edges[b + 1]);

  std::vector<int> det_map(n_det);
  for (int x = 0; x < n_det; ++x) det_map[x] = dil.detector_index(grid.detectors[x]);

  // Per detector, the scalar factor sum_b f_(b,x) hhat_b(dE) as a function
  // of the node pair.
  const bool uniform = space.uniform_nodes();
  const double h = uniform && n > 1 ? space.nodes[1] - space.nodes[0] : 0.0;
  std::vector<std::vector<complexd>> factor_by_k;  // [det][k + n - 1]
  if (uniform) {
    factor_by_k.assign(n_det, std::vector<complexd>(2 * n - 1, complexd(0, 0)));
    for (int x = 0; x < n_det; ++x)
      for (int k = -(n - 1); k <= n - 1; ++k) {
        complexd acc = 0.0;
        for (int b = 0; b < grid.n_bins(); ++b) {
          const complexd fv = values[grid.cell(b, x)];
          if (fv == complexd(0.0, 0.0)) continue;
          acc += fv * fourier_indicator(grid.edges[b], grid.edges[b + 1], k * h);
        }
        factor_by_k[x][k + n - 1] = acc;
      }
  }
  const auto factor = [&](int x, int i, int j) -> complexd {
    if (uniform) return factor_by_k[x][(i - j) + n - 1];
    complexd acc = 0.0;
    for (int b = 0; b < grid.n_bins(); ++b) {
      const complexd fv = values[grid.cell(b, x)];
      if (fv == complexd(0.0, 0.0)) continue;
      acc += fv * fourier_indicator(grid.edges[b], grid.edges[b + 1],
                                    space.nodes[i] - space.nodes[j]);
    }
    return acc;
  };

  Matrix out = Matrix::Zero(space.total_dim, space.total_dim);
  for (int x = 0; x < n_det; ++x) {
    const Matrix& g = dil.povm[det_map[x]];
    for (int i = 0; i < n; ++i) {
      if (space.mult[i] == 0) continue;
      const Matrix vg_i = dil.v[i].adjoint() * g;
      for (int j = 0; j < n; ++j) {
        if (space.mult[j] == 0) continue;
        const complexd c = factor(x, i, j) * std::sqrt(space.weights[i] * space.weights[j]);
        if (c == complexd(0.0, 0.0)) continue;
        out.block(space.offsets[i], space.offsets[j], space.mult[i], space.mult[j]) +=
            c * (vg_i * dil.v[j]);
      }
    }
  }
  return out;
}

// C(f) = det(1 - s W^dag F[exp(if)-1] W)^(-s) with per-cell effects F_c.
inline complexd characteristic_function(const QuasiFreeSource& src,
                                        const std::vector<Matrix>& effects,
                                        const std::vector<complexd>& f) {
  if (src.stats.sign() > 0)
    for (const complexd& v : f)
      require(v.imag() >= -1e-12, errc::invalid_argument, "Bose evaluation requires Im f >= 0");
  const std::vector<complexd> g = detail::phase_minus_one(f);
  bool zero = true;
  for (const complexd& v : g) zero = zero && v == complexd(0.0, 0.0);
  if (zero) return 1.0;
  const Matrix eff = detail::combine_effects(effects, g);
  return det_power(src.w.adjoint() * eff * src.w, src.stats);
}

// Factorial gauge Chat(f) = det(1 - s W^dag F[f] W)^(-s).
inline complexd factorial_generating(const QuasiFreeSource& src,
                                     const std::vector<Matrix>& effects,
                                     const std::vector<complexd>& f) {
  const Matrix eff = detail::combine_effects(effects, f);
  return det_power(src.w.adjoint() * eff * src.w, src.stats);
}

// Cyclic trace mu_ell = tr(sigma-hat F_1 sigma-hat F_2 ... sigma-hat F_ell).
inline complexd mu_ell(const QuasiFreeSource& src, const std::vector<Matrix>& effects) {
  require(!effects.empty(), errc::invalid_argument, "need at least one effect");
  const Matrix hs = src.hatsigma();
  Matrix acc = hs * effects[0];
  for (std::size_t a = 1; a < effects.size(); ++a) acc = acc * (hs * effects[a]);
  return acc.trace();
}

// Second factorial moment m2(F1, F2) = mu1 mu1 + s mu2.
inline complexd factorial_moment_2(const QuasiFreeSource& src, const Matrix& f1,
                                   const Matrix& f2) {
  const complexd m1a = mu_ell(src, {f1});
  const complexd m1b = mu_ell(src, {f2});
  return m1a * m1b + src.stats.value() * mu_ell(src, {f1, f2});
}

// Third factorial moment: products of mu1, the three pair contractions with
// weight s, and the three-cycle term 2 Re mu3 with weight s^2 (the cycle
// signature; reduces to the familiar form at s = +-1).
inline complexd factorial_moment_3(const QuasiFreeSource& src, const Matrix& f1, const Matrix& f2,
                                   const Matrix& f3) {
  const double s = src.stats.value();
  const complexd a = mu_ell(src, {f1});
  const complexd b = mu_ell(src, {f2});
  const complexd c = mu_ell(src, {f3});
  const complexd ab = mu_ell(src, {f1, f2});
  const complexd bc = mu_ell(src, {f2, f3});
  const complexd ca = mu_ell(src, {f3, f1});
  const complexd abc = mu_ell(src, {f1, f2, f3});
  return a * b * c + s * (ab * c + bc * a + ca * b) + 2.0 * s * s * abc.real();
}

// Normalized correlation g^(n) = m_n / (m_1 ... m_1) for n in {2, 3}.
inline double g_n(const QuasiFreeSource& src, const std::vector<Matrix>& effects, int order) {
  require(order == 2 || order == 3, errc::invalid_argument, "order must be 2 or 3");
  require(static_cast<int>(effects.size()) == order, errc::invalid_argument,
          "one effect density per argument required");
  complexd denom = 1.0;
  for (const Matrix& f : effects) {
    const complexd m1 = mu_ell(src, {f});
    require(std::abs(m1) > 1e-14, errc::zero_rate, "first-moment density vanishes");
    denom *= m1;
  }
  const complexd num = order == 2 ? factorial_moment_2(src, effects[0], effects[1])
                                  : factorial_moment_3(src, effects[0], effects[1], effects[2]);
  const complexd g = num / denom;
  require(std::abs(g.imag()) <= 1e-9 * std::max(1.0, std::abs(g)), errc::invalid_argument,
          "correlation has a non-real residue");
  return g.real();
}

// Coherent characteristic function exp <phi| F[exp(if)-1] |phi>.
inline complexd coherent_characteristic(const CoherentSource& src,
                                        const std::vector<Matrix>& effects,
                                        const std::vector<complexd>& f) {
  const std::vector<complexd> g = detail::phase_minus_one(f);
  complexd acc = 0.0;
  for (std::size_t c = 0; c < effects.size(); ++c)
    acc += g[c] * (src.phi.adjoint() * effects[c] * src.phi)(0, 0);
  return std::exp(acc);
}

// Gap between the statistics-corrected and Boltzmann log characteristic
// functions, with the trace-norm bound evaluated on the argument kernel
// X = W^dag F[exp(if)-1] W:  gap <= ||X||_1 beta(|s| ||X||).
struct WeakBeamGap {
  double gap = 0.0;
  double bound = 0.0;
};

inline double weak_beam_beta(double h) {
  require(h >= 0.0 && h < 1.0, errc::invalid_argument, "beta defined on [0, 1)");
  if (h < 1e-8) return 0.5 * h;
  return -1.0 - std::log1p(-h) / h;
}

inline WeakBeamGap weak_beam_gap(const QuasiFreeSource& src, const std::vector<Matrix>& effects,
                                 const std::vector<complexd>& f) {
  const double s = src.stats.value();
  if (s == 0.0) return {0.0, 0.0};
  const Matrix x = src.w.adjoint() * detail::combine_effects(effects, detail::phase_minus_one(f)) *
                   src.w;
  const double h = std::abs(s) * operator_norm(x);
  require(h < 1.0, errc::invalid_argument, "weak-beam bound needs |s| ||X|| < 1");
  const Vector lam = eigenvalues(x);
  complexd log_cs = 0.0;
  for (Eigen::Index j = 0; j < lam.size(); ++j) log_cs += std::log(1.0 - s * lam[j]);
  log_cs *= -1.0 / s;
  const complexd log_c0 = x.trace();
  WeakBeamGap out;
  out.gap = std::abs(log_cs - log_c0);
  out.bound = trace_norm(x) * weak_beam_beta(h);
  return out;
}

// Number distribution of independently occupied modes with geometric laws of
// means alpha_k; must coincide with the determinant route whose kernel has
// eigenvalues alpha_k.
inline CountDistribution chaotic_consistency(const std::vector<double>& alphas, int n_max) {
  std::vector<double> probs(static_cast<std::size_t>(n_max) + 1, 0.0);
  probs[0] = 1.0;
  for (double a : alphas) {
    require(a >= 0.0, errc::invalid_argument, "occupations must be non-negative");
    if (a == 0.0) continue;
    probs = detail::conv_truncated(probs, detail::mode_pmf(a, Statistics::bose(), n_max), n_max);
  }
  CountDistribution out;
  out.probs = std::move(probs);
  double sum = 0.0;
  for (double p : out.probs) sum += p;
  out.tail_bound = std::max(0.0, 1.0 - sum);
  out.validate();
  return out;
}

namespace detail {

// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

// Gram columns of a band effect from the time-domain factorization
//   F[chi_[a,b)] = (2 pi)^-1 int_a^b A(t) A(t)^dag dt,
// A(t) blocks sqrt(w_i) exp(iE_i t) V_i^dag sqrt(G), discretized on enough
// Gauss-Legendre nodes to integrate every beat frequency of the grid.
inline Matrix band_gram_columns(const DirectIntegralSpace& space,
                                const std::vector<Matrix>& row_blocks, int k_cols, double a,
                                double b) {
  const double span = space.n_nodes() > 1 ? space.nodes.back() - space.nodes.front() : 0.0;
  const int r = static_cast<int>(std::ceil(0.35 * span * (b - a))) + 20;
  std::vector<double> gx, gw;
  detail::gauss_legendre(r, gx, gw);
  Matrix phi = Matrix::Zero(space.total_dim, r * k_cols);
  for (int m = 0; m < r; ++m) {
    const double t = 0.5 * (a + b) + 0.5 * (b - a) * gx[m];
    const double q = 0.5 * (b - a) * gw[m] / (2.0 * pi);
    for (int i = 0; i < space.n_nodes(); ++i) {
      if (space.mult[i] == 0) continue;
      phi.block(space.offsets[i], m * k_cols, space.mult[i], k_cols) =
          std::sqrt(q) * std::exp(complexd(0.0, space.nodes[i] * t)) * row_blocks[i];
    }
  }
  return phi;
}

// Per-node row blocks sqrt(w_i) V_i^dag sqrt(G) entering the factorization.
inline std::vector<Matrix> detector_row_blocks(const DirectIntegralSpace& space,
                                               const DilationData& dil, const Matrix& g) {
  const Matrix g_root = hatsigma_sqrt(HermitianPSD(g));
  std::vector<Matrix> rows(space.n_nodes());
  for (int i = 0; i < space.n_nodes(); ++i)
    if (space.mult[i] > 0) rows[i] = std::sqrt(space.weights[i]) * (dil.v[i].adjoint() * g_root);
  return rows;
}

}  // namespace detail

// Generator handle of a quasi-free source observed through (space, dil) on
// the given outcome grid. Large spaces with few cells factor each cell
// effect once and evaluate every determinant on the window Gram matrix.
inline GeneratorHandle make_quasifree_handle(const QuasiFreeSource& src,
                                             const DirectIntegralSpace& space,
                                             const DilationData& dil, OutcomeGrid grid) {
  grid.validate();
  require(src.w.rows() == space.total_dim, errc::invalid_argument,
          "source operator does not live on the discretized space");
  const bool factored = space.total_dim >= 192 && grid.n_cells() <= 8;
  if (!factored) {
    auto assemble = [space, dil, grid](const std::vector<complexd>& values) {
      return assemble_test_function_effect(space, dil, grid, values);
    };
    return GeneratorHandle::quasifree(grid, src.stats, src.w, std::move(assemble));
  }

  std::vector<std::vector<Matrix>> det_rows;
  for (int x = 0; x < grid.n_detectors(); ++x)
    det_rows.push_back(detail::detector_row_blocks(
        space, dil, dil.povm[dil.detector_index(grid.detectors[x])]));

  std::vector<Matrix> m_blocks;
  std::vector<std::pair<int, int>> cell_cols;
  int total_cols = 0;
  for (int c = 0; c < grid.n_cells(); ++c) {
    const auto [a, b] = grid.bin_interval(grid.bin_of(c));
    const Matrix phi =
        detail::band_gram_columns(space, det_rows[grid.det_of(c)], dil.k_dim, a, b);
    m_blocks.push_back(src.w.adjoint() * phi);
    cell_cols.emplace_back(total_cols, static_cast<int>(phi.cols()));
    total_cols += static_cast<int>(phi.cols());
  }
  Matrix m(src.w.cols(), total_cols);
  for (int c = 0; c < grid.n_cells(); ++c)
    m.middleCols(cell_cols[c].first, cell_cols[c].second) = m_blocks[c];
  return GeneratorHandle::quasifree_factored(grid, src.stats, m.adjoint() * m,
                                             std::move(cell_cols));
}

// Generator handle from explicit per-cell effects (small models and tests).
inline GeneratorHandle make_quasifree_handle(const QuasiFreeSource& src, OutcomeGrid grid,
                                             std::vector<Matrix> effects) {
  grid.validate();
  require(static_cast<int>(effects.size()) == grid.n_cells(), errc::invalid_argument,
          "one effect per cell required");
  auto assemble = [effects](const std::vector<complexd>& values) {
    return detail::combine_effects(effects, values);
  };
  return GeneratorHandle::quasifree(grid, src.stats, src.w, std::move(assemble));
}


// Void-probability evaluator p0(t1, t2) of a source through the summed
// detector POVM, evaluated on the time-domain Gram factorization of the
// band effect. The window kernel's nonzero spectrum lives on the quadrature
// columns, so each call costs O(dim * r^2) for r ~ span * length nodes.
inline std::function<double(double, double)> make_void_profile(
    const QuasiFreeSource& src, const DirectIntegralSpace& space, const DilationData& dil,
    const std::vector<std::string>& detectors) {
  require(!detectors.empty(), errc::invalid_argument, "need at least one detector");
  Matrix g_total = Matrix::Zero(dil.k_dim, dil.k_dim);
  for (const auto& label : detectors) g_total += dil.povm[dil.detector_index(label)];
  const std::vector<Matrix> rows = detail::detector_row_blocks(space, dil, g_total);
  const int k_cols = dil.k_dim;
  const Matrix w = src.w;
  const Statistics stats = src.stats;

  return [rows, space, k_cols, w, stats](double t1, double t2) -> double {
    if (t2 <= t1) return 1.0;
    const Matrix phi = detail::band_gram_columns(space, rows, k_cols, t1, t2);
    const Matrix b = w.adjoint() * phi;
    Eigen::SelfAdjointEigenSolver<Matrix> es(b.adjoint() * b, Eigen::EigenvaluesOnly);
    const double s = stats.value();
    double log_p = 0.0;
    for (Eigen::Index j = 0; j < es.eigenvalues().size(); ++j) {
      const double lam = std::max(es.eigenvalues()[j], 0.0);
      if (s == 0.0) {
        log_p -= lam;
      } else {
        const double factor = 1.0 + s * lam;
        if (factor <= 0.0) return 0.0;
        log_p -= std::log(factor) / s;
      }
    }
    return std::clamp(std::exp(log_p), 0.0, 1.0);
  };
}

// Coherent beams are Poisson: intensity mu_c = <phi| F_c |phi> per cell.
inline GeneratorHandle make_coherent_handle(const CoherentSource& src,
                                            const DirectIntegralSpace& space,
                                            const DilationData& dil, OutcomeGrid grid) {
  grid.validate();
  require(src.phi.size() == space.total_dim, errc::invalid_argument,
          "amplitude does not live on the discretized space");
  std::vector<double> mu(grid.n_cells(), 0.0);
  std::vector<complexd> chi(grid.n_cells(), complexd(0.0, 0.0));
  for (int c = 0; c < grid.n_cells(); ++c) {
    chi.assign(grid.n_cells(), complexd(0.0, 0.0));
    chi[c] = 1.0;
    const Matrix eff = assemble_test_function_effect(space, dil, grid, chi);
    const complexd m = (src.phi.adjoint() * eff * src.phi)(0, 0);
    mu[c] = std::max(m.real(), 0.0);
  }
  return GeneratorHandle::poisson(std::move(grid), std::move(mu));
}

}  // namespace fcs
