#pragma once

// Statistics layer of an abstract point process described by its
// characteristic functional C(f) = <exp(i xi[f])> and the factorial-moment
// gauge Chat with C(f) = Chat(exp(if) - 1): number distributions, void
// probabilities, waiting times, and the Poisson reference process.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fcs/linalg.hpp"

namespace fcs {

// Outcome cells: time bins (sorted edges) crossed with detector labels.
// Cells are numbered bin-major: cell = bin * n_detectors + detector.
struct OutcomeGrid {
  std::vector<double> edges;
  std::vector<std::string> detectors;

  void validate() const {
    require(edges.size() >= 2, errc::invalid_argument, "need at least one time bin");
    for (std::size_t i = 1; i < edges.size(); ++i)
      require(edges[i] > edges[i - 1], errc::invalid_argument, "bin edges must strictly increase");
    require(!detectors.empty(), errc::invalid_argument, "need at least one detector");
  }

  int n_bins() const { return static_cast<int>(edges.size()) - 1; }
  int n_detectors() const { return static_cast<int>(detectors.size()); }
  int n_cells() const { return n_bins() * n_detectors(); }
  int cell(int bin, int det) const { return bin * n_detectors() + det; }
  int bin_of(int cell) const { return cell / n_detectors(); }
  int det_of(int cell) const { return cell % n_detectors(); }
  std::pair<double, double> bin_interval(int bin) const { return {edges[bin], edges[bin + 1]}; }
};

// Complex test function, one value per outcome cell, with a support mask.
struct TestFunction {
  std::vector<complexd> values;
  std::vector<char> support;

  static TestFunction zero(const OutcomeGrid& grid) {
    TestFunction f;
    f.values.assign(grid.n_cells(), complexd(0.0, 0.0));
    f.support.assign(grid.n_cells(), 0);
    return f;
  }

  void set(int cell, complexd value) {
    values.at(cell) = value;
    support.at(cell) = 1;
  }
};

using CellSet = std::vector<int>;

// Truncated number distribution p_0..p_nmax together with the mass beyond
// the truncation.
struct CountDistribution {
  std::vector<double> probs;
  double tail_bound = 0.0;

  void validate() const {
    double sum = tail_bound;
    for (double p : probs) {
      require(p >= -1e-12, errc::invalid_argument, "negative probability beyond tolerance");
      sum += p;
    }
    require(std::abs(sum - 1.0) <= 1e-8, errc::invalid_argument,
            "probabilities and tail must sum to one");
  }

  double mean() const {
    double m = 0.0;
    for (std::size_t n = 0; n < probs.size(); ++n) m += static_cast<double>(n) * probs[n];
    return m;
  }
};

namespace detail {

// Convolution of two non-negative sequences truncated at n_max (inclusive).
inline std::vector<double> conv_truncated(const std::vector<double>& a,
                                          const std::vector<double>& b, int n_max) {
  std::vector<double> out(static_cast<std::size_t>(n_max) + 1, 0.0);
  for (std::size_t i = 0; i < a.size() && i <= static_cast<std::size_t>(n_max); ++i) {
    if (a[i] == 0.0) continue;
    const std::size_t jmax = std::min(b.size(), static_cast<std::size_t>(n_max) + 1 - i);
    for (std::size_t j = 0; j < jmax; ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

inline std::vector<double> poisson_pmf(double mean, int n_max) {
  std::vector<double> p(static_cast<std::size_t>(n_max) + 1, 0.0);
  p[0] = std::exp(-mean);
  for (int n = 1; n <= n_max; ++n) p[n] = p[n - 1] * mean / n;
  return p;
}

// Per-mode count law of one kernel eigenvalue under statistics s:
// geometric/negative-binomial for Bose-like, Bernoulli/binomial for
// Fermi-like, Poisson for Boltzmann. Mean is the eigenvalue in every case.
inline std::vector<double> mode_pmf(double lambda, Statistics stats, int n_max) {
  lambda = std::max(lambda, 0.0);
  if (stats.is_boltzmann()) return poisson_pmf(lambda, n_max);
  const int p = stats.order();
  if (stats.sign() > 0) {
    // negative binomial with p failures, mean lambda
    const double q = lambda / (lambda + p);
    std::vector<double> out(static_cast<std::size_t>(n_max) + 1, 0.0);
    out[0] = std::pow(1.0 - q, p);
    for (int n = 0; n < n_max; ++n) out[n + 1] = out[n] * q * (n + p) / (n + 1.0);
    return out;
  }
  // binomial with p trials, success probability lambda/p
  const double q = std::min(lambda / p, 1.0);
  std::vector<double> out(static_cast<std::size_t>(n_max) + 1, 0.0);
  const int kmax = std::min(p, n_max);
  double term = std::pow(1.0 - q, p);
  out[0] = term;
  for (int k = 0; k < kmax; ++k) {
    term *= (static_cast<double>(p - k) / (k + 1.0)) * (q / (1.0 - q));
    if (!std::isfinite(term)) {  // q == 1 edge: all mass at p
      std::fill(out.begin(), out.end(), 0.0);
      if (p <= n_max) out[p] = 1.0;
      return out;
    }
    out[k + 1] = term;
  }
  return out;
}

}  // namespace detail

// Evaluator handle exposing the characteristic gauge C and the factorial
// gauge Chat of a point process on an outcome grid. Construction guarantees
// C(0) = Chat(0) = 1. Handles are immutable and safe to share.
class GeneratorHandle {
 public:
  using Assembler = std::function<Matrix(const std::vector<complexd>&)>;
  using Functional = std::function<complexd(const TestFunction&)>;

  static GeneratorHandle poisson(OutcomeGrid grid, std::vector<double> intensity) {
    grid.validate();
    require(static_cast<int>(intensity.size()) == grid.n_cells(), errc::invalid_argument,
            "one intensity per cell required");
    for (double m : intensity)
      require(m >= 0.0 && std::isfinite(m), errc::invalid_argument,
              "intensities must be finite and non-negative");
    GeneratorHandle h;
    h.kind_ = Kind::poisson;
    h.grid_ = std::move(grid);
    h.intensity_ = std::move(intensity);
    return h;
  }

  // Quasi-free process: Chat(f) = det(1 - s W^dag F[f] W)^(-s), with F[f]
  // produced by the assembler from per-cell values.
  static GeneratorHandle quasifree(OutcomeGrid grid, Statistics stats, Matrix w,
                                   Assembler assemble) {
    grid.validate();
    require(w.size() > 0, errc::invalid_argument, "empty source operator");
    GeneratorHandle h;
    h.kind_ = Kind::quasifree;
    h.grid_ = std::move(grid);
    h.stats_ = stats;
    h.w_ = std::move(w);
    h.assemble_ = std::move(assemble);
    return h;
  }

  // Quasi-free process through the Gram matrix of factored cell effects:
  // with F_c = Phi_c Phi_c^dag and G = (W^dag Phi)^dag (W^dag Phi), every
  // determinant collapses to the span of the window,
  //   Chat(f) = det(1 - s D_f G)^(-s),
  // where D_f repeats f_c over the columns of cell c.
  static GeneratorHandle quasifree_factored(OutcomeGrid grid, Statistics stats, Matrix gram,
                                            std::vector<std::pair<int, int>> cell_cols) {
    grid.validate();
    require(static_cast<int>(cell_cols.size()) == grid.n_cells(), errc::invalid_argument,
            "one column range per cell required");
    GeneratorHandle h;
    h.kind_ = Kind::quasifree_factored;
    h.grid_ = std::move(grid);
    h.stats_ = stats;
    h.gram_ = std::move(gram);
    h.cell_cols_ = std::move(cell_cols);
    return h;
  }

  static GeneratorHandle custom(OutcomeGrid grid, Functional chat) {
    grid.validate();
    GeneratorHandle h;
    h.kind_ = Kind::custom;
    h.grid_ = std::move(grid);
    h.chat_ = std::move(chat);
    TestFunction zero = TestFunction::zero(h.grid_);
    require(std::abs(h.factorial(zero) - 1.0) <= 1e-10, errc::invalid_argument,
            "factorial gauge must be normalized at f = 0");
    return h;
  }

  const OutcomeGrid& grid() const { return grid_; }
  bool is_quasifree() const {
    return kind_ == Kind::quasifree || kind_ == Kind::quasifree_factored;
  }
  bool is_poisson() const { return kind_ == Kind::poisson; }
  Statistics statistics() const { return stats_; }

  // Factorial gauge Chat(f).
  complexd factorial(const TestFunction& f) const {
    check(f);
    switch (kind_) {
      case Kind::poisson: {
        complexd acc = 0.0;
        for (int c = 0; c < grid_.n_cells(); ++c) acc += intensity_[c] * f.values[c];
        return std::exp(acc);
      }
      case Kind::quasifree: {
        if (all_zero(f)) return 1.0;
        const Matrix eff = assemble_(f.values);
        // det(1 - s W^dag F W) = det(1 - s F W W^dag): evaluate on the
        // smaller side when the factor is wide.
        if (w_.cols() <= w_.rows()) return det_power(w_.adjoint() * eff * w_, stats_);
        return det_power(eff * (w_ * w_.adjoint()), stats_);
      }
      case Kind::quasifree_factored: {
        if (all_zero(f)) return 1.0;
        Vector d(gram_.rows());
        for (int c = 0; c < grid_.n_cells(); ++c)
          for (int q = 0; q < cell_cols_[c].second; ++q)
            d[cell_cols_[c].first + q] = f.values[c];
        return det_power(d.asDiagonal() * gram_, stats_);
      }
      case Kind::custom:
        return chat_(f);
    }
    return 1.0;
  }

  // Characteristic gauge C(f) = Chat(exp(if) - 1).
  complexd characteristic(const TestFunction& f) const {
    check(f);
    if (kind_ == Kind::poisson) {
      complexd acc = 0.0;
      for (int c = 0; c < grid_.n_cells(); ++c)
        acc += intensity_[c] * (std::exp(complexd(0, 1) * f.values[c]) - 1.0);
      return std::exp(acc);
    }
    if (is_quasifree() && stats_.sign() > 0) {
      for (const complexd& v : f.values)
        require(v.imag() >= -1e-12, errc::invalid_argument,
                "Bose evaluation requires Im f >= 0");
    }
    TestFunction g = f;
    for (int c = 0; c < grid_.n_cells(); ++c)
      g.values[c] = std::exp(complexd(0, 1) * f.values[c]) - 1.0;
    return factorial(g);
  }

  // Eigenvalues of the window kernel W^dag F[chi_Y] W (quasi-free handles).
  RealVector kernel_eigenvalues(const CellSet& y) const {
    require(is_quasifree(), errc::invalid_argument,
            "kernel eigenvalues exist only for quasi-free handles");
    if (kind_ == Kind::quasifree_factored) {
      std::vector<int> cols;
      for (int c : y)
        for (int q = 0; q < cell_cols_.at(c).second; ++q)
          cols.push_back(cell_cols_[c].first + q);
      Matrix sub(cols.size(), cols.size());
      for (std::size_t a = 0; a < cols.size(); ++a)
        for (std::size_t b = 0; b < cols.size(); ++b) sub(a, b) = gram_(cols[a], cols[b]);
      Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (sub + sub.adjoint()),
                                               Eigen::EigenvaluesOnly);
      return es.eigenvalues();
    }
    std::vector<complexd> chi(grid_.n_cells(), complexd(0.0, 0.0));
    for (int c : y) chi.at(c) = 1.0;
    const Matrix eff = assemble_(chi);
    Matrix k;
    if (w_.cols() <= w_.rows()) {
      k = w_.adjoint() * eff * w_;
    } else {
      const Matrix root = hatsigma_sqrt(HermitianPSD(w_ * w_.adjoint()));
      k = root * eff * root;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (k + k.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }

  double total_intensity(const CellSet& y) const {
    require(kind_ == Kind::poisson, errc::invalid_argument, "not a Poisson handle");
    double m = 0.0;
    for (int c : y) m += intensity_.at(c);
    return m;
  }

 private:
  enum class Kind { poisson, quasifree, quasifree_factored, custom };

  GeneratorHandle() = default;

  void check(const TestFunction& f) const {
    require(static_cast<int>(f.values.size()) == grid_.n_cells(), errc::invalid_argument,
            "test function does not match the outcome grid");
    for (const complexd& v : f.values)
      require(std::isfinite(v.real()) && std::isfinite(v.imag()), errc::invalid_argument,
              "test function has non-finite values");
  }

  static bool all_zero(const TestFunction& f) {
    for (const complexd& v : f.values)
      if (v != complexd(0.0, 0.0)) return false;
    return true;
  }

  Kind kind_ = Kind::custom;
  OutcomeGrid grid_;
  Statistics stats_ = Statistics::boltzmann();
  std::vector<double> intensity_;
  Matrix w_;
  Assembler assemble_;
  Matrix gram_;
  std::vector<std::pair<int, int>> cell_cols_;  // (first column, count) per cell
  Functional chat_;
};

// Poisson reference process with the given intensity measure.
inline GeneratorHandle poisson_generator(OutcomeGrid grid, std::vector<double> intensity) {
  return GeneratorHandle::poisson(std::move(grid), std::move(intensity));
}

// Number distribution on the cell subset Y, truncated at n_max. Quasi-free
// handles use the exact per-eigenvalue convolution (Bernoulli for Fermi,
// geometric for Bose, their order-p versions for parastatistics, Poisson at
// s = 0); other handles invert the generating function by a discrete
// Fourier transform over 4*(n_max+1) unit-circle samples.
inline CountDistribution number_distribution(const GeneratorHandle& g, const CellSet& y,
                                             int n_max) {
  require(n_max >= 0, errc::invalid_argument, "n_max must be non-negative");
  CountDistribution out;
  if (g.is_quasifree()) {
    const RealVector lam = g.kernel_eigenvalues(y);
    const Statistics stats = g.statistics();
    const double scale = std::max(lam.size() ? lam.cwiseAbs().maxCoeff() : 0.0, 1.0);
    std::vector<double> probs(static_cast<std::size_t>(n_max) + 1, 0.0);
    probs[0] = 1.0;
    for (Eigen::Index j = 0; j < lam.size(); ++j) {
      require(lam[j] >= -1e-10 * scale, errc::eigenvalue_out_of_range,
              "window kernel must be positive semidefinite");
      if (lam[j] <= 0.0) continue;
      if (stats.sign() < 0)
        require(lam[j] <= stats.order() * (1.0 + 1e-10), errc::eigenvalue_out_of_range,
                "Fermi-side kernel eigenvalue exceeds the occupation bound");
      probs = detail::conv_truncated(probs, detail::mode_pmf(lam[j], stats, n_max), n_max);
    }
    out.probs = std::move(probs);
  } else {
    const int n_samples = 4 * (n_max + 1);
    std::vector<complexd> samples(n_samples);
    TestFunction f = TestFunction::zero(g.grid());
    for (int k = 0; k < n_samples; ++k) {
      const complexd z = std::exp(complexd(0.0, 2.0 * pi * k / n_samples));
      for (int c : y) f.set(c, z - 1.0);
      samples[k] = g.factorial(f);
    }
    out.probs.assign(static_cast<std::size_t>(n_max) + 1, 0.0);
    for (int n = 0; n <= n_max; ++n) {
      complexd acc = 0.0;
      for (int k = 0; k < n_samples; ++k)
        acc += samples[k] * std::exp(complexd(0.0, -2.0 * pi * k * n / n_samples));
      out.probs[n] = acc.real() / n_samples;
    }
  }
  double sum = 0.0;
  for (double p : out.probs) sum += p;
  out.tail_bound = std::max(0.0, 1.0 - sum);
  require(out.tail_bound <= 1e-6, errc::non_convergent,
          "mass beyond n_max exceeds 1e-6; raise n_max");
  out.validate();
  return out;
}

// Void probability p_Y(0) = Chat(-chi_Y).
inline double void_probability(const GeneratorHandle& g, const CellSet& y) {
  TestFunction f = TestFunction::zero(g.grid());
  for (int c : y) f.set(c, complexd(-1.0, 0.0));
  const complexd v = g.factorial(f);
  require(std::abs(v.imag()) <= 1e-10 * std::max(1.0, std::abs(v)), errc::invalid_argument,
          "void probability has a non-real residue");
  return std::clamp(v.real(), 0.0, 1.0);
}

// Joint characteristic function C(sum_l lambda_l chi_l) over disjoint regions.
inline complexd joint_count_cf(const GeneratorHandle& g, const std::vector<CellSet>& regions,
                               const std::vector<double>& lambdas) {
  require(regions.size() == lambdas.size(), errc::invalid_argument,
          "one lambda per region required");
  TestFunction f = TestFunction::zero(g.grid());
  std::vector<char> seen(f.values.size(), 0);
  for (std::size_t r = 0; r < regions.size(); ++r) {
    for (int c : regions[r]) {
      require(!seen.at(c), errc::overlapping_regions, "regions must be pairwise disjoint");
      seen[c] = 1;
      f.set(c, complexd(lambdas[r], 0.0));
    }
  }
  return g.characteristic(f);
}

// Waiting-time density w_s(tau) from a two-argument void probability
// p0(t1, t2): w = -(d p0/d t1 (s,s))^-1 * d^2 p0/(d t1 d t2)(s, s+tau).
// Derivatives use difference stencils of step h with one Richardson
// extrapolation step (h, h/2); the process must be stationary, which is
// asserted by evaluating p0 at two distinct anchor times.
inline double waiting_time_density(const std::function<double(double, double)>& p0, double s,
                                   double tau, double h) {
  require(h > 0.0 && tau >= 0.0, errc::invalid_argument, "need h > 0 and tau >= 0");

  const double probe = std::max(tau, 10.0 * h);
  const double shift = 7.3 * h;
  const double pa = p0(s, s + probe);
  const double pb = p0(s + shift, s + shift + probe);
  require(std::abs(pa - pb) <= 1e-6 * std::max(1.0, std::abs(pa)), errc::not_stationary,
          "void probability is not time-shift invariant");

  // d p0 / d t1 at (s, s), approached from t1 < t2 with a one-sided stencil.
  const auto d1_estimate = [&](double step) {
    const double g0 = p0(s, s);
    const double g1 = p0(s - step, s);
    const double g2 = p0(s - 2.0 * step, s);
    const double gprime = (-3.0 * g0 + 4.0 * g1 - g2) / (2.0 * step);  // d/du p0(s-u, s)
    return -gprime;
  };
  const double d1 = (4.0 * d1_estimate(h / 2.0) - d1_estimate(h)) / 3.0;
  require(std::abs(d1) >= 1e-12, errc::zero_click_rate,
          "click rate vanishes; waiting density undefined");

  // d^2 p0 / (d t1 d t2) at (s, s + tau).
  const auto cross_estimate = [&](double step) {
    if (tau >= 2.5 * step) {
      return (p0(s + step, s + tau + step) - p0(s + step, s + tau - step) -
              p0(s - step, s + tau + step) + p0(s - step, s + tau - step)) /
             (4.0 * step * step);
    }
    // Near-coincidence: one-sided second derivative of the gap profile.
    const auto prof = [&](double ell) { return p0(s, s + ell); };
    const double second = (2.0 * prof(tau) - 5.0 * prof(tau + step) + 4.0 * prof(tau + 2.0 * step) -
                           prof(tau + 3.0 * step)) /
                          (step * step);
    return -second;
  };
  const double cross = (4.0 * cross_estimate(h / 2.0) - cross_estimate(h)) / 3.0;

  return -cross / d1;
}

}  // namespace fcs
