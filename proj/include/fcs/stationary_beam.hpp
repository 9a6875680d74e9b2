#pragma once

// Stationary beams: block-diagonal occupation sigma-hat(E) commuting with
// the energy, the operator-valued correlation kernel
//   S(t) = (2*pi)^-1 int dE exp(itE) V_E sigma-hat(E) V_E^dag,
// per-detector rates, two-time correlations, the local trace bound, and the
// time-windowed trace-class truncation of the beam.

#include <limits>
#include <utility>
#include <vector>

#include "fcs/quasifree.hpp"

namespace fcs {

// Stationary occupation: one PSD d_i x d_i block per node. The total rate
// gamma = (2*pi)^-1 sum_i w_i tr sigma-hat(E_i) must be finite.
struct StationaryState {
  DirectIntegralSpace space;
  std::vector<Matrix> blocks;

  StationaryState(DirectIntegralSpace space_, std::vector<Matrix> blocks_)
      : space(std::move(space_)), blocks(std::move(blocks_)) {
    require(static_cast<int>(blocks.size()) == space.n_nodes(), errc::invalid_argument,
            "one block per node required");
    rate_ = 0.0;
    for (int i = 0; i < space.n_nodes(); ++i) {
      require(blocks[i].rows() == space.mult[i] && blocks[i].cols() == space.mult[i],
              errc::invalid_argument, "block dimension must match the node multiplicity");
      if (space.mult[i] == 0) continue;
      HermitianPSD cert(blocks[i]);
      blocks[i] = cert.mat();
      rate_ += space.weights[i] * blocks[i].trace().real();
    }
    rate_ /= 2.0 * pi;
    require(std::isfinite(rate_), errc::invalid_argument, "rate must be finite");
  }

  double rate() const { return rate_; }

  // Block-diagonal square root of the occupation; the canonical source
  // factor W for windowed statistics.
  Matrix sqrt_blockdiag() const {
    Matrix w = Matrix::Zero(space.total_dim, space.total_dim);
    for (int i = 0; i < space.n_nodes(); ++i) {
      if (space.mult[i] == 0) continue;
      w.block(space.offsets[i], space.offsets[i], space.mult[i], space.mult[i]) =
          hatsigma_sqrt(HermitianPSD(blocks[i]));
    }
    return w;
  }

  // Source view under the given statistics; Fermi-side statistics require
  // every block strictly below the order bound.
  QuasiFreeSource to_source(Statistics stats) const {
    if (stats.sign() < 0) {
      for (const Matrix& b : blocks) {
        if (b.rows() == 0) continue;
        Eigen::SelfAdjointEigenSolver<Matrix> es(b, Eigen::EigenvaluesOnly);
        require(es.eigenvalues().maxCoeff() < stats.order(), errc::fermi_bound_violation,
                "Fermi-side beam requires sigma-hat(E) < p");
      }
    }
    return QuasiFreeSource(sqrt_blockdiag(), stats);
  }

 private:
  double rate_ = 0.0;
};

// Singular beam concentrated on one node: sigma-hat(E) = kappa/w at the
// node, projected onto the given multiplicity component. The rate is
// kappa/(2*pi) independent of the grid.
inline StationaryState plane_wave_state(const DirectIntegralSpace& space, int node, double kappa,
                                        int component = 0) {
  require(node >= 0 && node < space.n_nodes(), errc::invalid_argument, "node out of range");
  require(kappa > 0.0, errc::invalid_argument, "kappa must be positive");
  require(component >= 0 && component < space.mult[node], errc::invalid_argument,
          "component out of range");
  std::vector<Matrix> blocks;
  for (int i = 0; i < space.n_nodes(); ++i) blocks.push_back(Matrix::Zero(space.mult[i], space.mult[i]));
  blocks[node](component, component) = kappa / space.weights[node];
  return StationaryState(space, std::move(blocks));
}

// Correlation kernel S(t) on the multiplicity space, with the per-node
// Fourier coefficients precomputed. Evaluation is pure; requesting |t|
// beyond the grid horizon pi/max spacing raises alias_risk.
class SKernel {
 public:
  SKernel(const StationaryState& state, const DilationData& dil) {
    k_dim_ = dil.k_dim;
    const auto& sp = state.space;
    horizon_ = sp.max_spacing() > 0.0 ? pi / sp.max_spacing()
                                      : std::numeric_limits<double>::infinity();
    for (int i = 0; i < sp.n_nodes(); ++i) {
      if (sp.mult[i] == 0) continue;
      Matrix c = (sp.weights[i] / (2.0 * pi)) * (dil.v[i] * state.blocks[i] * dil.v[i].adjoint());
      if (c.cwiseAbs().maxCoeff() == 0.0) continue;
      energies_.push_back(sp.nodes[i]);
      coefs_.push_back(std::move(c));
    }
    gamma_ = state.rate();
    s0_ = at_unchecked(0.0);
    require(s0_.trace().real() <= gamma_ * (1.0 + 1e-9) + 1e-15, errc::invalid_argument,
            "tr S(0) exceeds the total rate");
  }

  int k_dim() const { return k_dim_; }
  double rate() const { return gamma_; }
  double horizon() const { return horizon_; }
  const Matrix& s0() const { return s0_; }

  Matrix at(double t) const {
    require(std::abs(t) <= horizon_ * (1.0 + 1e-12), errc::alias_risk,
            "|t| exceeds the grid horizon pi/max(dE)");
    return at_unchecked(t);
  }

 private:
  Matrix at_unchecked(double t) const {
    Matrix s = Matrix::Zero(k_dim_, k_dim_);
    for (std::size_t i = 0; i < energies_.size(); ++i)
      s += std::exp(complexd(0.0, t * energies_[i])) * coefs_[i];
    return s;
  }

  int k_dim_ = 0;
  double gamma_ = 0.0;
  double horizon_ = 0.0;
  std::vector<double> energies_;
  std::vector<Matrix> coefs_;
  Matrix s0_;
};

inline SKernel s_kernel(const StationaryState& state, const DilationData& dil) {
  return SKernel(state, dil);
}

// Arrival rate at one detector: tr S(0) G_x.
inline double detector_rate(const SKernel& s, const Matrix& g) {
  const complexd r = (s.s0() * g).trace();
  require(std::abs(r.imag()) <= 1e-12 * std::max(1.0, std::abs(r)), errc::invalid_argument,
          "rate has a non-real residue");
  return r.real();
}

// Normalized two-time correlation between detectors x and y:
//   g2_xy(tau) = 1 + s/(gamma_x gamma_y) tr S(tau)^dag G_x S(tau) G_y.
inline double g2_xy(const SKernel& s, const Matrix& gx, const Matrix& gy, double tau,
                    Statistics stats) {
  const double rx = detector_rate(s, gx);
  const double ry = detector_rate(s, gy);
  require(rx > 0.0 && ry > 0.0, errc::zero_rate, "both detector rates must be positive");
  if (stats.value() == 0.0) return 1.0;
  const Matrix st = s.at(tau);
  const complexd t = (st.adjoint() * gx * st * gy).trace();
  require(std::abs(t.imag()) <= 1e-9 * std::max(1.0, std::abs(t)), errc::invalid_argument,
          "correlation trace has a non-real residue");
  return 1.0 + stats.value() / (rx * ry) * t.real();
}

// Both sides of the local trace bound
//   || sqrt(sigma) F[f] sqrt(sigma) ||_1 <= ||f||_inf gamma |t2 - t1|
// for a test function supported on bins inside [t1, t2].
struct TraceBoundSides {
  double lhs = 0.0;
  double rhs = 0.0;
};

inline TraceBoundSides local_trace_bound_check(const StationaryState& state,
                                               const DilationData& dil, const OutcomeGrid& grid,
                                               const std::vector<complexd>& f, double t1,
                                               double t2) {
  require(t2 > t1, errc::invalid_argument, "window must have positive length");
  double f_inf = 0.0;
  for (int c = 0; c < grid.n_cells(); ++c) {
    if (f[c] == complexd(0.0, 0.0)) continue;
    const auto [a, b] = grid.bin_interval(grid.bin_of(c));
    require(a >= t1 - 1e-12 && b <= t2 + 1e-12, errc::invalid_argument,
            "test function must be supported inside the window");
    f_inf = std::max(f_inf, std::abs(f[c]));
  }
  const Matrix eff = assemble_test_function_effect(state.space, dil, grid, f);
  const Matrix w = state.sqrt_blockdiag();
  TraceBoundSides out;
  out.lhs = trace_norm(w * eff * w);
  out.rhs = f_inf * state.rate() * (t2 - t1);
  require(out.lhs <= out.rhs * (1.0 + 1e-6) + 1e-12, errc::invalid_argument,
          "local trace bound violated");
  return out;
}

// Time-windowed trace-class approximant of the beam: the positive kernel
//   sqrt(sigma(E)) * sin((E-E')T)/(pi (E-E')) * sqrt(sigma(E'))
// on node pairs, returned through its factor W_T = D S_T^(1/2) so that
// W_T W_T^dag is the truncated occupation. On a uniform rectangle grid the
// family reaches the stationary block form exactly at T = pi/spacing.
inline QuasiFreeSource finite_beam_truncation(const StationaryState& state, double t_half,
                                              Statistics stats) {
  require(t_half > 0.0, errc::invalid_argument, "truncation time must be positive");
  const auto& sp = state.space;
  int d = -1;
  for (int i = 0; i < sp.n_nodes(); ++i) {
    if (sp.mult[i] == 0) continue;
    if (d < 0) d = sp.mult[i];
    require(sp.mult[i] == d, errc::invalid_argument,
            "truncation needs equal multiplicities across occupied nodes");
  }
  require(d > 0, errc::invalid_argument, "state has no occupied nodes");

  const int n = sp.n_nodes();
  Matrix sinc = Matrix::Zero(sp.total_dim, sp.total_dim);
  for (int i = 0; i < n; ++i) {
    if (sp.mult[i] == 0) continue;
    for (int j = 0; j < n; ++j) {
      if (sp.mult[j] == 0) continue;
      const double de = sp.nodes[i] - sp.nodes[j];
      const double v = std::abs(de) * t_half < 1e-8 ? t_half / pi : std::sin(de * t_half) / (pi * de);
      sinc.block(sp.offsets[i], sp.offsets[j], d, d) = v * Matrix::Identity(d, d);
    }
  }
  Matrix dfac = Matrix::Zero(sp.total_dim, sp.total_dim);
  for (int i = 0; i < n; ++i) {
    if (sp.mult[i] == 0) continue;
    dfac.block(sp.offsets[i], sp.offsets[i], d, d) =
        std::sqrt(sp.weights[i]) * hatsigma_sqrt(HermitianPSD(state.blocks[i]));
  }
  const Matrix root = hatsigma_sqrt(HermitianPSD(sinc));
  return QuasiFreeSource(dfac * root, stats);
}

}  // namespace fcs
