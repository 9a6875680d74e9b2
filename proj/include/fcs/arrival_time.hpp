#pragma once

// Discretized direct-integral space over the energy axis and covariant
// time-of-arrival effects built from dilation data (per-node contractions
// V_E into a multiplicity space, detector POVM G). A time band [a,b) at
// detector x becomes the block matrix
//   sqrt(w_i w_j) * hhat_[a,b)(E_i - E_j) * V_i^dag G_x V_j
// which is positive semidefinite for any grid because the indicator
// transform factors as a Gram integral.

#include <string>
#include <utility>
#include <vector>

#include "fcs/linalg.hpp"

namespace fcs {

// Energy grid with quadrature weights and per-node multiplicity dimensions.
// mult[i] = 0 encodes an energy outside the spectrum.
struct DirectIntegralSpace {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::vector<int> mult;
  std::vector<int> offsets;  // block start per node in the flattened space
  int total_dim = 0;

  int n_nodes() const { return static_cast<int>(nodes.size()); }

  void finalize() {
    require(nodes.size() == weights.size() && nodes.size() == mult.size(),
            errc::invalid_argument, "nodes, weights and multiplicities must align");
    offsets.assign(nodes.size(), 0);
    total_dim = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (i > 0)
        require(nodes[i] > nodes[i - 1], errc::invalid_argument, "nodes must strictly increase");
      require(weights[i] > 0.0, errc::invalid_argument, "weights must be positive");
      require(mult[i] >= 0, errc::invalid_argument, "multiplicity must be non-negative");
      offsets[i] = total_dim;
      total_dim += mult[i];
    }
  }

  // Uniform grid with composite trapezoid weights.
  static DirectIntegralSpace uniform(double e_min, double e_max, int n, int multiplicity = 1) {
    require(n >= 2 && e_max > e_min, errc::invalid_argument, "need n >= 2 and e_max > e_min");
    DirectIntegralSpace s;
    const double h = (e_max - e_min) / (n - 1);
    for (int i = 0; i < n; ++i) {
      s.nodes.push_back(e_min + h * i);
      s.weights.push_back((i == 0 || i == n - 1) ? 0.5 * h : h);
      s.mult.push_back(multiplicity);
    }
    s.finalize();
    return s;
  }

  // Uniform grid with equal (rectangle) weights; the natural grid for
  // discrete-Fourier identities such as the exact band completion at
  // T = pi / spacing.
  static DirectIntegralSpace uniform_rectangle(double e_min, double e_max, int n,
                                               int multiplicity = 1) {
    DirectIntegralSpace s = uniform(e_min, e_max, n, multiplicity);
    const double h = (e_max - e_min) / (n - 1);
    for (auto& w : s.weights) w = h;
    return s;
  }

  static DirectIntegralSpace from_data(std::vector<double> nodes_, std::vector<double> weights_,
                                       std::vector<int> mult_) {
    DirectIntegralSpace s;
    s.nodes = std::move(nodes_);
    s.weights = std::move(weights_);
    s.mult = std::move(mult_);
    s.finalize();
    return s;
  }

  double max_spacing() const {
    double m = 0.0;
    for (std::size_t i = 1; i < nodes.size(); ++i) m = std::max(m, nodes[i] - nodes[i - 1]);
    return m;
  }

  bool uniform_nodes(double rel_tol = 1e-9) const {
    if (nodes.size() < 3) return true;
    const double h = nodes[1] - nodes[0];
    for (std::size_t i = 1; i < nodes.size(); ++i)
      if (std::abs(nodes[i] - nodes[i - 1] - h) > rel_tol * h) return false;
    return true;
  }
};

// Dilation of a covariant arrival observable: multiplicity space dimension,
// per-node contractions V_E (stored as k_dim x d_i matrices), and the
// detector POVM on the multiplicity space. Subnormalized observables are
// allowed (sum of effects <= 1, contractive V).
struct DilationData {
  int k_dim = 0;
  std::vector<Matrix> v;            // per node, k_dim x mult[i]
  std::vector<Matrix> povm;         // k_dim x k_dim PSD effects
  std::vector<std::string> labels;  // one per POVM element
  std::vector<bool> isometry;       // per node: V^dag V == 1 within 1e-10

  void validate(const DirectIntegralSpace& space) {
    require(k_dim >= 1, errc::invalid_argument, "multiplicity space must be non-trivial");
    require(static_cast<int>(v.size()) == space.n_nodes(), errc::invalid_argument,
            "one V_E per node required");
    require(!povm.empty() && povm.size() == labels.size(), errc::invalid_argument,
            "POVM effects and labels must align");
    isometry.assign(v.size(), false);
    for (int i = 0; i < space.n_nodes(); ++i) {
      require(v[i].rows() == k_dim && v[i].cols() == space.mult[i], errc::invalid_argument,
              "V_E must map the node block into the multiplicity space");
      if (space.mult[i] == 0) continue;
      require(operator_norm(v[i]) <= 1.0 + 1e-10, errc::invalid_argument,
              "V_E must be a contraction");
      const Matrix gram = v[i].adjoint() * v[i];
      isometry[i] =
          (gram - Matrix::Identity(space.mult[i], space.mult[i])).cwiseAbs().maxCoeff() <= 1e-10;
    }
    Matrix total = Matrix::Zero(k_dim, k_dim);
    for (const Matrix& g : povm) {
      HermitianPSD cert(g);  // certifies each effect
      total += cert.mat();
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(total, Eigen::EigenvaluesOnly);
    require(es.eigenvalues().maxCoeff() <= 1.0 + 1e-10, errc::invalid_argument,
            "POVM must be subnormalized");
  }

  int detector_index(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) return static_cast<int>(i);
    raise(errc::invalid_argument, "unknown detector label '" + label + "'");
  }
};

// Transform (2*pi)^-1 * int_a^b exp(i*dE*t) dt of the band indicator,
// evaluated in the phase * sinc form that is stable through dE -> 0.
inline complexd fourier_indicator(double a, double b, double de) {
  require(a <= b, errc::invalid_argument, "band must have non-negative length");
  if (a == b) return complexd(0.0, 0.0);
  const double half = 0.5 * (b - a);
  const double x = de * half;
  const complexd phase = std::exp(complexd(0.0, de * 0.5 * (a + b)));
  if (std::abs(x) < 1e-8) return phase * (half / pi);
  return phase * (std::sin(x) / (pi * de));
}

// Time-band x detector effect on the discretized space.
struct TimeBandEffect {
  double band_lo = 0.0;
  double band_hi = 0.0;
  std::string detector;
  HermitianPSD matrix;
};

namespace detail {

// Raw (uncertified) assembly of the band-effect matrix.
inline Matrix band_effect_matrix(const DirectIntegralSpace& space, const DilationData& dil,
                                 double a, double b, int det) {
  const int n = space.n_nodes();
  Matrix out = Matrix::Zero(space.total_dim, space.total_dim);
  const Matrix& g = dil.povm[det];
  std::vector<Matrix> gv(n);  // G_x V_j per node
  for (int j = 0; j < n; ++j)
    if (space.mult[j] > 0) gv[j] = g * dil.v[j];
  for (int i = 0; i < n; ++i) {
    if (space.mult[i] == 0) continue;
    for (int j = 0; j < n; ++j) {
      if (space.mult[j] == 0) continue;
      const complexd hh = fourier_indicator(a, b, space.nodes[i] - space.nodes[j]);
      out.block(space.offsets[i], space.offsets[j], space.mult[i], space.mult[j]) =
          std::sqrt(space.weights[i] * space.weights[j]) * hh * (dil.v[i].adjoint() * gv[j]);
    }
  }
  return out;
}

inline void check_band_resolution(const DirectIntegralSpace& space, double a, double b) {
  const double ms = space.max_spacing();
  if (ms > 0.0)
    require(ms <= pi / (b - a) * (1.0 + 1e-12), errc::grid_too_coarse,
            "band length " + std::to_string(b - a) + " needs node spacing <= " +
                std::to_string(pi / (b - a)));
}

}  // namespace detail

// Assembled effect for the band [a,b) at the named detector, certified PSD.
// Enforces the band-resolution condition max spacing <= pi/(b-a).
inline TimeBandEffect assemble_effect(const DirectIntegralSpace& space, const DilationData& dil,
                                      double a, double b, const std::string& detector) {
  require(a <= b, errc::invalid_argument, "band must have non-negative length");
  const int det = dil.detector_index(detector);
  if (a == b)
    return TimeBandEffect{a, b, detector,
                          HermitianPSD(Matrix::Zero(space.total_dim, space.total_dim))};
  detail::check_band_resolution(space, a, b);
  Matrix m = detail::band_effect_matrix(space, dil, a, b, det);
  return TimeBandEffect{a, b, detector, HermitianPSD(m)};
}

// Free-particle arrival time observable in one dimension: two-fold
// multiplicity (+-momentum) at positive energies, V_E = identity, and the
// two projective detectors selecting the momentum sign.
inline DilationData kijowski_free_1d(const DirectIntegralSpace& space) {
  DilationData dil;
  dil.k_dim = 2;
  for (int i = 0; i < space.n_nodes(); ++i) {
    require(space.mult[i] == 0 || space.mult[i] == 2, errc::invalid_argument,
            "free 1d arrival observable needs two-fold multiplicity");
    if (space.mult[i] > 0)
      require(space.nodes[i] > 0.0, errc::invalid_argument,
              "free 1d arrival observable lives at positive energies");
    dil.v.push_back(space.mult[i] == 2 ? Matrix(Matrix::Identity(2, 2)) : Matrix(2, 0));
  }
  Matrix plus = Matrix::Zero(2, 2), minus = Matrix::Zero(2, 2);
  plus(0, 0) = 1.0;
  minus(1, 1) = 1.0;
  dil.povm = {plus, minus};
  dil.labels = {"right", "left"};
  dil.validate(space);
  return dil;
}

}  // namespace fcs
