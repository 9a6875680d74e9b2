#pragma once

// Finite-dimensional complex linear algebra for counting statistics:
// certified Hermitian-positive matrices, the statistics parameter s, the
// determinant power det(1 - sA)^(-s), and the occupation maps between a
// one-particle operator and its statistics-corrected form.

#include <cmath>
#include <string>

#include "fcs/common.hpp"

namespace fcs {

// Symmetry parameter of the particle statistics: +1 Bose, -1 Fermi,
// 0 Boltzmann, +-1/p for parastatistics of order p.
class Statistics {
 public:
  static Statistics bose() { return Statistics(+1, 1); }
  static Statistics fermi() { return Statistics(-1, 1); }
  static Statistics boltzmann() { return Statistics(0, 1); }
  static Statistics parabose(int p) {
    require(p >= 1, errc::invalid_argument, "parastatistics order must be >= 1");
    return Statistics(+1, p);
  }
  static Statistics parafermi(int p) {
    require(p >= 1, errc::invalid_argument, "parastatistics order must be >= 1");
    return Statistics(-1, p);
  }

  double value() const { return sign_ == 0 ? 0.0 : static_cast<double>(sign_) / order_; }
  int sign() const { return sign_; }
  int order() const { return order_; }
  bool is_boltzmann() const { return sign_ == 0; }
  // True when the determinant exponent -s is an integer (s = +-1 or 0).
  bool integer_exponent() const { return order_ == 1; }

  std::string name() const {
    if (sign_ == 0) return "boltzmann";
    if (order_ == 1) return sign_ > 0 ? "bose" : "fermi";
    return (sign_ > 0 ? "parabose:" : "parafermi:") + std::to_string(order_);
  }

  friend bool operator==(const Statistics& a, const Statistics& b) {
    return a.sign_ == b.sign_ && a.order_ == b.order_;
  }

 private:
  Statistics(int sign, int order) : sign_(sign), order_(order) {}
  int sign_;
  int order_;
};

namespace detail {

inline double max_abs(const Matrix& a) { return a.cwiseAbs().maxCoeff(); }

inline bool is_hermitian(const Matrix& a, double rel_tol) {
  const double scale = max_abs(a);
  if (scale == 0.0) return true;
  return max_abs(a - a.adjoint()) <= rel_tol * scale;
}

}  // namespace detail

// Eigenvalues of a general square complex matrix; uses the self-adjoint
// solver when the input is Hermitian to machine precision.
inline Vector eigenvalues(const Matrix& a) {
  require(a.rows() == a.cols(), errc::invalid_argument, "matrix must be square");
  require(a.allFinite(), errc::invalid_argument, "matrix has non-finite entries");
  if (a.rows() == 0) return Vector(0);
  if (detail::is_hermitian(a, 1e-13)) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cast<complexd>();
  }
  Eigen::ComplexEigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
  require(es.info() == Eigen::Success, errc::non_convergent, "eigenvalue iteration failed");
  return es.eigenvalues();
}

// Hermitian matrix with certified positive semidefiniteness. The input is
// symmetrized once at construction; asymmetry beyond 1e-12 (relative, max
// norm) or eigenvalues below -1e-10 (relative, spectral norm) are rejected.
class HermitianPSD {
 public:
  explicit HermitianPSD(const Matrix& a) {
    require(a.rows() == a.cols(), errc::invalid_argument, "matrix must be square");
    require(a.allFinite(), errc::invalid_argument, "matrix has non-finite entries");
    const double scale = detail::max_abs(a);
    if (scale > 0.0) {
      require(detail::max_abs(a - a.adjoint()) <= 1e-12 * scale, errc::not_hermitian,
              "asymmetry exceeds 1e-12 relative tolerance");
    }
    mat_ = 0.5 * (a + a.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(mat_, Eigen::EigenvaluesOnly);
    eigs_ = es.eigenvalues();
    const double spectral = eigs_.size() ? eigs_.cwiseAbs().maxCoeff() : 0.0;
    min_eig_ = eigs_.size() ? eigs_.minCoeff() : 0.0;
    require(min_eig_ >= -1e-10 * std::max(spectral, 1e-300), errc::not_psd,
            "minimum eigenvalue " + std::to_string(min_eig_) + " below PSD tolerance");
  }

  const Matrix& mat() const { return mat_; }
  int dim() const { return static_cast<int>(mat_.rows()); }
  // Eigenvalues in ascending order; tiny certified negatives are kept as-is.
  const RealVector& eigenvalues() const { return eigs_; }
  double min_eigenvalue() const { return min_eig_; }

 private:
  Matrix mat_;
  RealVector eigs_;
  double min_eig_ = 0.0;
};

// det(1 - sA)^(-s), evaluated as exp(-(1/s) sum_j log(1 - s lambda_j)) over
// the eigenvalues of A with the principal branch of the logarithm; the s = 0
// limit is exp(tr A).
//
// For integer exponents (s = +-1) a factor on the negative real axis is
// harmless (the 2*pi*i branch jump exponentiates away), so the branch guard
// applies only when the exponent is fractional, and additionally for any
// s > 0 where a negative real factor means the generating determinant left
// its convergence region.
inline complexd det_power(const Matrix& a, Statistics stats) {
  require(a.rows() == a.cols(), errc::invalid_argument, "matrix must be square");
  require(a.allFinite(), errc::invalid_argument, "matrix has non-finite entries");
  const double s = stats.value();
  if (s == 0.0) return std::exp(a.trace());
  const Vector lam = eigenvalues(a);
  const double scale = std::max(a.norm(), 1e-300);
  complexd log_sum = 0.0;
  for (Eigen::Index j = 0; j < lam.size(); ++j) {
    const complexd z = 1.0 - s * lam[j];
    if (std::abs(z) <= 1e-12 * scale)
      raise(errc::singular_determinant, "1 - s*lambda vanishes at eigenvalue " + std::to_string(j));
    const bool on_negative_axis = z.real() < 0.0 && std::abs(z.imag()) <= 1e-12 * std::abs(z);
    if (on_negative_axis && (!stats.integer_exponent() || s > 0.0))
      raise(errc::branch_ambiguity,
            "1 - s*lambda on the negative real axis; kernel outside the physical region");
    log_sum += std::log(z);
  }
  return std::exp(-log_sum / s);
}

// Occupation map sigma -> sigma/(1 - s*sigma) via eigendecomposition.
// Bose inputs must satisfy ||sigma|| <= 1 - 1e-8.
inline HermitianPSD sigma_to_hatsigma(const HermitianPSD& sigma, Statistics stats) {
  const double s = stats.value();
  if (s == 0.0) return sigma;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma.mat());
  const RealVector lam = es.eigenvalues();
  if (s > 0.0) {
    require(lam.size() == 0 || s * lam.maxCoeff() <= 1.0 - 1e-8, errc::bose_norm_violation,
            "Bose occupation requires s*||sigma|| strictly below 1");
  }
  RealVector mapped(lam.size());
  for (Eigen::Index j = 0; j < lam.size(); ++j) {
    const double l = std::max(lam[j], 0.0);
    mapped[j] = l / (1.0 - s * l);
  }
  Matrix out = es.eigenvectors() * mapped.asDiagonal() * es.eigenvectors().adjoint();
  return HermitianPSD(out);
}

// Hermitian PSD square root via eigendecomposition; certified negatives
// within tolerance are clipped to zero before taking the root.
inline Matrix hatsigma_sqrt(const HermitianPSD& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.mat());
  RealVector lam = es.eigenvalues();
  for (Eigen::Index j = 0; j < lam.size(); ++j) lam[j] = std::sqrt(std::max(lam[j], 0.0));
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().adjoint();
}

// Singular values via the Hermitian eigenproblem of M^dag M.
inline RealVector singular_values(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) return RealVector(0);
  const Matrix g = m.adjoint() * m;
  Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
  RealVector sv = es.eigenvalues();
  for (Eigen::Index j = 0; j < sv.size(); ++j) sv[j] = std::sqrt(std::max(sv[j], 0.0));
  return sv;
}

// Trace norm (sum of singular values).
inline double trace_norm(const Matrix& m) { return singular_values(m).sum(); }

// Operator norm (largest singular value).
inline double operator_norm(const Matrix& m) {
  const RealVector sv = singular_values(m);
  return sv.size() ? sv.maxCoeff() : 0.0;
}

}  // namespace fcs
