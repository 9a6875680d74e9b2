#include <catch2/catch.hpp>

#include "fcs/linalg.hpp"
#include "test_util.hpp"

using fcs::complexd;
using fcs::det_power;
using fcs::HermitianPSD;
using fcs::Matrix;
using fcs::Statistics;

namespace {

bool has_code(const std::function<void()>& f, fcs::errc code) {
  try {
    f();
  } catch (const fcs::Error& e) {
    return e.code() == code;
  }
  return false;
}

}  // namespace

TEST_CASE("statistics parameter values") {
  CHECK(Statistics::bose().value() == 1.0);
  CHECK(Statistics::fermi().value() == -1.0);
  CHECK(Statistics::boltzmann().value() == 0.0);
  CHECK(Statistics::parabose(4).value() == Approx(0.25));
  CHECK(Statistics::parafermi(2).value() == Approx(-0.5));
  CHECK(Statistics::bose().integer_exponent());
  CHECK_FALSE(Statistics::parabose(2).integer_exponent());
  CHECK(has_code([] { Statistics::parabose(0); }, fcs::errc::invalid_argument));
}

TEST_CASE("det_power on the zero matrix is one") {
  for (int n : {1, 3, 7}) {
    Matrix z = Matrix::Zero(n, n);
    CHECK(std::abs(det_power(z, Statistics::bose()) - 1.0) < 1e-14);
    CHECK(std::abs(det_power(z, Statistics::fermi()) - 1.0) < 1e-14);
    CHECK(std::abs(det_power(z, Statistics::boltzmann()) - 1.0) < 1e-14);
  }
}

TEST_CASE("det_power of a rank-one Bose kernel is the geometric factor") {
  auto gen = testutil::rng(11);
  fcs::Vector v = testutil::random_complex(5, 1, gen);
  v.normalize();
  Matrix a = 0.3 * v * v.adjoint();
  complexd c = det_power(a, Statistics::bose());
  CHECK(std::abs(c - complexd(1.0 / 0.7)) < 1e-12);
}

TEST_CASE("det_power on a diagonal Fermi kernel multiplies the factors") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 0.3;
  a(1, 1) = 0.5;
  complexd c = det_power(a, Statistics::fermi());
  CHECK(std::abs(c - complexd(1.3 * 1.5)) < 1e-12);
}

TEST_CASE("det_power s -> 0 limit agrees with exp(tr A)") {
  auto gen = testutil::rng(42);
  Matrix a = testutil::random_hermitian_with_norm(6, gen, 0.45);
  const complexd direct = det_power(a, Statistics::boltzmann());
  CHECK(std::abs(direct - std::exp(a.trace())) < 1e-13 * std::abs(direct));
  // Symmetric extrapolation through s = +-1/64 cancels the O(s) correction.
  const complexd plus = det_power(a, Statistics::parabose(64));
  const complexd minus = det_power(a, Statistics::parafermi(64));
  const complexd extrapolated = std::sqrt(plus * minus);
  CHECK(std::abs(extrapolated - direct) < 1e-3 * std::abs(direct));
}

TEST_CASE("det_power rejects singular and continuation-violating kernels") {
  Matrix a = Matrix::Identity(2, 2);
  CHECK(has_code([&] { det_power(a, Statistics::bose()); }, fcs::errc::singular_determinant));
  Matrix b = 2.0 * Matrix::Identity(2, 2);
  CHECK(has_code([&] { det_power(b, Statistics::bose()); }, fcs::errc::branch_ambiguity));
  // Fractional exponents cannot cross the negative real axis either.
  Matrix c = -4.0 * Matrix::Identity(2, 2);
  CHECK(has_code([&] { det_power(c, Statistics::parafermi(2)); }, fcs::errc::branch_ambiguity));
  // Integer Fermi exponent: a negative real factor is a legitimate value.
  Matrix d = -3.0 * Matrix::Identity(1, 1);
  CHECK(std::abs(det_power(d, Statistics::fermi()) - complexd(-2.0)) < 1e-12);
}

TEST_CASE("det_power commutes through operator products") {
  auto gen = testutil::rng(7);
  const Matrix a = testutil::random_complex(6, 4, gen, 0.3);
  const Matrix b = testutil::random_complex(4, 6, gen, 0.3);
  for (Statistics s : {Statistics::bose(), Statistics::fermi(), Statistics::boltzmann(),
                       Statistics::parabose(3)}) {
    const complexd lhs = det_power(a * b, s);
    const complexd rhs = det_power(b * a, s);
    CHECK(std::abs(lhs - rhs) < 1e-10 * std::abs(lhs));
  }
}

TEST_CASE("trace of sandwiched product is dominated by the trace norm") {
  auto gen = testutil::rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = testutil::random_psd(6, gen, 0.8);
    const Matrix b = testutil::random_psd(6, gen, 1.3);
    const Matrix ra = fcs::hatsigma_sqrt(HermitianPSD(a));
    const double lhs = (ra * b * ra).trace().real();
    const double rhs = fcs::trace_norm(a * b);
    CHECK(lhs <= rhs * (1.0 + 1e-10) + 1e-12);
  }
}

TEST_CASE("determinant difference obeys the trace-norm Lipschitz bound") {
  auto gen = testutil::rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = testutil::random_complex(5, 5, gen, 0.4);
    const Matrix b = a + testutil::random_complex(5, 5, gen, 0.1);
    const complexd da = det_power(a, Statistics::fermi());
    const complexd db = det_power(b, Statistics::fermi());
    const double bound = fcs::trace_norm(a - b) *
                         std::exp(fcs::trace_norm(a) + fcs::trace_norm(b) + 1.0);
    CHECK(std::abs(da - db) <= bound);
  }
}

TEST_CASE("occupation map on scalars and the zero operator") {
  Matrix z = Matrix::Zero(3, 3);
  for (Statistics s : {Statistics::bose(), Statistics::fermi(), Statistics::boltzmann()}) {
    CHECK(fcs::sigma_to_hatsigma(HermitianPSD(z), s).mat().norm() == 0.0);
  }
  Matrix half = 0.5 * Matrix::Identity(1, 1);
  CHECK(fcs::sigma_to_hatsigma(HermitianPSD(half), Statistics::bose()).mat()(0, 0).real() ==
        Approx(1.0));
  Matrix one = Matrix::Identity(1, 1);
  CHECK(fcs::sigma_to_hatsigma(HermitianPSD(one), Statistics::fermi()).mat()(0, 0).real() ==
        Approx(0.5));
}

TEST_CASE("occupation map rejects Bose operators at the norm bound") {
  Matrix one = Matrix::Identity(2, 2);
  CHECK(has_code([&] { fcs::sigma_to_hatsigma(HermitianPSD(one), Statistics::bose()); },
                 fcs::errc::bose_norm_violation));
}

TEST_CASE("Fermi occupation stays strictly below the identity") {
  auto gen = testutil::rng(31);
  const Matrix sigma = testutil::random_psd(5, gen, 4.0);
  const HermitianPSD hat = fcs::sigma_to_hatsigma(HermitianPSD(sigma), Statistics::fermi());
  CHECK(hat.eigenvalues().maxCoeff() < 1.0);
}

TEST_CASE("PSD square root squares back to the input") {
  Matrix id = Matrix::Identity(4, 4);
  CHECK((fcs::hatsigma_sqrt(HermitianPSD(id)) - id).norm() < 1e-14);

  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 9.0;
  Matrix rd = fcs::hatsigma_sqrt(HermitianPSD(d));
  CHECK(std::abs(rd(0, 0).real() - 2.0) < 1e-14);
  CHECK(std::abs(rd(1, 1).real() - 3.0) < 1e-14);

  auto gen = testutil::rng(5);
  const Matrix p = testutil::random_psd(8, gen, 2.0);
  const Matrix r = fcs::hatsigma_sqrt(HermitianPSD(p));
  CHECK((r * r - p).norm() <= 1e-10 * p.norm());
}

TEST_CASE("HermitianPSD certification rejects bad inputs") {
  auto gen = testutil::rng(3);
  Matrix a = testutil::random_complex(4, 4, gen);
  CHECK(has_code([&] { HermitianPSD{a}; }, fcs::errc::not_hermitian));
  Matrix h = testutil::random_hermitian_with_norm(4, gen, 1.0);
  h -= 2.0 * Matrix::Identity(4, 4);
  CHECK(has_code([&] { HermitianPSD{h}; }, fcs::errc::not_psd));
  // Quadrature-level asymmetry is symmetrized away.
  Matrix p = testutil::random_psd(4, gen, 1.0);
  p(0, 1) += fcs::complexd(0.0, 1e-15);
  CHECK_NOTHROW(HermitianPSD{p});
}

TEST_CASE("trace norm and operator norm agree with direct singular values") {
  Matrix m(2, 2);
  m << complexd(3, 0), complexd(0, 0), complexd(0, 0), complexd(-4, 0);
  CHECK(fcs::trace_norm(m) == Approx(7.0));
  CHECK(fcs::operator_norm(m) == Approx(4.0));
}
