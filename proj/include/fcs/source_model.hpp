#pragma once

// Master-equation particle source: a fixed emission amplitude phi fed into
// the free evolution at strength lambda. Provides the boundary-value
// resolvent data S_phi(E) = (1 - lambda gamma-check(E))^-1, the stationary
// occupation 4 pi lambda |S_phi|^2 |phi_E><phi_E|, the detector-projected
// correlation transform chi(tau), and the finite-time solution
//   sigma-hat(t) = 2 lambda int_0^t exp(sT) |phi><phi| exp(sT)^dag ds,
// with T = -iH + lambda |phi><phi|.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fcs/stationary_beam.hpp"

namespace fcs {

enum class SpectralProfile { lorentzian, gaussian, table };

// Boundary value of the half-line time integral of the autocorrelation:
// gamma-check(E) = pi |phi(E)|^2 + i PV int dE' |phi(E')|^2 / (E' - E).
// The principal value pairs nodes symmetrically around the singularity,
// truncates at the nearer grid edge, and carries the endpoint correction
// (f_{i+1} - f_{i-1})/2 of the half-open sum; every term vanishes on a
// constant density. Uniform node spacing is mandatory.
inline std::vector<complexd> gamma_check(const DirectIntegralSpace& space,
                                         const std::vector<double>& density) {
  const int n = space.n_nodes();
  require(static_cast<int>(density.size()) == n, errc::invalid_argument,
          "one density value per node required");
  require(space.uniform_nodes(), errc::grid_too_coarse,
          "principal-value quadrature requires a uniform grid");

  auto pair_pv = [&](const std::vector<double>& f, int i) {
    const int reach = std::min(i, n - 1 - i);
    double acc = 0.0;
    for (int k = 1; k <= reach; ++k) acc += (f[i + k] - f[i - k]) / k;
    if (reach >= 1) acc += 0.5 * (f[i + 1] - f[i - 1]);
    return acc;
  };

  // self-test: the quadrature annihilates constants at interior nodes
  {
    const std::vector<double> ones(n, 1.0);
    double worst = 0.0;
    for (int i : {1, n / 2, n - 2})
      if (i >= 1 && i <= n - 2) worst = std::max(worst, std::abs(pair_pv(ones, i)));
    require(worst <= 1e-8, errc::grid_too_coarse, "principal-value self-test failed");
  }

  std::vector<complexd> out(n);
  for (int i = 0; i < n; ++i) out[i] = complexd(pi * density[i], pair_pv(density, i));
  return out;
}

// Emission amplitude on the discretized space with source strength lambda.
struct SourceSpec {
  DirectIntegralSpace space;
  std::vector<Vector> phi;  // per node, mult[i] components
  double lambda = 0.0;
  SpectralProfile profile = SpectralProfile::table;

  static SourceSpec lorentzian(DirectIntegralSpace space, double e0, double alpha, double lambda,
                               int component = 0) {
    require(alpha > 0.0, errc::invalid_argument, "width must be positive");
    std::vector<double> d(space.n_nodes());
    for (int i = 0; i < space.n_nodes(); ++i) {
      const double de = space.nodes[i] - e0;
      d[i] = (alpha / (2.0 * pi)) / (de * de + 0.25 * alpha * alpha);
    }
    return from_density(std::move(space), d, lambda, component, SpectralProfile::lorentzian);
  }

  static SourceSpec gaussian(DirectIntegralSpace space, double e0, double alpha, double lambda,
                             int component = 0) {
    require(alpha > 0.0, errc::invalid_argument, "width must be positive");
    std::vector<double> d(space.n_nodes());
    for (int i = 0; i < space.n_nodes(); ++i) {
      const double de = space.nodes[i] - e0;
      d[i] = std::exp(-0.5 * de * de / (alpha * alpha)) / (std::sqrt(2.0 * pi) * alpha);
    }
    return from_density(std::move(space), d, lambda, component, SpectralProfile::gaussian);
  }

  // Density values per node; normalized on the grid so that ||phi|| = 1.
  static SourceSpec from_density(DirectIntegralSpace space, const std::vector<double>& density,
                                 double lambda, int component = 0,
                                 SpectralProfile profile = SpectralProfile::table) {
    require(lambda > 0.0, errc::invalid_argument, "source strength must be positive");
    require(static_cast<int>(density.size()) == space.n_nodes(), errc::invalid_argument,
            "one density value per node required");
    SourceSpec s;
    double norm2 = 0.0;
    for (int i = 0; i < space.n_nodes(); ++i) {
      require(density[i] >= 0.0, errc::invalid_argument, "densities must be non-negative");
      Vector v = Vector::Zero(space.mult[i]);
      if (space.mult[i] > 0) {
        require(component < space.mult[i], errc::invalid_argument, "component out of range");
        v[component] = std::sqrt(density[i]);
      }
      norm2 += space.weights[i] * density[i];
      s.phi.push_back(std::move(v));
    }
    require(norm2 > 0.0, errc::invalid_argument, "amplitude vanishes on the grid");
    const double scale = 1.0 / std::sqrt(norm2);
    for (auto& v : s.phi) v *= scale;
    s.space = std::move(space);
    s.lambda = lambda;
    s.profile = profile;
    return s;
  }

  std::vector<double> density() const {
    std::vector<double> d(space.n_nodes());
    for (int i = 0; i < space.n_nodes(); ++i) d[i] = phi[i].squaredNorm();
    return d;
  }

  // Flattened amplitude in quadrature-embedded coordinates.
  Vector embedded() const {
    Vector x = Vector::Zero(space.total_dim);
    for (int i = 0; i < space.n_nodes(); ++i)
      if (space.mult[i] > 0)
        x.segment(space.offsets[i], space.mult[i]) = std::sqrt(space.weights[i]) * phi[i];
    return x;
  }

  std::vector<complexd> gamma_check_values() const { return gamma_check(space, density()); }
};

// Resolvent factor S_phi(E) = (1 - lambda gamma-check(E))^-1 per node.
struct ResolventFactor {
  std::vector<complexd> values;
};

namespace detail {

// Winding number of the closed curve 1 - lambda gamma-check(E) (closed
// through the point 1 at both spectral ends). A non-zero winding signals a
// resolvent pole off the real axis: the source overdrives the escape rate.
inline int resolvent_winding(const std::vector<complexd>& gam, double lambda) {
  double total = 0.0;
  complexd prev(1.0, 0.0);
  auto step = [&](complexd z) {
    total += std::arg(z / prev);
    prev = z;
  };
  for (const complexd& g : gam) step(1.0 - lambda * g);
  step(complexd(1.0, 0.0));
  return static_cast<int>(std::lround(total / (2.0 * pi)));
}

}  // namespace detail

// Stability-checked resolvent factor.
inline ResolventFactor resolvent_factor(const SourceSpec& src) {
  const auto gam = src.gamma_check_values();
  ResolventFactor out;
  double margin = std::numeric_limits<double>::infinity();
  for (const complexd& g : gam) margin = std::min(margin, std::abs(1.0 - src.lambda * g));
  require(margin > 1e-6, errc::pole_crossing, "resolvent margin below 1e-6");
  require(detail::resolvent_winding(gam, src.lambda) == 0, errc::pole_crossing,
          "resolvent acquires a pole: source strength beyond the stability threshold");
  out.values.reserve(gam.size());
  for (const complexd& g : gam) out.values.push_back(1.0 / (1.0 - src.lambda * g));
  for (const complexd& s : out.values)
    require(std::abs(s) < 1e6, errc::pole_crossing, "resolvent factor exceeds the pole guard");
  return out;
}

// Stationary occupation 4 pi lambda |S_phi(E)|^2 |phi_E><phi_E| per node.
inline StationaryState stationary_sigma(const SourceSpec& src) {
  const ResolventFactor s = resolvent_factor(src);
  std::vector<Matrix> blocks;
  blocks.reserve(src.space.n_nodes());
  for (int i = 0; i < src.space.n_nodes(); ++i) {
    const double f = 4.0 * pi * src.lambda * std::norm(s.values[i]);
    blocks.push_back(f * (src.phi[i] * src.phi[i].adjoint()));
  }
  return StationaryState(src.space, std::move(blocks));
}

// Detector-projected correlation transform
//   chi(tau) = 4 pi lambda int dE exp(-i tau E) |S_phi(E)|^2 <phi_E| V^dag G_x V |phi_E>,
// with gamma_x = chi(0)/(2 pi) and g2(tau) = 1 + |chi(tau)|^2 / chi(0)^2.
// With `reference` set the resolvent factor is replaced by one, giving the
// uncorrected source spectrum (the weak-source limit curve).
inline std::vector<complexd> chi_tau(const SourceSpec& src, const DilationData& dil,
                                     const std::string& detector, const std::vector<double>& taus,
                                     bool reference = false) {
  const int det = dil.detector_index(detector);
  std::vector<double> weights(src.space.n_nodes(), 0.0);
  std::vector<complexd> svals(src.space.n_nodes(), complexd(1.0, 0.0));
  if (!reference) svals = resolvent_factor(src).values;
  const double horizon =
      src.space.max_spacing() > 0 ? pi / src.space.max_spacing() : std::numeric_limits<double>::infinity();
  for (int i = 0; i < src.space.n_nodes(); ++i) {
    if (src.space.mult[i] == 0) continue;
    const Vector proj = dil.povm[det] * (dil.v[i] * src.phi[i]);
    const complexd ip = (src.phi[i].adjoint() * dil.v[i].adjoint() * proj)(0, 0);
    weights[i] = 4.0 * pi * src.lambda * std::norm(svals[i]) * ip.real() * src.space.weights[i];
  }
  std::vector<complexd> out;
  out.reserve(taus.size());
  for (double tau : taus) {
    require(std::abs(tau) <= horizon * (1.0 + 1e-12), errc::alias_risk,
            "|tau| exceeds the grid horizon pi/max(dE)");
    complexd acc = 0.0;
    for (int i = 0; i < src.space.n_nodes(); ++i)
      if (weights[i] != 0.0) acc += weights[i] * std::exp(complexd(0.0, -tau * src.space.nodes[i]));
    out.push_back(acc);
  }
  return out;
}

inline std::vector<double> g2_from_chi(const std::vector<complexd>& chi) {
  require(!chi.empty(), errc::invalid_argument, "need chi values");
  const double chi0 = chi[0].real();
  require(std::abs(chi[0].imag()) <= 1e-9 * std::max(1.0, std::abs(chi0)), errc::invalid_argument,
          "chi(0) must be real");
  require(chi0 > 0.0, errc::zero_rate, "chi(0) must be positive");
  std::vector<double> g;
  g.reserve(chi.size());
  for (const complexd& c : chi) g.push_back(1.0 + std::norm(c) / (chi0 * chi0));
  return g;
}

struct FiniteTimeOptions {
  int initial_panels = 0;  // 0: pick from t times the spectral span
  int max_doublings = 6;
  double rel_tol = 1e-9;
  bool force_ode_fallback = false;  // exercise the propagator fallback
};

namespace detail {

// Action of exp(sT) on x for a batch of times, via dense eigendecomposition
// when the eigenbasis is well conditioned, otherwise by a fourth-order
// stepper on v' = T v.
class SemigroupAction {
 public:
  SemigroupAction(const Matrix& t, const Vector& x, bool force_fallback) : t_(t), x_(x) {
    if (force_fallback) {
      use_eigen_ = false;
      return;
    }
    Eigen::ComplexEigenSolver<Matrix> es(t_);
    if (es.info() != Eigen::Success) {
      use_eigen_ = false;
      return;
    }
    p_ = es.eigenvectors();
    lam_ = es.eigenvalues();
    Eigen::PartialPivLU<Matrix> lu(p_);
    c_ = lu.solve(x_);
    // residual guard on the reconstruction of T x
    const Vector probe = p_ * (lam_.cwiseProduct(c_));
    const Vector direct = t_ * x_;
    const double denom = std::max(direct.norm(), 1e-30);
    use_eigen_ = (probe - direct).norm() <= 1e-8 * denom;
  }

  // times must be non-decreasing for the fallback path.
  std::vector<Vector> batch(const std::vector<double>& times) const {
    std::vector<Vector> out;
    out.reserve(times.size());
    if (use_eigen_) {
      for (double s : times) {
        Vector e(lam_.size());
        for (Eigen::Index j = 0; j < lam_.size(); ++j) e[j] = std::exp(s * lam_[j]) * c_[j];
        out.push_back(p_ * e);
      }
      return out;
    }
    const double span = t_.cwiseAbs().rowwise().sum().maxCoeff();  // bound on ||T||
    Vector v = x_;
    double s_now = 0.0;
    for (double s : times) {
      const double target = s;
      while (s_now < target - 1e-15) {
        const double ds = std::min(0.1 / std::max(span, 1e-12), target - s_now);
        const Vector k1 = t_ * v;
        const Vector k2 = t_ * (v + 0.5 * ds * k1);
        const Vector k3 = t_ * (v + 0.5 * ds * k2);
        const Vector k4 = t_ * (v + ds * k3);
        v += (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s_now += ds;
      }
      out.push_back(v);
    }
    return out;
  }

  bool eigen_path() const { return use_eigen_; }

 private:
  Matrix t_;
  Vector x_;
  Matrix p_;
  Vector lam_;
  Vector c_;
  bool use_eigen_ = true;
};

struct GaussLegendre8 {
  static constexpr double node[4] = {0.1834346424956498, 0.5255324099163290,
                                     0.7966664774136267, 0.9602898564975363};
  static constexpr double weight[4] = {0.3626837833783620, 0.3137066458778873,
                                       0.2223810344533745, 0.1012285362903763};
};

}  // namespace detail

// Finite-time quasi-free solution of the source master equation, shifted
// back by the free evolution: W with W W^dag = exp(iHs) sigma-hat_phi(t) exp(-iHs).
// The time integral runs over composite Gauss panels, doubled until two
// probe functionals of the result agree to rel_tol.
inline QuasiFreeSource finite_time_sigma(const SourceSpec& src, double t, double s_shift,
                                         const FiniteTimeOptions& opts = {}) {
  require(t >= 0.0 && s_shift >= 0.0, errc::invalid_argument, "times must be non-negative");
  const int n = src.space.total_dim;
  if (t == 0.0) return QuasiFreeSource(Matrix::Zero(n, 1), Statistics::bose());

  const Vector x = src.embedded();
  Matrix gen = Matrix::Zero(n, n);
  for (int i = 0; i < src.space.n_nodes(); ++i)
    for (int a = 0; a < src.space.mult[i]; ++a)
      gen(src.space.offsets[i] + a, src.space.offsets[i] + a) =
          complexd(0.0, -src.space.nodes[i]);
  gen += src.lambda * (x * x.adjoint());

  const detail::SemigroupAction act(gen, x, opts.force_ode_fallback);

  const double span = src.space.nodes.back() - src.space.nodes.front();
  int panels = opts.initial_panels > 0
                   ? opts.initial_panels
                   : std::max(4, static_cast<int>(std::ceil(t * std::max(span, 1.0) / 8.0)));

  // deterministic probe directions
  Vector u1 = Vector::Zero(n), u2 = Vector::Zero(n);
  for (int i = 0; i < n; ++i) {
    u1[i] = complexd(std::cos(0.7 * i + 0.3), std::sin(1.3 * i));
    u2[i] = complexd(std::cos(2.1 * i + 1.1), std::sin(0.4 * i + 0.5));
  }
  u1.normalize();
  u2.normalize();

  auto build = [&](int n_panels) {
    std::vector<double> times;
    std::vector<double> weights;
    const double len = t / n_panels;
    for (int p = 0; p < n_panels; ++p) {
      const double mid = (p + 0.5) * len;
      for (int q = 0; q < 4; ++q) {
        for (double sgn : {-1.0, 1.0}) {
          times.push_back(mid + sgn * 0.5 * len * detail::GaussLegendre8::node[q]);
          weights.push_back(0.5 * len * detail::GaussLegendre8::weight[q]);
        }
      }
    }
    std::vector<std::size_t> order(times.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
    std::vector<double> sorted_times;
    sorted_times.reserve(times.size());
    for (std::size_t i : order) sorted_times.push_back(times[i]);
    const std::vector<Vector> vs = act.batch(sorted_times);
    Matrix w(n, static_cast<int>(times.size()));
    for (std::size_t i = 0; i < order.size(); ++i)
      w.col(static_cast<int>(i)) = std::sqrt(2.0 * src.lambda * weights[order[i]]) * vs[i];
    return w;
  };

  auto probes = [&](const Matrix& w) {
    return std::array<double, 3>{w.squaredNorm(), (w.adjoint() * u1).squaredNorm(),
                                 (w.adjoint() * u2).squaredNorm()};
  };

  Matrix w = build(panels);
  auto pw = probes(w);
  bool converged = false;
  for (int d = 0; d < opts.max_doublings && !converged; ++d) {
    panels *= 2;
    Matrix w2 = build(panels);
    auto pw2 = probes(w2);
    double rel = 0.0;
    for (int i = 0; i < 3; ++i)
      rel = std::max(rel, std::abs(pw2[i] - pw[i]) / std::max(std::abs(pw2[i]), 1e-30));
    w = std::move(w2);
    pw = pw2;
    converged = rel <= opts.rel_tol;
  }
  require(converged || opts.max_doublings == 0, errc::integrator_failure,
          "time integral did not converge within the doubling budget");
  if (opts.max_doublings == 0) {
    // single-shot evaluation: verify against one refinement
    Matrix w2 = build(panels * 2);
    auto pw2 = probes(w2);
    double rel = 0.0;
    for (int i = 0; i < 3; ++i)
      rel = std::max(rel, std::abs(pw2[i] - pw[i]) / std::max(std::abs(pw2[i]), 1e-30));
    require(rel <= opts.rel_tol, errc::integrator_failure,
            "time integral did not converge within the doubling budget");
  }

  if (s_shift != 0.0) {
    Vector phase(n);
    for (int i = 0; i < src.space.n_nodes(); ++i)
      for (int a = 0; a < src.space.mult[i]; ++a)
        phase[src.space.offsets[i] + a] =
            std::exp(complexd(0.0, src.space.nodes[i] * s_shift));
    w = phase.asDiagonal() * w;
  }
  return QuasiFreeSource(std::move(w), Statistics::bose());
}

// Two-column (E, density) text table; '#' starts a comment line.
inline std::vector<std::pair<double, double>> load_profile_table(std::istream& in) {
  std::vector<std::pair<double, double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double e, d;
    if (ls >> e >> d) rows.emplace_back(e, d);
  }
  require(rows.size() >= 2, errc::invalid_argument, "profile table needs at least two rows");
  for (std::size_t i = 1; i < rows.size(); ++i)
    require(rows[i].first > rows[i - 1].first, errc::invalid_argument,
            "table energies must strictly increase");
  return rows;
}

// Linear interpolation of a table onto grid nodes; zero outside the range.
inline std::vector<double> interpolate_profile(const std::vector<std::pair<double, double>>& rows,
                                               const DirectIntegralSpace& space) {
  std::vector<double> out(space.n_nodes(), 0.0);
  for (int i = 0; i < space.n_nodes(); ++i) {
    const double e = space.nodes[i];
    if (e < rows.front().first || e > rows.back().first) continue;
    auto it = std::lower_bound(rows.begin(), rows.end(), e,
                               [](const auto& r, double v) { return r.first < v; });
    if (it == rows.begin()) {
      out[i] = it->second;
      continue;
    }
    const auto hi = it;
    const auto lo = it - 1;
    const double f = (e - lo->first) / (hi->first - lo->first);
    out[i] = std::max(0.0, (1.0 - f) * lo->second + f * hi->second);
  }
  return out;
}

}  // namespace fcs
