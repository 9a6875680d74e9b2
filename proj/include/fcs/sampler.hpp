#pragma once

// Monte Carlo oracle for windowed beams. Click trains are drawn from a
// binned scalar kernel K(c,c') of the windowed beam: the determinantal
// process for Fermi statistics (spectral sampling of the kernel) and the
// complex-Gaussian Cox construction for Bose statistics (Poisson counts
// with intensity |g_c|^2, g ~ CN(0, K)), whose factorial moments are the
// permanental ones. All randomness derives from a 64-bit seed through
// splitmix64 streams, one stream per draw index.

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fcs/stationary_beam.hpp"

namespace fcs {

namespace rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Seed of the k-th draw stream derived from the master seed.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t s = master;
  const std::uint64_t a = splitmix64(s);
  s = a ^ (0x9E3779B97F4A7C15ULL * (index + 1));
  return splitmix64(s);
}

class Stream {
 public:
  explicit Stream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t bits() { return splitmix64(state_); }

  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * pi * u2);
  }

  // Product-of-uniforms sampler, chunked so the exponential never underflows.
  int poisson(double mean) {
    int total = 0;
    while (mean > 30.0) {
      total += poisson_small(30.0);
      mean -= 30.0;
    }
    return total + poisson_small(mean);
  }

 private:
  int poisson_small(double mean) {
    if (mean <= 0.0) return 0;
    const double limit = std::exp(-mean);
    int n = 0;
    double prod = uniform();
    while (prod > limit) {
      ++n;
      prod *= uniform();
    }
    return n;
  }

  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rng

// One realization of the windowed counting measurement.
struct ClickTrain {
  std::vector<std::pair<double, int>> events;  //(time, detector index), time-sorted
  double t1 = 0.0;
  double t2 = 0.0;
  std::uint64_t seed = 0;
};

// Scalar kernel over (time bin x detector) cells. Exact for rank-one
// detector effects; the bin width controls the within-cell discretization.
struct BinnedKernel {
  std::vector<double> edges;
  std::vector<std::string> detectors;
  Matrix k;

  int n_bins() const { return static_cast<int>(edges.size()) - 1; }
  int n_detectors() const { return static_cast<int>(detectors.size()); }
  int n_cells() const { return n_bins() * n_detectors(); }
  int cell(int bin, int det) const { return bin * n_detectors() + det; }
  double t1() const { return edges.front(); }
  double t2() const { return edges.back(); }
  double bin_width(int b) const { return edges[b + 1] - edges[b]; }

  void validate() const {
    require(edges.size() >= 2, errc::invalid_argument, "need at least one bin");
    for (std::size_t i = 1; i < edges.size(); ++i)
      require(edges[i] > edges[i - 1], errc::invalid_argument, "edges must strictly increase");
    require(!detectors.empty(), errc::invalid_argument, "need at least one detector");
    require(k.rows() == n_cells() && k.cols() == n_cells(), errc::invalid_argument,
            "kernel must have one row per cell");
  }
};

// Binned kernel of a stationary beam through rank-one detectors:
// K((b,x),(b',y)) = dt * g_x^dag S(t_b - t_b') g_y at bin midpoints.
inline BinnedKernel make_binned_kernel(const SKernel& s, const DilationData& dil,
                                       const std::vector<std::string>& detectors, double t1,
                                       double t2, int n_bins) {
  require(t2 > t1 && n_bins >= 1, errc::invalid_argument, "window and bin count must be positive");
  BinnedKernel out;
  for (int b = 0; b <= n_bins; ++b) out.edges.push_back(t1 + (t2 - t1) * b / n_bins);
  out.detectors = detectors;

  std::vector<Vector> dirs;
  for (const auto& label : detectors) {
    const Matrix& g = dil.povm[dil.detector_index(label)];
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    const auto& ev = es.eigenvalues();
    require(ev.size() >= 1, errc::invalid_argument, "empty detector effect");
    const double sub = ev.size() > 1 ? ev.head(ev.size() - 1).cwiseAbs().maxCoeff() : 0.0;
    require(sub <= 1e-12 * std::max(ev[ev.size() - 1], 1e-300), errc::invalid_argument,
            "sampling supports rank-one detector effects");
    dirs.push_back(std::sqrt(ev[ev.size() - 1]) * es.eigenvectors().col(ev.size() - 1));
  }

  const double dt = (t2 - t1) / n_bins;
  const int nc = out.n_cells();
  out.k = Matrix(nc, nc);
  std::vector<Matrix> s_by_offset(n_bins);
  for (int d = 0; d < n_bins; ++d) s_by_offset[d] = s.at(d * dt);
  for (int b = 0; b < n_bins; ++b)
    for (int bp = 0; bp < n_bins; ++bp) {
      const Matrix st = b >= bp ? s_by_offset[b - bp] : Matrix(s_by_offset[bp - b].adjoint());
      for (std::size_t x = 0; x < dirs.size(); ++x)
        for (std::size_t y = 0; y < dirs.size(); ++y)
          out.k(out.cell(b, static_cast<int>(x)), out.cell(bp, static_cast<int>(y))) =
              dt * (dirs[x].adjoint() * st * dirs[y])(0, 0);
    }
  out.validate();
  return out;
}

namespace detail {

struct KernelSpectrum {
  Matrix vectors;
  RealVector values;
};

inline KernelSpectrum kernel_spectrum(const BinnedKernel& k, bool fermi_bound) {
  k.validate();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (k.k + k.k.adjoint()));
  KernelSpectrum out{es.eigenvectors(), es.eigenvalues()};
  const double scale = std::max(out.values.cwiseAbs().maxCoeff(), 1e-300);
  for (Eigen::Index j = 0; j < out.values.size(); ++j) {
    require(out.values[j] >= -1e-9 * scale, errc::eigenvalue_out_of_range,
            "binned kernel must be positive semidefinite");
    if (fermi_bound)
      require(out.values[j] <= 1.0 + 1e-9, errc::eigenvalue_out_of_range,
              "Fermi sampling requires kernel eigenvalues <= 1");
    out.values[j] = std::max(out.values[j], 0.0);
    if (fermi_bound) out.values[j] = std::min(out.values[j], 1.0);
  }
  return out;
}

inline double jitter_time(const BinnedKernel& k, int cell, rng::Stream& st) {
  const int b = cell / k.n_detectors();
  return k.edges[b] + st.uniform() * k.bin_width(b);
}

inline ClickTrain finish_train(const BinnedKernel& k, std::vector<std::pair<double, int>> events,
                               std::uint64_t seed) {
  std::sort(events.begin(), events.end());
  ClickTrain out;
  out.events = std::move(events);
  out.t1 = k.t1();
  out.t2 = k.t2();
  out.seed = seed;
  return out;
}

}  // namespace detail

// Determinantal sampler: eigenmodes are selected independently with
// probability lambda_j, then the projection process is drawn mode by mode.
// At most one click per cell; the expected count per cell is the kernel
// diagonal. The spectral data is prepared once per kernel.
class FermiSampler {
 public:
  explicit FermiSampler(const BinnedKernel& k)
      : kernel_(k), spec_(detail::kernel_spectrum(k, /*fermi_bound=*/true)) {}

  ClickTrain draw(std::uint64_t seed) const {
    rng::Stream st(seed);
    const int n = kernel_.n_cells();
    std::vector<int> chosen;
    for (Eigen::Index j = 0; j < spec_.values.size(); ++j)
      if (st.uniform() < spec_.values[j]) chosen.push_back(static_cast<int>(j));

    Matrix v(n, static_cast<int>(chosen.size()));
    for (std::size_t j = 0; j < chosen.size(); ++j) v.col(j) = spec_.vectors.col(chosen[j]);

    std::vector<std::pair<double, int>> events;
    int cols = static_cast<int>(chosen.size());
    while (cols > 0) {
      double total = 0.0;
      RealVector rowsq(n);
      for (int c = 0; c < n; ++c) {
        rowsq[c] = v.row(c).head(cols).squaredNorm();
        total += rowsq[c];
      }
      double u = st.uniform() * total;
      int cell = n - 1;
      for (int c = 0; c < n; ++c) {
        u -= rowsq[c];
        if (u <= 0.0) {
          cell = c;
          break;
        }
      }
      events.emplace_back(detail::jitter_time(kernel_, cell, st), cell % kernel_.n_detectors());

      int pivot = 0;
      double best = 0.0;
      for (int j = 0; j < cols; ++j)
        if (std::abs(v(cell, j)) > best) {
          best = std::abs(v(cell, j));
          pivot = j;
        }
      for (int j = 0; j < cols; ++j) {
        if (j == pivot) continue;
        v.col(j) -= (v(cell, j) / v(cell, pivot)) * v.col(pivot);
      }
      v.col(pivot) = v.col(cols - 1);
      --cols;
      for (int j = 0; j < cols; ++j) {  // modified Gram-Schmidt
        for (int jj = 0; jj < j; ++jj) v.col(j) -= v.col(jj).dot(v.col(j)) * v.col(jj);
        const double nrm = v.col(j).head(n).norm();
        require(nrm > 1e-14, errc::invalid_argument, "projection basis degenerated");
        v.col(j) /= nrm;
      }
    }
    return detail::finish_train(kernel_, std::move(events), seed);
  }

 private:
  BinnedKernel kernel_;
  detail::KernelSpectrum spec_;
};

// Cox sampler: complex Gaussian field with covariance K, then independent
// Poisson counts per cell with intensity |g_c|^2. Unbounded occupation.
class BoseSampler {
 public:
  explicit BoseSampler(const BinnedKernel& k) : kernel_(k) {
    const auto spec = detail::kernel_spectrum(k, /*fermi_bound=*/false);
    amp_ = spec.vectors;
    for (Eigen::Index j = 0; j < spec.values.size(); ++j)
      amp_.col(j) *= std::sqrt(spec.values[j]);
  }

  ClickTrain draw(std::uint64_t seed) const {
    rng::Stream st(seed);
    const int n = kernel_.n_cells();
    Vector z(n);
    for (int j = 0; j < n; ++j) z[j] = complexd(st.normal(), st.normal()) / std::sqrt(2.0);
    const Vector g = amp_ * z;
    std::vector<std::pair<double, int>> events;
    for (int c = 0; c < n; ++c) {
      const int m = st.poisson(std::norm(g[c]));
      for (int q = 0; q < m; ++q)
        events.emplace_back(detail::jitter_time(kernel_, c, st), c % kernel_.n_detectors());
    }
    return detail::finish_train(kernel_, std::move(events), seed);
  }

 private:
  BinnedKernel kernel_;
  Matrix amp_;
};

inline ClickTrain sample_fermi(const BinnedKernel& k, std::uint64_t seed) {
  return FermiSampler(k).draw(seed);
}

inline ClickTrain sample_bose(const BinnedKernel& k, std::uint64_t seed) {
  return BoseSampler(k).draw(seed);
}

// Independent draws, one derived stream per index; draw i from master seed
// m is reproducible standalone via rng::stream_seed(m, i).
inline std::vector<ClickTrain> sample_many(const BinnedKernel& k, Statistics stats,
                                           std::uint64_t master_seed, int n_draws) {
  require(stats.sign() != 0 && stats.order() == 1, errc::invalid_argument,
          "sampling covers Bose and Fermi statistics");
  std::vector<ClickTrain> out;
  out.reserve(n_draws);
  if (stats.sign() > 0) {
    const BoseSampler sampler(k);
    for (int i = 0; i < n_draws; ++i)
      out.push_back(sampler.draw(rng::stream_seed(master_seed, static_cast<std::uint64_t>(i))));
  } else {
    const FermiSampler sampler(k);
    for (int i = 0; i < n_draws; ++i)
      out.push_back(sampler.draw(rng::stream_seed(master_seed, static_cast<std::uint64_t>(i))));
  }
  return out;
}

struct BinnedCurve {
  std::vector<double> centers;
  std::vector<double> values;
  std::vector<double> std_errors;
};

struct EstimateOptions {
  double tau_max = 0.0;   // pair-correlation lag range (0: half window)
  int n_tau_bins = 20;
  double wait_max = 0.0;  // waiting-time range (0: half window)
  int n_wait_bins = 20;
  int n_max = 30;         // region count distributions up to this n
  std::vector<std::pair<double, double>> regions;  // defaults to the window
};

struct Estimates {
  int n_trains = 0;
  double window_length = 0.0;
  double rate = 0.0;
  double rate_se = 0.0;
  std::vector<std::vector<double>> region_pn;
  std::vector<std::vector<double>> region_pn_se;
  BinnedCurve g2;
  BinnedCurve waiting;
};

namespace detail {

inline std::pair<double, double> mean_se(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= n * std::max(n - 1.0, 1.0);
  return {mean, std::sqrt(var)};
}

}  // namespace detail

// Empirical statistics with standard errors across trains: mean rate,
// region count distributions, the normalized pair correlation versus lag,
// and the conditional waiting-time density from consecutive clicks.
inline Estimates estimate(const std::vector<ClickTrain>& trains, const EstimateOptions& opts = {}) {
  require(trains.size() >= 2, errc::empty_data, "need at least two trains");
  Estimates out;
  out.n_trains = static_cast<int>(trains.size());
  const double t1 = trains.front().t1;
  const double t2 = trains.front().t2;
  out.window_length = t2 - t1;
  const double horizon = out.window_length;
  const double tau_max = opts.tau_max > 0.0 ? opts.tau_max : 0.5 * horizon;
  const double wait_max = opts.wait_max > 0.0 ? opts.wait_max : 0.5 * horizon;
  require(tau_max < horizon && wait_max < horizon, errc::invalid_argument,
          "lag ranges must stay inside the window");

  std::vector<std::pair<double, double>> regions = opts.regions;
  if (regions.empty()) regions.emplace_back(t1, t2);

  // per-train reductions
  std::vector<double> counts;
  counts.reserve(trains.size());
  std::vector<std::vector<std::vector<double>>> region_ind(
      regions.size(), std::vector<std::vector<double>>(opts.n_max + 1));
  std::vector<std::vector<double>> pair_counts(opts.n_tau_bins);
  for (auto& v : pair_counts) v.assign(trains.size(), 0.0);
  std::vector<std::vector<double>> wait_counts(opts.n_wait_bins);
  for (auto& v : wait_counts) v.assign(trains.size(), 0.0);
  std::vector<double> wait_starts(trains.size(), 0.0);

  for (std::size_t tr = 0; tr < trains.size(); ++tr) {
    const auto& t = trains[tr];
    require(t.t1 == t1 && t.t2 == t2, errc::invalid_argument, "trains must share the window");
    counts.push_back(static_cast<double>(t.events.size()));

    for (std::size_t r = 0; r < regions.size(); ++r) {
      int n_in = 0;
      for (const auto& ev : t.events)
        if (ev.first >= regions[r].first && ev.first < regions[r].second) ++n_in;
      for (int n = 0; n <= opts.n_max; ++n)
        region_ind[r][n].push_back(n_in == n ? 1.0 : 0.0);
    }

    for (std::size_t a = 0; a < t.events.size(); ++a)
      for (std::size_t b = a + 1; b < t.events.size(); ++b) {
        const double lag = t.events[b].first - t.events[a].first;
        if (lag <= 0.0 || lag >= tau_max) continue;
        const int bin = static_cast<int>(lag / tau_max * opts.n_tau_bins);
        pair_counts[bin][tr] += 1.0;
      }

    for (std::size_t a = 0; a + 1 < t.events.size(); ++a) {
      if (t.events[a].first > t2 - wait_max) continue;
      wait_starts[tr] += 1.0;
      const double gap = t.events[a + 1].first - t.events[a].first;
      if (gap < wait_max) {
        const int bin = static_cast<int>(gap / wait_max * opts.n_wait_bins);
        wait_counts[bin][tr] += 1.0;
      }
    }
    // a final click before the censoring edge contributes an (unbinned) start
    if (!t.events.empty() && t.events.back().first <= t2 - wait_max) wait_starts[tr] += 1.0;
  }

  const auto [cmean, cse] = detail::mean_se(counts);
  out.rate = cmean / out.window_length;
  out.rate_se = cse / out.window_length;

  for (std::size_t r = 0; r < regions.size(); ++r) {
    std::vector<double> pn(opts.n_max + 1), se(opts.n_max + 1);
    for (int n = 0; n <= opts.n_max; ++n) {
      const auto [m, s] = detail::mean_se(region_ind[r][n]);
      pn[n] = m;
      se[n] = s;
    }
    out.region_pn.push_back(std::move(pn));
    out.region_pn_se.push_back(std::move(se));
  }

  const double dt_tau = tau_max / opts.n_tau_bins;
  for (int b = 0; b < opts.n_tau_bins; ++b) {
    const double center = (b + 0.5) * dt_tau;
    // expected unordered pairs at lag tau in the window: rate^2 g2 dt (T - tau)
    const double norm = out.rate * out.rate * dt_tau * (out.window_length - center);
    const auto [m, s] = detail::mean_se(pair_counts[b]);
    out.g2.centers.push_back(center);
    out.g2.values.push_back(norm > 0.0 ? m / norm : 0.0);
    out.g2.std_errors.push_back(norm > 0.0 ? s / norm : 0.0);
  }

  double total_starts = 0.0;
  for (double s : wait_starts) total_starts += s;
  const double dt_w = wait_max / opts.n_wait_bins;
  for (int b = 0; b < opts.n_wait_bins; ++b) {
    const double center = (b + 0.5) * dt_w;
    double total = 0.0;
    for (std::size_t tr = 0; tr < trains.size(); ++tr) total += wait_counts[b][tr];
    // density conditional on a click; binomial error over pooled starts
    const double p = total_starts > 0.0 ? total / total_starts : 0.0;
    out.waiting.centers.push_back(center);
    out.waiting.values.push_back(p / dt_w);
    out.waiting.std_errors.push_back(
        total_starts > 0.0 ? std::sqrt(std::max(p * (1.0 - p), 0.0) / total_starts) / dt_w : 0.0);
  }
  return out;
}

// chi-squared upper tail probability Q(k/2, x/2) via the regularized
// incomplete gamma function (series and continued-fraction branches).
namespace detail {

inline double gamma_q(double a, double x) {
  require(a > 0.0 && x >= 0.0, errc::invalid_argument, "gamma_q domain");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) {
    double sum = 1.0 / a, term = sum, ap = a;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-30) d = 1e-30;
    c = b + an / c;
    if (std::abs(c) < 1e-30) c = 1e-30;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace detail

inline double chi2_tail(double statistic, int dof) {
  return detail::gamma_q(0.5 * dof, 0.5 * statistic);
}

// Line-oriented text export: window and seed header, then time<TAB>detector.
inline void write_click_train(std::ostream& os, const ClickTrain& t,
                              const std::vector<std::string>& detectors) {
  os << "# clicktrain v1\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "# window %.17g %.17g\n", t.t1, t.t2);
  os << buf;
  os << "# seed " << t.seed << "\n";
  for (const auto& [time, det] : t.events) {
    std::snprintf(buf, sizeof buf, "%.17g\t%s\n", time,
                  detectors.at(static_cast<std::size_t>(det)).c_str());
    os << buf;
  }
}

inline ClickTrain read_click_train(std::istream& is, const std::vector<std::string>& detectors) {
  ClickTrain t;
  std::string line;
  bool have_window = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string key;
      ls >> key;
      if (key == "window") {
        ls >> t.t1 >> t.t2;
        have_window = true;
      } else if (key == "seed") {
        ls >> t.seed;
      }
      continue;
    }
    std::istringstream ls(line);
    double time;
    std::string label;
    require(static_cast<bool>(ls >> time >> label), errc::invalid_argument,
            "malformed click row: " + line);
    int det = -1;
    for (std::size_t i = 0; i < detectors.size(); ++i)
      if (detectors[i] == label) det = static_cast<int>(i);
    require(det >= 0, errc::invalid_argument, "unknown detector '" + label + "'");
    t.events.emplace_back(time, det);
  }
  require(have_window, errc::invalid_argument, "missing window header");
  return t;
}

}  // namespace fcs
