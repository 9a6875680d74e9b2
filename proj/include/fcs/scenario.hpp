#pragma once

// Scenario-driven front end: a strict JSON schema describing statistics,
// grid, source, observable, windows and requested outputs, and the runner
// that produces CSV curves and a JSON summary. Curves use ',' separators,
// '.' decimal points and 17 significant digits, so identical scenarios and
// seeds give identical bytes.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fcs/sampler.hpp"
#include "fcs/source_model.hpp"

namespace fcs {

using nlohmann::json;

// Validation failures: reported on stderr and mapped to exit code 2.
class ScenarioError : public std::runtime_error {
 public:
  explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void check_keys(const json& obj, const std::string& where,
                       const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ScenarioError(where + " must be an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw ScenarioError("unknown key '" + key + "' in " + where);
}

inline double require_number(const json& obj, const std::string& where, const std::string& key) {
  if (!obj.contains(key) || !obj[key].is_number())
    throw ScenarioError(where + " needs numeric '" + key + "'");
  return obj[key].get<double>();
}

inline int require_int(const json& obj, const std::string& where, const std::string& key) {
  if (!obj.contains(key) || !obj[key].is_number_integer())
    throw ScenarioError(where + " needs integer '" + key + "'");
  return obj[key].get<int>();
}

inline std::string require_string(const json& obj, const std::string& where,
                                  const std::string& key) {
  if (!obj.contains(key) || !obj[key].is_string())
    throw ScenarioError(where + " needs string '" + key + "'");
  return obj[key].get<std::string>();
}

inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += threads) fn(i);
    });
  for (auto& th : pool) th.join();
}

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

// FNV-1a 64-bit hash of the scenario bytes, reported in summaries.
inline std::string scenario_hash(const std::string& bytes) { return fnv1a_hex(bytes); }

struct Scenario {
  Statistics stats = Statistics::bose();

  double e_min = 0.0, e_max = 0.0;
  int n_nodes = 0;

  enum class SourceKind { plane_wave, master };
  SourceKind source_kind = SourceKind::plane_wave;
  double kappa = 0.0, e0 = 0.0;     // plane_wave / named profiles
  SpectralProfile profile = SpectralProfile::lorentzian;
  double alpha = 0.0;               // named profile width
  std::optional<double> lambda;     // master strength
  std::string table_path;           // master table profile

  enum class ObservableKind { kijowski_1d, dilation_file };
  ObservableKind obs_kind = ObservableKind::kijowski_1d;
  std::string dilation_path;

  std::vector<std::pair<double, double>> windows;
  std::vector<json> outputs;

  double fd_step_scale = 1e-3;
  std::uint64_t seed = 1;

  std::string raw;  // original bytes, for the hash
};

inline Statistics parse_statistics(const std::string& s) {
  try {
    if (s == "bose") return Statistics::bose();
    if (s == "fermi") return Statistics::fermi();
    if (s == "boltzmann") return Statistics::boltzmann();
    if (s.rfind("para:", 0) == 0) return Statistics::parabose(std::stoi(s.substr(5)));
    if (s.rfind("parabose:", 0) == 0) return Statistics::parabose(std::stoi(s.substr(9)));
    if (s.rfind("parafermi:", 0) == 0) return Statistics::parafermi(std::stoi(s.substr(10)));
  } catch (const std::exception&) {
    throw ScenarioError("malformed statistics '" + s + "'");
  }
  throw ScenarioError("unknown statistics '" + s + "'");
}

inline Scenario parse_scenario(const std::string& bytes) {
  json j;
  try {
    j = json::parse(bytes);
  } catch (const std::exception& e) {
    throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
  }
  detail::check_keys(j, "scenario",
                     {"statistics", "grid", "source", "observable", "windows", "outputs",
                      "tolerances", "seed"});
  Scenario s;
  s.raw = bytes;
  s.stats = parse_statistics(detail::require_string(j, "scenario", "statistics"));

  if (!j.contains("grid")) throw ScenarioError("scenario needs 'grid'");
  detail::check_keys(j["grid"], "grid", {"e_min", "e_max", "n_nodes"});
  s.e_min = detail::require_number(j["grid"], "grid", "e_min");
  s.e_max = detail::require_number(j["grid"], "grid", "e_max");
  s.n_nodes = detail::require_int(j["grid"], "grid", "n_nodes");
  if (!(s.e_max > s.e_min) || s.n_nodes < 2)
    throw ScenarioError("grid needs e_max > e_min and n_nodes >= 2");

  if (!j.contains("source")) throw ScenarioError("scenario needs 'source'");
  const json& src = j["source"];
  const std::string kind = detail::require_string(src, "source", "type");
  if (kind == "plane_wave") {
    detail::check_keys(src, "source", {"type", "kappa", "e0"});
    s.source_kind = Scenario::SourceKind::plane_wave;
    s.kappa = detail::require_number(src, "source", "kappa");
    s.e0 = detail::require_number(src, "source", "e0");
    if (s.kappa <= 0.0) throw ScenarioError("plane wave needs kappa > 0");
  } else if (kind == "master") {
    detail::check_keys(src, "source", {"type", "profile", "e0", "alpha", "lambda", "table"});
    s.source_kind = Scenario::SourceKind::master;
    const std::string prof = detail::require_string(src, "source", "profile");
    if (prof == "lorentzian") {
      s.profile = SpectralProfile::lorentzian;
    } else if (prof == "gaussian") {
      s.profile = SpectralProfile::gaussian;
    } else if (prof == "table") {
      s.profile = SpectralProfile::table;
      s.table_path = detail::require_string(src, "source", "table");
    } else {
      throw ScenarioError("unknown profile '" + prof + "'");
    }
    if (s.profile != SpectralProfile::table) {
      s.e0 = detail::require_number(src, "source", "e0");
      s.alpha = detail::require_number(src, "source", "alpha");
      if (s.alpha <= 0.0) throw ScenarioError("master source needs alpha > 0");
    }
    if (src.contains("lambda")) {
      s.lambda = detail::require_number(src, "source", "lambda");
      if (*s.lambda <= 0.0) throw ScenarioError("master source needs lambda > 0");
    }
  } else {
    throw ScenarioError("unknown source type '" + kind + "'");
  }

  if (!j.contains("observable")) throw ScenarioError("scenario needs 'observable'");
  const json& obs = j["observable"];
  const std::string okind = detail::require_string(obs, "observable", "type");
  if (okind == "kijowski_1d") {
    detail::check_keys(obs, "observable", {"type"});
    s.obs_kind = Scenario::ObservableKind::kijowski_1d;
  } else if (okind == "dilation_file") {
    detail::check_keys(obs, "observable", {"type", "path"});
    s.obs_kind = Scenario::ObservableKind::dilation_file;
    s.dilation_path = detail::require_string(obs, "observable", "path");
  } else {
    throw ScenarioError("unknown observable type '" + okind + "'");
  }

  if (!j.contains("windows") || !j["windows"].is_array() || j["windows"].empty())
    throw ScenarioError("scenario needs a non-empty 'windows' list");
  for (const auto& w : j["windows"]) {
    if (!w.is_array() || w.size() != 2 || !w[0].is_number() || !w[1].is_number())
      throw ScenarioError("each window must be [t1, t2]");
    const double t1 = w[0].get<double>(), t2 = w[1].get<double>();
    if (!(t2 > t1)) throw ScenarioError("windows need t2 > t1");
    s.windows.emplace_back(t1, t2);
  }

  if (!j.contains("outputs") || !j["outputs"].is_array() || j["outputs"].empty())
    throw ScenarioError("scenario needs a non-empty 'outputs' list");
  for (const auto& o : j["outputs"]) {
    if (!o.is_object() || !o.contains("type") || !o["type"].is_string())
      throw ScenarioError("each output needs a string 'type'");
    s.outputs.push_back(o);
  }

  if (j.contains("tolerances")) {
    detail::check_keys(j["tolerances"], "tolerances", {"fd_step_scale"});
    if (j["tolerances"].contains("fd_step_scale"))
      s.fd_step_scale = detail::require_number(j["tolerances"], "tolerances", "fd_step_scale");
    if (s.fd_step_scale <= 0.0 || s.fd_step_scale > 0.1)
      throw ScenarioError("fd_step_scale must lie in (0, 0.1]");
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned())
      throw ScenarioError("seed must be a non-negative integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }
  return s;
}

// Dilation description file: k_dim, optional per-node phases, and a POVM
// given by labelled k_dim x k_dim matrices with [re, im] entries row-major.
inline DilationData load_dilation_file(const std::string& path,
                                       const DirectIntegralSpace& space) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open dilation file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ScenarioError(std::string("dilation file is not valid JSON: ") + e.what());
  }
  detail::check_keys(j, "dilation", {"k_dim", "phases", "povm"});
  DilationData dil;
  dil.k_dim = detail::require_int(j, "dilation", "k_dim");
  std::vector<double> phases(space.n_nodes(), 0.0);
  if (j.contains("phases")) {
    if (!j["phases"].is_array() || static_cast<int>(j["phases"].size()) != space.n_nodes())
      throw ScenarioError("phases must list one angle per grid node");
    for (int i = 0; i < space.n_nodes(); ++i) phases[i] = j["phases"][i].get<double>();
  }
  for (int i = 0; i < space.n_nodes(); ++i) {
    if (space.mult[i] != dil.k_dim)
      throw ScenarioError("dilation file requires node multiplicity == k_dim");
    dil.v.push_back(std::exp(complexd(0.0, phases[i])) * Matrix::Identity(dil.k_dim, dil.k_dim));
  }
  if (!j.contains("povm") || !j["povm"].is_array() || j["povm"].empty())
    throw ScenarioError("dilation file needs a non-empty 'povm' list");
  for (const auto& entry : j["povm"]) {
    detail::check_keys(entry, "povm entry", {"label", "matrix"});
    dil.labels.push_back(detail::require_string(entry, "povm entry", "label"));
    const auto& m = entry["matrix"];
    if (!m.is_array() || static_cast<int>(m.size()) != dil.k_dim * dil.k_dim)
      throw ScenarioError("povm matrix must list k_dim^2 entries [re, im] row-major");
    Matrix g(dil.k_dim, dil.k_dim);
    for (int r = 0; r < dil.k_dim; ++r)
      for (int c = 0; c < dil.k_dim; ++c) {
        const auto& cell = m[r * dil.k_dim + c];
        if (!cell.is_array() || cell.size() != 2)
          throw ScenarioError("povm matrix entries must be [re, im]");
        g(r, c) = complexd(cell[0].get<double>(), cell[1].get<double>());
      }
    dil.povm.push_back(std::move(g));
  }
  try {
    dil.validate(space);
  } catch (const Error& e) {
    throw ScenarioError(std::string("invalid dilation data: ") + e.what());
  }
  return dil;
}

inline SourceSpec make_master_source(const Scenario& sc, const DirectIntegralSpace& space,
                                     double lambda) {
  switch (sc.profile) {
    case SpectralProfile::lorentzian:
      return SourceSpec::lorentzian(space, sc.e0, sc.alpha, lambda, 0);
    case SpectralProfile::gaussian:
      return SourceSpec::gaussian(space, sc.e0, sc.alpha, lambda, 0);
    case SpectralProfile::table: {
      std::ifstream in(sc.table_path);
      if (!in) throw ScenarioError("cannot open profile table '" + sc.table_path + "'");
      const auto rows = load_profile_table(in);
      return SourceSpec::from_density(space, interpolate_profile(rows, space), lambda, 0);
    }
  }
  throw ScenarioError("unreachable profile kind");
}

// Source strength realizing a target total rate, by bisection on the
// monotone map lambda -> rate (pole crossings count as infinite rate).
inline double lambda_for_rate(const Scenario& sc, const DirectIntegralSpace& space,
                              double target) {
  if (target <= 0.0) throw ScenarioError("rates must be positive");
  auto rate_of = [&](double lambda) -> double {
    try {
      return stationary_sigma(make_master_source(sc, space, lambda)).rate();
    } catch (const Error& e) {
      if (e.code() == errc::pole_crossing) return std::numeric_limits<double>::infinity();
      throw;
    }
  };
  double hi = 1e-3;
  while (rate_of(hi) < target) {
    hi *= 2.0;
    if (hi > 1e6) throw ScenarioError("target rate unreachable");
  }
  double lo = 0.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (rate_of(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Assembled model shared by the output writers.
struct ScenarioModel {
  DirectIntegralSpace space;
  DilationData dil;
  std::optional<StationaryState> state;
  std::optional<SourceSpec> master;  // set for master sources
  int plane_node = -1;               // set for plane waves
  double rate = 0.0;
};

inline ScenarioModel build_model(const Scenario& sc, bool need_state = true) {
  ScenarioModel m;
  const int mult = sc.obs_kind == Scenario::ObservableKind::kijowski_1d ? 2 : 1;
  if (sc.obs_kind == Scenario::ObservableKind::kijowski_1d && sc.e_min <= 0.0)
    throw ScenarioError("the free 1d arrival observable needs e_min > 0");
  m.space = DirectIntegralSpace::uniform(sc.e_min, sc.e_max, sc.n_nodes, mult);

  if (sc.obs_kind == Scenario::ObservableKind::kijowski_1d)
    m.dil = kijowski_free_1d(m.space);
  else
    m.dil = load_dilation_file(sc.dilation_path, m.space);

  if (sc.source_kind == Scenario::SourceKind::plane_wave) {
    int best = 0;
    for (int i = 0; i < m.space.n_nodes(); ++i)
      if (std::abs(m.space.nodes[i] - sc.e0) < std::abs(m.space.nodes[best] - sc.e0)) best = i;
    m.plane_node = best;
    m.state = plane_wave_state(m.space, best, sc.kappa, 0);
  } else if (need_state) {
    if (!sc.lambda)
      throw ScenarioError("master source needs 'lambda' (or per-output 'rates' for g2)");
    m.master = make_master_source(sc, m.space, *sc.lambda);
    m.state = stationary_sigma(*m.master);
  }
  if (m.state) m.rate = m.state->rate();
  return m;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& dir, const std::string& name) {
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw ScenarioError("cannot write output file '" + (dir / name).string() + "'");
  return out;
}

inline std::string default_detector(const DilationData& dil) { return dil.labels.front(); }

// Void-probability profile p0(t1, t2) over all detectors of the model.
inline std::function<double(double, double)> void_profile(const Scenario& sc,
                                                          const ScenarioModel& m) {
  return make_void_profile(m.state->to_source(sc.stats), m.space, m.dil, m.dil.labels);
}

inline std::function<double(double, double)> coherent_void_profile(double rate) {
  return [rate](double t1, double t2) { return std::exp(-rate * std::max(t2 - t1, 0.0)); };
}

}  // namespace detail

// Runs one scenario, writing CSV files and summary.json into out_dir.
// Returns the summary document.
inline json run_scenario(const Scenario& sc, const std::string& out_dir,
                         std::optional<std::uint64_t> seed_override = std::nullopt,
                         int threads = 1) {
  namespace fs = std::filesystem;
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ScenarioError("cannot create output directory '" + out_dir + "'");

  const std::uint64_t seed = seed_override.value_or(sc.seed);
  bool need_state = false;
  for (const json& o : sc.outputs) {
    const std::string type = o["type"].get<std::string>();
    if (type != "g2" || !o.contains("rates") || sc.lambda) need_state = true;
  }
  const ScenarioModel model = build_model(sc, need_state);

  json summary;
  summary["scenario_hash"] = scenario_hash(sc.raw);
  summary["statistics"] = sc.stats.name();
  summary["seed"] = seed;
  if (model.state) summary["rate"] = model.rate;
  json outputs_summary = json::array();

  for (const json& o : sc.outputs) {
    const std::string type = o["type"].get<std::string>();
    json osum;
    osum["type"] = type;

    if (type == "g2") {
      detail::check_keys(o, "g2 output", {"type", "tau_max", "n_tau", "rates", "detector"});
      const double tau_max = detail::require_number(o, "g2 output", "tau_max");
      const int n_tau = detail::require_int(o, "g2 output", "n_tau");
      if (tau_max <= 0.0 || n_tau < 2) throw ScenarioError("g2 needs tau_max > 0, n_tau >= 2");
      const std::string det =
          o.contains("detector") ? detail::require_string(o, "g2 output", "detector")
                                 : detail::default_detector(model.dil);
      std::vector<double> taus(n_tau);
      for (int k = 0; k < n_tau; ++k) taus[k] = tau_max * k / (n_tau - 1);

      std::vector<std::string> labels;
      std::vector<std::vector<double>> curves;
      if (sc.source_kind == Scenario::SourceKind::master) {
        std::vector<double> lambdas;
        if (o.contains("rates")) {
          if (!o["rates"].is_array() || o["rates"].empty())
            throw ScenarioError("g2 'rates' must be a non-empty array");
          for (const auto& r : o["rates"]) {
            const double target = r.get<double>();
            lambdas.push_back(lambda_for_rate(sc, model.space, target));
            labels.push_back("g2_rate" + detail::fmt(target));
          }
        } else {
          if (!sc.lambda) throw ScenarioError("g2 needs source 'lambda' or output 'rates'");
          lambdas.push_back(*sc.lambda);
          labels.push_back("g2");
        }
        curves.resize(lambdas.size());
        const bool bose = sc.stats == Statistics::bose();
        detail::parallel_for(static_cast<int>(lambdas.size()), threads, [&](int i) {
          const auto src = make_master_source(sc, model.space, lambdas[i]);
          if (bose) {
            // detector-projected correlation transform of the source
            curves[i] = g2_from_chi(chi_tau(src, model.dil, det, taus));
          } else {
            const auto sk = s_kernel(stationary_sigma(src), model.dil);
            const Matrix g = model.dil.povm[model.dil.detector_index(det)];
            curves[i].resize(taus.size());
            for (std::size_t k = 0; k < taus.size(); ++k)
              curves[i][k] = g2_xy(sk, g, g, taus[k], sc.stats);
          }
        });
        // weak-source reference curve (resolvent factor set to one)
        const auto ref_src = make_master_source(sc, model.space, lambdas.front());
        labels.push_back("g2_reference");
        curves.push_back(g2_from_chi(chi_tau(ref_src, model.dil, det, taus, true)));
      } else {
        const auto sk = s_kernel(*model.state, model.dil);
        const Matrix g = model.dil.povm[model.dil.detector_index(det)];
        std::vector<double> curve(n_tau);
        detail::parallel_for(n_tau, threads,
                             [&](int k) { curve[k] = g2_xy(sk, g, g, taus[k], sc.stats); });
        labels.push_back("g2");
        curves.push_back(std::move(curve));
      }

      auto out = detail::open_out(dir, "g2.csv");
      out << "tau";
      for (const auto& l : labels) out << "," << l;
      out << "\n";
      for (int k = 0; k < n_tau; ++k) {
        out << detail::fmt(taus[k]);
        for (const auto& c : curves) out << "," << detail::fmt(c[k]);
        out << "\n";
      }
      osum["file"] = "g2.csv";
      osum["detector"] = det;
    } else if (type == "numberdist") {
      detail::check_keys(o, "numberdist output", {"type", "n_max", "window_index"});
      const int n_max = detail::require_int(o, "numberdist output", "n_max");
      const int widx = o.contains("window_index")
                           ? detail::require_int(o, "numberdist output", "window_index")
                           : 0;
      if (n_max < 0 || widx < 0 || widx >= static_cast<int>(sc.windows.size()))
        throw ScenarioError("numberdist needs n_max >= 0 and a valid window_index");
      const auto [t1, t2] = sc.windows[widx];

      OutcomeGrid grid;
      grid.edges = {t1, t2};
      grid.detectors = model.dil.labels;
      CellSet all_cells;
      for (int c = 0; c < grid.n_cells(); ++c) all_cells.push_back(c);

      const auto src = model.state->to_source(sc.stats);
      auto handle = make_quasifree_handle(src, model.space, model.dil, grid);
      // extend the internal truncation until the tail is negligible
      int n_int = n_max + 1;
      std::optional<CountDistribution> dist;
      for (int attempt = 0; attempt < 20 && !dist; ++attempt) {
        try {
          dist = number_distribution(handle, all_cells, n_int);
        } catch (const Error& e) {
          if (e.code() != errc::non_convergent) throw;
          n_int *= 2;
        }
      }
      if (!dist) throw Error(errc::non_convergent, "number distribution tail did not close");

      std::optional<CountDistribution> coherent;
      double q = 0.0;
      if (sc.source_kind == Scenario::SourceKind::plane_wave) {
        q = model.rate * (t2 - t1);
        auto coher = poisson_generator(grid, std::vector<double>(grid.n_cells(),
                                                                 q / grid.n_cells()));
        int m_int = std::max(n_max + 1, static_cast<int>(q + 12.0 * std::sqrt(q) + 20.0));
        coherent = number_distribution(coher, all_cells, m_int);
      }

      auto out = detail::open_out(dir, "numberdist.csv");
      out << (coherent ? "n,p_quasifree,p_coherent\n" : "n,p_quasifree\n");
      for (int n = 0; n <= n_max; ++n) {
        out << n << "," << detail::fmt(dist->probs[n]);
        if (coherent) out << "," << detail::fmt(coherent->probs[n]);
        out << "\n";
      }
      osum["file"] = "numberdist.csv";
      osum["tail_bound"] = dist->tail_bound;
      if (coherent) osum["q"] = q;
    } else if (type == "waiting") {
      detail::check_keys(o, "waiting output", {"type", "tau_max", "n_tau"});
      const double tau_max = detail::require_number(o, "waiting output", "tau_max");
      const int n_tau = detail::require_int(o, "waiting output", "n_tau");
      if (tau_max <= 0.0 || n_tau < 2)
        throw ScenarioError("waiting needs tau_max > 0, n_tau >= 2");
      const double s_anchor = sc.windows.front().first;
      const double h = sc.fd_step_scale / model.rate;
      const auto p0 = detail::void_profile(sc, model);
      const auto p0_coh = detail::coherent_void_profile(model.rate);

      std::vector<double> taus(n_tau), wq(n_tau), wc(n_tau);
      for (int k = 0; k < n_tau; ++k) taus[k] = tau_max * k / (n_tau - 1);
      detail::parallel_for(n_tau, threads, [&](int k) {
        wq[k] = waiting_time_density(p0, s_anchor, taus[k], h);
        wc[k] = waiting_time_density(p0_coh, s_anchor, taus[k], h);
      });

      auto out = detail::open_out(dir, "waiting.csv");
      out << "tau,w_quasifree,w_coherent\n";
      for (int k = 0; k < n_tau; ++k)
        out << detail::fmt(taus[k]) << "," << detail::fmt(wq[k]) << "," << detail::fmt(wc[k])
            << "\n";
      osum["file"] = "waiting.csv";
    } else if (type == "sample") {
      detail::check_keys(o, "sample output",
                         {"type", "n_draws", "seed", "n_bins", "detector", "export_trains",
                          "window_index"});
      const int n_draws = detail::require_int(o, "sample output", "n_draws");
      if (n_draws < 2) throw ScenarioError("sample needs n_draws >= 2");
      if (sc.stats.order() != 1 || sc.stats.sign() == 0)
        throw ScenarioError("sampling covers Bose and Fermi statistics only");
      const int widx = o.contains("window_index")
                           ? detail::require_int(o, "sample output", "window_index")
                           : 0;
      if (widx < 0 || widx >= static_cast<int>(sc.windows.size()))
        throw ScenarioError("sample needs a valid window_index");
      const auto [t1, t2] = sc.windows[widx];
      const std::string det =
          o.contains("detector") ? detail::require_string(o, "sample output", "detector")
                                 : detail::default_detector(model.dil);
      const std::uint64_t sample_seed =
          o.contains("seed") ? o["seed"].get<std::uint64_t>() : seed;
      int n_bins = o.contains("n_bins") ? detail::require_int(o, "sample output", "n_bins") : 0;
      if (n_bins <= 0)
        n_bins = std::max(8, static_cast<int>(std::ceil(20.0 * model.rate * (t2 - t1))));

      const auto sk = s_kernel(*model.state, model.dil);
      const auto kern = make_binned_kernel(sk, model.dil, {det}, t1, t2, n_bins);
      const auto trains = sample_many(kern, sc.stats, sample_seed, n_draws);
      const auto est = estimate(trains);

      auto out = detail::open_out(dir, "sample_pn.csv");
      out << "n,p_empirical,std_error\n";
      for (std::size_t n = 0; n < est.region_pn[0].size(); ++n)
        out << n << "," << detail::fmt(est.region_pn[0][n]) << ","
            << detail::fmt(est.region_pn_se[0][n]) << "\n";
      auto out2 = detail::open_out(dir, "sample_g2.csv");
      out2 << "tau,g2_empirical,std_error\n";
      for (std::size_t b = 0; b < est.g2.centers.size(); ++b)
        out2 << detail::fmt(est.g2.centers[b]) << "," << detail::fmt(est.g2.values[b]) << ","
             << detail::fmt(est.g2.std_errors[b]) << "\n";
      auto out3 = detail::open_out(dir, "sample_waiting.csv");
      out3 << "tau,w_empirical,std_error\n";
      for (std::size_t b = 0; b < est.waiting.centers.size(); ++b)
        out3 << detail::fmt(est.waiting.centers[b]) << "," << detail::fmt(est.waiting.values[b])
             << "," << detail::fmt(est.waiting.std_errors[b]) << "\n";

      const int export_trains =
          o.contains("export_trains") ? detail::require_int(o, "sample output", "export_trains")
                                      : 0;
      for (int k = 0; k < std::min(export_trains, n_draws); ++k) {
        auto tout = detail::open_out(dir, "train_" + std::to_string(k) + ".txt");
        write_click_train(tout, trains[k], kern.detectors);
      }

      osum["files"] = {"sample_pn.csv", "sample_g2.csv", "sample_waiting.csv"};
      osum["n_draws"] = n_draws;
      osum["sample_seed"] = sample_seed;
      osum["empirical_rate"] = est.rate;
      osum["empirical_rate_se"] = est.rate_se;
    } else if (type == "compare_truncation") {
      detail::check_keys(o, "compare_truncation output", {"type", "T_list", "f_value"});
      if (sc.source_kind != Scenario::SourceKind::master)
        throw ScenarioError("compare_truncation needs a master source");
      if (!o.contains("T_list") || !o["T_list"].is_array() || o["T_list"].empty())
        throw ScenarioError("compare_truncation needs a non-empty 'T_list'");
      const double fv = o.contains("f_value")
                            ? detail::require_number(o, "compare_truncation output", "f_value")
                            : 1.0;
      const auto [t1, t2] = sc.windows.front();
      OutcomeGrid grid;
      grid.edges = {t1, t2};
      grid.detectors = model.dil.labels;
      TestFunction f = TestFunction::zero(grid);
      for (int c = 0; c < grid.n_cells(); ++c) f.set(c, complexd(fv, 0.0));

      const auto stationary = model.state->to_source(sc.stats);
      const complexd c_inf =
          make_quasifree_handle(stationary, model.space, model.dil, grid).characteristic(f);

      auto out = detail::open_out(dir, "truncation.csv");
      out << "T,gap\n";
      for (const auto& tval : o["T_list"]) {
        const double T = tval.get<double>();
        const auto trunc = finite_beam_truncation(*model.state, T, sc.stats);
        const complexd c_t =
            make_quasifree_handle(trunc, model.space, model.dil, grid).characteristic(f);
        out << detail::fmt(T) << "," << detail::fmt(std::abs(c_t - c_inf)) << "\n";
      }
      osum["file"] = "truncation.csv";
    } else {
      throw ScenarioError("unknown output type '" + type + "'");
    }
    outputs_summary.push_back(osum);
  }

  summary["outputs"] = outputs_summary;
  auto sout = detail::open_out(dir, "summary.json");
  sout << summary.dump(2) << "\n";
  return summary;
}

}  // namespace fcs
