#pragma once

#include <complex>
#include <cstdio>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace fcs {

using complexd = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr double pi = 3.14159265358979323846;

// Error conditions surfaced by the library. Each corresponds to a violated
// precondition or a numerically meaningless regime, never to a recoverable
// internal state.
enum class errc {
  singular_determinant,
  branch_ambiguity,
  not_hermitian,
  not_psd,
  bose_norm_violation,
  fermi_bound_violation,
  non_convergent,
  zero_click_rate,
  not_stationary,
  overlapping_regions,
  grid_too_coarse,
  alias_risk,
  zero_rate,
  eigenvalue_out_of_range,
  pole_crossing,
  integrator_failure,
  empty_data,
  invalid_argument,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::singular_determinant: return "singular_determinant";
    case errc::branch_ambiguity: return "branch_ambiguity";
    case errc::not_hermitian: return "not_hermitian";
    case errc::not_psd: return "not_psd";
    case errc::bose_norm_violation: return "bose_norm_violation";
    case errc::fermi_bound_violation: return "fermi_bound_violation";
    case errc::non_convergent: return "non_convergent";
    case errc::zero_click_rate: return "zero_click_rate";
    case errc::not_stationary: return "not_stationary";
    case errc::overlapping_regions: return "overlapping_regions";
    case errc::grid_too_coarse: return "grid_too_coarse";
    case errc::alias_risk: return "alias_risk";
    case errc::zero_rate: return "zero_rate";
    case errc::eigenvalue_out_of_range: return "eigenvalue_out_of_range";
    case errc::pole_crossing: return "pole_crossing";
    case errc::integrator_failure: return "integrator_failure";
    case errc::empty_data: return "empty_data";
    case errc::invalid_argument: return "invalid_argument";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool ok, errc code, const std::string& what) {
  if (!ok) raise(code, what);
}

// FNV-1a 64-bit content hash, hex-encoded; used for reproducibility stamps.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fcs
