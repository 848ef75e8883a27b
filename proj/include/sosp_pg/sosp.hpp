#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "sosp_pg/mdp.hpp"
#include "sosp_pg/objective.hpp"
#include "sosp_pg/policy.hpp"
#include "sosp_pg/types.hpp"

namespace sosp_pg {

struct TopEigenpair {
  double lambda_max;
  Vector u;  ///< unit vector, first nonzero component positive
};

/// Largest eigenvalue of the symmetric part of `h` and a unit eigenvector.
/// Throws InvalidInput on non-finite entries.
TopEigenpair sym_eig_max(const Matrix& h);

enum class Region { L1, L2, L3 };

std::string to_string(Region region);

/// L1 if ||grad|| > eps; otherwise L2 if lambda_max > sqrt(chi eps); otherwise L3.
/// Boundary points fall into the later region so the three sets partition
/// the parameter space.
Region classify_region(double grad_norm, double lambda_max, double epsilon, double chi);
Region classify_region(const Vector& grad, const Matrix& hessian, double epsilon, double chi);

struct SecondOrderReport {
  Vector grad;
  double grad_norm = 0.0;
  Matrix hessian;
  double lambda_max = 0.0;
  Vector u_p;
  Region region = Region::L1;
  bool is_sosp = false;
  double epsilon = 0.0;
  double chi = 0.0;
  bool estimated = false;
  std::size_t n = 0;  ///< samples behind an estimated report
  std::optional<Vector> grad_std_error;
  std::optional<Matrix> hessian_std_error;
};

struct ReportMode {
  bool estimated = false;
  std::size_t n = 0;
  std::uint64_t seed = 0;

  static ReportMode oracle() { return {}; }
  static ReportMode sampled(std::size_t n, std::uint64_t seed) { return {true, n, seed}; }
};

SecondOrderReport second_order_report(const StochasticObjective& objective, const Vector& theta,
                                      double epsilon, double chi, ReportMode mode);

struct CncEstimate {
  double mean_sq_projection = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  bool enumerated = false;
};

/// E[<g(tau|theta), u>^2], exact by enumeration when the MDP is small enough
/// and otherwise the Monte-Carlo mean over n trajectories.
CncEstimate cnc_estimate(const TabularMdp& mdp, const Policy& policy, const Vector& theta,
                         const Vector& u, std::size_t n, std::uint64_t seed);

/// Empirical CNC floor: sqrt(max(mean - 3 se, floor^2)).
double empirical_iota(const CncEstimate& cnc, double floor = 1e-6);

/// Closed-form CNC lower bound ingredients. c0 is the expected cross-term
/// sum_{i<j} score_i . score_j and may have either sign.
struct CncClosedForm {
  double c0 = 0.0;
  double iota_sq = 0.0;  ///< min{a, a + 2 R_min^2 lambda^2 c0 / ((1-gamma)^2 ||H||^2)}, a = R_min^2 h omega/(1-gamma)^2
};

CncClosedForm cnc_closed_form(const TabularMdp& mdp, const Policy& policy, const Vector& theta,
                              double omega, double lambda_max, double hessian_op_norm);

struct PaperConstants {
  double G = 0.0, L = 0.0, U = 0.0;
  std::optional<double> W;
  double ell = 0.0;       ///< R_max h (h G^2 + L) / (1 - gamma)
  double sigma = 0.0;     ///< G R_max / (1 - gamma)^2
  std::optional<double> chi;  ///< Hessian-Lipschitz estimate, needs W
  double sigma_h0 = 0.0;  ///< 2 p sqrt(p) h R_max (h G^2 + L) / (1 - gamma)
  std::optional<double> omega;
  std::optional<double> zeta;
  std::optional<double> varrho;
  std::optional<double> iota;
  double r_min = 0.0, r_max = 0.0, gamma = 0.0;
  std::size_t h = 0, p = 0;
};

double smoothness_constant(double G, double L, double r_max, double gamma, std::size_t h);
double variance_bound(double G, double r_max, double gamma);
double hessian_lipschitz_constant(double G, double L, double W, double r_max, double gamma);
double hessian_estimator_bound(double G, double L, double r_max, double gamma, std::size_t h,
                               std::size_t p);

/// Throws InvalidInput when gamma is outside (0,1) or r_max <= 0.
PaperConstants paper_constants(const RegularityConstants& regularity, double r_min, double r_max,
                               double gamma, std::size_t h, std::size_t p);

/// min{eps^2 / (2 sqrt(chi eps) R_min^2 omega^2), 2 eps^2 / ((eps^2 + sigma^2) ell)}.
double theorem_step_size(double epsilon, double chi, double r_min, double omega, double sigma,
                         double ell);

/// ceil(6 R_max log(1/delta) / (alpha^2 (1-gamma) iota^2 sqrt(chi eps))) + 1,
/// saturating at UINT64_MAX.
std::uint64_t iteration_budget(double alpha, double r_max, double gamma, double iota, double chi,
                               double epsilon, double delta);

/// floor(log(1/(1 - sqrt(alpha) sigma_h0)) / log(1 + alpha sqrt(chi eps))).
/// Requires alpha < min{1/sigma_h0, 1/sigma_h0^2}.
std::uint64_t escape_budget(double alpha, double sigma_h0, double chi, double epsilon);

/// Largest alpha the escape budget admits with sqrt(alpha) sigma_h0 <= 1/2.
double escape_admissible_step(double sigma_h0);

/// floor(log(1/delta) / alpha^2).
std::uint64_t trap_budget(double alpha, double delta);

struct Prop3StepSize {
  double alpha_cap = 0.0;   ///< min{delta, 1/zeta, zeta/ell^2, zeta varrho^2/(3 sigma^2)}
  double log_cap_rhs = 0.0; ///< 2 zeta varrho^4 / (27 (G^2 R_max^2/(1-gamma)^2 + zeta varrho^2 + sigma^2)^2)

  /// alpha log(1/alpha) <= relaxation * log_cap_rhs.
  bool log_cap_satisfied(double alpha, double relaxation = 1.0) const;
  /// Largest alpha <= alpha_cap that also satisfies the log cap.
  double largest_step(double relaxation = 1.0) const;
};

Prop3StepSize prop3_step_size(double delta, double zeta, double ell, double varrho, double sigma,
                              double G, double r_max, double gamma);

}  // namespace sosp_pg
