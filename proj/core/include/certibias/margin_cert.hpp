#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <vector>

#include "certibias/dataset.hpp"
#include "certibias/debias.hpp"

namespace certibias {

// Multiclass margin of one example: rho_j per competitor class j != y and
// the binding minimum. For a linear classifier the margins are geometric
// (normalized by |w_y - w_j|); for raw logits the normalizer is 1.
struct MarginResult {
  double rho = 0.0;             // min over competitors
  Eigen::VectorXd rho_j;        // length Q, +inf at the label position
};

MarginResult margin_from_logits(const Eigen::VectorXd& logits, int label);
MarginResult margin_linear(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                           const Eigen::VectorXd& x, int label);

// Per-competitor perturbation statistics of one example. The projection
// Z_j is the margin shift along the competitor direction; its interval
// support is estimated on the example's own calibration perturbations, with
// uniform-reference moments mu = (lo+hi)/2, nu = (hi-lo)^2/12, c = (hi-lo)/2.
struct CompetitorStats {
  int cls = 0;
  double rho = 0.0;
  double lo = 0.0, hi = 0.0;
  double mu = 0.0, nu = 0.0, c = 0.0;
  bool degenerate = false;
};

struct ExampleMarginStats {
  int example = 0;  // original dataset index
  int label = 0;
  double rho = 0.0;  // min competitor margin on clean input
  std::vector<CompetitorStats> comp;
  Eigen::MatrixXd z_cal;   // calibration projections, n_cal x (Q-1)
  Eigen::MatrixXd z_eval;  // held-out projections for empirical verification
};

// Margin-shift statistics for the selected examples over the selected
// perturbation indices. Each example's perturbations split into a leading
// calibration part (box fitting) and a trailing evaluation part. Applies the
// corrector to both clean and perturbed outputs when one is given.
std::vector<ExampleMarginStats> margin_shift_stats(const Dataset& d, const Corrector* corrector,
                                                   std::span<const int> examples,
                                                   std::span<const int> perts,
                                                   double calibration_fraction = 0.5);

struct CertMethods {
  bool hoeffding = true;
  bool bernstein = true;
  bool cantelli = true;
};

struct CompetitorCert {
  int cls = 0;
  double xi_h = 0.0, xi_b = 0.0, xi_c = 0.0;
  double bernstein_gamma = 0.0;
  bool certified_h = false, certified_b = false, certified_c = false;
};

struct CertRecord {
  int example = 0;
  int label = 0;
  double rho = 0.0;
  double phi_budget = 0.0;  // per-competitor phi_j = phi / (Q - 1)
  double kappa = 0.0;
  bool vacuous = false;  // bridge budget carried no information
  bool certified_h = false, certified_b = false, certified_c = false;
  // Thresholds of the binding competitor (smallest Hoeffding slack).
  double xi_h = 0.0, xi_b = 0.0, xi_c = 0.0;
  double bernstein_gamma = 0.0;
  double slack_h = 0.0;  // binding rho_j + mu_j - xi_H; negative means uncertified
  std::vector<CompetitorCert> competitors;
  double fail_rate_eval = 0.0;  // filled by verify_certificates
  int n_eval = 0;
};

// Certifies one example: every competitor must satisfy
// rho_j >= -mu_j + xi(method) on the kappa budget from bridge_budget
// (phi_j, eps_box, cvb), with xi_H = c sqrt(2 kappa), xi_B = gamma +
// sqrt(gamma^2 + 2 kappa nu) for gamma = (2/3) c kappa, and xi_C =
// sqrt(nu (e^kappa - 1)). Degenerate boxes certify exactly when rho_j > -mu_j.
CertRecord certify_example(const ExampleMarginStats& stats, double phi, double eps_box, double cvb,
                           const CertMethods& methods = {});

// Population-level guarantee from s certified out of m sampled examples,
// at perturbation budget phi and sampling confidence psi.
double population_bound(int s, int m, double phi, double psi);

// Out-of-box mass and density ratio pooled across all examples and
// competitors, on box-normalized evaluation projections.
struct PooledBoxStats {
  double eps_box = 0.0;
  double cvb = 1.0;
  long total_eval = 0;
  long outside = 0;
};

PooledBoxStats pooled_box_stats(const std::vector<ExampleMarginStats>& stats, int bins = 10);

struct MethodVerification {
  double bac_certified = 0.0;    // pooled eval-perturbation BAC of certified examples
  double bac_uncertified = 0.0;  // same for the rest
  int n_certified = 0;
  int n_uncertified = 0;
};

struct VerifySummary {
  MethodVerification hoeffding, bernstein, cantelli;
};

// Empirical check on the held-out perturbations: fills each record's eval
// failure rate (min margin <= 0) and pools certified/uncertified group BAC
// per method.
VerifySummary verify_certificates(std::vector<CertRecord>& records,
                                  const std::vector<ExampleMarginStats>& stats, int n_classes);

}  // namespace certibias
