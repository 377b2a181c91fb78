#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "certibias/bias_stats.hpp"
#include "certibias/dataset.hpp"

namespace certibias {

enum class PsiVariant { linear, with_norm };

// The space a corrector's inputs/outputs live in: the dump's own rows, or
// derived classifier outputs (used by the constant search on feature dumps).
enum class CorrectorSpace { dump, logits };

struct ConstantCorrector {
  Eigen::VectorXd b;
};

struct RidgeCorrector {
  Eigen::MatrixXd W;     // psi-dim x d
  Eigen::VectorXd beta;  // residual midrange per output
  double lambda = 0.0;
  double alpha = 0.0;  // Gram penalty weight; 0 for the plain fit
  PsiVariant psi = PsiVariant::linear;
};

struct PcaCorrector {
  Eigen::VectorXd mu;                 // mean perturbation shift
  Eigen::MatrixXd H;                  // principal axes, columns by decreasing variance
  int k = 0;                          // corrected leading coordinates
  double lambda = 0.0;
  std::vector<RidgeCorrector> thetas; // one scalar ridge per corrected coordinate
};

struct Corrector {
  std::variant<ConstantCorrector, RidgeCorrector, PcaCorrector> model;
  CorrectorSpace space = CorrectorSpace::dump;
  std::string fitted_on;  // free-form provenance (split, seed, task)

  const char* kind() const;
};

// Feature map rows: [x, 1] or [x, |x|, 1].
Eigen::MatrixXd psi_features(const Eigen::MatrixXd& X, PsiVariant variant);

// Closed-form ridge via the normal equations, Cholesky-factored with a jitter
// ladder (0, 1e-12, ... 1e-6). The intercept-free residual midrange beta_i =
// (max_j R_ji + min_j R_ji) / 2 centers the worst-case residual band.
RidgeCorrector fit_ridge(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                         double lambda, PsiVariant psi = PsiVariant::linear);

// Ridge with an extra alpha * |Psi_clean W|^2 penalty that discourages the
// correction from responding to clean inputs. alpha may be negative; the
// system must stay positive definite.
RidgeCorrector fit_ridge_gram(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                              double lambda, double alpha, const Eigen::MatrixXd& clean_features,
                              PsiVariant psi = PsiVariant::linear);

Eigen::MatrixXd apply_ridge(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& features,
                            const RidgeCorrector& corr);
Eigen::MatrixXd apply_bias(const Eigen::MatrixXd& outputs, const Eigen::VectorXd& b);

// Mean-shift removal plus per-coordinate ridge refinement on the leading k
// principal axes of the shifted perturbed features. The corrected coordinate
// is theta_i(H^T(x - mu)) + h_i^T(x - mu); coordinates beyond k pass through
// untouched, and mu is not added back.
PcaCorrector fit_pca_debias(const Eigen::MatrixXd& clean_feats, const Eigen::MatrixXd& pert_feats,
                            int k, double lambda);
Eigen::VectorXd apply_pca_debias(const PcaCorrector& corr, const Eigen::VectorXd& x);
Eigen::MatrixXd apply_pca_debias(const PcaCorrector& corr, const Eigen::MatrixXd& X);
// Projection vectors before/after correction, for coordinate-level checks.
std::pair<Eigen::VectorXd, Eigen::VectorXd> pca_projections(const PcaCorrector& corr,
                                                            const Eigen::VectorXd& x);

struct BiasSearchConfig {
  int grid_points = 201;
  double percentile = 0.90;
  double phi = 0.05;
  // Component Lipschitz concentration terms added to the corrected bias bound
  // when forming the bounded-difference radius; zero when unknown (constant
  // offsets never change which grid points fall in a percentile region).
  std::optional<Eigen::VectorXd> lipschitz_term;
  // A region only counts as found when its best BAC beats the uncorrected
  // baseline by this margin (BAC fraction), or the baseline already sits in
  // the top percentile (the already-robust case).
  double improvement_margin = 0.03;
};

struct BiasSearchGridRow {
  double b = 0.0;
  double pert_bac = 0.0;
  double eps_l = 0.0;
  double eps_v = 0.0;
};

struct BiasSearchResult {
  bool found = false;
  double b = 0.0;
  std::pair<double, double> region{0.0, 0.0};
  double baseline_bac = 0.0;
  double percentile = 0.0;
  std::vector<BiasSearchGridRow> grid;
};

// Grid search for a single offset on the positive-class logit of a binary
// task: scans [-C_max, C_max], keeps the b values whose train perturbed BAC
// and whose (negated) radii all reach the percentile quantile without losing
// to the b=0 baseline, and reports the midpoint of the best surviving run
// (ties toward smaller |b|).
BiasSearchResult search_constant_bias(const Dataset& d, const ShiftTensor& logit_shifts,
                                      std::span<const int> train_examples,
                                      std::span<const int> train_perts,
                                      const BiasSearchConfig& config);

void save_corrector(const Corrector& c, const std::filesystem::path& dir);
Corrector load_corrector(const std::filesystem::path& dir);

// Corrected dump: the correction is subtracted from clean and perturbed rows
// alike (a deployed corrector cannot tell them apart). Requires a dump-space
// corrector or a logits dump.
Dataset apply_corrector(const Dataset& d, const Corrector& c);

// Classifier outputs after correction, for margin analysis on feature dumps.
Eigen::MatrixXd corrected_clean_logits(const Dataset& d, const Corrector& c);
Eigen::MatrixXd corrected_perturbed_logits(const Dataset& d, const Corrector& c);

// Post-correction shifts measured against the ORIGINAL clean outputs: the
// corrected module's response to perturbed inputs minus the uncorrected
// response to clean inputs. This is the quantity whose worst per-example
// mean the corrected bias bound takes.
ShiftTensor corrected_shift_tensor(const Dataset& d, const Corrector& c, bool logit_space);

}  // namespace certibias
