#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "certibias/dataset.hpp"
#include "certibias/debias.hpp"
#include "certibias/margin_cert.hpp"

namespace certibias {

// The four qualitative outcomes a perturbation-induced mean shift can produce
// for a binary task whose boundary is the first feature coordinate:
//   a - both classes collapse onto the boundary; no offset can undo the loss
//   b - a constant one-sided shift damages one class; a constant offset heals it
//   c - an input-dependent shift; a regression corrector heals it
//   d - shifts point away from the boundary and help instead of hurting
enum class Panel { a, b, c, d };

std::string panel_name(Panel p);
Panel parse_panel(const std::string& name);

enum class NoiseKind { uniform_box, truncated_gaussian, correlated };

std::string noise_kind_name(NoiseKind k);

// Perturbation law for the module input. All kinds live in the box [-c, c]^dim:
// uniform_box draws iid coordinates, truncated_gaussian rejects normal draws
// outside the box, correlated mixes a uniform draw through a matrix and clips
// the result back into the box (deliberately dependent and non-uniform).
struct NoiseSpec {
  NoiseKind kind = NoiseKind::uniform_box;
  int dim = 1;
  double c = 0.05;
  double sigma = 0.0;      // truncated_gaussian width
  Eigen::MatrixXd mixing;  // correlated only; empty means identity

  void validate() const;
};

// A dim-vector draw from the noise law; streams keyed by (seed, stream) so a
// draw depends only on its own key, never on how many draws happened before.
Eigen::VectorXd sample_noise_vector(const NoiseSpec& noise, std::uint64_t seed,
                                    std::uint64_t stream, bool* clipped = nullptr);

struct SampleResult {
  Eigen::MatrixXd deltas;  // count x dim
  double clip_rate = 0.0;  // fraction of rows the box clipped (correlated only)
};

SampleResult sample_perturbations(const NoiseSpec& noise, int count, std::uint64_t seed);

// Per-coordinate variance of one noise coordinate, in closed form. Exact for
// uniform_box and truncated_gaussian; for correlated noise this is the
// pre-clipping value and `exact` is reported false by scenarios using it.
double noise_coordinate_variance(const NoiseSpec& noise);

// Linear module with prescribed row norms, so each row's Lipschitz constant
// is known exactly. Entries are Gaussian before row rescaling; a zero
// requested norm produces a zero row.
Eigen::MatrixXd gen_linear_module(int n_out, int n_in, std::uint64_t seed,
                                  const Eigen::VectorXd& norm_spectrum);

struct ScenarioSpec {
  Panel panel = Panel::b;
  int n = 8;   // module output width (the dump's feature dimension)
  int d = 4;   // perturbation input dimension
  int m = 40;  // examples
  int k = 100; // perturbations per example
  NoiseSpec noise{NoiseKind::uniform_box, 4, 0.05, 0.0, {}};

  // Class clusters sit at -sep0 and +sep1 along the first feature coordinate.
  double cluster_sep0 = 3.0;
  double cluster_sep1 = 1.5;
  double cluster_std = 0.25;
  // Engineered mean-shift strength; its direction is the panel's business.
  double shift_scale = 2.0;
  // Panel c: shift magnitude also scales with the second feature coordinate.
  double input_gain = 0.75;

  std::uint64_t seed = 0;
  std::string task_id = "synthetic";

  void validate() const;
};

struct GroundTruth {
  Panel panel = Panel::b;
  Eigen::VectorXd C;       // exact per-component bias bound over the generated examples
  Eigen::VectorXd V;       // per-component variance of the module-propagated noise
  bool v_exact = true;     // false for correlated noise (pre-clip value)
  Eigen::VectorXd gammas;  // module row norms
  Eigen::MatrixXd bias_profile;  // 2 x n per-class expected shift vectors
  double clip_rate = 0.0;
  std::uint64_t seed = 0;
};

struct Scenario {
  Dataset data;
  GroundTruth truth;
  Eigen::MatrixXd module;  // n x d linear map from input perturbations to features
  ScenarioSpec spec;
};

// Builds a conforming feature dump: two Gaussian clusters, classifier rows
// -+e1, perturbed rows = clean + engineered shift + module * noise draw.
Scenario gen_scenario(const ScenarioSpec& spec);

// save_dataset plus module.csv and ground_truth.json in the same directory.
void save_scenario(const Scenario& s, const std::filesystem::path& dir);
Scenario load_scenario(const std::filesystem::path& dir);

// Empirical counterpart of the component certificates: per trial one noise
// draw hits every example, and component i is violated when any example's
// |shift_i| exceeds epsilon_i. Returns the per-component violation rates.
// mean_shifts may be empty (0x0) or one engineered m x n mean shift matrix.
Eigen::VectorXd monte_carlo_violation(const Eigen::MatrixXd& module,
                                      const Eigen::MatrixXd& mean_shifts,
                                      const Eigen::VectorXd& epsilon, const NoiseSpec& noise,
                                      int trials, std::uint64_t seed);

// Ground-truth check of per-example certificates: enumerate the stored eval
// perturbations and count misclassifications (argmax != label), through the
// corrector when one is given. Rates align with `records`.
std::vector<double> brute_force_cert_check(const std::vector<CertRecord>& records,
                                           const Dataset& d, const Corrector* corrector,
                                           std::span<const int> eval_perts);

}  // namespace certibias
