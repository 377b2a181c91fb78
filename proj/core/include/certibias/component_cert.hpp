#pragma once

#include <Eigen/Core>
#include <span>

#include "certibias/bias_stats.hpp"

namespace certibias {

// Certified sup-shift radius from the bounded-difference route:
//   eps = C + c * gamma * sqrt(2 * n * ln(2m / phi)).
// Holds simultaneously for m examples with failure probability phi when the
// module is gamma-Lipschitz and each input coordinate moves at most c.
double radius_lipschitz(double C, double gamma, double c, int n, int m, double phi);

// Variance route: eps = C + sqrt(V * m / phi); V bounds the per-example
// shift variance.
double radius_variance(double C, double V, int m, double phi);

struct ProbabilityBound {
  double value = 0.0;  // clamped to [0, 1]
  double raw = 0.0;    // 1 - failure term, may be negative
  bool vacuous = false;  // failure term >= 1 before clamping
};

// Inverse forms: confidence that |shift| <= eps holds for all m examples.
ProbabilityBound confidence_lipschitz(double eps, double C, double gamma, double c, int n, int m);
ProbabilityBound confidence_variance(double eps, double C, double V, int m);

// Bias bound after subtracting a constant correction b per component:
// C*_i = max_j |mean_t shift(j,t,i) - b_i|.
Eigen::VectorXd corrected_bound(const ShiftTensor& s, const Eigen::VectorXd& b,
                                std::span<const int> examples);

// The constant correction minimizing C*: per-component midrange of the
// per-example means. Attains C* = (max_j mean_j - min_j mean_j) / 2.
Eigen::VectorXd midrange_bias(const ShiftTensor& s, std::span<const int> examples);

// Lipschitz constant of a linear component x -> <w, x>.
double lipschitz_of_linear(const Eigen::VectorXd& w);

struct BridgeBudget {
  double phi = 0.0;
  double eps_box = 0.0;
  double cvb = 1.0;
  double uniform_budget = 0.0;  // min(1, (phi - eps_box) / cvb)
  double kappa = 0.0;           // -ln(uniform_budget)
  bool vacuous = false;         // kappa <= 0: the bridge carries no information
};

// Converts a failure budget under the data distribution into one under the
// uniform reference law on the estimated box. cvb estimates the sup density
// ratio (C * V_B); eps_box the mass escaping the box. Requires phi > eps_box
// and cvb >= 1.
BridgeBudget bridge_budget(double phi, double eps_box, double cvb);

}  // namespace certibias
