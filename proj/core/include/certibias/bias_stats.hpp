#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "certibias/dataset.hpp"

namespace certibias {

// Per-(example, perturbation, component) output shifts, stored example-major:
// row j*k + t holds M(x_j + dx_t) - M(x_j).
struct ShiftTensor {
  Eigen::MatrixXd values;  // (m*k) x d
  int m = 0;
  int k = 0;
  int d = 0;
  std::vector<int> example_ids;  // original dataset indices, length m

  Eigen::Index row(int example, int pert) const {
    return static_cast<Eigen::Index>(example) * k + pert;
  }
};

// Shifts in the dump's own space (feature deltas for feature dumps).
ShiftTensor shift_matrix(const Dataset& d);
// Shifts of classifier outputs; needs a logits dump or a weight matrix.
ShiftTensor logit_shift_matrix(const Dataset& d);

// Restriction to an example subset and perturbation-index subset. Indices
// refer to tensor positions, not original dataset ids.
ShiftTensor slice(const ShiftTensor& s, std::span<const int> examples,
                  std::span<const int> perts);

// C_i = max_j |mean_t values(j,t,i)|: the empirical worst per-example mean.
Eigen::VectorXd bias_bound(const ShiftTensor& s, std::span<const int> examples);
// V_i = max_j var_t values(j,t,i), unbiased sample variance; needs k >= 2.
Eigen::VectorXd variance_bound(const ShiftTensor& s, std::span<const int> examples);
// Worst absolute single shift per component.
Eigen::VectorXd range_bound(const ShiftTensor& s, std::span<const int> examples);
// One row of per-perturbation means per selected example.
Eigen::MatrixXd per_example_means(const ShiftTensor& s, std::span<const int> examples);

struct Box {
  double lo = 0.0;
  double hi = 0.0;
  bool degenerate = false;  // lo == hi; flagged, not fatal
  double width() const { return hi - lo; }
};

struct BoxEstimate {
  std::vector<Box> boxes;          // one per projection column
  double eps_box = 0.0;            // add-one smoothed out-of-box mass, joint over columns
  int calibration_count = 0;
  int eval_count = 0;
};

// Interval support estimated on the leading floor(rows * calibration_fraction)
// rows (at least one), evaluated on the rest: eps_box = (outside + 1)/(eval + 1)
// where a row is outside when any coordinate leaves its interval.
BoxEstimate perturbation_box(const Eigen::MatrixXd& projections, double calibration_fraction);

// Histogram estimate of the density ratio against the uniform law on the box:
// max over bins of (in-box bin mass * bins), floored at 1. Samples outside the
// box are ignored; all-outside is an error.
double density_ratio(const Eigen::VectorXd& projections, const Box& box, int bins);

struct BiasProfile {
  Eigen::VectorXd C, V, range_c;
  Eigen::MatrixXd per_example_mean;
  std::vector<int> example_ids;
  std::vector<Box> boxes;
  double eps_box = 0.0;
  Eigen::VectorXd cvb_per_component;
  double cvb = 1.0;  // max over components, floored at 1
};

BiasProfile compute_bias_profile(const ShiftTensor& s, int bins = 10,
                                 double calibration_fraction = 0.5);

}  // namespace certibias
