#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "certibias/dataset.hpp"
#include "certibias/debias.hpp"

namespace certibias {

// Mean over classes (those with at least one ground-truth instance) of the
// per-class recall. Predictions outside [0, n_classes) simply count as wrong.
double balanced_accuracy(std::span<const int> preds, std::span<const int> labels, int n_classes);

// Row-wise argmax; ties resolve to the smallest class index.
std::vector<int> argmax_predictions(const Eigen::MatrixXd& logits);

// Balanced accuracies before (raw) and after (corrected) debiasing, on clean
// inputs and on perturbed ones. w_clean / w_pert record how many pooled
// predictions stand behind each column (one clean and |perts| perturbed
// predictions per selected example).
struct BacTable {
  double clean_before = 0.0;
  double pert_before = 0.0;
  double clean_after = 0.0;
  double pert_after = 0.0;
  double w_clean = 0.0;
  double w_pert = 0.0;
};

// Evaluates the table on the given example/perturbation selection. With a
// null corrector the "after" columns repeat the "before" ones.
BacTable bac_table(const Dataset& d, const Corrector* corrector, std::span<const int> examples,
                   std::span<const int> perts);

// All three deltas in percentage points.
// drop  = 100 * (pert_before - clean_before)   damage done by perturbations
// clean = 100 * (clean_after - clean_before)   side effect of the corrector
// pert  = 100 * (pert_after  - pert_before)    recovery on perturbed inputs
struct DeltaMetrics {
  double drop = 0.0;
  double clean = 0.0;
  double pert = 0.0;
};

DeltaMetrics delta_metrics(const BacTable& t);

// How the combined clean+perturbed score is formed: pooled weights every
// prediction equally (1 clean + K perturbed per example); averaged takes the
// unweighted mean of the two balanced accuracies.
enum class CombineMode { pooled, averaged };

std::string combine_mode_name(CombineMode m);
CombineMode parse_combine_mode(const std::string& name);

struct DamageRecover {
  double p_damage = 0.0;              // % of clean BAC destroyed by perturbations
  std::optional<double> p_recover;    // % of that damage undone (absent when no damage)
  double p_clean = 0.0;               // % change of clean BAC under correction
  std::optional<double> p_combined;   // % change of the combined score
  double combined_before = 0.0;
  double combined_after = 0.0;
  CombineMode mode = CombineMode::pooled;
};

// Weights are the pooled prediction counts behind the clean and perturbed
// columns; only their ratio matters. Throws when clean_before is zero.
DamageRecover damage_recover(const BacTable& t, double w_clean, double w_pert,
                             CombineMode mode = CombineMode::pooled);
// Convenience overload using the counts stored in the table.
DamageRecover damage_recover(const BacTable& t, CombineMode mode = CombineMode::pooled);

// Mean over components of 100 * (before - after) / before. Positive values
// mean the radii shrank. Every baseline radius must be positive.
double radius_contraction(const Eigen::VectorXd& before, const Eigen::VectorXd& after);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Bias-corrected accelerated bootstrap interval for the mean. Deterministic
// under seed and independent of the worker count (each resample draws from
// its own counter stream). All-equal input collapses to a point interval.
Interval bootstrap_bca(std::span<const double> values, int resamples, double level,
                       std::uint64_t seed);

struct MetricsReport {
  std::string task_id;
  BacTable bac;
  DeltaMetrics delta;
  DamageRecover dr;
  std::optional<double> p_eps_l;  // mean % decrease of bounded-difference radii
  std::optional<double> p_eps_v;  // mean % decrease of variance radii
  std::map<std::string, Interval> ci;
};

// Fills deltas and the damage/recovery block from the table; radii
// percentages stay absent until the caller supplies them.
MetricsReport make_metrics_report(std::string task_id, const BacTable& t,
                                  CombineMode mode = CombineMode::pooled);

std::string metrics_report_to_json(const MetricsReport& r);
MetricsReport metrics_report_from_json(const std::string& text);
void save_metrics_report(const MetricsReport& r, const std::filesystem::path& path);
MetricsReport load_metrics_report(const std::filesystem::path& path);

struct AggregateRow {
  std::string metric;
  int count = 0;       // reports where the metric was defined
  double mean = 0.0;   // over the defined entries
  double stddev = 0.0; // sample standard deviation (0 when count < 2)
  std::optional<Interval> ci;
};

// Per-metric mean/std/CI across task reports. Undefined entries are skipped
// and show up only through a smaller count. CIs appear when ci_resamples is
// at least 100 and the metric is defined in at least two reports.
std::vector<AggregateRow> aggregate(const std::vector<MetricsReport>& reports,
                                    int ci_resamples = 0, double level = 0.95,
                                    std::uint64_t seed = 0);

// Stable listing of the metric names aggregate() reports, in output order.
const std::vector<std::string>& aggregate_metric_names();

}  // namespace certibias
