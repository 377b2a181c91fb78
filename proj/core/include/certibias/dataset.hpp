#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace certibias {

enum class DatasetKind { logits, features };

// Whether perturbation indices are split-disjoint (deterministic template
// perturbations, where index k means the same template for every example) or
// shared (independently sampled perturbations, where no identity leaks
// across examples and every split may use all of them).
enum class PertSplitMode { partition, shared };

enum class Split { train, test, holdout };

// A feature/logit dump: m clean rows plus k perturbed variants per row,
// stored example-major (perturbed row j*k + t belongs to clean row j).
struct Dataset {
  std::string task_id;
  DatasetKind kind = DatasetKind::logits;
  int n_examples = 0;       // m
  int n_perturbations = 0;  // k per example
  int n_features = 0;       // input dimension n (== width for feature dumps)
  int n_outputs = 0;        // q: components for logits dumps, classes otherwise
  PertSplitMode pert_split = PertSplitMode::partition;

  Eigen::MatrixXd clean;      // m x width
  Eigen::MatrixXd perturbed;  // (m*k) x width
  std::optional<Eigen::VectorXi> labels;   // m, values in [0, n_outputs)
  std::optional<Eigen::MatrixXd> weights;  // n_outputs x n_features

  int width() const { return static_cast<int>(clean.cols()); }
  bool has_labels() const { return labels.has_value(); }
  bool has_weights() const { return weights.has_value(); }
};

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> notes;
  bool ok() const { return errors.empty(); }
};

Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& d, const std::filesystem::path& dir);
ValidationReport validate_dataset(const Dataset& d);

struct SplitAssignment {
  std::vector<int> train_examples, test_examples, holdout_examples;
  std::vector<int> train_perts, test_perts, holdout_perts;
  std::uint64_t seed = 0;
  PertSplitMode mode = PertSplitMode::partition;

  const std::vector<int>& examples(Split s) const;
  const std::vector<int>& perts(Split s) const;
};

// Deterministic disjoint example split; sizes are floor(m * p) with the
// remainder assigned to train. Perturbation indices are partitioned the same
// way under PertSplitMode::partition and shared in full otherwise.
SplitAssignment split_dataset(const Dataset& d, const std::array<double, 3>& proportions,
                              std::uint64_t seed);

// Classifier outputs: the dump itself for logits dumps, clean * W^T when a
// weight matrix is present. Throws if neither applies.
Eigen::MatrixXd clean_logits(const Dataset& d);
Eigen::MatrixXd perturbed_logits(const Dataset& d);

Split parse_split(const std::string& name);
std::string split_name(Split s);

}  // namespace certibias
