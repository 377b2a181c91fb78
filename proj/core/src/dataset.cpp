#include "certibias/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "certibias/csv.hpp"
#include "certibias/rng.hpp"

namespace certibias {

namespace {

using nlohmann::json;

constexpr const char* kManifestName = "manifest.json";

std::string kind_name(DatasetKind k) { return k == DatasetKind::logits ? "logits" : "features"; }

DatasetKind parse_kind(const std::string& s) {
  if (s == "logits") return DatasetKind::logits;
  if (s == "features") return DatasetKind::features;
  throw std::runtime_error("manifest kind must be 'logits' or 'features', got '" + s + "'");
}

int require_positive_int(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_integer())
    throw std::runtime_error(std::string("manifest key '") + key + "' missing or not an integer");
  const int v = j[key].get<int>();
  if (v <= 0) throw std::runtime_error(std::string("manifest key '") + key + "' must be positive");
  return v;
}

void check_finite(const Eigen::MatrixXd& m, const std::string& name, ValidationReport& rep) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      if (!std::isfinite(m(r, c))) {
        std::ostringstream msg;
        msg << name << ": non-finite value at row " << r << ", column " << c;
        rep.errors.push_back(msg.str());
        return;
      }
}

}  // namespace

const std::vector<int>& SplitAssignment::examples(Split s) const {
  switch (s) {
    case Split::train: return train_examples;
    case Split::test: return test_examples;
    default: return holdout_examples;
  }
}

const std::vector<int>& SplitAssignment::perts(Split s) const {
  switch (s) {
    case Split::train: return train_perts;
    case Split::test: return test_perts;
    default: return holdout_perts;
  }
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  if (name == "holdout") return Split::holdout;
  throw std::runtime_error("unknown split '" + name + "' (expected train|test|holdout)");
}

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test: return "test";
    default: return "holdout";
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / kManifestName;
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open " + manifest_path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw std::runtime_error(manifest_path.string() + ": " + e.what());
  }

  Dataset d;
  if (!manifest.contains("task_id") || !manifest["task_id"].is_string())
    throw std::runtime_error("manifest key 'task_id' missing or not a string");
  d.task_id = manifest["task_id"].get<std::string>();
  if (!manifest.contains("kind") || !manifest["kind"].is_string())
    throw std::runtime_error("manifest key 'kind' missing or not a string");
  d.kind = parse_kind(manifest["kind"].get<std::string>());
  d.n_examples = require_positive_int(manifest, "m");
  d.n_perturbations = require_positive_int(manifest, "k");
  d.n_features = require_positive_int(manifest, "p");
  d.n_outputs = require_positive_int(manifest, "q");
  if (manifest.contains("pert_split")) {
    const auto mode = manifest["pert_split"].get<std::string>();
    if (mode == "partition") d.pert_split = PertSplitMode::partition;
    else if (mode == "shared") d.pert_split = PertSplitMode::shared;
    else throw std::runtime_error("manifest pert_split must be 'partition' or 'shared'");
  }

  if (!manifest.contains("files") || !manifest["files"].is_object())
    throw std::runtime_error("manifest key 'files' missing or not an object");
  const json& files = manifest["files"];
  auto file_path = [&](const char* key) {
    if (!files.contains(key) || !files[key].is_string())
      throw std::runtime_error(std::string("manifest files key '") + key + "' missing");
    return dir / files[key].get<std::string>();
  };

  d.clean = read_matrix_csv(file_path("clean"));
  d.perturbed = read_matrix_csv(file_path("perturbed"));
  if (files.contains("labels")) {
    const auto raw = read_int_csv(dir / files["labels"].get<std::string>());
    Eigen::VectorXi labels(static_cast<Eigen::Index>(raw.size()));
    for (Eigen::Index i = 0; i < labels.size(); ++i) labels[i] = raw[static_cast<std::size_t>(i)];
    d.labels = std::move(labels);
  }
  if (files.contains("weights")) {
    d.weights = read_matrix_csv(dir / files["weights"].get<std::string>());
  }

  const int width = d.kind == DatasetKind::logits ? d.n_outputs : d.n_features;
  if (d.clean.rows() != d.n_examples || d.clean.cols() != width) {
    std::ostringstream msg;
    msg << "clean matrix is " << d.clean.rows() << "x" << d.clean.cols() << ", manifest declares "
        << d.n_examples << "x" << width;
    throw std::runtime_error(msg.str());
  }
  const Eigen::Index want_rows =
      static_cast<Eigen::Index>(d.n_examples) * static_cast<Eigen::Index>(d.n_perturbations);
  if (d.perturbed.rows() != want_rows || d.perturbed.cols() != width) {
    std::ostringstream msg;
    msg << "perturbed matrix is " << d.perturbed.rows() << "x" << d.perturbed.cols()
        << ", manifest declares " << want_rows << "x" << width;
    throw std::runtime_error(msg.str());
  }
  return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json files = {{"clean", "clean.csv"}, {"perturbed", "perturbed.csv"}};
  write_matrix_csv(dir / "clean.csv", d.clean);
  write_matrix_csv(dir / "perturbed.csv", d.perturbed);
  if (d.labels) {
    std::vector<int> raw(d.labels->data(), d.labels->data() + d.labels->size());
    write_int_csv(dir / "labels.csv", raw);
    files["labels"] = "labels.csv";
  }
  if (d.weights) {
    write_matrix_csv(dir / "weights.csv", *d.weights);
    files["weights"] = "weights.csv";
  }
  const json manifest = {
      {"task_id", d.task_id},
      {"kind", kind_name(d.kind)},
      {"m", d.n_examples},
      {"k", d.n_perturbations},
      {"p", d.n_features},
      {"q", d.n_outputs},
      {"pert_split", d.pert_split == PertSplitMode::partition ? "partition" : "shared"},
      {"files", files},
  };
  std::ofstream out(dir / kManifestName, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / kManifestName).string());
  out << manifest.dump(2) << '\n';
}

ValidationReport validate_dataset(const Dataset& d) {
  ValidationReport rep;
  if (d.n_examples <= 0) rep.errors.push_back("m must be positive");
  if (d.n_perturbations <= 0) rep.errors.push_back("k must be positive");
  if (d.n_features <= 0) rep.errors.push_back("p must be positive");
  if (d.n_outputs <= 0) rep.errors.push_back("q must be positive");

  const int width = d.kind == DatasetKind::logits ? d.n_outputs : d.n_features;
  if (d.clean.rows() != d.n_examples || d.clean.cols() != width)
    rep.errors.push_back("clean matrix shape does not match manifest");
  const Eigen::Index want_rows =
      static_cast<Eigen::Index>(d.n_examples) * static_cast<Eigen::Index>(d.n_perturbations);
  if (d.perturbed.rows() != want_rows || d.perturbed.cols() != width)
    rep.errors.push_back("perturbed matrix shape does not match manifest (need m*k rows)");

  check_finite(d.clean, "clean", rep);
  check_finite(d.perturbed, "perturbed", rep);

  if (d.labels) {
    if (d.labels->size() != d.n_examples) {
      rep.errors.push_back("labels length does not match m");
    } else {
      for (Eigen::Index i = 0; i < d.labels->size(); ++i) {
        const int y = (*d.labels)[i];
        if (y < 0 || y >= d.n_outputs) {
          std::ostringstream msg;
          msg << "label out of range [0, " << d.n_outputs << ") at row " << i << ": " << y;
          rep.errors.push_back(msg.str());
          break;
        }
      }
    }
  } else {
    rep.notes.push_back("labels absent: margin certification and accuracy metrics unavailable");
  }

  if (d.weights) {
    if (d.weights->rows() != d.n_outputs || d.weights->cols() != d.n_features) {
      rep.errors.push_back("weights matrix must be q x p");
    } else {
      check_finite(*d.weights, "weights", rep);
      for (Eigen::Index r = 0; r < d.weights->rows(); ++r)
        if (d.weights->row(r).norm() == 0.0) {
          std::ostringstream msg;
          msg << "weights row " << r << " is the zero vector";
          rep.errors.push_back(msg.str());
        }
    }
  } else if (d.kind == DatasetKind::features) {
    rep.notes.push_back("weights absent: feature dump has no classifier for margin analysis");
  }
  return rep;
}

namespace {

// Floor split sizes, remainder to train; every split must keep >= 1 index.
std::array<int, 3> split_sizes(int total, const std::array<double, 3>& p) {
  std::array<int, 3> sizes{};
  for (int i = 0; i < 3; ++i) sizes[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(
      static_cast<double>(total) * p[static_cast<std::size_t>(i)]));
  sizes[0] += total - (sizes[0] + sizes[1] + sizes[2]);
  return sizes;
}

void assign(const std::vector<int>& perm, const std::array<int, 3>& sizes, std::vector<int>& a,
            std::vector<int>& b, std::vector<int>& c) {
  a.assign(perm.begin(), perm.begin() + sizes[0]);
  b.assign(perm.begin() + sizes[0], perm.begin() + sizes[0] + sizes[1]);
  c.assign(perm.begin() + sizes[0] + sizes[1], perm.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::sort(c.begin(), c.end());
}

}  // namespace

SplitAssignment split_dataset(const Dataset& d, const std::array<double, 3>& proportions,
                              std::uint64_t seed) {
  double sum = 0.0;
  for (const double p : proportions) {
    if (!(p > 0.0)) throw std::invalid_argument("split proportions must be positive");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split proportions must sum to 1");

  const auto ex_sizes = split_sizes(d.n_examples, proportions);
  for (const int s : ex_sizes)
    if (s < 1)
      throw std::invalid_argument("dataset too small: every split needs at least one example");

  SplitAssignment sa;
  sa.seed = seed;
  sa.mode = d.pert_split;
  assign(random_permutation(d.n_examples, seed, 0), ex_sizes, sa.train_examples,
         sa.test_examples, sa.holdout_examples);

  if (d.pert_split == PertSplitMode::partition) {
    const auto pert_sizes = split_sizes(d.n_perturbations, proportions);
    for (const int s : pert_sizes)
      if (s < 1)
        throw std::invalid_argument(
            "dataset too small: every split needs at least one perturbation index");
    assign(random_permutation(d.n_perturbations, seed, 1), pert_sizes, sa.train_perts,
           sa.test_perts, sa.holdout_perts);
  } else {
    std::vector<int> all(static_cast<std::size_t>(d.n_perturbations));
    for (int i = 0; i < d.n_perturbations; ++i) all[static_cast<std::size_t>(i)] = i;
    sa.train_perts = all;
    sa.test_perts = all;
    sa.holdout_perts = std::move(all);
  }
  return sa;
}

Eigen::MatrixXd clean_logits(const Dataset& d) {
  if (d.kind == DatasetKind::logits) return d.clean;
  if (!d.weights)
    throw std::runtime_error("feature dump has no weights: classifier outputs unavailable");
  return d.clean * d.weights->transpose();
}

Eigen::MatrixXd perturbed_logits(const Dataset& d) {
  if (d.kind == DatasetKind::logits) return d.perturbed;
  if (!d.weights)
    throw std::runtime_error("feature dump has no weights: classifier outputs unavailable");
  return d.perturbed * d.weights->transpose();
}

}  // namespace certibias
