#include "certibias/bias_stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace certibias {

namespace {

std::vector<int> all_indices(int n) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  return idx;
}

void check_examples(const ShiftTensor& s, std::span<const int> examples) {
  if (examples.empty()) throw std::invalid_argument("empty example index set");
  for (const int j : examples)
    if (j < 0 || j >= s.m) throw std::out_of_range("example index out of range");
}

ShiftTensor build_tensor(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& pert, int m, int k) {
  ShiftTensor s;
  s.m = m;
  s.k = k;
  s.d = static_cast<int>(clean.cols());
  s.example_ids = all_indices(m);
  s.values.resize(pert.rows(), pert.cols());
  for (int j = 0; j < m; ++j)
    s.values.middleRows(static_cast<Eigen::Index>(j) * k, k) =
        pert.middleRows(static_cast<Eigen::Index>(j) * k, k).rowwise() - clean.row(j);
  return s;
}

}  // namespace

ShiftTensor shift_matrix(const Dataset& d) {
  return build_tensor(d.clean, d.perturbed, d.n_examples, d.n_perturbations);
}

ShiftTensor logit_shift_matrix(const Dataset& d) {
  return build_tensor(clean_logits(d), perturbed_logits(d), d.n_examples, d.n_perturbations);
}

ShiftTensor slice(const ShiftTensor& s, std::span<const int> examples,
                  std::span<const int> perts) {
  check_examples(s, examples);
  if (perts.empty()) throw std::invalid_argument("empty perturbation index set");
  for (const int t : perts)
    if (t < 0 || t >= s.k) throw std::out_of_range("perturbation index out of range");

  ShiftTensor out;
  out.m = static_cast<int>(examples.size());
  out.k = static_cast<int>(perts.size());
  out.d = s.d;
  out.values.resize(static_cast<Eigen::Index>(out.m) * out.k, s.d);
  out.example_ids.reserve(examples.size());
  Eigen::Index r = 0;
  for (const int j : examples) {
    out.example_ids.push_back(s.example_ids[static_cast<std::size_t>(j)]);
    for (const int t : perts) out.values.row(r++) = s.values.row(s.row(j, t));
  }
  return out;
}

Eigen::MatrixXd per_example_means(const ShiftTensor& s, std::span<const int> examples) {
  check_examples(s, examples);
  Eigen::MatrixXd means(static_cast<Eigen::Index>(examples.size()), s.d);
  for (std::size_t i = 0; i < examples.size(); ++i)
    means.row(static_cast<Eigen::Index>(i)) =
        s.values.middleRows(s.row(examples[i], 0), s.k).colwise().mean();
  return means;
}

Eigen::VectorXd bias_bound(const ShiftTensor& s, std::span<const int> examples) {
  return per_example_means(s, examples).cwiseAbs().colwise().maxCoeff();
}

Eigen::VectorXd variance_bound(const ShiftTensor& s, std::span<const int> examples) {
  check_examples(s, examples);
  if (s.k < 2) throw std::invalid_argument("variance bound needs at least 2 perturbations");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(s.d);
  for (const int j : examples) {
    const auto block = s.values.middleRows(s.row(j, 0), s.k);
    const Eigen::RowVectorXd mean = block.colwise().mean();
    const Eigen::RowVectorXd var =
        (block.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(s.k - 1);
    v = v.cwiseMax(var.transpose());
  }
  return v;
}

Eigen::VectorXd range_bound(const ShiftTensor& s, std::span<const int> examples) {
  check_examples(s, examples);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(s.d);
  for (const int j : examples)
    r = r.cwiseMax(
        s.values.middleRows(s.row(j, 0), s.k).cwiseAbs().colwise().maxCoeff().transpose());
  return r;
}

BoxEstimate perturbation_box(const Eigen::MatrixXd& projections, double calibration_fraction) {
  const Eigen::Index rows = projections.rows();
  if (rows < 2) throw std::invalid_argument("perturbation_box needs at least 2 samples");
  if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0))
    throw std::invalid_argument("calibration fraction must lie in (0, 1)");

  Eigen::Index cal = static_cast<Eigen::Index>(
      std::floor(static_cast<double>(rows) * calibration_fraction));
  cal = std::clamp<Eigen::Index>(cal, 1, rows - 1);

  BoxEstimate est;
  est.calibration_count = static_cast<int>(cal);
  est.eval_count = static_cast<int>(rows - cal);
  est.boxes.resize(static_cast<std::size_t>(projections.cols()));
  for (Eigen::Index c = 0; c < projections.cols(); ++c) {
    Box b;
    b.lo = projections.col(c).head(cal).minCoeff();
    b.hi = projections.col(c).head(cal).maxCoeff();
    b.degenerate = (b.lo == b.hi);
    est.boxes[static_cast<std::size_t>(c)] = b;
  }
  Eigen::Index outside = 0;
  for (Eigen::Index r = cal; r < rows; ++r) {
    for (Eigen::Index c = 0; c < projections.cols(); ++c) {
      const Box& b = est.boxes[static_cast<std::size_t>(c)];
      const double v = projections(r, c);
      if (v < b.lo || v > b.hi) {
        ++outside;
        break;
      }
    }
  }
  est.eps_box = static_cast<double>(outside + 1) / static_cast<double>(est.eval_count + 1);
  return est;
}

double density_ratio(const Eigen::VectorXd& projections, const Box& box, int bins) {
  if (bins < 1) throw std::invalid_argument("density_ratio needs at least 1 bin");
  if (box.degenerate || box.width() <= 0.0) {
    // Zero-width support: every in-box sample sits in one bin of zero width.
    // The uniform reference degenerates too; report the neutral ratio.
    bool any_inside = false;
    for (Eigen::Index i = 0; i < projections.size(); ++i)
      if (projections[i] == box.lo) any_inside = true;
    if (!any_inside) throw std::invalid_argument("density_ratio: no samples inside the box");
    return 1.0;
  }
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(bins), 0);
  Eigen::Index total = 0;
  for (Eigen::Index i = 0; i < projections.size(); ++i) {
    const double v = projections[i];
    if (v < box.lo || v > box.hi) continue;
    auto bin = static_cast<Eigen::Index>(
        std::floor((v - box.lo) / box.width() * static_cast<double>(bins)));
    bin = std::clamp<Eigen::Index>(bin, 0, bins - 1);
    ++counts[static_cast<std::size_t>(bin)];
    ++total;
  }
  if (total == 0) throw std::invalid_argument("density_ratio: no samples inside the box");
  const Eigen::Index worst = *std::max_element(counts.begin(), counts.end());
  const double ratio =
      static_cast<double>(worst) / static_cast<double>(total) * static_cast<double>(bins);
  return std::max(1.0, ratio);
}

BiasProfile compute_bias_profile(const ShiftTensor& s, int bins, double calibration_fraction) {
  const auto idx = all_indices(s.m);
  BiasProfile p;
  p.C = bias_bound(s, idx);
  p.V = variance_bound(s, idx);
  p.range_c = range_bound(s, idx);
  p.per_example_mean = per_example_means(s, idx);
  p.example_ids = s.example_ids;

  const BoxEstimate est = perturbation_box(s.values, calibration_fraction);
  p.boxes = est.boxes;
  p.eps_box = est.eps_box;
  p.cvb_per_component.resize(s.d);
  for (int c = 0; c < s.d; ++c)
    p.cvb_per_component[c] =
        density_ratio(s.values.col(c), p.boxes[static_cast<std::size_t>(c)], bins);
  p.cvb = p.cvb_per_component.size() > 0 ? p.cvb_per_component.maxCoeff() : 1.0;
  return p;
}

}  // namespace certibias
