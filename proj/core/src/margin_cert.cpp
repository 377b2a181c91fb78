#include "certibias/margin_cert.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "certibias/bias_stats.hpp"
#include "certibias/component_cert.hpp"

namespace certibias {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_label(int label, Eigen::Index q) {
  if (q < 2) throw std::invalid_argument("margin needs at least 2 classes");
  if (label < 0 || label >= q) throw std::invalid_argument("label out of range");
}

}  // namespace

MarginResult margin_from_logits(const Eigen::VectorXd& logits, int label) {
  check_label(label, logits.size());
  MarginResult r;
  r.rho_j = Eigen::VectorXd::Constant(logits.size(), kInf);
  r.rho = kInf;
  for (Eigen::Index j = 0; j < logits.size(); ++j) {
    if (j == label) continue;
    r.rho_j[j] = logits[label] - logits[j];
    r.rho = std::min(r.rho, r.rho_j[j]);
  }
  return r;
}

MarginResult margin_linear(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                           const Eigen::VectorXd& x, int label) {
  check_label(label, weights.rows());
  if (weights.cols() != x.size())
    throw std::invalid_argument("margin: input width does not match weights");
  if (bias.size() != 0 && bias.size() != weights.rows())
    throw std::invalid_argument("margin: bias length must match class count");
  MarginResult r;
  r.rho_j = Eigen::VectorXd::Constant(weights.rows(), kInf);
  r.rho = kInf;
  for (Eigen::Index j = 0; j < weights.rows(); ++j) {
    if (j == label) continue;
    const Eigen::VectorXd diff = weights.row(label) - weights.row(j);
    const double norm = diff.norm();
    if (norm == 0.0)
      throw std::invalid_argument("margin: identical weight rows give no separating direction");
    double num = diff.dot(x);
    if (bias.size() != 0) num += bias[label] - bias[j];
    r.rho_j[j] = num / norm;
    r.rho = std::min(r.rho, r.rho_j[j]);
  }
  return r;
}

std::vector<ExampleMarginStats> margin_shift_stats(const Dataset& d, const Corrector* corrector,
                                                   std::span<const int> examples,
                                                   std::span<const int> perts,
                                                   double calibration_fraction) {
  if (!d.labels) throw std::invalid_argument("margin statistics require labels");
  if (d.n_outputs < 2) throw std::invalid_argument("margin statistics need at least 2 classes");
  if (perts.size() < 4)
    throw std::invalid_argument("margin statistics need at least 4 perturbations per example");
  if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0))
    throw std::invalid_argument("calibration fraction must lie in (0, 1)");

  const Eigen::MatrixXd clean_lg =
      corrector ? corrected_clean_logits(d, *corrector) : clean_logits(d);
  const Eigen::MatrixXd pert_lg =
      corrector ? corrected_perturbed_logits(d, *corrector) : perturbed_logits(d);
  const int q = d.n_outputs;

  // Geometric normalizers for linear classifiers; 1 for raw logit dumps.
  const bool geometric = d.kind == DatasetKind::features && d.has_weights();
  Eigen::MatrixXd norms = Eigen::MatrixXd::Ones(q, q);
  if (geometric) {
    for (int a = 0; a < q; ++a)
      for (int b = 0; b < q; ++b) {
        if (a == b) continue;
        const double nrm = (d.weights->row(a) - d.weights->row(b)).norm();
        if (nrm == 0.0)
          throw std::invalid_argument("margin: identical weight rows give no separating direction");
        norms(a, b) = nrm;
      }
  }

  std::vector<int> sorted_perts(perts.begin(), perts.end());
  std::sort(sorted_perts.begin(), sorted_perts.end());
  const int z = static_cast<int>(sorted_perts.size());
  int n_cal = static_cast<int>(std::floor(z * calibration_fraction));
  n_cal = std::clamp(n_cal, 1, z - 1);
  const int n_eval = z - n_cal;

  std::vector<ExampleMarginStats> out;
  out.reserve(examples.size());
  for (const int j : examples) {
    if (j < 0 || j >= d.n_examples) throw std::out_of_range("example index out of range");
    const int y = (*d.labels)[j];
    ExampleMarginStats st;
    st.example = j;
    st.label = y;
    st.z_cal.resize(n_cal, q - 1);
    st.z_eval.resize(n_eval, q - 1);
    st.rho = kInf;

    int col = 0;
    for (int c = 0; c < q; ++c) {
      if (c == y) continue;
      const double nrm = norms(y, c);
      const double rho_c = (clean_lg(j, y) - clean_lg(j, c)) / nrm;
      for (int t = 0; t < z; ++t) {
        const Eigen::Index r =
            static_cast<Eigen::Index>(j) * d.n_perturbations + sorted_perts[static_cast<std::size_t>(t)];
        const double zval = ((pert_lg(r, y) - pert_lg(r, c)) - (clean_lg(j, y) - clean_lg(j, c))) / nrm;
        if (t < n_cal) st.z_cal(t, col) = zval;
        else st.z_eval(t - n_cal, col) = zval;
      }
      CompetitorStats cs;
      cs.cls = c;
      cs.rho = rho_c;
      cs.lo = st.z_cal.col(col).minCoeff();
      cs.hi = st.z_cal.col(col).maxCoeff();
      cs.degenerate = cs.lo == cs.hi;
      cs.mu = 0.5 * (cs.lo + cs.hi);
      cs.c = 0.5 * (cs.hi - cs.lo);
      cs.nu = (cs.hi - cs.lo) * (cs.hi - cs.lo) / 12.0;
      st.comp.push_back(cs);
      st.rho = std::min(st.rho, rho_c);
      ++col;
    }
    out.push_back(std::move(st));
  }
  return out;
}

CertRecord certify_example(const ExampleMarginStats& stats, double phi, double eps_box, double cvb,
                           const CertMethods& methods) {
  if (stats.comp.empty()) throw std::invalid_argument("certify_example: no competitors");
  const double phi_j = phi / static_cast<double>(stats.comp.size());
  // bridge_budget validates phi_j > eps_box and cvb >= 1.
  const BridgeBudget bb = bridge_budget(phi_j, eps_box, cvb);

  CertRecord rec;
  rec.example = stats.example;
  rec.label = stats.label;
  rec.rho = stats.rho;
  rec.phi_budget = phi_j;
  rec.kappa = bb.kappa;
  rec.vacuous = bb.vacuous;

  bool all_h = true, all_b = true, all_c = true;
  double worst_slack = kInf;
  for (const CompetitorStats& cs : stats.comp) {
    CompetitorCert cc;
    cc.cls = cs.cls;
    if (cs.degenerate) {
      // Point support: the shift is exactly mu; certify on the strict margin.
      const bool ok = cs.rho > -cs.mu;
      cc.certified_h = cc.certified_b = cc.certified_c = ok;
    } else {
      cc.xi_h = cs.c * std::sqrt(2.0 * bb.kappa);
      cc.bernstein_gamma = (2.0 / 3.0) * cs.c * bb.kappa;
      cc.xi_b = cc.bernstein_gamma +
                std::sqrt(cc.bernstein_gamma * cc.bernstein_gamma + 2.0 * bb.kappa * cs.nu);
      cc.xi_c = std::sqrt(cs.nu * (std::exp(bb.kappa) - 1.0));
      cc.certified_h = cs.rho >= -cs.mu + cc.xi_h;
      cc.certified_b = cs.rho >= -cs.mu + cc.xi_b;
      cc.certified_c = cs.rho >= -cs.mu + cc.xi_c;
    }
    if (rec.vacuous) cc.certified_h = cc.certified_b = cc.certified_c = false;
    all_h = all_h && cc.certified_h;
    all_b = all_b && cc.certified_b;
    all_c = all_c && cc.certified_c;

    const double slack = cs.rho + cs.mu - cc.xi_h;
    if (slack < worst_slack) {
      worst_slack = slack;
      rec.xi_h = cc.xi_h;
      rec.xi_b = cc.xi_b;
      rec.xi_c = cc.xi_c;
      rec.bernstein_gamma = cc.bernstein_gamma;
      rec.slack_h = slack;
    }
    rec.competitors.push_back(cc);
  }
  rec.certified_h = methods.hoeffding && all_h;
  rec.certified_b = methods.bernstein && all_b;
  rec.certified_c = methods.cantelli && all_c;
  return rec;
}

double population_bound(int s, int m, double phi, double psi) {
  if (m <= 0) throw std::invalid_argument("population bound needs m >= 1");
  if (s < 0 || s > m) throw std::invalid_argument("certified count s must lie in [0, m]");
  if (!(phi > 0.0 && phi < 1.0)) throw std::invalid_argument("phi must lie in (0, 1)");
  if (!(psi > 0.0 && psi < 1.0)) throw std::invalid_argument("psi must lie in (0, 1)");
  const double dev = std::sqrt(std::log(2.0 / psi) / (2.0 * static_cast<double>(m)));
  return (1.0 - phi) * std::max(0.0, static_cast<double>(s) / static_cast<double>(m) - dev);
}

PooledBoxStats pooled_box_stats(const std::vector<ExampleMarginStats>& stats, int bins) {
  if (bins < 1) throw std::invalid_argument("pooled_box_stats needs at least 1 bin");
  PooledBoxStats ps;
  std::vector<long> hist(static_cast<std::size_t>(bins), 0);
  long in_box = 0;
  for (const ExampleMarginStats& st : stats) {
    for (std::size_t c = 0; c < st.comp.size(); ++c) {
      const CompetitorStats& cs = st.comp[c];
      for (Eigen::Index r = 0; r < st.z_eval.rows(); ++r) {
        const double v = st.z_eval(r, static_cast<Eigen::Index>(c));
        ++ps.total_eval;
        if (v < cs.lo || v > cs.hi) {
          ++ps.outside;
          continue;
        }
        if (cs.degenerate) continue;  // zero-width box: no density information
        auto bin = static_cast<long>(std::floor((v - cs.lo) / (cs.hi - cs.lo) * bins));
        bin = std::clamp<long>(bin, 0, bins - 1);
        ++hist[static_cast<std::size_t>(bin)];
        ++in_box;
      }
    }
  }
  ps.eps_box = static_cast<double>(ps.outside + 1) / static_cast<double>(ps.total_eval + 1);
  if (in_box > 0) {
    const long worst = *std::max_element(hist.begin(), hist.end());
    ps.cvb = std::max(1.0, static_cast<double>(worst) / static_cast<double>(in_box) *
                               static_cast<double>(bins));
  }
  return ps;
}

namespace {

struct GroupTally {
  std::vector<long> correct, total;  // per class
  void init(int q) {
    correct.assign(static_cast<std::size_t>(q), 0);
    total.assign(static_cast<std::size_t>(q), 0);
  }
  double bac() const {
    double acc = 0.0;
    int present = 0;
    for (std::size_t c = 0; c < total.size(); ++c) {
      if (total[c] == 0) continue;
      acc += static_cast<double>(correct[c]) / static_cast<double>(total[c]);
      ++present;
    }
    return present == 0 ? 0.0 : acc / present;
  }
};

}  // namespace

VerifySummary verify_certificates(std::vector<CertRecord>& records,
                                  const std::vector<ExampleMarginStats>& stats, int n_classes) {
  if (records.size() != stats.size())
    throw std::invalid_argument("verify_certificates: record/stat count mismatch");

  GroupTally cert_h, unc_h, cert_b, unc_b, cert_c, unc_c;
  for (GroupTally* t : {&cert_h, &unc_h, &cert_b, &unc_b, &cert_c, &unc_c}) t->init(n_classes);

  for (std::size_t i = 0; i < records.size(); ++i) {
    CertRecord& rec = records[i];
    const ExampleMarginStats& st = stats[i];
    if (rec.example != st.example)
      throw std::invalid_argument("verify_certificates: records and stats must align");

    long failures = 0;
    const Eigen::Index n_eval = st.z_eval.rows();
    for (Eigen::Index r = 0; r < n_eval; ++r) {
      bool ok = true;
      for (std::size_t c = 0; c < st.comp.size(); ++c)
        if (st.comp[c].rho + st.z_eval(r, static_cast<Eigen::Index>(c)) <= 0.0) {
          ok = false;
          break;
        }
      if (!ok) ++failures;
    }
    rec.n_eval = static_cast<int>(n_eval);
    rec.fail_rate_eval =
        n_eval == 0 ? 0.0 : static_cast<double>(failures) / static_cast<double>(n_eval);

    const long correct = n_eval - failures;
    const auto y = static_cast<std::size_t>(rec.label);
    auto add = [&](GroupTally& t) {
      t.correct[y] += correct;
      t.total[y] += n_eval;
    };
    add(rec.certified_h ? cert_h : unc_h);
    add(rec.certified_b ? cert_b : unc_b);
    add(rec.certified_c ? cert_c : unc_c);
  }

  auto pack = [&](const GroupTally& cert, const GroupTally& unc, auto count_cert) {
    MethodVerification mv;
    mv.bac_certified = cert.bac();
    mv.bac_uncertified = unc.bac();
    for (const CertRecord& r : records) {
      if (count_cert(r)) ++mv.n_certified;
      else ++mv.n_uncertified;
    }
    return mv;
  };
  VerifySummary vs;
  vs.hoeffding = pack(cert_h, unc_h, [](const CertRecord& r) { return r.certified_h; });
  vs.bernstein = pack(cert_b, unc_b, [](const CertRecord& r) { return r.certified_b; });
  vs.cantelli = pack(cert_c, unc_c, [](const CertRecord& r) { return r.certified_c; });
  return vs;
}

}  // namespace certibias
