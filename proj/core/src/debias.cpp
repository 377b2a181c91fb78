#include "certibias/debias.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "certibias/component_cert.hpp"
#include "certibias/csv.hpp"

namespace certibias {

namespace {

using nlohmann::json;

// Cholesky solve of (G + (lambda + jitter) I) W = rhs with the jitter ladder
// 0, 1e-12, 1e-11, ..., 1e-6.
Eigen::MatrixXd solve_spd(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& rhs, double lambda,
                          const std::string& context) {
  const Eigen::Index p = gram.rows();
  double jitter = 0.0;
  while (true) {
    Eigen::MatrixXd H = gram;
    H.diagonal().array() += lambda + jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd W = llt.solve(rhs);
      if (W.allFinite()) return W;
    }
    if (jitter == 0.0) jitter = 1e-12;
    else jitter *= 10.0;
    if (jitter > 1e-6 * (1.0 + 1e-9)) {
      throw std::runtime_error(context + ": normal matrix not positive definite after jitter escalation to 1e-6");
    }
    (void)p;
  }
}

Eigen::VectorXd residual_midrange(const Eigen::MatrixXd& residuals) {
  return 0.5 * (residuals.colwise().maxCoeff() + residuals.colwise().minCoeff()).transpose();
}

std::string psi_name(PsiVariant v) { return v == PsiVariant::linear ? "linear" : "with_norm"; }

PsiVariant parse_psi(const std::string& s) {
  if (s == "linear") return PsiVariant::linear;
  if (s == "with_norm") return PsiVariant::with_norm;
  throw std::runtime_error("unknown psi variant '" + s + "'");
}

Eigen::VectorXd json_to_vector(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  Eigen::Index i = 0;
  for (const auto& x : j) v[i++] = x.get<double>();
  return v;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

// Correction values the corrector subtracts from outputs, evaluated at the
// given input rows (for constant and pca the inputs are the outputs).
Eigen::MatrixXd correct_rows(const Corrector& c, const Eigen::MatrixXd& rows) {
  if (const auto* cc = std::get_if<ConstantCorrector>(&c.model)) return apply_bias(rows, cc->b);
  if (const auto* rc = std::get_if<RidgeCorrector>(&c.model)) return apply_ridge(rows, rows, *rc);
  return apply_pca_debias(std::get<PcaCorrector>(c.model), rows);
}

ShiftTensor tensor_from(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& pert, int m, int k) {
  ShiftTensor s;
  s.m = m;
  s.k = k;
  s.d = static_cast<int>(clean.cols());
  s.values.resize(pert.rows(), pert.cols());
  s.example_ids.resize(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    s.example_ids[static_cast<std::size_t>(j)] = j;
    s.values.middleRows(static_cast<Eigen::Index>(j) * k, k) =
        pert.middleRows(static_cast<Eigen::Index>(j) * k, k).rowwise() - clean.row(j);
  }
  return s;
}

}  // namespace

const char* Corrector::kind() const {
  if (std::holds_alternative<ConstantCorrector>(model)) return "constant";
  if (std::holds_alternative<RidgeCorrector>(model)) return "ridge";
  return "pca";
}

Eigen::MatrixXd psi_features(const Eigen::MatrixXd& X, PsiVariant variant) {
  const Eigen::Index n = X.rows();
  const Eigen::Index extra = variant == PsiVariant::linear ? 1 : 2;
  Eigen::MatrixXd psi(n, X.cols() + extra);
  psi.leftCols(X.cols()) = X;
  if (variant == PsiVariant::with_norm) psi.col(X.cols()) = X.rowwise().norm();
  psi.col(psi.cols() - 1).setOnes();
  return psi;
}

RidgeCorrector fit_ridge(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                         double lambda, PsiVariant psi) {
  if (features.rows() != targets.rows())
    throw std::invalid_argument("fit_ridge: features and targets row counts differ");
  if (features.rows() == 0) throw std::invalid_argument("fit_ridge: empty training set");
  if (!(lambda >= 0.0)) throw std::invalid_argument("fit_ridge: lambda must be >= 0");

  const Eigen::MatrixXd Psi = psi_features(features, psi);
  RidgeCorrector rc;
  rc.lambda = lambda;
  rc.alpha = 0.0;
  rc.psi = psi;
  rc.W = solve_spd(Psi.transpose() * Psi, Psi.transpose() * targets, lambda, "fit_ridge");
  rc.beta = residual_midrange(targets - Psi * rc.W);
  return rc;
}

RidgeCorrector fit_ridge_gram(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                              double lambda, double alpha, const Eigen::MatrixXd& clean_features,
                              PsiVariant psi) {
  if (features.rows() != targets.rows())
    throw std::invalid_argument("fit_ridge_gram: features and targets row counts differ");
  if (features.rows() == 0) throw std::invalid_argument("fit_ridge_gram: empty training set");
  if (!(lambda >= 0.0)) throw std::invalid_argument("fit_ridge_gram: lambda must be >= 0");
  if (clean_features.cols() != features.cols())
    throw std::invalid_argument("fit_ridge_gram: clean feature width differs");

  const Eigen::MatrixXd Psi = psi_features(features, psi);
  const Eigen::MatrixXd PsiClean = psi_features(clean_features, psi);
  const Eigen::MatrixXd gram =
      Psi.transpose() * Psi + alpha * (PsiClean.transpose() * PsiClean);

  RidgeCorrector rc;
  rc.lambda = lambda;
  rc.alpha = alpha;
  rc.psi = psi;
  std::ostringstream ctx;
  ctx << "fit_ridge_gram(alpha=" << alpha << ")";
  rc.W = solve_spd(gram, Psi.transpose() * targets, lambda, ctx.str());
  rc.beta = residual_midrange(targets - Psi * rc.W);
  return rc;
}

Eigen::MatrixXd apply_ridge(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& features,
                            const RidgeCorrector& corr) {
  if (outputs.rows() != features.rows())
    throw std::invalid_argument("apply_ridge: outputs and features row counts differ");
  const Eigen::MatrixXd Psi = psi_features(features, corr.psi);
  if (Psi.cols() != corr.W.rows())
    throw std::invalid_argument("apply_ridge: feature width does not match the corrector");
  if (outputs.cols() != corr.W.cols())
    throw std::invalid_argument("apply_ridge: output width does not match the corrector");
  Eigen::MatrixXd correction = Psi * corr.W;
  correction.rowwise() += corr.beta.transpose();
  return outputs - correction;
}

Eigen::MatrixXd apply_bias(const Eigen::MatrixXd& outputs, const Eigen::VectorXd& b) {
  if (outputs.cols() != b.size())
    throw std::invalid_argument("apply_bias: offset length does not match output width");
  return outputs.rowwise() - b.transpose();
}

PcaCorrector fit_pca_debias(const Eigen::MatrixXd& clean_feats, const Eigen::MatrixXd& pert_feats,
                            int k, double lambda) {
  const Eigen::Index m = clean_feats.rows();
  const Eigen::Index n = clean_feats.cols();
  if (m == 0 || pert_feats.rows() == 0) throw std::invalid_argument("fit_pca_debias: empty input");
  if (pert_feats.cols() != n)
    throw std::invalid_argument("fit_pca_debias: clean/perturbed widths differ");
  if (pert_feats.rows() % m != 0)
    throw std::invalid_argument("fit_pca_debias: perturbed rows must be a multiple of clean rows");
  const Eigen::Index reps = pert_feats.rows() / m;
  if (k < 0 || k > n) throw std::invalid_argument("fit_pca_debias: k must lie in [0, n]");
  if (pert_feats.rows() < 2)
    throw std::invalid_argument("fit_pca_debias: need at least 2 perturbed rows");

  PcaCorrector pc;
  pc.k = k;
  pc.lambda = lambda;

  // mu is the mean perturbation-induced feature shift.
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < m; ++j)
    mu += (pert_feats.middleRows(j * reps, reps).rowwise() - clean_feats.row(j))
              .colwise()
              .sum()
              .transpose();
  mu /= static_cast<double>(pert_feats.rows());
  pc.mu = mu;

  // Principal axes of the shifted perturbed cloud.
  Eigen::MatrixXd shifted = pert_feats.rowwise() - mu.transpose();
  const Eigen::RowVectorXd center = shifted.colwise().mean();
  const Eigen::MatrixXd centered = shifted.rowwise() - center;
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(pert_feats.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("fit_pca_debias: eigendecomposition failed");

  pc.H.resize(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::VectorXd h = eig.eigenvectors().col(n - 1 - c);  // descending variance
    Eigen::Index imax = 0;
    h.cwiseAbs().maxCoeff(&imax);
    if (h[imax] < 0.0) h = -h;
    pc.H.col(c) = h;
  }

  // theta_i learns the residual correction for coordinate i from the full
  // projection vector: target h_i^T(clean + mu - perturbed).
  const Eigen::MatrixXd proj = shifted * pc.H;
  pc.thetas.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd target(pert_feats.rows());
    for (Eigen::Index j = 0; j < m; ++j) {
      const Eigen::RowVectorXd want = clean_feats.row(j) + mu.transpose();
      target.segment(j * reps, reps) =
          ((-pert_feats.middleRows(j * reps, reps)).rowwise() + want) * pc.H.col(i);
    }
    pc.thetas.push_back(fit_ridge(proj, target, lambda, PsiVariant::linear));
  }
  return pc;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> pca_projections(const PcaCorrector& corr,
                                                            const Eigen::VectorXd& x) {
  if (x.size() != corr.mu.size())
    throw std::invalid_argument("pca corrector: input width mismatch");
  const Eigen::VectorXd proj = corr.H.transpose() * (x - corr.mu);
  Eigen::VectorXd out = proj;
  for (int i = 0; i < corr.k; ++i) {
    const RidgeCorrector& th = corr.thetas[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd p = psi_features(proj.transpose(), th.psi);
    out[i] += (p * th.W)(0, 0) + th.beta[0];
  }
  return {proj, out};
}

Eigen::VectorXd apply_pca_debias(const PcaCorrector& corr, const Eigen::VectorXd& x) {
  return corr.H * pca_projections(corr, x).second;
}

Eigen::MatrixXd apply_pca_debias(const PcaCorrector& corr, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd out(X.rows(), X.cols());
  for (Eigen::Index r = 0; r < X.rows(); ++r)
    out.row(r) = apply_pca_debias(corr, Eigen::VectorXd(X.row(r).transpose())).transpose();
  return out;
}

namespace {

double nearest_rank_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const auto n = static_cast<double>(v.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n));
  rank = std::min<std::size_t>(std::max<std::size_t>(rank, 1), v.size());
  return v[rank - 1];
}

}  // namespace

BiasSearchResult search_constant_bias(const Dataset& d, const ShiftTensor& logit_shifts,
                                      std::span<const int> train_examples,
                                      std::span<const int> train_perts,
                                      const BiasSearchConfig& config) {
  if (d.n_outputs != 2)
    throw std::invalid_argument("constant bias search requires a binary task");
  if (!d.labels) throw std::invalid_argument("constant bias search requires labels");
  if (config.grid_points < 3) throw std::invalid_argument("grid needs at least 3 points");
  if (!(config.percentile > 0.0 && config.percentile < 1.0))
    throw std::invalid_argument("percentile must lie in (0, 1)");
  if (!(config.phi > 0.0 && config.phi < 1.0))
    throw std::invalid_argument("phi must lie in (0, 1)");
  if (logit_shifts.d != 2)
    throw std::invalid_argument("constant bias search expects logit-space shifts");

  const ShiftTensor sub = slice(logit_shifts, train_examples, train_perts);
  std::vector<int> all(static_cast<std::size_t>(sub.m));
  for (int i = 0; i < sub.m; ++i) all[static_cast<std::size_t>(i)] = i;
  const Eigen::VectorXd V = variance_bound(sub, all);
  const double c_max = bias_bound(sub, all).maxCoeff();

  // Decision values of the train perturbed predictions, by true class.
  const Eigen::MatrixXd pert = perturbed_logits(d);
  std::vector<double> dec_pos, dec_neg;  // D = l1 - l0; predict class 1 iff D > b
  for (const int j : train_examples) {
    const int y = (*d.labels)[j];
    for (const int t : train_perts) {
      const Eigen::Index r = static_cast<Eigen::Index>(j) * d.n_perturbations + t;
      const double dv = pert(r, 1) - pert(r, 0);
      (y == 1 ? dec_pos : dec_neg).push_back(dv);
    }
  }
  std::sort(dec_pos.begin(), dec_pos.end());
  std::sort(dec_neg.begin(), dec_neg.end());
  auto bac_at = [&](double b) {
    double acc = 0.0;
    int classes = 0;
    if (!dec_pos.empty()) {
      const auto correct = dec_pos.end() - std::upper_bound(dec_pos.begin(), dec_pos.end(), b);
      acc += static_cast<double>(correct) / static_cast<double>(dec_pos.size());
      ++classes;
    }
    if (!dec_neg.empty()) {
      const auto correct = std::upper_bound(dec_neg.begin(), dec_neg.end(), b) - dec_neg.begin();
      acc += static_cast<double>(correct) / static_cast<double>(dec_neg.size());
      ++classes;
    }
    if (classes == 0) throw std::invalid_argument("constant bias search: no labeled predictions");
    return acc / classes;
  };

  Eigen::VectorXd lip = Eigen::VectorXd::Zero(2);
  if (config.lipschitz_term) {
    if (config.lipschitz_term->size() != 2)
      throw std::invalid_argument("lipschitz term must have one entry per logit");
    lip = *config.lipschitz_term;
  }
  Eigen::VectorXd var_term(2);
  for (int i = 0; i < 2; ++i)
    var_term[i] = std::sqrt(V[i] * static_cast<double>(sub.m) / config.phi);

  const int G = config.grid_points;
  BiasSearchResult res;
  res.percentile = config.percentile;
  res.grid.resize(static_cast<std::size_t>(G));
  std::vector<double> bacs(static_cast<std::size_t>(G)), eps_l(static_cast<std::size_t>(G)),
      eps_v(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g) {
    const double b = c_max == 0.0
                         ? 0.0
                         : -c_max + 2.0 * c_max * static_cast<double>(g) / static_cast<double>(G - 1);
    Eigen::Vector2d bvec(0.0, b);
    const Eigen::VectorXd cstar = corrected_bound(sub, bvec, all);
    const double el = ((cstar + lip).mean());
    const double ev = ((cstar + var_term).mean());
    const double bac = bac_at(b);
    res.grid[static_cast<std::size_t>(g)] = {b, bac, el, ev};
    bacs[static_cast<std::size_t>(g)] = bac;
    eps_l[static_cast<std::size_t>(g)] = el;
    eps_v[static_cast<std::size_t>(g)] = ev;
  }

  // Baseline: the grid point nearest b = 0 (exact for odd grids).
  int b0 = 0;
  for (int g = 1; g < G; ++g)
    if (std::abs(res.grid[static_cast<std::size_t>(g)].b) <
        std::abs(res.grid[static_cast<std::size_t>(b0)].b))
      b0 = g;
  const double base_bac = bacs[static_cast<std::size_t>(b0)];
  const double base_l = eps_l[static_cast<std::size_t>(b0)];
  const double base_v = eps_v[static_cast<std::size_t>(b0)];
  res.baseline_bac = base_bac;

  const double q_bac = nearest_rank_quantile(bacs, config.percentile);
  std::vector<double> neg_l(eps_l), neg_v(eps_v);
  for (auto& x : neg_l) x = -x;
  for (auto& x : neg_v) x = -x;
  const double q_l = nearest_rank_quantile(neg_l, config.percentile);
  const double q_v = nearest_rank_quantile(neg_v, config.percentile);

  std::vector<char> member(static_cast<std::size_t>(G), 0);
  double best_bac = -1.0;
  bool any = false;
  for (int g = 0; g < G; ++g) {
    const auto i = static_cast<std::size_t>(g);
    const bool ok = bacs[i] >= q_bac && bacs[i] >= base_bac && -eps_l[i] >= q_l &&
                    eps_l[i] <= base_l && -eps_v[i] >= q_v && eps_v[i] <= base_v;
    member[i] = ok ? 1 : 0;
    if (ok) {
      any = true;
      best_bac = std::max(best_bac, bacs[i]);
    }
  }

  res.found = any && (best_bac > base_bac + config.improvement_margin || base_bac >= q_bac);
  if (!res.found) return res;

  // Pick the contiguous run with the highest BAC; ties toward small |midpoint|.
  int best_lo = -1, best_hi = -1;
  double best_run_bac = -1.0, best_mid = 0.0;
  int g = 0;
  while (g < G) {
    if (!member[static_cast<std::size_t>(g)]) {
      ++g;
      continue;
    }
    int lo = g;
    while (g < G && member[static_cast<std::size_t>(g)]) ++g;
    const int hi = g - 1;
    double run_bac = -1.0;
    for (int i = lo; i <= hi; ++i) run_bac = std::max(run_bac, bacs[static_cast<std::size_t>(i)]);
    const double mid = 0.5 * (res.grid[static_cast<std::size_t>(lo)].b +
                              res.grid[static_cast<std::size_t>(hi)].b);
    const bool better = run_bac > best_run_bac ||
                        (run_bac == best_run_bac && std::abs(mid) < std::abs(best_mid));
    if (better) {
      best_lo = lo;
      best_hi = hi;
      best_run_bac = run_bac;
      best_mid = mid;
    }
  }
  res.region = {res.grid[static_cast<std::size_t>(best_lo)].b,
                res.grid[static_cast<std::size_t>(best_hi)].b};
  res.b = best_mid;
  return res;
}

void save_corrector(const Corrector& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json j;
  j["variant"] = c.kind();
  j["space"] = c.space == CorrectorSpace::dump ? "dump" : "logits";
  j["fitted_on"] = c.fitted_on;
  if (const auto* cc = std::get_if<ConstantCorrector>(&c.model)) {
    j["b"] = vector_to_json(cc->b);
  } else if (const auto* rc = std::get_if<RidgeCorrector>(&c.model)) {
    j["lambda"] = rc->lambda;
    j["alpha"] = rc->alpha;
    j["psi"] = psi_name(rc->psi);
    j["beta"] = vector_to_json(rc->beta);
    j["dims"] = {{"psi_rows", rc->W.rows()}, {"outputs", rc->W.cols()}};
    write_matrix_csv(dir / "corrector_W.csv", rc->W);
  } else {
    const auto& pc = std::get<PcaCorrector>(c.model);
    j["lambda"] = pc.lambda;
    j["k"] = pc.k;
    j["dims"] = {{"n", pc.mu.size()}, {"k", pc.k}};
    json betas = json::array();
    for (const auto& th : pc.thetas) betas.push_back(th.beta[0]);
    j["theta_beta"] = betas;
    write_matrix_csv(dir / "corrector_mu.csv", pc.mu);
    write_matrix_csv(dir / "corrector_H.csv", pc.H);
    Eigen::MatrixXd thetaW(pc.mu.size() + 1, pc.k);
    for (int i = 0; i < pc.k; ++i) thetaW.col(i) = pc.thetas[static_cast<std::size_t>(i)].W.col(0);
    write_matrix_csv(dir / "corrector_W.csv", thetaW);
  }
  std::ofstream out(dir / "corrector.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "corrector.json").string());
  out << j.dump(2) << '\n';
}

Corrector load_corrector(const std::filesystem::path& dir) {
  std::ifstream in(dir / "corrector.json");
  if (!in) throw std::runtime_error("cannot open " + (dir / "corrector.json").string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error((dir / "corrector.json").string() + ": " + e.what());
  }

  Corrector c;
  c.space = j.value("space", std::string("dump")) == "logits" ? CorrectorSpace::logits
                                                              : CorrectorSpace::dump;
  c.fitted_on = j.value("fitted_on", std::string());
  const std::string variant = j.at("variant").get<std::string>();
  if (variant == "constant") {
    ConstantCorrector cc;
    cc.b = json_to_vector(j.at("b"));
    c.model = std::move(cc);
  } else if (variant == "ridge") {
    RidgeCorrector rc;
    rc.lambda = j.at("lambda").get<double>();
    rc.alpha = j.value("alpha", 0.0);
    rc.psi = parse_psi(j.value("psi", std::string("linear")));
    rc.beta = json_to_vector(j.at("beta"));
    rc.W = read_matrix_csv(dir / "corrector_W.csv");
    if (rc.W.cols() != rc.beta.size())
      throw std::runtime_error("corrector_W.csv width does not match beta length");
    c.model = std::move(rc);
  } else if (variant == "pca") {
    PcaCorrector pc;
    pc.lambda = j.at("lambda").get<double>();
    pc.k = j.at("k").get<int>();
    pc.mu = read_matrix_csv(dir / "corrector_mu.csv").col(0);
    pc.H = read_matrix_csv(dir / "corrector_H.csv");
    if (pc.H.rows() != pc.mu.size() || pc.H.cols() != pc.mu.size())
      throw std::runtime_error("corrector_H.csv must be square with mu's dimension");
    const json betas = j.at("theta_beta");
    if (pc.k > 0) {
      const Eigen::MatrixXd thetaW = read_matrix_csv(dir / "corrector_W.csv");
      if (thetaW.rows() != pc.mu.size() + 1 || thetaW.cols() != pc.k)
        throw std::runtime_error("corrector_W.csv must be (n+1) x k for a pca corrector");
      for (int i = 0; i < pc.k; ++i) {
        RidgeCorrector th;
        th.lambda = pc.lambda;
        th.psi = PsiVariant::linear;
        th.W = thetaW.col(i);
        th.beta = Eigen::VectorXd::Constant(1, betas.at(static_cast<std::size_t>(i)).get<double>());
        pc.thetas.push_back(std::move(th));
      }
    }
    c.model = std::move(pc);
  } else {
    throw std::runtime_error("unknown corrector variant '" + variant + "'");
  }
  return c;
}

Dataset apply_corrector(const Dataset& d, const Corrector& c) {
  if (c.space == CorrectorSpace::logits && d.kind != DatasetKind::logits)
    throw std::invalid_argument(
        "a logit-space corrector cannot rewrite a feature dump; evaluate through the "
        "corrected-logit views instead");
  Dataset out = d;
  out.clean = correct_rows(c, d.clean);
  out.perturbed = correct_rows(c, d.perturbed);
  return out;
}

Eigen::MatrixXd corrected_clean_logits(const Dataset& d, const Corrector& c) {
  if (c.space == CorrectorSpace::logits || d.kind == DatasetKind::logits)
    return correct_rows(c, clean_logits(d));
  if (!d.weights)
    throw std::runtime_error("feature dump has no weights: classifier outputs unavailable");
  return correct_rows(c, d.clean) * d.weights->transpose();
}

Eigen::MatrixXd corrected_perturbed_logits(const Dataset& d, const Corrector& c) {
  if (c.space == CorrectorSpace::logits || d.kind == DatasetKind::logits)
    return correct_rows(c, perturbed_logits(d));
  if (!d.weights)
    throw std::runtime_error("feature dump has no weights: classifier outputs unavailable");
  return correct_rows(c, d.perturbed) * d.weights->transpose();
}

ShiftTensor corrected_shift_tensor(const Dataset& d, const Corrector& c, bool logit_space) {
  if (logit_space)
    return tensor_from(clean_logits(d), corrected_perturbed_logits(d, c), d.n_examples,
                       d.n_perturbations);
  if (c.space == CorrectorSpace::logits && d.kind != DatasetKind::logits)
    throw std::invalid_argument("logit-space corrector cannot produce dump-space shifts");
  return tensor_from(d.clean, correct_rows(c, d.perturbed), d.n_examples, d.n_perturbations);
}

}  // namespace certibias
