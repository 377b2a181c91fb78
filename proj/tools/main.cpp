// certibias command line driver.
//
// Exit codes: 0 success, 2 bad flags or parameter ranges, 3 missing or
// unreadable files, 4 input data failed validation, 5 a computation refused
// the inputs. Every failure also prints a one-line JSON object on stderr:
//   {"error":{"code":..,"stage":..,"command":..,"message":..}}

#include <fnmatch.h>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "certibias/bias_stats.hpp"
#include "certibias/component_cert.hpp"
#include "certibias/csv.hpp"
#include "certibias/dataset.hpp"
#include "certibias/debias.hpp"
#include "certibias/margin_cert.hpp"
#include "certibias/metrics.hpp"
#include "certibias/synth.hpp"
#include "svg.hpp"
#include "table.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace certibias;

namespace {

struct CliError {
  int code;
  std::string stage;
  std::string message;
};

void emit_error(int code, const std::string& stage, const std::string& command,
                const std::string& message) {
  json j;
  j["error"] = {{"code", code}, {"stage", stage}, {"command", command}, {"message", message}};
  std::cerr << j.dump() << "\n";
}

int guarded(const std::string& command, const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const CliError& e) {
    emit_error(e.code, e.stage, command, e.message);
    return e.code;
  } catch (const std::runtime_error& e) {
    emit_error(3, "io", command, e.what());
    return 3;
  } catch (const std::exception& e) {
    emit_error(5, "compute", command, e.what());
    return 5;
  }
}

[[noreturn]] void config_error(const std::string& message) {
  throw CliError{2, "config", message};
}

// ---------------------------------------------------------------- helpers

std::vector<double> to_vec(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

std::vector<int> iota_vec(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const std::exception& e) {
    throw CliError{3, "io", path.string() + ": " + e.what()};
  }
}

double parse_cell(const std::string& cell, const std::string& file, const std::string& col) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0')
    throw CliError{4, "validation", file + ": column '" + col + "' holds non-numeric cell '" +
                                        cell + "'"};
  return v;
}

Dataset load_dump(const std::string& dir) {
  Dataset d;
  try {
    d = load_dataset(dir);
  } catch (const std::exception& e) {
    throw CliError{3, "io", e.what()};
  }
  const ValidationReport rep = validate_dataset(d);
  if (!rep.ok()) {
    std::string msg = "dump at " + dir + " failed validation:";
    for (const std::string& e : rep.errors) msg += " " + e + ";";
    msg.pop_back();
    throw CliError{4, "validation", msg};
  }
  return d;
}

Corrector load_corrector_dir(const std::string& dir) {
  try {
    return load_corrector(dir);
  } catch (const std::exception& e) {
    throw CliError{3, "io", std::string("corrector at ") + dir + ": " + e.what()};
  }
}

// ------------------------------------------------------------ split flags

struct SplitFlags {
  std::string split;
  std::vector<double> props{0.5, 0.35, 0.15};
  std::uint64_t seed = 0;
};

void add_split_flags(CLI::App* sub, SplitFlags& f, const std::string& default_split) {
  f.split = default_split;
  sub->add_option("--split", f.split, "which example/perturbation split to use")
      ->check(CLI::IsMember({"train", "test", "holdout", "all"}))
      ->capture_default_str();
  sub->add_option("--proportions", f.props, "train,test,holdout fractions (sum to 1)")
      ->expected(3)
      ->delimiter(',');
  sub->add_option("--split-seed", f.seed, "shuffle seed for the split")->capture_default_str();
}

struct Selection {
  std::vector<int> examples, perts;
  std::string name;
};

Selection choose_split(const Dataset& d, const SplitFlags& f) {
  double sum = 0.0;
  for (const double p : f.props) {
    if (!(p > 0.0)) config_error("--proportions entries must be positive");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) config_error("--proportions must sum to 1");

  Selection sel;
  sel.name = f.split;
  if (f.split == "all") {
    sel.examples = iota_vec(d.n_examples);
    sel.perts = iota_vec(d.n_perturbations);
    return sel;
  }
  const SplitAssignment a = split_dataset(d, {f.props[0], f.props[1], f.props[2]}, f.seed);
  const Split s = parse_split(f.split);
  sel.examples = a.examples(s);
  sel.perts = a.perts(s);
  return sel;
}

// --------------------------------------------------------- radius params

struct RadiusParams {
  Eigen::VectorXd gammas;
  double c = 0.0;
  int n_in = 0;
  std::string source;
};

std::optional<RadiusParams> resolve_radius_params(const std::string& dump_dir, int n_components,
                                                  const std::optional<double>& gamma,
                                                  const std::optional<double>& c,
                                                  const std::optional<int>& n_in, bool required) {
  const int given = (gamma ? 1 : 0) + (c ? 1 : 0) + (n_in ? 1 : 0);
  if (given == 3) {
    if (*gamma < 0.0) config_error("--gamma must be non-negative");
    if (!(*c > 0.0)) config_error("--c must be positive");
    if (*n_in < 1) config_error("--n-in must be at least 1");
    RadiusParams p;
    p.gammas = Eigen::VectorXd::Constant(n_components, *gamma);
    p.c = *c;
    p.n_in = *n_in;
    p.source = "flags";
    return p;
  }
  if (given != 0) config_error("pass --gamma, --c and --n-in together (or none of them)");

  const fs::path gt = fs::path(dump_dir) / "ground_truth.json";
  if (!fs::exists(gt)) {
    if (required)
      config_error("no ground_truth.json next to the dump; pass --gamma, --c and --n-in");
    return std::nullopt;
  }
  const json j = read_json(gt);
  RadiusParams p;
  try {
    const auto& gs = j.at("gammas");
    p.gammas.resize(static_cast<Eigen::Index>(gs.size()));
    for (std::size_t i = 0; i < gs.size(); ++i)
      p.gammas[static_cast<Eigen::Index>(i)] = gs[i].get<double>();
    p.c = j.at("noise").at("c").get<double>();
    p.n_in = j.at("dims").at("d").get<int>();
  } catch (const std::exception& e) {
    throw CliError{3, "io", gt.string() + ": " + e.what()};
  }
  if (p.gammas.size() != n_components)
    config_error(gt.string() + " lists " + std::to_string(p.gammas.size()) +
                 " module constants but the dump has " + std::to_string(n_components) +
                 " components");
  p.source = "ground_truth";
  return p;
}

Eigen::MatrixXd gather_clean_rows(const Dataset& d, const std::vector<int>& examples) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(examples.size()), d.width());
  for (std::size_t i = 0; i < examples.size(); ++i)
    X.row(static_cast<Eigen::Index>(i)) = d.clean.row(examples[i]);
  return X;
}

Eigen::MatrixXd gather_pert_rows(const Dataset& d, const std::vector<int>& examples,
                                 const std::vector<int>& perts) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(examples.size() * perts.size()), d.width());
  Eigen::Index r = 0;
  for (const int j : examples)
    for (const int t : perts)
      X.row(r++) = d.perturbed.row(static_cast<Eigen::Index>(j) * d.n_perturbations + t);
  return X;
}

// ================================================================= ingest

struct IngestOpts {
  std::string dir;
  bool strict = false;
};

void run_ingest(const IngestOpts& o) {
  Dataset d;
  try {
    d = load_dataset(o.dir);
  } catch (const std::exception& e) {
    throw CliError{3, "io", e.what()};
  }
  const ValidationReport rep = validate_dataset(d);
  for (const std::string& e : rep.errors) std::cout << "error: " << e << "\n";
  for (const std::string& n : rep.notes) std::cout << "note: " << n << "\n";
  std::cout << "task '" << d.task_id << "': " << (d.kind == DatasetKind::logits ? "logits" : "features")
            << " dump, " << d.n_examples << " examples x " << d.n_perturbations
            << " perturbations, width " << d.width() << ", labels "
            << (d.has_labels() ? "yes" : "no") << ", weights " << (d.has_weights() ? "yes" : "no")
            << "\n";
  if (!rep.ok())
    throw CliError{4, "validation",
                   "dump failed validation with " + std::to_string(rep.errors.size()) +
                       " error(s)"};
  if (o.strict && !rep.notes.empty())
    throw CliError{4, "validation",
                   "--strict treats " + std::to_string(rep.notes.size()) + " note(s) as fatal"};
  std::cout << "validation passed\n";
}

// ================================================================== stats

struct StatsOpts {
  std::string dir;
  SplitFlags split;
  int bins = 10;
  double box_fraction = 0.5;
  std::string out = ".";
};

void run_stats(const StatsOpts& o) {
  if (o.bins < 1) config_error("--bins must be at least 1");
  if (!(o.box_fraction > 0.0 && o.box_fraction < 1.0))
    config_error("--box-fraction must lie strictly between 0 and 1");

  const Dataset d = load_dump(o.dir);
  const Selection sel = choose_split(d, o.split);
  if (static_cast<int>(sel.perts.size()) < 2)
    throw CliError{4, "validation",
                   "split '" + sel.name + "' keeps only " + std::to_string(sel.perts.size()) +
                       " perturbation(s); variance statistics need at least 2"};

  const ShiftTensor s = slice(shift_matrix(d), sel.examples, sel.perts);
  const BiasProfile prof = compute_bias_profile(s, o.bins, o.box_fraction);

  fs::create_directories(o.out);
  json j;
  j["task_id"] = d.task_id;
  j["split"] = sel.name;
  j["examples"] = static_cast<int>(sel.examples.size());
  j["perturbations"] = static_cast<int>(sel.perts.size());
  j["components"] = s.d;
  j["bins"] = o.bins;
  j["box_fraction"] = o.box_fraction;
  j["C"] = to_vec(prof.C);
  j["V"] = to_vec(prof.V);
  j["range"] = to_vec(prof.range_c);
  j["eps_box"] = prof.eps_box;
  j["cvb"] = prof.cvb;
  j["cvb_per_component"] = to_vec(prof.cvb_per_component);
  std::vector<double> lo, hi;
  for (const Box& b : prof.boxes) {
    lo.push_back(b.lo);
    hi.push_back(b.hi);
  }
  j["boxes"] = {{"lo", lo}, {"hi", hi}};
  j["example_ids"] = prof.example_ids;
  write_json(fs::path(o.out) / "bias_profile.json", j);

  std::vector<std::string> header{"example_id"};
  for (int i = 0; i < s.d; ++i) header.push_back("component_" + std::to_string(i));
  std::vector<std::vector<std::string>> rows;
  for (Eigen::Index r = 0; r < prof.per_example_mean.rows(); ++r) {
    std::vector<std::string> row{std::to_string(prof.example_ids[static_cast<std::size_t>(r)])};
    for (Eigen::Index cidx = 0; cidx < prof.per_example_mean.cols(); ++cidx)
      row.push_back(format_double(prof.per_example_mean(r, cidx)));
    rows.push_back(std::move(row));
  }
  table::write_table((fs::path(o.out) / "per_example_means.csv").string(), header, rows);

  std::cout << "stats[" << sel.name << "]: " << sel.examples.size() << " examples x "
            << sel.perts.size() << " perts, C_max=" << format_double(prof.C.maxCoeff())
            << " V_max=" << format_double(prof.V.maxCoeff())
            << " eps_box=" << format_double(prof.eps_box) << " cvb=" << format_double(prof.cvb)
            << " -> " << (fs::path(o.out) / "bias_profile.json").string() << "\n";
}

// ================================================================= radius

struct RadiusOpts {
  std::string dir;
  double phi = 0.0;
  std::string bias_file;
  SplitFlags split;
  std::optional<double> gamma, c;
  std::optional<int> n_in;
  std::string out = ".";
};

Corrector load_bias_source(const std::string& path, int width) {
  if (fs::is_directory(path)) {
    Corrector corr = load_corrector_dir(path);
    if (corr.space != CorrectorSpace::dump)
      config_error("radii are computed in dump space; the corrector at " + path +
                   " corrects logits");
    return corr;
  }
  Eigen::MatrixXd b;
  try {
    b = read_matrix_csv(path);
  } catch (const std::exception& e) {
    throw CliError{3, "io", e.what()};
  }
  if (b.rows() != 1 && b.cols() != 1)
    config_error("--bias-file " + path + " must hold a single bias vector, got " +
                 std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  Eigen::VectorXd v = b.rows() == 1 ? Eigen::VectorXd(b.row(0).transpose()) : Eigen::VectorXd(b.col(0));
  if (v.size() != width)
    config_error("--bias-file " + path + " holds " + std::to_string(v.size()) +
                 " entries but the dump has " + std::to_string(width) + " components");
  Corrector corr;
  corr.model = ConstantCorrector{std::move(v)};
  corr.space = CorrectorSpace::dump;
  corr.fitted_on = "bias file " + path;
  return corr;
}

void run_radius(const RadiusOpts& o) {
  if (!(o.phi > 0.0 && o.phi < 1.0)) config_error("--phi must lie strictly between 0 and 1");

  const Dataset d = load_dump(o.dir);
  const Selection sel = choose_split(d, o.split);
  if (static_cast<int>(sel.perts.size()) < 2)
    throw CliError{4, "validation",
                   "split '" + sel.name + "' keeps only " + std::to_string(sel.perts.size()) +
                       " perturbation(s); variance radii need at least 2"};

  const ShiftTensor s = slice(shift_matrix(d), sel.examples, sel.perts);
  const auto params = resolve_radius_params(o.dir, s.d, o.gamma, o.c, o.n_in, true);
  const std::vector<int> all = iota_vec(s.m);
  const Eigen::VectorXd C = bias_bound(s, all);
  const Eigen::VectorXd V = variance_bound(s, all);

  Eigen::VectorXd eps_l(s.d), eps_v(s.d);
  for (int i = 0; i < s.d; ++i) {
    eps_l[i] = radius_lipschitz(C[i], params->gammas[i], params->c, params->n_in, s.m, o.phi);
    eps_v[i] = radius_variance(C[i], V[i], s.m, o.phi);
  }

  std::optional<Eigen::VectorXd> Cc, Vc, eps_lc, eps_vc;
  std::optional<double> p_eps_l, p_eps_v;
  if (!o.bias_file.empty()) {
    const Corrector corr = load_bias_source(o.bias_file, d.width());
    const ShiftTensor cs = slice(corrected_shift_tensor(d, corr, false), sel.examples, sel.perts);
    Cc = bias_bound(cs, all);
    Vc = variance_bound(cs, all);
    eps_lc = Eigen::VectorXd(s.d);
    eps_vc = Eigen::VectorXd(s.d);
    for (int i = 0; i < s.d; ++i) {
      (*eps_lc)[i] =
          radius_lipschitz((*Cc)[i], params->gammas[i], params->c, params->n_in, s.m, o.phi);
      (*eps_vc)[i] = radius_variance((*Cc)[i], (*Vc)[i], s.m, o.phi);
    }
    p_eps_l = radius_contraction(eps_l, *eps_lc);
    p_eps_v = radius_contraction(eps_v, *eps_vc);
  }

  fs::create_directories(o.out);
  json j;
  j["task_id"] = d.task_id;
  j["split"] = sel.name;
  j["phi"] = o.phi;
  j["m"] = s.m;
  j["k"] = s.k;
  j["params"] = {{"source", params->source}, {"c", params->c}, {"n_in", params->n_in}};
  json comps = json::array();
  for (int i = 0; i < s.d; ++i) {
    json row;
    row["index"] = i;
    row["C"] = C[i];
    row["V"] = V[i];
    row["gamma"] = params->gammas[i];
    row["eps_l"] = eps_l[i];
    row["eps_v"] = eps_v[i];
    if (Cc) {
      row["C_corrected"] = (*Cc)[i];
      row["V_corrected"] = (*Vc)[i];
      row["eps_l_corrected"] = (*eps_lc)[i];
      row["eps_v_corrected"] = (*eps_vc)[i];
    }
    comps.push_back(std::move(row));
  }
  j["components"] = std::move(comps);
  if (p_eps_l) {
    j["corrected"] = {{"source", o.bias_file}, {"p_eps_l", *p_eps_l}, {"p_eps_v", *p_eps_v}};
  } else {
    j["corrected"] = nullptr;
  }
  write_json(fs::path(o.out) / "radius_report.json", j);

  std::cout << "radius[" << sel.name << "]: m=" << s.m << " phi=" << format_double(o.phi)
            << " max eps_l=" << format_double(eps_l.maxCoeff())
            << " max eps_v=" << format_double(eps_v.maxCoeff());
  if (p_eps_l)
    std::cout << " contraction eps_l=" << format_double(*p_eps_l)
              << "% eps_v=" << format_double(*p_eps_v) << "%";
  std::cout << " -> " << (fs::path(o.out) / "radius_report.json").string() << "\n";
}

// ============================================================= debias fit

struct FitOpts {
  std::string method;
  std::string dir;
  std::string out;
  std::string psi = "linear";
  double lambda = 0.1;
  double alpha = 0.0;
  int k = 1;
  int grid_points = 201;
  double percentile = 0.90;
  double improvement = 0.03;
  double phi = 0.05;
  SplitFlags split;
  std::vector<double> alpha_sweep;
};

void run_debias_fit(const FitOpts& o) {
  if (o.lambda < 0.0) config_error("--lambda must be non-negative");
  if (o.k < 1) config_error("--k must be at least 1");
  if (o.grid_points < 2) config_error("--grid-points must be at least 2");
  if (!(o.percentile > 0.0 && o.percentile < 1.0))
    config_error("--percentile must lie strictly between 0 and 1");
  if (!(o.phi > 0.0 && o.phi < 1.0)) config_error("--phi must lie strictly between 0 and 1");
  if (o.improvement < 0.0) config_error("--improvement-margin must be non-negative");
  if (!o.alpha_sweep.empty() && o.method != "gram")
    config_error("--alpha-sweep only applies to --method gram");
  const PsiVariant psi = o.psi == "linear" ? PsiVariant::linear : PsiVariant::with_norm;

  const Dataset d = load_dump(o.dir);
  const Selection sel = choose_split(d, o.split);

  Corrector corr;
  corr.fitted_on =
      "task=" + d.task_id + " split=" + sel.name + " seed=" + std::to_string(o.split.seed);
  fs::create_directories(o.out);
  std::string extra;

  if (o.method == "constant") {
    if (d.n_outputs != 2)
      config_error("--method constant searches a single logit offset and needs a binary task");
    if (d.kind != DatasetKind::logits && !d.has_weights())
      config_error(
          "the constant search needs classifier outputs: a logits dump or a weight matrix");
    const ShiftTensor ls = logit_shift_matrix(d);
    BiasSearchConfig cfg;
    cfg.grid_points = o.grid_points;
    cfg.percentile = o.percentile;
    cfg.phi = o.phi;
    cfg.improvement_margin = o.improvement;
    const BiasSearchResult res = search_constant_bias(d, ls, sel.examples, sel.perts, cfg);

    Eigen::VectorXd b = Eigen::VectorXd::Zero(2);
    b[1] = res.b;
    corr.model = ConstantCorrector{std::move(b)};
    corr.space = CorrectorSpace::logits;

    std::vector<std::vector<std::string>> rows;
    for (const BiasSearchGridRow& g : res.grid) {
      const bool in = res.found && g.b >= res.region.first - 1e-12 &&
                      g.b <= res.region.second + 1e-12;
      rows.push_back({format_double(g.b), format_double(g.pert_bac), format_double(g.eps_l),
                      format_double(g.eps_v), in ? "1" : "0"});
    }
    table::write_table((fs::path(o.out) / "bias_sweep.csv").string(),
                       {"b", "pert_bac", "eps_l", "eps_v", "in_region"}, rows);

    json sj;
    sj["found"] = res.found;
    sj["b"] = res.b;
    sj["region"] = {res.region.first, res.region.second};
    sj["baseline_bac"] = res.baseline_bac;
    sj["percentile"] = res.percentile;
    sj["grid_points"] = o.grid_points;
    sj["improvement_margin"] = o.improvement;
    sj["phi"] = o.phi;
    write_json(fs::path(o.out) / "search_result.json", sj);
    extra = res.found ? " found b=" + format_double(res.b)
                      : " no robust offset region found";
  } else if (o.method == "midrange") {
    const ShiftTensor s = slice(shift_matrix(d), sel.examples, sel.perts);
    corr.model = ConstantCorrector{midrange_bias(s, iota_vec(s.m))};
    corr.space = CorrectorSpace::dump;
  } else if (o.method == "ridge" || o.method == "gram") {
    const Eigen::MatrixXd feats = gather_pert_rows(d, sel.examples, sel.perts);
    const ShiftTensor s = slice(shift_matrix(d), sel.examples, sel.perts);
    const Eigen::MatrixXd cleanf = gather_clean_rows(d, sel.examples);
    RidgeCorrector rc = o.method == "ridge"
                            ? fit_ridge(feats, s.values, o.lambda, psi)
                            : fit_ridge_gram(feats, s.values, o.lambda, o.alpha, cleanf, psi);
    corr.model = std::move(rc);
    corr.space = CorrectorSpace::dump;

    if (!o.alpha_sweep.empty()) {
      const SplitAssignment a =
          split_dataset(d, {o.split.props[0], o.split.props[1], o.split.props[2]}, o.split.seed);
      std::vector<std::vector<std::string>> rows;
      for (const double alpha : o.alpha_sweep) {
        RidgeCorrector g = fit_ridge_gram(feats, s.values, o.lambda, alpha, cleanf, psi);
        const double gram_norm = (psi_features(cleanf, psi) * g.W).norm();
        Corrector tmp;
        tmp.model = std::move(g);
        tmp.space = CorrectorSpace::dump;
        tmp.fitted_on = corr.fitted_on;
        const BacTable t = bac_table(d, &tmp, a.test_examples, a.test_perts);
        const DeltaMetrics dm = delta_metrics(t);
        rows.push_back({format_double(alpha), format_double(gram_norm),
                        format_double(t.clean_after), format_double(t.pert_after),
                        format_double(dm.clean), format_double(dm.pert)});
      }
      table::write_table((fs::path(o.out) / "alpha_sweep.csv").string(),
                         {"alpha", "gram_norm", "bac_clean", "bac_pert", "delta_clean",
                          "delta_pert"},
                         rows);
      extra = " swept " + std::to_string(o.alpha_sweep.size()) + " alpha value(s)";
    }
  } else {  // pca
    if (o.k > d.width())
      config_error("--k=" + std::to_string(o.k) + " exceeds the dump width " +
                   std::to_string(d.width()));
    const Eigen::MatrixXd cleanf = gather_clean_rows(d, sel.examples);
    const Eigen::MatrixXd pertf = gather_pert_rows(d, sel.examples, sel.perts);
    corr.model = fit_pca_debias(cleanf, pertf, o.k, o.lambda);
    corr.space = CorrectorSpace::dump;
  }

  save_corrector(corr, o.out);
  std::cout << "debias fit[" << o.method << "]: " << sel.examples.size() << " examples x "
            << sel.perts.size() << " perts on split '" << sel.name << "'" << extra << " -> "
            << o.out << "\n";
}

// =========================================================== debias apply

struct ApplyOpts {
  std::string corrector;
  std::string dir;
  std::string out;
};

void run_debias_apply(const ApplyOpts& o) {
  const Dataset d = load_dump(o.dir);
  const Corrector corr = load_corrector_dir(o.corrector);
  if (corr.space == CorrectorSpace::logits && d.kind == DatasetKind::features)
    config_error(
        "a logit-space corrector cannot rewrite a feature dump; evaluate through the "
        "corrected-logit views instead");
  const Dataset out = apply_corrector(d, corr);
  fs::create_directories(o.out);
  save_dataset(out, o.out);
  std::cout << "debias apply[" << corr.kind() << "]: corrected " << d.n_examples << "x"
            << d.n_perturbations << " dump '" << d.task_id << "' -> " << o.out << "\n";
}

// ================================================================ certify

struct CertifyOpts {
  std::string dir;
  std::string corrector;
  std::string out = ".";
  std::string methods = "hoeffding,bernstein,cantelli";
  double phi = 0.0;
  double psi = 0.05;
  double cal_fraction = 0.5;
  int bins = 10;
  SplitFlags split;
};

CertMethods parse_methods(const std::string& text) {
  CertMethods m{false, false, false};
  std::stringstream ss(text);
  std::string tok;
  bool any = false;
  while (std::getline(ss, tok, ',')) {
    if (tok == "hoeffding") m.hoeffding = true;
    else if (tok == "bernstein") m.bernstein = true;
    else if (tok == "cantelli") m.cantelli = true;
    else config_error("--methods: unknown method '" + tok +
                      "' (hoeffding, bernstein, cantelli)");
    any = true;
  }
  if (!any) config_error("--methods must name at least one method");
  return m;
}

struct CertifyRun {
  std::vector<ExampleMarginStats> stats;
  PooledBoxStats pooled;
  std::vector<CertRecord> records;
  VerifySummary verify;
};

json method_block(const CertifyRun& run, const CertMethods& methods, double phi, double psi) {
  const int m_all = static_cast<int>(run.records.size());
  int n_vac = 0;
  int cert_h = 0, cert_b = 0, cert_c = 0;
  for (const CertRecord& r : run.records) {
    if (r.vacuous) ++n_vac;
    cert_h += r.certified_h ? 1 : 0;
    cert_b += r.certified_b ? 1 : 0;
    cert_c += r.certified_c ? 1 : 0;
  }
  const int informative = m_all - n_vac;
  const auto frac = [&](int cert) {
    return informative > 0 ? static_cast<double>(cert) / informative : 0.0;
  };
  const auto verify_json = [](const MethodVerification& v) {
    return json{{"bac_certified", v.bac_certified},
                {"bac_uncertified", v.bac_uncertified},
                {"n_certified", v.n_certified},
                {"n_uncertified", v.n_uncertified}};
  };

  json j;
  j["eps_box"] = run.pooled.eps_box;
  j["cvb"] = run.pooled.cvb;
  j["eval_samples"] = run.pooled.total_eval;
  j["n_vacuous"] = n_vac;
  json cert, p, pop, ver;
  if (methods.hoeffding) {
    cert["hoeffding"] = cert_h;
    p["hoeffding"] = frac(cert_h);
    pop["hoeffding"] = population_bound(cert_h, m_all, phi, psi);
    ver["hoeffding"] = verify_json(run.verify.hoeffding);
  }
  if (methods.bernstein) {
    cert["bernstein"] = cert_b;
    p["bernstein"] = frac(cert_b);
    pop["bernstein"] = population_bound(cert_b, m_all, phi, psi);
    ver["bernstein"] = verify_json(run.verify.bernstein);
  }
  if (methods.cantelli) {
    cert["cantelli"] = cert_c;
    p["cantelli"] = frac(cert_c);
    pop["cantelli"] = population_bound(cert_c, m_all, phi, psi);
    ver["cantelli"] = verify_json(run.verify.cantelli);
  }
  j["certified"] = std::move(cert);
  j["p"] = std::move(p);
  j["population"] = std::move(pop);
  j["verify"] = std::move(ver);
  return j;
}

void append_record_cells(std::vector<std::string>& row, const CertRecord& r, bool with_label) {
  row.push_back(std::to_string(r.example));
  if (with_label) row.push_back(std::to_string(r.label));
  row.push_back(format_double(r.rho));
  row.push_back(format_double(r.slack_h));
  row.push_back(format_double(r.xi_h));
  row.push_back(format_double(r.xi_b));
  row.push_back(format_double(r.xi_c));
  row.push_back(format_double(r.kappa));
  row.push_back(r.vacuous ? "1" : "0");
  row.push_back(r.certified_h ? "1" : "0");
  row.push_back(r.certified_b ? "1" : "0");
  row.push_back(r.certified_c ? "1" : "0");
  row.push_back(format_double(r.fail_rate_eval));
  row.push_back(std::to_string(r.n_eval));
}

void run_certify(const CertifyOpts& o) {
  if (!(o.phi > 0.0 && o.phi < 1.0)) config_error("--phi must lie strictly between 0 and 1");
  if (!(o.psi > 0.0 && o.psi < 1.0)) config_error("--psi must lie strictly between 0 and 1");
  if (!(o.cal_fraction > 0.0 && o.cal_fraction < 1.0))
    config_error("--calibration-fraction must lie strictly between 0 and 1");
  if (o.bins < 1) config_error("--bins must be at least 1");
  const CertMethods methods = parse_methods(o.methods);

  const Dataset d = load_dump(o.dir);
  if (!d.has_labels())
    throw CliError{4, "validation", "certification needs labels.csv in the dump"};
  const Selection sel = choose_split(d, o.split);
  if (static_cast<int>(sel.perts.size()) < 4)
    throw CliError{4, "validation",
                   "split '" + sel.name + "' keeps only " + std::to_string(sel.perts.size()) +
                       " perturbation(s); margin certification needs at least 4"};

  std::optional<Corrector> corr;
  if (!o.corrector.empty()) corr = load_corrector_dir(o.corrector);

  const auto run_one = [&](const Corrector* cp) {
    CertifyRun run;
    run.stats = margin_shift_stats(d, cp, sel.examples, sel.perts, o.cal_fraction);
    run.pooled = pooled_box_stats(run.stats, o.bins);
    const double phi_j = o.phi / static_cast<double>(d.n_outputs - 1);
    if (!(phi_j > run.pooled.eps_box))
      throw CliError{5, "compute",
                     "per-competitor budget phi/(Q-1) = " + format_double(phi_j) +
                         " does not exceed the pooled out-of-box mass eps_box = " +
                         format_double(run.pooled.eps_box) +
                         "; raise --phi or calibrate on more perturbations"};
    run.records.reserve(run.stats.size());
    for (const ExampleMarginStats& st : run.stats)
      run.records.push_back(certify_example(st, o.phi, run.pooled.eps_box, run.pooled.cvb,
                                            methods));
    run.verify = verify_certificates(run.records, run.stats, d.n_outputs);
    return run;
  };

  const CertifyRun before = run_one(nullptr);
  std::optional<CertifyRun> after;
  if (corr) after = run_one(&*corr);

  fs::create_directories(o.out);

  std::vector<std::string> header{"example",     "label",       "rho",         "slack_h",
                                  "xi_h",        "xi_b",        "xi_c",        "kappa",
                                  "vacuous",     "certified_h", "certified_b", "certified_c",
                                  "fail_rate_eval", "n_eval"};
  if (after)
    for (const char* name :
         {"rho", "slack_h", "xi_h", "xi_b", "xi_c", "kappa", "vacuous", "certified_h",
          "certified_b", "certified_c", "fail_rate_eval", "n_eval"})
      header.push_back(std::string(name) + "_corr");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < before.records.size(); ++i) {
    std::vector<std::string> row;
    append_record_cells(row, before.records[i], true);
    if (after) {
      std::vector<std::string> tail;
      append_record_cells(tail, after->records[i], true);
      // drop the duplicated example/label cells from the corrected block
      row.insert(row.end(), tail.begin() + 2, tail.end());
    }
    rows.push_back(std::move(row));
  }
  table::write_table((fs::path(o.out) / "cert_records.csv").string(), header, rows);

  json j;
  j["task_id"] = d.task_id;
  j["split"] = sel.name;
  j["phi"] = o.phi;
  j["psi"] = o.psi;
  json mnames = json::array();
  if (methods.hoeffding) mnames.push_back("hoeffding");
  if (methods.bernstein) mnames.push_back("bernstein");
  if (methods.cantelli) mnames.push_back("cantelli");
  j["methods"] = std::move(mnames);
  j["m"] = static_cast<int>(before.records.size());
  j["calibration_fraction"] = o.cal_fraction;
  j["bins"] = o.bins;
  j["before"] = method_block(before, methods, o.phi, o.psi);
  j["after"] = after ? method_block(*after, methods, o.phi, o.psi) : json(nullptr);
  write_json(fs::path(o.out) / "cert_summary.json", j);

  const auto print_run = [&](const char* tag, const CertifyRun& run) {
    int h = 0, b = 0, c = 0, vac = 0;
    for (const CertRecord& r : run.records) {
      h += r.certified_h ? 1 : 0;
      b += r.certified_b ? 1 : 0;
      c += r.certified_c ? 1 : 0;
      vac += r.vacuous ? 1 : 0;
    }
    std::cout << "certify[" << tag << "]: eps_box=" << format_double(run.pooled.eps_box)
              << " cvb=" << format_double(run.pooled.cvb) << " vacuous=" << vac
              << " certified h/b/c = " << h << "/" << b << "/" << c << " of "
              << run.records.size() << "\n";
  };
  print_run("before", before);
  if (after) print_run("after", *after);
  std::cout << "certify: wrote " << (fs::path(o.out) / "cert_summary.json").string() << "\n";
}

// ================================================================ metrics

struct MetricsOpts {
  std::string dir;
  std::string corrector;
  std::string combine = "pooled";
  std::string out = "metrics_report.json";
  double phi = 0.05;
  SplitFlags split;
  std::optional<double> gamma, c;
  std::optional<int> n_in;
};

void run_metrics(const MetricsOpts& o) {
  if (!(o.phi > 0.0 && o.phi < 1.0)) config_error("--phi must lie strictly between 0 and 1");
  const CombineMode mode = parse_combine_mode(o.combine);

  const Dataset d = load_dump(o.dir);
  if (!d.has_labels())
    throw CliError{4, "validation", "balanced-accuracy metrics need labels.csv in the dump"};
  const Selection sel = choose_split(d, o.split);

  std::optional<Corrector> corr;
  if (!o.corrector.empty()) corr = load_corrector_dir(o.corrector);

  const BacTable t = bac_table(d, corr ? &*corr : nullptr, sel.examples, sel.perts);
  MetricsReport r = make_metrics_report(d.task_id, t, mode);

  if (corr && corr->space == CorrectorSpace::dump && static_cast<int>(sel.perts.size()) >= 2) {
    const auto params = resolve_radius_params(o.dir, d.width(), o.gamma, o.c, o.n_in, false);
    if (params) {
      const ShiftTensor s = slice(shift_matrix(d), sel.examples, sel.perts);
      const ShiftTensor cs =
          slice(corrected_shift_tensor(d, *corr, false), sel.examples, sel.perts);
      const std::vector<int> all = iota_vec(s.m);
      const Eigen::VectorXd C = bias_bound(s, all), V = variance_bound(s, all);
      const Eigen::VectorXd Cc = bias_bound(cs, all), Vc = variance_bound(cs, all);
      Eigen::VectorXd el(s.d), ev(s.d), elc(s.d), evc(s.d);
      for (int i = 0; i < s.d; ++i) {
        el[i] = radius_lipschitz(C[i], params->gammas[i], params->c, params->n_in, s.m, o.phi);
        ev[i] = radius_variance(C[i], V[i], s.m, o.phi);
        elc[i] = radius_lipschitz(Cc[i], params->gammas[i], params->c, params->n_in, s.m, o.phi);
        evc[i] = radius_variance(Cc[i], Vc[i], s.m, o.phi);
      }
      r.p_eps_l = radius_contraction(el, elc);
      r.p_eps_v = radius_contraction(ev, evc);
    }
  }

  if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
  save_metrics_report(r, o.out);

  std::cout << "metrics[" << sel.name << "]: clean " << format_double(t.clean_before) << " -> pert "
            << format_double(t.pert_before);
  if (corr)
    std::cout << ", corrected clean " << format_double(t.clean_after) << " / pert "
              << format_double(t.pert_after);
  std::cout << ", p_damage=" << format_double(r.dr.p_damage) << "%";
  if (r.dr.p_recover) std::cout << " p_recover=" << format_double(*r.dr.p_recover) << "%";
  std::cout << " -> " << o.out << "\n";
}

// ============================================================== aggregate

struct AggOpts {
  std::string reports;
  std::string out = "table.csv";
  int resamples = 10000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

std::vector<fs::path> expand_glob(const std::string& pattern) {
  if (pattern.find_first_of("*?[") == std::string::npos) {
    if (!fs::exists(pattern)) throw CliError{3, "io", "no such report file: " + pattern};
    return {fs::path(pattern)};
  }
  const fs::path p(pattern);
  const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
  if (dir.string().find_first_of("*?[") != std::string::npos)
    config_error("wildcards are only supported in the file name, not in parent directories");
  if (!fs::is_directory(dir)) throw CliError{3, "io", "no such directory: " + dir.string()};
  const std::string leaf = p.filename().string();
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() &&
        fnmatch(leaf.c_str(), entry.path().filename().string().c_str(), 0) == 0)
      out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw CliError{3, "io", "no reports match " + pattern};
  return out;
}

void run_aggregate(const AggOpts& o) {
  if (o.resamples < 0) config_error("--resamples must be non-negative");
  if (!(o.level > 0.0 && o.level < 1.0))
    config_error("--level must lie strictly between 0 and 1");

  const std::vector<fs::path> files = expand_glob(o.reports);
  std::vector<MetricsReport> reports;
  reports.reserve(files.size());
  for (const fs::path& f : files) {
    try {
      reports.push_back(load_metrics_report(f));
    } catch (const std::exception& e) {
      throw CliError{3, "io", f.string() + ": " + e.what()};
    }
  }

  const std::vector<AggregateRow> rows = aggregate(reports, o.resamples, o.level, o.seed);
  std::vector<std::vector<std::string>> cells;
  for (const AggregateRow& r : rows) {
    cells.push_back({r.metric, std::to_string(r.count), format_double(r.mean),
                     format_double(r.stddev), r.ci ? format_double(r.ci->lo) : "",
                     r.ci ? format_double(r.ci->hi) : ""});
  }
  if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
  table::write_table(o.out, {"metric", "count", "mean", "stddev", "ci_lo", "ci_hi"}, cells);
  std::cout << "aggregate: " << reports.size() << " report(s) -> " << rows.size()
            << " metric row(s) -> " << o.out << "\n";
}

// =============================================================== simulate

struct SimOpts {
  std::string panel;
  std::string noise = "uniform:0.05";
  std::string task_id = "synthetic";
  std::string out;
  int n = 8, d = 4, m = 40, k = 100;
  std::uint64_t seed = 0;
  double sep0 = 3.0, sep1 = 1.5, cstd = 0.25, shift = 2.0, gain = 0.75;
};

double parse_flag_double(const std::string& text, const std::string& what) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0')
    config_error(what + ": '" + text + "' is not a number");
  return v;
}

Eigen::MatrixXd default_mixing(int dim) {
  if (dim == 1) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = 1.3;
    return m;
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(dim, dim);
  for (int i = 0; i < dim; ++i) m(i, (i + 1) % dim) = 0.8;
  return m;
}

NoiseSpec parse_noise_flag(const std::string& text, int dim) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ':')) parts.push_back(tok);
  const auto want = [&](std::size_t n, const char* usage) {
    if (parts.size() != n) config_error("--noise " + text + ": expected " + usage);
  };

  NoiseSpec ns;
  ns.dim = dim;
  if (!parts.empty() && parts[0] == "uniform") {
    want(2, "uniform:<c>");
    ns.kind = NoiseKind::uniform_box;
    ns.c = parse_flag_double(parts[1], "--noise c");
  } else if (!parts.empty() && parts[0] == "tgauss") {
    want(3, "tgauss:<sigma>:<c>");
    ns.kind = NoiseKind::truncated_gaussian;
    ns.sigma = parse_flag_double(parts[1], "--noise sigma");
    ns.c = parse_flag_double(parts[2], "--noise c");
  } else if (!parts.empty() && parts[0] == "correlated") {
    want(2, "correlated:<c>");
    ns.kind = NoiseKind::correlated;
    ns.c = parse_flag_double(parts[1], "--noise c");
    ns.mixing = default_mixing(dim);
  } else {
    config_error("--noise: unknown kind '" + (parts.empty() ? text : parts[0]) +
                 "' (uniform:<c>, tgauss:<sigma>:<c>, correlated:<c>)");
  }
  return ns;
}

void run_simulate(const SimOpts& o) {
  ScenarioSpec spec;
  try {
    spec.panel = parse_panel(o.panel);
  } catch (const std::exception& e) {
    config_error(e.what());
  }
  spec.n = o.n;
  spec.d = o.d;
  spec.m = o.m;
  spec.k = o.k;
  spec.noise = parse_noise_flag(o.noise, o.d);
  spec.cluster_sep0 = o.sep0;
  spec.cluster_sep1 = o.sep1;
  spec.cluster_std = o.cstd;
  spec.shift_scale = o.shift;
  spec.input_gain = o.gain;
  spec.seed = o.seed;
  spec.task_id = o.task_id;
  try {
    spec.validate();
  } catch (const std::exception& e) {
    config_error(e.what());
  }

  const Scenario sc = gen_scenario(spec);
  fs::create_directories(o.out);
  save_scenario(sc, o.out);
  const ValidationReport rep = validate_dataset(sc.data);
  if (!rep.ok())
    throw CliError{5, "compute", "generated dump failed validation: " + rep.errors.front()};

  std::cout << "simulate[" << panel_name(spec.panel) << "]: " << spec.m << " examples x "
            << spec.k << " perts, " << spec.n << " features from " << spec.d << "-dim "
            << noise_kind_name(spec.noise.kind) << " noise, C_max="
            << format_double(sc.truth.C.maxCoeff());
  if (spec.noise.kind == NoiseKind::correlated)
    std::cout << " clip_rate=" << format_double(sc.truth.clip_rate);
  std::cout << " -> " << o.out << "\n";
}

// ================================================================= report

struct ReportOpts {
  std::string sweep;
  std::string records;
  std::string alpha;
  std::string out;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void render_sweep_chart(const std::string& csv, const fs::path& out_dir) {
  const table::Table t = table::read_table(csv);
  const std::size_t cb = t.column("b"), cbac = t.column("pert_bac"), cl = t.column("eps_l"),
                    cv = t.column("eps_v"), cr = t.column("in_region");

  svg::Series bac{"perturbed BAC", {}, {}};
  svg::Series el{"bounded-difference", {}, {}};
  svg::Series ev{"variance", {}, {}};
  std::optional<svg::Band> band;
  for (const auto& row : t.rows) {
    const double b = parse_cell(row[cb], csv, "b");
    bac.x.push_back(b);
    bac.y.push_back(parse_cell(row[cbac], csv, "pert_bac"));
    el.x.push_back(b);
    el.y.push_back(parse_cell(row[cl], csv, "eps_l"));
    ev.x.push_back(b);
    ev.y.push_back(parse_cell(row[cv], csv, "eps_v"));
    if (row[cr] == "1") {
      if (!band) band = svg::Band{b, b};
      band->lo = std::min(band->lo, b);
      band->hi = std::max(band->hi, b);
    }
  }

  svg::Panel top;
  top.y_label = "balanced accuracy";
  top.series = {std::move(bac)};
  top.band = band;
  svg::Panel bottom;
  bottom.y_label = "certified radius";
  bottom.series = {std::move(el), std::move(ev)};
  bottom.band = band;
  write_text(out_dir / "bias_sweep.svg",
             svg::line_chart("constant-offset sweep", "constant offset b", {top, bottom}));
}

double group_bac(const table::Table& t, const std::string& file, const std::string& cert_col,
                 const std::string& suffix, bool want_certified) {
  const std::size_t clab = t.column("label");
  const std::size_t ccert = t.column(cert_col);
  const std::size_t cfail = t.column("fail_rate_eval" + suffix);
  const std::size_t cn = t.column("n_eval" + suffix);
  std::map<int, std::pair<long, long>> per_class;  // correct, total
  for (const auto& row : t.rows) {
    const bool certified = row[ccert] == "1";
    if (certified != want_certified) continue;
    const int label = static_cast<int>(parse_cell(row[clab], file, "label"));
    const double fail = parse_cell(row[cfail], file, "fail_rate_eval" + suffix);
    const long n = std::lround(parse_cell(row[cn], file, "n_eval" + suffix));
    per_class[label].first += std::lround((1.0 - fail) * static_cast<double>(n));
    per_class[label].second += n;
  }
  double sum = 0.0;
  int classes = 0;
  for (const auto& [label, tally] : per_class) {
    (void)label;
    if (tally.second <= 0) continue;
    sum += static_cast<double>(tally.first) / static_cast<double>(tally.second);
    ++classes;
  }
  return classes > 0 ? sum / classes : 0.0;
}

void render_record_charts(const std::string& csv, const fs::path& out_dir) {
  const table::Table t = table::read_table(csv);
  const bool corrected = t.has_column("slack_h_corr");

  std::vector<double> values;
  for (const auto& row : t.rows) {
    if (corrected)
      values.push_back(parse_cell(row[t.column("slack_h_corr")], csv, "slack_h_corr") -
                       parse_cell(row[t.column("slack_h")], csv, "slack_h"));
    else
      values.push_back(parse_cell(row[t.column("slack_h")], csv, "slack_h"));
  }
  write_text(out_dir / "cert_delta_hist.svg",
             svg::histogram_chart(corrected ? "certification slack change"
                                            : "certification slack (uncorrected)",
                                  corrected ? "corrected slack - uncorrected slack"
                                            : "binding margin slack",
                                  values, 15));

  std::vector<svg::BarGroup> groups;
  if (!t.rows.empty()) {
    const std::array<std::pair<const char*, const char*>, 3> methods{
        {{"hoeffding", "certified_h"}, {"bernstein", "certified_b"}, {"cantelli", "certified_c"}}};
    const std::vector<std::string> suffixes = corrected ? std::vector<std::string>{"", "_corr"}
                                                        : std::vector<std::string>{""};
    for (const std::string& suffix : suffixes)
      for (const auto& [name, col] : methods) {
        svg::BarGroup g;
        g.label = std::string(name) + (suffix.empty() ? "" : " corrected");
        g.bars = {{"certified", group_bac(t, csv, col + suffix, suffix, true)},
                  {"uncertified", group_bac(t, csv, col + suffix, suffix, false)}};
        groups.push_back(std::move(g));
      }
  }
  write_text(out_dir / "cert_bac_bars.svg",
             svg::bar_chart("evaluation BAC by certificate", "evaluation BAC", groups));
}

void render_alpha_chart(const std::string& csv, const fs::path& out_dir) {
  const table::Table t = table::read_table(csv);
  const std::size_t ca = t.column("alpha"), cg = t.column("gram_norm"),
                    cdc = t.column("delta_clean"), cdp = t.column("delta_pert");
  svg::Series gram{"clean-response norm", {}, {}};
  svg::Series dc{"delta clean", {}, {}};
  svg::Series dp{"delta perturbed", {}, {}};
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const double x = static_cast<double>(i);
    labels.push_back(row[ca]);
    gram.x.push_back(x);
    gram.y.push_back(parse_cell(row[cg], csv, "gram_norm"));
    dc.x.push_back(x);
    dc.y.push_back(parse_cell(row[cdc], csv, "delta_clean"));
    dp.x.push_back(x);
    dp.y.push_back(parse_cell(row[cdp], csv, "delta_pert"));
  }
  svg::Panel top;
  top.y_label = "clean-response norm";
  top.series = {std::move(gram)};
  top.x_labels = labels;
  svg::Panel bottom;
  bottom.y_label = "BAC change (points)";
  bottom.series = {std::move(dc), std::move(dp)};
  bottom.x_labels = labels;
  write_text(out_dir / "alpha_sweep.svg",
             svg::line_chart("Gram-penalty sweep", "alpha", {top, bottom}));
}

void run_report(const ReportOpts& o) {
  if (o.sweep.empty() && o.records.empty() && o.alpha.empty())
    config_error("nothing to plot: pass --sweep, --records or --alpha");
  fs::create_directories(o.out);
  int written = 0;
  if (!o.sweep.empty()) {
    render_sweep_chart(o.sweep, o.out);
    ++written;
  }
  if (!o.records.empty()) {
    render_record_charts(o.records, o.out);
    written += 2;
  }
  if (!o.alpha.empty()) {
    render_alpha_chart(o.alpha, o.out);
    ++written;
  }
  std::cout << "report: wrote " << written << " chart(s) to " << o.out << "\n";
}

std::string parsed_command(const CLI::App& app) {
  for (const CLI::App* sub : app.get_subcommands([](const CLI::App* s) { return s->parsed(); })) {
    std::string name = sub->get_name();
    for (const CLI::App* nested :
         sub->get_subcommands([](const CLI::App* s) { return s->parsed(); }))
      name += " " + nested->get_name();
    return name;
  }
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "certibias: quantify perturbation-induced bias in module output dumps, fit debiasing\n"
      "correctors, and issue certified robustness radii and margin certificates.\n"
      "Exit codes: 0 ok, 2 bad configuration, 3 io failure, 4 validation failure, 5 compute\n"
      "refusal. Failures print a single JSON line on stderr."};
  app.require_subcommand(1);

  // ingest
  IngestOpts ingest_opts;
  CLI::App* ingest = app.add_subcommand("ingest", "validate a dump directory and print a report");
  ingest->add_option("--dir", ingest_opts.dir, "dump directory")->required();
  ingest->add_flag("--strict", ingest_opts.strict, "treat validation notes as fatal");

  // stats
  StatsOpts stats_opts;
  CLI::App* stats = app.add_subcommand("stats", "bias/variance bounds and perturbation boxes");
  stats->add_option("--dir", stats_opts.dir, "dump directory")->required();
  add_split_flags(stats, stats_opts.split, "train");
  stats->add_option("--bins", stats_opts.bins, "histogram bins for the density ratio")
      ->capture_default_str();
  stats->add_option("--box-fraction", stats_opts.box_fraction,
                    "fraction of perturbations used to fit the box")
      ->capture_default_str();
  stats->add_option("--out", stats_opts.out, "output directory")->capture_default_str();

  // radius
  RadiusOpts radius_opts;
  CLI::App* radius = app.add_subcommand("radius", "certified robustness radii per component");
  radius->add_option("--dir", radius_opts.dir, "dump directory")->required();
  radius->add_option("--phi", radius_opts.phi, "failure budget in (0, 1)")->required();
  radius->add_option("--bias-file", radius_opts.bias_file,
                     "corrector directory or constant-bias CSV for corrected radii");
  add_split_flags(radius, radius_opts.split, "train");
  radius->add_option("--gamma", radius_opts.gamma, "module Lipschitz constant (with --c, --n-in)");
  radius->add_option("--c", radius_opts.c, "per-coordinate perturbation amplitude");
  radius->add_option("--n-in", radius_opts.n_in, "perturbation input dimension");
  radius->add_option("--out", radius_opts.out, "output directory")->capture_default_str();

  // debias fit / apply
  CLI::App* debias = app.add_subcommand("debias", "fit or apply debiasing correctors");
  debias->require_subcommand(1);
  FitOpts fit_opts;
  CLI::App* fit = debias->add_subcommand("fit", "fit a corrector on a dump split");
  fit->add_option("--method", fit_opts.method, "corrector family")
      ->check(CLI::IsMember({"constant", "midrange", "ridge", "gram", "pca"}))
      ->required();
  fit->add_option("--dir", fit_opts.dir, "dump directory")->required();
  fit->add_option("--out", fit_opts.out, "corrector output directory")->required();
  fit->add_option("--lambda", fit_opts.lambda, "ridge penalty")->capture_default_str();
  fit->add_option("--alpha", fit_opts.alpha, "Gram penalty weight (gram)")->capture_default_str();
  fit->add_option("--k", fit_opts.k, "corrected principal coordinates (pca)")
      ->capture_default_str();
  fit->add_option("--psi", fit_opts.psi, "ridge feature map")
      ->check(CLI::IsMember({"linear", "with_norm"}))
      ->capture_default_str();
  fit->add_option("--grid-points", fit_opts.grid_points, "grid size for the constant search")
      ->capture_default_str();
  fit->add_option("--percentile", fit_opts.percentile, "robust-region quantile (constant)")
      ->capture_default_str();
  fit->add_option("--improvement-margin", fit_opts.improvement,
                  "BAC improvement needed to accept a region (constant)")
      ->capture_default_str();
  fit->add_option("--phi", fit_opts.phi, "failure budget for the search radii (constant)")
      ->capture_default_str();
  add_split_flags(fit, fit_opts.split, "train");
  fit->add_option("--alpha-sweep", fit_opts.alpha_sweep,
                  "comma-separated alpha values to sweep on the test split (gram)")
      ->delimiter(',');

  ApplyOpts apply_opts;
  CLI::App* apply = debias->add_subcommand("apply", "write a corrected copy of a dump");
  apply->add_option("--corrector", apply_opts.corrector, "corrector directory")->required();
  apply->add_option("--dir", apply_opts.dir, "dump directory")->required();
  apply->add_option("--out", apply_opts.out, "corrected dump output directory")->required();

  // certify
  CertifyOpts certify_opts;
  CLI::App* certify = app.add_subcommand("certify", "per-example margin certificates");
  certify->add_option("--dir", certify_opts.dir, "dump directory")->required();
  certify->add_option("--phi", certify_opts.phi, "per-example failure budget in (0, 1)")
      ->required();
  certify->add_option("--psi", certify_opts.psi, "population sampling confidence")
      ->capture_default_str();
  certify->add_option("--corrector", certify_opts.corrector,
                      "corrector directory for before/after certification");
  certify->add_option("--methods", certify_opts.methods, "comma-separated certificate methods")
      ->capture_default_str();
  add_split_flags(certify, certify_opts.split, "test");
  certify
      ->add_option("--calibration-fraction", certify_opts.cal_fraction,
                   "per-example fraction of perturbations used to fit boxes")
      ->capture_default_str();
  certify->add_option("--bins", certify_opts.bins, "histogram bins for the pooled density ratio")
      ->capture_default_str();
  certify->add_option("--out", certify_opts.out, "output directory")->capture_default_str();

  // metrics
  MetricsOpts metrics_opts;
  CLI::App* metrics = app.add_subcommand("metrics", "balanced-accuracy damage/recovery report");
  metrics->add_option("--dir", metrics_opts.dir, "dump directory")->required();
  metrics->add_option("--corrector", metrics_opts.corrector, "corrector directory");
  metrics->add_option("--combine", metrics_opts.combine, "clean+perturbed combination")
      ->check(CLI::IsMember({"pooled", "averaged"}))
      ->capture_default_str();
  metrics->add_option("--phi", metrics_opts.phi, "failure budget for radius contraction")
      ->capture_default_str();
  add_split_flags(metrics, metrics_opts.split, "test");
  metrics->add_option("--gamma", metrics_opts.gamma, "module Lipschitz constant");
  metrics->add_option("--c", metrics_opts.c, "per-coordinate perturbation amplitude");
  metrics->add_option("--n-in", metrics_opts.n_in, "perturbation input dimension");
  metrics->add_option("--out", metrics_opts.out, "report file")->capture_default_str();

  // aggregate
  AggOpts agg_opts;
  CLI::App* aggregate_cmd = app.add_subcommand("aggregate", "summarize metric reports");
  aggregate_cmd->add_option("--reports", agg_opts.reports, "report file or glob pattern")
      ->required();
  aggregate_cmd->add_option("--out", agg_opts.out, "summary table file")->capture_default_str();
  aggregate_cmd->add_option("--resamples", agg_opts.resamples, "bootstrap resamples (0 disables)")
      ->capture_default_str();
  aggregate_cmd->add_option("--level", agg_opts.level, "confidence level")->capture_default_str();
  aggregate_cmd->add_option("--seed", agg_opts.seed, "bootstrap seed")->capture_default_str();

  // simulate
  SimOpts sim_opts;
  CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic module dump");
  simulate->add_option("--panel", sim_opts.panel, "shift scenario: a, b, c or d")
      ->check(CLI::IsMember({"a", "b", "c", "d"}))
      ->required();
  simulate->add_option("--n", sim_opts.n, "feature width")->capture_default_str();
  simulate->add_option("--d", sim_opts.d, "perturbation input dimension")->capture_default_str();
  simulate->add_option("--m", sim_opts.m, "examples")->capture_default_str();
  simulate->add_option("--k", sim_opts.k, "perturbations per example")->capture_default_str();
  simulate
      ->add_option("--noise", sim_opts.noise,
                   "noise law: uniform:<c>, tgauss:<sigma>:<c> or correlated:<c>")
      ->capture_default_str();
  simulate->add_option("--seed", sim_opts.seed, "generator seed")->capture_default_str();
  simulate->add_option("--sep0", sim_opts.sep0, "class-0 cluster offset")->capture_default_str();
  simulate->add_option("--sep1", sim_opts.sep1, "class-1 cluster offset")->capture_default_str();
  simulate->add_option("--std", sim_opts.cstd, "cluster standard deviation")
      ->capture_default_str();
  simulate->add_option("--shift", sim_opts.shift, "engineered shift scale")
      ->capture_default_str();
  simulate->add_option("--gain", sim_opts.gain, "input-dependent shift gain (panel c)")
      ->capture_default_str();
  simulate->add_option("--task-id", sim_opts.task_id, "task identifier")->capture_default_str();
  simulate->add_option("--out", sim_opts.out, "scenario output directory")->required();

  // report
  ReportOpts report_opts;
  CLI::App* report = app.add_subcommand("report", "render SVG charts from CLI artifacts");
  report->add_option("--sweep", report_opts.sweep, "bias_sweep.csv from debias fit");
  report->add_option("--records", report_opts.records, "cert_records.csv from certify");
  report->add_option("--alpha", report_opts.alpha, "alpha_sweep.csv from debias fit");
  report->add_option("--out", report_opts.out, "chart output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    emit_error(2, "config", parsed_command(app), e.what());
    return 2;
  }

  if (ingest->parsed()) return guarded("ingest", [&] { run_ingest(ingest_opts); });
  if (stats->parsed()) return guarded("stats", [&] { run_stats(stats_opts); });
  if (radius->parsed()) return guarded("radius", [&] { run_radius(radius_opts); });
  if (debias->parsed()) {
    if (fit->parsed()) return guarded("debias fit", [&] { run_debias_fit(fit_opts); });
    if (apply->parsed()) return guarded("debias apply", [&] { run_debias_apply(apply_opts); });
  }
  if (certify->parsed()) return guarded("certify", [&] { run_certify(certify_opts); });
  if (metrics->parsed()) return guarded("metrics", [&] { run_metrics(metrics_opts); });
  if (aggregate_cmd->parsed()) return guarded("aggregate", [&] { run_aggregate(agg_opts); });
  if (simulate->parsed()) return guarded("simulate", [&] { run_simulate(sim_opts); });
  if (report->parsed()) return guarded("report", [&] { run_report(report_opts); });
  return 0;
}
