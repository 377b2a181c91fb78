#include "certibias/synth.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "certibias/csv.hpp"
#include "certibias/metrics.hpp"
#include "certibias/parallel.hpp"
#include "certibias/rng.hpp"

namespace certibias {

namespace {

using nlohmann::json;

// Purpose tags keeping the module, cluster, and noise draws on disjoint
// counter streams derived from one user-facing seed.
constexpr std::uint64_t kModuleTag = 0x6d6f64756c65;  // "module"
constexpr std::uint64_t kCleanTag = 0x636c65616e;     // "clean"
constexpr std::uint64_t kNoiseTag = 0x6e6f697365;     // "noise"

std::uint64_t subseed(std::uint64_t seed, std::uint64_t tag) { return mix64(seed, tag, 0); }

}  // namespace

std::string panel_name(Panel p) {
  switch (p) {
    case Panel::a: return "a";
    case Panel::b: return "b";
    case Panel::c: return "c";
    case Panel::d: return "d";
  }
  throw std::logic_error("unreachable panel");
}

Panel parse_panel(const std::string& name) {
  if (name == "a") return Panel::a;
  if (name == "b") return Panel::b;
  if (name == "c") return Panel::c;
  if (name == "d") return Panel::d;
  throw std::invalid_argument("unknown panel '" + name + "' (a|b|c|d)");
}

std::string noise_kind_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::uniform_box: return "uniform_box";
    case NoiseKind::truncated_gaussian: return "truncated_gaussian";
    case NoiseKind::correlated: return "correlated";
  }
  throw std::logic_error("unreachable noise kind");
}

void NoiseSpec::validate() const {
  if (dim < 1) throw std::invalid_argument("noise dimension must be positive");
  if (c < 0.0) throw std::invalid_argument("noise box half-width must be non-negative");
  if (kind == NoiseKind::truncated_gaussian && sigma < 0.0)
    throw std::invalid_argument("truncated gaussian width must be non-negative");
  if (kind == NoiseKind::correlated && mixing.size() != 0 &&
      (mixing.rows() != dim || mixing.cols() != dim))
    throw std::invalid_argument("mixing matrix must be dim x dim");
}

Eigen::VectorXd sample_noise_vector(const NoiseSpec& noise, std::uint64_t seed,
                                    std::uint64_t stream, bool* clipped) {
  CounterRng rng(seed, stream);
  Eigen::VectorXd v(noise.dim);
  if (clipped) *clipped = false;
  switch (noise.kind) {
    case NoiseKind::uniform_box:
      for (int i = 0; i < noise.dim; ++i) v[i] = rng.next_uniform(-noise.c, noise.c);
      return v;
    case NoiseKind::truncated_gaussian: {
      for (int i = 0; i < noise.dim; ++i) {
        if (noise.sigma == 0.0 || noise.c == 0.0) {
          v[i] = 0.0;
          continue;
        }
        double z = 0.0;
        // Rejection against the box; acceptance is 2*Phi(c/sigma)-1 per try.
        for (int attempt = 0;; ++attempt) {
          z = noise.sigma * rng.next_normal();
          if (std::abs(z) <= noise.c) break;
          if (attempt > 100000) {
            z = std::clamp(z, -noise.c, noise.c);
            break;
          }
        }
        v[i] = z;
      }
      return v;
    }
    case NoiseKind::correlated: {
      Eigen::VectorXd u(noise.dim);
      for (int i = 0; i < noise.dim; ++i) u[i] = rng.next_uniform(-noise.c, noise.c);
      v = noise.mixing.size() != 0 ? Eigen::VectorXd(noise.mixing * u) : u;
      for (int i = 0; i < noise.dim; ++i) {
        if (v[i] < -noise.c || v[i] > noise.c) {
          v[i] = std::clamp(v[i], -noise.c, noise.c);
          if (clipped) *clipped = true;
        }
      }
      return v;
    }
  }
  throw std::logic_error("unreachable noise kind");
}

SampleResult sample_perturbations(const NoiseSpec& noise, int count, std::uint64_t seed) {
  noise.validate();
  if (count < 1) throw std::invalid_argument("sample_perturbations needs count >= 1");
  SampleResult r;
  r.deltas.resize(count, noise.dim);
  std::vector<std::uint8_t> clip_flags(static_cast<std::size_t>(count), 0);
  parallel_for(count, [&](std::int64_t i) {
    bool clipped = false;
    r.deltas.row(i) =
        sample_noise_vector(noise, seed, static_cast<std::uint64_t>(i), &clipped).transpose();
    clip_flags[static_cast<std::size_t>(i)] = clipped ? 1 : 0;
  });
  long clipped_rows = 0;
  for (const std::uint8_t f : clip_flags) clipped_rows += f;
  r.clip_rate = static_cast<double>(clipped_rows) / static_cast<double>(count);
  return r;
}

double noise_coordinate_variance(const NoiseSpec& noise) {
  noise.validate();
  switch (noise.kind) {
    case NoiseKind::uniform_box:
    case NoiseKind::correlated:
      return noise.c * noise.c / 3.0;
    case NoiseKind::truncated_gaussian: {
      if (noise.sigma == 0.0 || noise.c == 0.0) return 0.0;
      const boost::math::normal_distribution<double> norm;
      const double alpha = noise.c / noise.sigma;
      const double z = 2.0 * boost::math::cdf(norm, alpha) - 1.0;
      return noise.sigma * noise.sigma *
             (1.0 - 2.0 * alpha * boost::math::pdf(norm, alpha) / z);
    }
  }
  throw std::logic_error("unreachable noise kind");
}

Eigen::MatrixXd gen_linear_module(int n_out, int n_in, std::uint64_t seed,
                                  const Eigen::VectorXd& norm_spectrum) {
  if (n_out < 1 || n_in < 1) throw std::invalid_argument("module dimensions must be positive");
  if (norm_spectrum.size() != n_out)
    throw std::invalid_argument("norm spectrum must have one entry per output row");
  Eigen::MatrixXd a(n_out, n_in);
  for (int r = 0; r < n_out; ++r) {
    const double want = norm_spectrum[r];
    if (want < 0.0) throw std::invalid_argument("row norms must be non-negative");
    CounterRng rng(seed, static_cast<std::uint64_t>(r));
    for (int c = 0; c < n_in; ++c) a(r, c) = rng.next_normal();
    const double have = a.row(r).norm();
    a.row(r) = have > 0.0 && want > 0.0 ? Eigen::RowVectorXd(a.row(r) * (want / have))
                                        : Eigen::RowVectorXd::Zero(n_in);
  }
  return a;
}

void ScenarioSpec::validate() const {
  if (m < 4) throw std::invalid_argument("scenario needs at least 4 examples");
  if (k < 4) throw std::invalid_argument("scenario needs at least 4 perturbations per example");
  if (n < 2) throw std::invalid_argument("scenario needs at least 2 feature coordinates");
  if (d < 1) throw std::invalid_argument("scenario needs a positive perturbation dimension");
  noise.validate();
  if (noise.dim != d)
    throw std::invalid_argument("noise dimension must match the perturbation dimension");
  if (!(cluster_std > 0.0)) throw std::invalid_argument("cluster spread must be positive");
  if (!(cluster_sep0 > 0.0 && cluster_sep1 > 0.0))
    throw std::invalid_argument("cluster separations must be positive");
  if (shift_scale < 0.0) throw std::invalid_argument("shift scale must be non-negative");
  if (task_id.empty()) throw std::invalid_argument("scenario task id must be non-empty");
}

Scenario gen_scenario(const ScenarioSpec& spec) {
  spec.validate();
  Scenario s;
  s.spec = spec;
  s.module = gen_linear_module(spec.n, spec.d, subseed(spec.seed, kModuleTag),
                               Eigen::VectorXd::Ones(spec.n));

  Dataset& data = s.data;
  data.task_id = spec.task_id;
  data.kind = DatasetKind::features;
  data.n_examples = spec.m;
  data.n_perturbations = spec.k;
  data.n_features = spec.n;
  data.n_outputs = 2;
  data.clean.resize(spec.m, spec.n);
  data.perturbed.resize(static_cast<Eigen::Index>(spec.m) * spec.k, spec.n);
  data.labels = Eigen::VectorXi(spec.m);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2, spec.n);
  w(0, 0) = -1.0;
  w(1, 0) = 1.0;
  data.weights = w;

  const std::uint64_t clean_seed = subseed(spec.seed, kCleanTag);
  for (int j = 0; j < spec.m; ++j) {
    const int y = j % 2;
    (*data.labels)[j] = y;
    CounterRng rng(clean_seed, static_cast<std::uint64_t>(j));
    for (int f = 0; f < spec.n; ++f) data.clean(j, f) = spec.cluster_std * rng.next_normal();
    data.clean(j, 0) += y == 0 ? -spec.cluster_sep0 : spec.cluster_sep1;
  }

  // Engineered expected shift of each example, along the decision coordinate.
  Eigen::MatrixXd mean_shift = Eigen::MatrixXd::Zero(spec.m, spec.n);
  for (int j = 0; j < spec.m; ++j) {
    const int y = (*data.labels)[j];
    switch (spec.panel) {
      case Panel::a:  // cancel the class mean: both clusters land on the boundary
        mean_shift(j, 0) = y == 0 ? spec.cluster_sep0 : -spec.cluster_sep1;
        break;
      case Panel::b:  // one-sided constant push toward class 0
        mean_shift(j, 0) = -spec.shift_scale;
        break;
      case Panel::c:  // push depends on the second feature coordinate
        mean_shift(j, 0) = -(spec.shift_scale + spec.input_gain * data.clean(j, 1));
        break;
      case Panel::d:  // push away from the boundary on both sides
        mean_shift(j, 0) = y == 0 ? -spec.shift_scale : spec.shift_scale;
        break;
    }
  }

  const std::uint64_t noise_seed = subseed(spec.seed, kNoiseTag);
  std::vector<std::uint8_t> clip_flags(static_cast<std::size_t>(spec.m) * spec.k, 0);
  parallel_for(static_cast<std::int64_t>(spec.m) * spec.k, [&](std::int64_t row) {
    bool clipped = false;
    const Eigen::VectorXd delta =
        sample_noise_vector(spec.noise, noise_seed, static_cast<std::uint64_t>(row), &clipped);
    const int j = static_cast<int>(row / spec.k);
    data.perturbed.row(row) =
        data.clean.row(j) + mean_shift.row(j) + (s.module * delta).transpose();
    clip_flags[static_cast<std::size_t>(row)] = clipped ? 1 : 0;
  });
  long clipped_rows = 0;
  for (const std::uint8_t f : clip_flags) clipped_rows += f;

  GroundTruth& gt = s.truth;
  gt.panel = spec.panel;
  gt.seed = spec.seed;
  gt.clip_rate = static_cast<double>(clipped_rows) / static_cast<double>(spec.m * spec.k);
  gt.C = mean_shift.cwiseAbs().colwise().maxCoeff();
  const Eigen::MatrixXd effective =
      spec.noise.kind == NoiseKind::correlated && spec.noise.mixing.size() != 0
          ? Eigen::MatrixXd(s.module * spec.noise.mixing)
          : s.module;
  gt.V = noise_coordinate_variance(spec.noise) * effective.rowwise().squaredNorm();
  gt.v_exact = spec.noise.kind != NoiseKind::correlated;
  gt.gammas = s.module.rowwise().norm();
  gt.bias_profile = Eigen::MatrixXd::Zero(2, spec.n);
  switch (spec.panel) {
    case Panel::a:
      gt.bias_profile(0, 0) = spec.cluster_sep0;
      gt.bias_profile(1, 0) = -spec.cluster_sep1;
      break;
    case Panel::b:
    case Panel::c:  // the input-dependent term is centered within each class
      gt.bias_profile(0, 0) = gt.bias_profile(1, 0) = -spec.shift_scale;
      break;
    case Panel::d:
      gt.bias_profile(0, 0) = -spec.shift_scale;
      gt.bias_profile(1, 0) = spec.shift_scale;
      break;
  }
  return s;
}

void save_scenario(const Scenario& s, const std::filesystem::path& dir) {
  save_dataset(s.data, dir);
  write_matrix_csv(dir / "module.csv", s.module);
  if (s.spec.noise.mixing.size() != 0) write_matrix_csv(dir / "mixing.csv", s.spec.noise.mixing);

  json j;
  j["panel"] = panel_name(s.truth.panel);
  j["seed"] = s.truth.seed;
  j["task_id"] = s.spec.task_id;
  j["dims"] = {{"n", s.spec.n}, {"d", s.spec.d}, {"m", s.spec.m}, {"k", s.spec.k}};
  j["noise"] = {{"kind", noise_kind_name(s.spec.noise.kind)},
                {"dim", s.spec.noise.dim},
                {"c", s.spec.noise.c},
                {"sigma", s.spec.noise.sigma},
                {"has_mixing", s.spec.noise.mixing.size() != 0}};
  j["cluster"] = {{"sep0", s.spec.cluster_sep0},
                  {"sep1", s.spec.cluster_sep1},
                  {"std", s.spec.cluster_std}};
  j["shift"] = {{"scale", s.spec.shift_scale}, {"input_gain", s.spec.input_gain}};
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  j["C"] = vec(s.truth.C);
  j["V"] = vec(s.truth.V);
  j["v_exact"] = s.truth.v_exact;
  j["gammas"] = vec(s.truth.gammas);
  j["bias_profile"] = {vec(s.truth.bias_profile.row(0).transpose()),
                       vec(s.truth.bias_profile.row(1).transpose())};
  j["clip_rate"] = s.truth.clip_rate;

  std::ofstream out(dir / "ground_truth.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + (dir / "ground_truth.json").string());
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed writing " + (dir / "ground_truth.json").string());
}

Scenario load_scenario(const std::filesystem::path& dir) {
  Scenario s;
  s.data = load_dataset(dir);
  s.module = read_matrix_csv(dir / "module.csv");

  std::ifstream in(dir / "ground_truth.json", std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + (dir / "ground_truth.json").string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("failed to parse " + (dir / "ground_truth.json").string() + ": " +
                             e.what());
  }

  ScenarioSpec& spec = s.spec;
  spec.panel = parse_panel(j.at("panel").get<std::string>());
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.task_id = j.at("task_id").get<std::string>();
  const json& dims = j.at("dims");
  spec.n = dims.at("n").get<int>();
  spec.d = dims.at("d").get<int>();
  spec.m = dims.at("m").get<int>();
  spec.k = dims.at("k").get<int>();
  const json& nj = j.at("noise");
  const std::string kind = nj.at("kind").get<std::string>();
  if (kind == "uniform_box") spec.noise.kind = NoiseKind::uniform_box;
  else if (kind == "truncated_gaussian") spec.noise.kind = NoiseKind::truncated_gaussian;
  else if (kind == "correlated") spec.noise.kind = NoiseKind::correlated;
  else throw std::runtime_error("unknown noise kind '" + kind + "' in ground_truth.json");
  spec.noise.dim = nj.at("dim").get<int>();
  spec.noise.c = nj.at("c").get<double>();
  spec.noise.sigma = nj.at("sigma").get<double>();
  if (nj.at("has_mixing").get<bool>()) spec.noise.mixing = read_matrix_csv(dir / "mixing.csv");
  const json& cj = j.at("cluster");
  spec.cluster_sep0 = cj.at("sep0").get<double>();
  spec.cluster_sep1 = cj.at("sep1").get<double>();
  spec.cluster_std = cj.at("std").get<double>();
  spec.shift_scale = j.at("shift").at("scale").get<double>();
  spec.input_gain = j.at("shift").at("input_gain").get<double>();

  GroundTruth& gt = s.truth;
  gt.panel = spec.panel;
  gt.seed = spec.seed;
  auto vec = [](const json& arr) {
    Eigen::VectorXd v(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    return v;
  };
  gt.C = vec(j.at("C"));
  gt.V = vec(j.at("V"));
  gt.v_exact = j.at("v_exact").get<bool>();
  gt.gammas = vec(j.at("gammas"));
  const json& bp = j.at("bias_profile");
  gt.bias_profile.resize(2, static_cast<Eigen::Index>(bp.at(0).size()));
  gt.bias_profile.row(0) = vec(bp.at(0)).transpose();
  gt.bias_profile.row(1) = vec(bp.at(1)).transpose();
  gt.clip_rate = j.at("clip_rate").get<double>();
  return s;
}

Eigen::VectorXd monte_carlo_violation(const Eigen::MatrixXd& module,
                                      const Eigen::MatrixXd& mean_shifts,
                                      const Eigen::VectorXd& epsilon, const NoiseSpec& noise,
                                      int trials, std::uint64_t seed) {
  noise.validate();
  if (trials < 1000) throw std::invalid_argument("violation estimate needs at least 1000 trials");
  const Eigen::Index n = module.rows();
  if (epsilon.size() != n)
    throw std::invalid_argument("epsilon must have one entry per module output");
  if (noise.dim != module.cols())
    throw std::invalid_argument("noise dimension must match the module input width");
  const bool shifted = mean_shifts.size() != 0;
  if (shifted && mean_shifts.cols() != n)
    throw std::invalid_argument("mean shifts must have one column per module output");

  // max over examples of |f_i + shift(j, i)| only needs the extreme shifts.
  Eigen::VectorXd hi = shifted ? Eigen::VectorXd(mean_shifts.colwise().maxCoeff())
                               : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd lo = shifted ? Eigen::VectorXd(mean_shifts.colwise().minCoeff())
                               : Eigen::VectorXd::Zero(n);

  std::vector<std::uint8_t> violated(static_cast<std::size_t>(trials) * static_cast<std::size_t>(n), 0);
  parallel_for(trials, [&](std::int64_t t) {
    const Eigen::VectorXd f =
        module * sample_noise_vector(noise, seed, static_cast<std::uint64_t>(t));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double worst = std::max(std::abs(f[i] + hi[i]), std::abs(f[i] + lo[i]));
      violated[static_cast<std::size_t>(t) * static_cast<std::size_t>(n) +
               static_cast<std::size_t>(i)] = worst > epsilon[i] ? 1 : 0;
    }
  });

  Eigen::VectorXd rates = Eigen::VectorXd::Zero(n);
  for (std::size_t t = 0; t < static_cast<std::size_t>(trials); ++t)
    for (Eigen::Index i = 0; i < n; ++i)
      rates[i] += violated[t * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)];
  return rates / static_cast<double>(trials);
}

std::vector<double> brute_force_cert_check(const std::vector<CertRecord>& records,
                                           const Dataset& d, const Corrector* corrector,
                                           std::span<const int> eval_perts) {
  if (!d.labels) throw std::invalid_argument("certificate check requires labels");
  if (eval_perts.empty()) throw std::invalid_argument("certificate check needs eval perturbations");
  for (const int t : eval_perts)
    if (t < 0 || t >= d.n_perturbations)
      throw std::out_of_range("eval perturbation index out of range");

  const Eigen::MatrixXd lg =
      corrector ? corrected_perturbed_logits(d, *corrector) : perturbed_logits(d);
  std::vector<double> rates;
  rates.reserve(records.size());
  for (const CertRecord& rec : records) {
    if (rec.example < 0 || rec.example >= d.n_examples)
      throw std::out_of_range("certificate record references a missing example");
    const int y = (*d.labels)[rec.example];
    long failures = 0;
    for (const int t : eval_perts) {
      const Eigen::Index row = static_cast<Eigen::Index>(rec.example) * d.n_perturbations + t;
      Eigen::Index pred = 0;
      lg.row(row).maxCoeff(&pred);
      if (static_cast<int>(pred) != y) ++failures;
    }
    rates.push_back(static_cast<double>(failures) / static_cast<double>(eval_perts.size()));
  }
  return rates;
}

}  // namespace certibias
