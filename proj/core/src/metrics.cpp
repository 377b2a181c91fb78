#include "certibias/metrics.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "certibias/parallel.hpp"
#include "certibias/rng.hpp"

namespace certibias {

namespace {

using nlohmann::json;

int argmax_row(const Eigen::MatrixXd& m, Eigen::Index r) {
  Eigen::Index idx = 0;
  m.row(r).maxCoeff(&idx);
  return static_cast<int>(idx);
}

}  // namespace

double balanced_accuracy(std::span<const int> preds, std::span<const int> labels, int n_classes) {
  if (preds.empty()) throw std::invalid_argument("balanced accuracy of an empty prediction set");
  if (preds.size() != labels.size())
    throw std::invalid_argument("balanced accuracy: prediction/label length mismatch");
  if (n_classes < 1) throw std::invalid_argument("balanced accuracy needs at least one class");
  std::vector<long> correct(static_cast<std::size_t>(n_classes), 0);
  std::vector<long> total(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= n_classes) throw std::invalid_argument("balanced accuracy: label out of range");
    ++total[static_cast<std::size_t>(y)];
    if (preds[i] == y) ++correct[static_cast<std::size_t>(y)];
  }
  double acc = 0.0;
  int present = 0;
  for (int c = 0; c < n_classes; ++c) {
    if (total[static_cast<std::size_t>(c)] == 0) continue;
    acc += static_cast<double>(correct[static_cast<std::size_t>(c)]) /
           static_cast<double>(total[static_cast<std::size_t>(c)]);
    ++present;
  }
  return acc / present;
}

std::vector<int> argmax_predictions(const Eigen::MatrixXd& logits) {
  if (logits.rows() == 0 || logits.cols() == 0)
    throw std::invalid_argument("argmax of an empty logit matrix");
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r)
    out[static_cast<std::size_t>(r)] = argmax_row(logits, r);
  return out;
}

BacTable bac_table(const Dataset& d, const Corrector* corrector, std::span<const int> examples,
                   std::span<const int> perts) {
  if (!d.labels) throw std::invalid_argument("bac_table requires labels");
  if (examples.empty() || perts.empty())
    throw std::invalid_argument("bac_table needs a non-empty example and perturbation selection");
  for (const int j : examples)
    if (j < 0 || j >= d.n_examples) throw std::out_of_range("bac_table: example index out of range");
  for (const int t : perts)
    if (t < 0 || t >= d.n_perturbations)
      throw std::out_of_range("bac_table: perturbation index out of range");

  const Eigen::MatrixXd clean_raw = clean_logits(d);
  const Eigen::MatrixXd pert_raw = perturbed_logits(d);

  auto clean_bac = [&](const Eigen::MatrixXd& lg) {
    std::vector<int> pr, lab;
    pr.reserve(examples.size());
    lab.reserve(examples.size());
    for (const int j : examples) {
      pr.push_back(argmax_row(lg, j));
      lab.push_back((*d.labels)[static_cast<std::size_t>(j)]);
    }
    return balanced_accuracy(pr, lab, d.n_outputs);
  };
  auto pert_bac = [&](const Eigen::MatrixXd& lg) {
    std::vector<int> pr, lab;
    pr.reserve(examples.size() * perts.size());
    lab.reserve(examples.size() * perts.size());
    for (const int j : examples) {
      const int y = (*d.labels)[static_cast<std::size_t>(j)];
      for (const int t : perts) {
        pr.push_back(argmax_row(lg, static_cast<Eigen::Index>(j) * d.n_perturbations + t));
        lab.push_back(y);
      }
    }
    return balanced_accuracy(pr, lab, d.n_outputs);
  };

  BacTable tab;
  tab.clean_before = clean_bac(clean_raw);
  tab.pert_before = pert_bac(pert_raw);
  if (corrector) {
    tab.clean_after = clean_bac(corrected_clean_logits(d, *corrector));
    tab.pert_after = pert_bac(corrected_perturbed_logits(d, *corrector));
  } else {
    tab.clean_after = tab.clean_before;
    tab.pert_after = tab.pert_before;
  }
  tab.w_clean = static_cast<double>(examples.size());
  tab.w_pert = static_cast<double>(examples.size() * perts.size());
  return tab;
}

DeltaMetrics delta_metrics(const BacTable& t) {
  DeltaMetrics d;
  d.drop = 100.0 * (t.pert_before - t.clean_before);
  d.clean = 100.0 * (t.clean_after - t.clean_before);
  d.pert = 100.0 * (t.pert_after - t.pert_before);
  return d;
}

std::string combine_mode_name(CombineMode m) {
  return m == CombineMode::pooled ? "pooled" : "averaged";
}

CombineMode parse_combine_mode(const std::string& name) {
  if (name == "pooled") return CombineMode::pooled;
  if (name == "averaged") return CombineMode::averaged;
  throw std::invalid_argument("unknown combine mode '" + name + "' (pooled|averaged)");
}

DamageRecover damage_recover(const BacTable& t, double w_clean, double w_pert, CombineMode mode) {
  if (!(t.clean_before > 0.0))
    throw std::invalid_argument("damage metrics undefined when the clean balanced accuracy is 0");
  DamageRecover dr;
  dr.mode = mode;
  dr.p_damage = 100.0 * (t.clean_before - t.pert_before) / t.clean_before;
  const double damage = t.clean_before - t.pert_before;
  if (std::abs(damage) >= 1e-9) dr.p_recover = 100.0 * (t.pert_after - t.pert_before) / damage;
  dr.p_clean = 100.0 * (t.clean_after - t.clean_before) / t.clean_before;
  if (mode == CombineMode::pooled) {
    if (!(w_clean > 0.0) || !(w_pert > 0.0))
      throw std::invalid_argument("pooled combination needs positive prediction counts");
    dr.combined_before = (w_clean * t.clean_before + w_pert * t.pert_before) / (w_clean + w_pert);
    dr.combined_after = (w_clean * t.clean_after + w_pert * t.pert_after) / (w_clean + w_pert);
  } else {
    dr.combined_before = 0.5 * (t.clean_before + t.pert_before);
    dr.combined_after = 0.5 * (t.clean_after + t.pert_after);
  }
  if (std::abs(dr.combined_before) >= 1e-9)
    dr.p_combined = 100.0 * (dr.combined_after - dr.combined_before) / dr.combined_before;
  return dr;
}

DamageRecover damage_recover(const BacTable& t, CombineMode mode) {
  return damage_recover(t, t.w_clean, t.w_pert, mode);
}

double radius_contraction(const Eigen::VectorXd& before, const Eigen::VectorXd& after) {
  if (before.size() == 0) throw std::invalid_argument("radius contraction of empty vectors");
  if (before.size() != after.size())
    throw std::invalid_argument("radius contraction: vectors must have equal length");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < before.size(); ++i) {
    if (!(before[i] > 0.0))
      throw std::invalid_argument("radius contraction needs positive baseline radii");
    acc += 100.0 * (before[i] - after[i]) / before[i];
  }
  return acc / static_cast<double>(before.size());
}

Interval bootstrap_bca(std::span<const double> values, int resamples, double level,
                       std::uint64_t seed) {
  const std::size_t n = values.size();
  if (n < 2) throw std::invalid_argument("bootstrap needs at least 2 values");
  if (resamples < 100) throw std::invalid_argument("bootstrap needs at least 100 resamples");
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("confidence level must lie in (0, 1)");

  double total = 0.0;
  bool all_equal = true;
  for (const double v : values) {
    total += v;
    all_equal = all_equal && v == values[0];
  }
  if (all_equal) return {values[0], values[0]};
  const double theta = total / static_cast<double>(n);

  std::vector<double> boot(static_cast<std::size_t>(resamples));
  parallel_for(resamples, [&](std::int64_t b) {
    CounterRng rng(seed, static_cast<std::uint64_t>(b));
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += values[rng.next_index(n)];
    boot[static_cast<std::size_t>(b)] = acc / static_cast<double>(n);
  });
  std::sort(boot.begin(), boot.end());

  // Bias correction from the midrank position of the estimate in the
  // bootstrap distribution, kept away from 0 and 1.
  long below = 0;
  long tied = 0;
  for (const double v : boot) {
    if (v < theta) ++below;
    else if (v == theta) ++tied;
  }
  double frac = (static_cast<double>(below) + 0.5 * static_cast<double>(tied)) /
                static_cast<double>(resamples);
  const double guard = 1.0 / (static_cast<double>(resamples) + 1.0);
  frac = std::clamp(frac, guard, 1.0 - guard);
  const boost::math::normal_distribution<double> norm;
  const double z0 = boost::math::quantile(norm, frac);

  // Acceleration from the jackknife skewness of the mean.
  double jack_total = 0.0;
  std::vector<double> jack(n);
  for (std::size_t i = 0; i < n; ++i) {
    jack[i] = (total - values[i]) / static_cast<double>(n - 1);
    jack_total += jack[i];
  }
  const double jack_mean = jack_total / static_cast<double>(n);
  double num = 0.0;
  double den = 0.0;
  for (const double v : jack) {
    const double dlt = jack_mean - v;
    num += dlt * dlt * dlt;
    den += dlt * dlt;
  }
  const double accel = den > 0.0 ? num / (6.0 * std::pow(den, 1.5)) : 0.0;

  const double alpha = (1.0 - level) / 2.0;
  auto adjusted = [&](double z_alpha) {
    const double w = z0 + z_alpha;
    const double denom = 1.0 - accel * w;
    if (denom <= 1e-12) return w > 0.0 ? 1.0 : 0.0;  // transformation broke down
    return boost::math::cdf(norm, z0 + w / denom);
  };
  auto percentile = [&](double p) {
    p = std::clamp(p, 0.0, 1.0);
    const double h = p * static_cast<double>(resamples - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, static_cast<std::size_t>(resamples - 1));
    const double fr = h - static_cast<double>(lo);
    return boot[lo] * (1.0 - fr) + boot[hi] * fr;
  };
  return {percentile(adjusted(boost::math::quantile(norm, alpha))),
          percentile(adjusted(boost::math::quantile(norm, 1.0 - alpha)))};
}

MetricsReport make_metrics_report(std::string task_id, const BacTable& t, CombineMode mode) {
  MetricsReport r;
  r.task_id = std::move(task_id);
  r.bac = t;
  r.delta = delta_metrics(t);
  r.dr = damage_recover(t, mode);
  return r;
}

namespace {

json optional_to_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<double> optional_from_json(const json& j, const char* key) {
  const json& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

}  // namespace

std::string metrics_report_to_json(const MetricsReport& r) {
  json j;
  j["task_id"] = r.task_id;
  j["bac"] = {{"clean_before", r.bac.clean_before}, {"pert_before", r.bac.pert_before},
              {"clean_after", r.bac.clean_after},   {"pert_after", r.bac.pert_after},
              {"w_clean", r.bac.w_clean},           {"w_pert", r.bac.w_pert}};
  j["delta_drop"] = r.delta.drop;
  j["delta_clean"] = r.delta.clean;
  j["delta_pert"] = r.delta.pert;
  j["p_damage"] = r.dr.p_damage;
  j["p_recover"] = optional_to_json(r.dr.p_recover);
  j["p_clean"] = r.dr.p_clean;
  j["p_combined"] = optional_to_json(r.dr.p_combined);
  j["combined_before"] = r.dr.combined_before;
  j["combined_after"] = r.dr.combined_after;
  j["combine_mode"] = combine_mode_name(r.dr.mode);
  j["p_eps_l"] = optional_to_json(r.p_eps_l);
  j["p_eps_v"] = optional_to_json(r.p_eps_v);
  json ci = json::object();
  for (const auto& [name, iv] : r.ci) ci[name] = {iv.lo, iv.hi};
  j["ci"] = ci;
  return j.dump(2) + "\n";
}

MetricsReport metrics_report_from_json(const std::string& text) {
  const json j = json::parse(text);
  MetricsReport r;
  r.task_id = j.at("task_id").get<std::string>();
  const json& b = j.at("bac");
  r.bac.clean_before = b.at("clean_before").get<double>();
  r.bac.pert_before = b.at("pert_before").get<double>();
  r.bac.clean_after = b.at("clean_after").get<double>();
  r.bac.pert_after = b.at("pert_after").get<double>();
  r.bac.w_clean = b.at("w_clean").get<double>();
  r.bac.w_pert = b.at("w_pert").get<double>();
  r.delta.drop = j.at("delta_drop").get<double>();
  r.delta.clean = j.at("delta_clean").get<double>();
  r.delta.pert = j.at("delta_pert").get<double>();
  r.dr.p_damage = j.at("p_damage").get<double>();
  r.dr.p_recover = optional_from_json(j, "p_recover");
  r.dr.p_clean = j.at("p_clean").get<double>();
  r.dr.p_combined = optional_from_json(j, "p_combined");
  r.dr.combined_before = j.at("combined_before").get<double>();
  r.dr.combined_after = j.at("combined_after").get<double>();
  r.dr.mode = parse_combine_mode(j.at("combine_mode").get<std::string>());
  r.p_eps_l = optional_from_json(j, "p_eps_l");
  r.p_eps_v = optional_from_json(j, "p_eps_v");
  for (const auto& [name, iv] : j.at("ci").items())
    r.ci[name] = Interval{iv.at(0).get<double>(), iv.at(1).get<double>()};
  return r;
}

void save_metrics_report(const MetricsReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << metrics_report_to_json(r);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

MetricsReport load_metrics_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return metrics_report_from_json(text);
  } catch (const std::exception& e) {
    throw std::runtime_error("failed to parse " + path.string() + ": " + e.what());
  }
}

const std::vector<std::string>& aggregate_metric_names() {
  static const std::vector<std::string> names = {
      "bac_clean_before", "bac_pert_before", "bac_clean_after", "bac_pert_after",
      "delta_drop",       "delta_clean",     "delta_pert",      "p_damage",
      "p_recover",        "p_clean",         "p_combined",      "p_eps_l",
      "p_eps_v"};
  return names;
}

std::vector<AggregateRow> aggregate(const std::vector<MetricsReport>& reports, int ci_resamples,
                                    double level, std::uint64_t seed) {
  if (reports.empty()) throw std::invalid_argument("aggregate needs at least one report");
  using Getter = std::function<std::optional<double>(const MetricsReport&)>;
  const std::vector<std::pair<std::string, Getter>> fields = {
      {"bac_clean_before", [](const MetricsReport& r) { return std::optional(r.bac.clean_before); }},
      {"bac_pert_before", [](const MetricsReport& r) { return std::optional(r.bac.pert_before); }},
      {"bac_clean_after", [](const MetricsReport& r) { return std::optional(r.bac.clean_after); }},
      {"bac_pert_after", [](const MetricsReport& r) { return std::optional(r.bac.pert_after); }},
      {"delta_drop", [](const MetricsReport& r) { return std::optional(r.delta.drop); }},
      {"delta_clean", [](const MetricsReport& r) { return std::optional(r.delta.clean); }},
      {"delta_pert", [](const MetricsReport& r) { return std::optional(r.delta.pert); }},
      {"p_damage", [](const MetricsReport& r) { return std::optional(r.dr.p_damage); }},
      {"p_recover", [](const MetricsReport& r) { return r.dr.p_recover; }},
      {"p_clean", [](const MetricsReport& r) { return std::optional(r.dr.p_clean); }},
      {"p_combined", [](const MetricsReport& r) { return r.dr.p_combined; }},
      {"p_eps_l", [](const MetricsReport& r) { return r.p_eps_l; }},
      {"p_eps_v", [](const MetricsReport& r) { return r.p_eps_v; }},
  };

  std::vector<AggregateRow> rows;
  std::uint64_t stream = 0;
  for (const auto& [name, get] : fields) {
    std::vector<double> vals;
    for (const MetricsReport& r : reports)
      if (const std::optional<double> v = get(r)) vals.push_back(*v);
    AggregateRow row;
    row.metric = name;
    row.count = static_cast<int>(vals.size());
    if (!vals.empty()) {
      double total = 0.0;
      for (const double v : vals) total += v;
      row.mean = total / static_cast<double>(vals.size());
      if (vals.size() >= 2) {
        double ss = 0.0;
        for (const double v : vals) ss += (v - row.mean) * (v - row.mean);
        row.stddev = std::sqrt(ss / static_cast<double>(vals.size() - 1));
        if (ci_resamples >= 100)
          row.ci = bootstrap_bca(vals, ci_resamples, level, seed + stream);
      }
    }
    rows.push_back(std::move(row));
    ++stream;
  }
  return rows;
}

}  // namespace certibias
