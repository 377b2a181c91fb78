#include "certibias/component_cert.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace certibias {

namespace {

void check_radius_inputs(double C, double gamma, double c, int n, int m, double phi) {
  if (!(C >= 0.0)) throw std::invalid_argument("bias bound C must be >= 0");
  if (!(gamma >= 0.0) || !(c >= 0.0))
    throw std::invalid_argument("gamma and c must be >= 0");
  if (n <= 0 || m <= 0) throw std::invalid_argument("n and m must be positive");
  if (!(phi > 0.0 && phi < 1.0)) throw std::invalid_argument("phi must lie in (0, 1)");
}

}  // namespace

double radius_lipschitz(double C, double gamma, double c, int n, int m, double phi) {
  check_radius_inputs(C, gamma, c, n, m, phi);
  return C + c * gamma * std::sqrt(2.0 * n * std::log(2.0 * m / phi));
}

double radius_variance(double C, double V, int m, double phi) {
  if (!(C >= 0.0)) throw std::invalid_argument("bias bound C must be >= 0");
  if (!(V >= 0.0)) throw std::invalid_argument("variance bound V must be >= 0");
  if (m <= 0) throw std::invalid_argument("m must be positive");
  if (!(phi > 0.0 && phi < 1.0)) throw std::invalid_argument("phi must lie in (0, 1)");
  return C + std::sqrt(V * static_cast<double>(m) / phi);
}

ProbabilityBound confidence_lipschitz(double eps, double C, double gamma, double c, int n, int m) {
  if (!(C >= 0.0)) throw std::invalid_argument("bias bound C must be >= 0");
  if (!(gamma >= 0.0) || !(c >= 0.0))
    throw std::invalid_argument("gamma and c must be >= 0");
  if (n <= 0 || m <= 0) throw std::invalid_argument("n and m must be positive");
  if (eps < C) throw std::invalid_argument("radius eps must be >= bias bound C");

  const double slack = eps - C;
  const double scale = c * gamma;
  double failure;
  if (scale == 0.0) {
    failure = slack > 0.0 ? 0.0 : 2.0 * static_cast<double>(m);
  } else {
    failure = 2.0 * static_cast<double>(m) *
              std::exp(-(slack * slack) / (2.0 * n * scale * scale));
  }
  ProbabilityBound b;
  b.raw = 1.0 - failure;
  b.vacuous = failure >= 1.0;
  b.value = std::clamp(b.raw, 0.0, 1.0);
  return b;
}

ProbabilityBound confidence_variance(double eps, double C, double V, int m) {
  if (!(C >= 0.0)) throw std::invalid_argument("bias bound C must be >= 0");
  if (!(V >= 0.0)) throw std::invalid_argument("variance bound V must be >= 0");
  if (m <= 0) throw std::invalid_argument("m must be positive");
  if (!(eps > C)) throw std::invalid_argument("radius eps must exceed bias bound C");

  const double slack = eps - C;
  const double failure = static_cast<double>(m) * V / (slack * slack);
  ProbabilityBound b;
  b.raw = 1.0 - failure;
  b.vacuous = failure >= 1.0;
  b.value = std::clamp(b.raw, 0.0, 1.0);
  return b;
}

Eigen::VectorXd corrected_bound(const ShiftTensor& s, const Eigen::VectorXd& b,
                                std::span<const int> examples) {
  if (b.size() != s.d)
    throw std::invalid_argument("correction vector length must match component count");
  const Eigen::MatrixXd means = per_example_means(s, examples);
  return (means.rowwise() - b.transpose()).cwiseAbs().colwise().maxCoeff();
}

Eigen::VectorXd midrange_bias(const ShiftTensor& s, std::span<const int> examples) {
  const Eigen::MatrixXd means = per_example_means(s, examples);
  return 0.5 * (means.colwise().maxCoeff() + means.colwise().minCoeff());
}

double lipschitz_of_linear(const Eigen::VectorXd& w) { return w.norm(); }

BridgeBudget bridge_budget(double phi, double eps_box, double cvb) {
  if (!(phi > 0.0 && phi < 1.0)) throw std::invalid_argument("phi must lie in (0, 1)");
  if (!(eps_box >= 0.0 && eps_box < 1.0))
    throw std::invalid_argument("eps_box must lie in [0, 1)");
  if (!(cvb >= 1.0)) throw std::invalid_argument("density ratio estimate cvb must be >= 1");
  if (!(phi > eps_box))
    throw std::invalid_argument("budget phi must exceed the out-of-box mass eps_box");

  BridgeBudget b;
  b.phi = phi;
  b.eps_box = eps_box;
  b.cvb = cvb;
  b.uniform_budget = std::min(1.0, (phi - eps_box) / cvb);
  b.kappa = -std::log(b.uniform_budget);
  b.vacuous = b.kappa <= 0.0;
  return b;
}

}  // namespace certibias
