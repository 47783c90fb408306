#include "twoscale/constants.hpp"

#include <algorithm>
#include <cmath>

#include "twoscale/errors.hpp"
#include "twoscale/numeric.hpp"

namespace twoscale::constants {

namespace {

void validate(const TwoScaleInput& in) {
  if (!(in.alpha > 0.0) || !(in.beta > 0.0) || !(in.l_bar >= 0.0) ||
      !std::isfinite(in.alpha) || !std::isfinite(in.beta) ||
      !std::isfinite(in.l_bar)) {
    throw BadConfig("two-scale input needs alpha, beta > 0 and L-bar >= 0");
  }
}

RecursionState make_state(Scheme scheme, double c, double d, double alpha0,
                          int k_max, bool diverges) {
  if (k_max < 0) throw BadConfig("k_max must be >= 0");
  if (!(alpha0 >= 0.0) || !std::isfinite(alpha0)) {
    throw BadConfig("alpha0 must be finite and >= 0");
  }
  RecursionState s{scheme, c, d, {}, {}, std::nullopt, diverges, std::nullopt, {}};
  s.history.reserve(static_cast<std::size_t>(k_max) + 1);
  s.closed_form.reserve(static_cast<std::size_t>(k_max) + 1);
  double a = alpha0;
  for (int k = 0; k <= k_max; ++k) {
    s.history.push_back(a);
    s.closed_form.push_back(affine_recursion_closed_form(c, d, alpha0, k));
    a = c * a + d;
  }
  if (!diverges) s.limit = d / (1.0 - c);
  return s;
}

}  // namespace

double zeta(const TwoScaleInput& in) {
  validate(in);
  const double a = in.alpha;
  const double b = in.beta;
  // The square root collapses to |b - a|, which does not round to max exactly.
  if (in.l_bar == 0.0) return std::max(a, b);
  const double abl2 = a * b * in.l_bar * in.l_bar;
  const double skew = b - a + abl2;
  return 0.5 * (a + b + abl2 + std::sqrt(4.0 * a * a * b * in.l_bar * in.l_bar +
                                         skew * skew));
}

double xi(const TwoScaleInput& in) {
  validate(in);
  return in.beta + in.alpha * in.beta * in.l_bar * in.l_bar;
}

ProductConvolution product_convolution_constants(double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) {
    throw BadConfig("product/convolution constants need alpha, beta > 0");
  }
  return {std::max(alpha, beta), alpha + beta};
}

double affine_recursion_closed_form(double c, double d, double a0, int n) {
  if (n < 0) throw BadConfig("affine recursion index must be >= 0");
  const double cn = std::pow(c, n);
  double geometric;
  if (std::abs(1.0 - c) < 1e-6) {
    CompensatedSum s;
    double term = 1.0;
    for (int i = 0; i < n; ++i) {
      s.add(term);
      term *= c;
    }
    geometric = s.value();
  } else {
    geometric = (1.0 - cn) / (1.0 - c);
  }
  return d * geometric + cn * a0;
}

double ula_limit_min_formula(double mu, double lambda, double eta) {
  return 1.0 / std::min(lambda - 0.5 * eta * lambda * lambda,
                        mu - 0.5 * eta * mu * mu);
}

RecursionState ula_recursion(double mu, double lambda, double eta,
                             double alpha0, int k_max) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw BadStep("eta must be > 0");
  if (!(mu > 0.0) || !(lambda >= mu) || !std::isfinite(lambda)) {
    throw BadStep("ULA recursion needs 0 < mu <= lambda");
  }
  const double c_ula = std::max(std::abs(1.0 - eta * lambda), std::abs(1.0 - eta * mu));
  const bool diverges = c_ula >= 1.0;
  RecursionState s =
      make_state(Scheme::ULA, c_ula * c_ula, 2.0 * eta, alpha0, k_max, diverges);
  if (!diverges) s.limit_alt = ula_limit_min_formula(mu, lambda, eta);
  s.params = {{"mu", mu}, {"lambda", lambda}, {"eta", eta}, {"c_ula", c_ula}};
  return s;
}

RecursionState proximal_recursion(double beta, double eta, double alpha0,
                                  int k_max) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw BadStep("eta must be > 0");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw BadStep("beta must be > 0");
  const double ratio = beta / eta;
  const double c_k = ratio * ratio;
  const bool diverges = beta >= eta;
  // alpha / eta follows c_K (alpha / eta) + c_K + sqrt(c_K).
  RecursionState s = make_state(Scheme::Proximal, c_k, eta * (c_k + ratio),
                                alpha0, k_max, diverges);
  if (!diverges) s.limit_alt = 1.0 / (1.0 / beta - 1.0 / eta);
  s.params = {{"beta", beta}, {"eta", eta}, {"c_K", c_k}, {"d_K", c_k + ratio}};
  return s;
}

EhmcSchedule ehmc_schedule(const Matrix& m, double c) {
  if (!(c >= 2.0) || !std::isfinite(c)) throw BadStep("eHMC needs c >= 2");
  const SymmetricEigen eig = symmetric_eigen(m);
  const double lmin = eig.values.minCoeff();
  const double lmax = eig.values.maxCoeff();
  if (!(lmin > 1e-14)) throw NotSPD("eHMC recursion needs positive-definite M");
  const double kappa = lmax / lmin;
  return {kappa, 1.0 / (c * std::sqrt(lmax)), 1.0 / (c * std::sqrt(kappa)),
          8.0 * c * c * kappa};
}

RecursionState ehmc_recursion(const Matrix& m, double c, double alpha0,
                              int k_max) {
  const EhmcSchedule sched = ehmc_schedule(m, c);
  const double cz = std::cos(sched.z);
  RecursionState s = make_state(Scheme::EHMC, cz * cz,
                                sched.t * sched.t * flow_phi(sched.z), alpha0,
                                k_max, false);
  s.limit_alt = 1.0 / lambda_min(m);
  s.params = {{"c", c},
              {"kappa", sched.kappa},
              {"T", sched.t},
              {"kernel_pi_constant", sched.kernel_pi_constant}};
  return s;
}

double perturbed_lsi_constant(double strong_convexity, const Perturbation& p) {
  if (!(strong_convexity > 0.0)) {
    throw BadConfig("strong convexity must be > 0");
  }
  return std::visit(
      [&](const auto& q) -> double {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, HolleyStroock>) {
          if (!(q.oscillation >= 0.0)) throw BadConfig("B must be >= 0");
          return std::exp(q.oscillation) / strong_convexity;
        } else {
          if (!(q.lipschitz >= 0.0)) throw BadConfig("L must be >= 0");
          const double l = q.lipschitz;
          return std::exp(l * l / strong_convexity +
                          4.0 * l / std::sqrt(strong_convexity)) /
                 strong_convexity;
        }
      },
      p);
}

double proximal_backward_beta(double mu, double eta,
                              const std::optional<Perturbation>& p) {
  if (!(eta > 0.0)) throw BadStep("eta must be > 0");
  if (!(mu > 0.0)) throw BadConfig("mu must be > 0");
  const double s = mu + 1.0 / eta;
  if (!p) return 1.0 / s;
  return perturbed_lsi_constant(s, *p);
}

double proximal_step_threshold(double mu, const Perturbation& p) {
  if (!(mu > 0.0)) throw BadConfig("mu must be > 0");
  return std::visit(
      [&](const auto& q) -> double {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, HolleyStroock>) {
          return std::expm1(q.oscillation) / mu;
        } else {
          const double l = q.lipschitz;
          return std::expm1(l * l / mu + 4.0 * l / std::sqrt(mu)) / mu;
        }
      },
      p);
}

const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::ULA: return "ULA";
    case Scheme::Proximal: return "Proximal";
    case Scheme::EHMC: return "EHMC";
  }
  return "?";
}

}  // namespace twoscale::constants
