#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "twoscale/types.hpp"

/// Closed-form isoperimetric constants for joint and mixture laws, and the
/// recursions they induce along ULA, the proximal sampler and exact HMC.
namespace twoscale::constants {

/// Mixing law satisfies the inequality with `alpha`, every component with
/// `beta`, and the kernel meets the matching criterion with `l_bar`.
struct TwoScaleInput {
  double alpha;
  double beta;
  double l_bar;
  Inequality inequality = Inequality::PI;
};

/// Joint-law constant
///   zeta = (a + b + a b L^2 + sqrt(4 a^2 b L^2 + (b - a + a b L^2)^2)) / 2,
/// the value of inf_C max{b + a (1 + 1/C) L^2 b, a (1 + C)}.
/// Throws BadConfig unless alpha, beta > 0 and l_bar >= 0.
double zeta(const TwoScaleInput& in);

/// Mixture-law constant xi = beta + alpha beta L^2.
double xi(const TwoScaleInput& in);

struct ProductConvolution {
  double product;      // max{alpha, beta}
  double convolution;  // alpha + beta
};

ProductConvolution product_convolution_constants(double alpha, double beta);

/// a_n for a_{k+1} = c a_k + d, a_0 = a0: d * sum_{i<n} c^i + c^n a0.
double affine_recursion_closed_form(double c, double d, double a0, int n);

enum class Scheme { ULA, Proximal, EHMC };

/// alpha^(k) along a sampler, written as alpha^(k+1) = c alpha^(k) + d.
struct RecursionState {
  Scheme scheme;
  double c;
  double d;
  std::vector<double> history;      // iterated alpha^(0..k_max)
  std::vector<double> closed_form;  // affine closed form at each k
  std::optional<double> limit;      // d / (1 - c) when convergent
  bool diverges;
  /// Scheme-specific second route to the limit (ULA min-formula, eHMC
  /// 1 / lambda_min(M), proximal (1/beta - 1/eta)^{-1}).
  std::optional<double> limit_alt;
  /// Free-form parameters for reporting, e.g. {"eta", 0.5}.
  std::vector<std::pair<std::string, double>> params;
};

/// alpha^(k+1) = 2 eta + c_ULA^2 alpha^(k) for a mu-strongly convex,
/// lambda-smooth target. Throws BadStep unless eta > 0, 0 < mu <= lambda and
/// alpha0 >= 0.
RecursionState ula_recursion(double mu, double lambda, double eta,
                             double alpha0, int k_max);

/// alpha^(k+1) = beta + (alpha^(k) + eta) beta^2 / eta^2. Diverges iff
/// beta >= eta.
RecursionState proximal_recursion(double beta, double eta, double alpha0,
                                  int k_max);

/// Exact HMC on V(x) = x^T M x / 2 with T = 1 / (c sqrt(lambda_max)):
///   alpha^(k+1) = T^2 phi(z) + cos^2(z) alpha^(k),  z = 1 / (c sqrt(kappa)).
/// Throws NotSPD for M and BadStep for c < 2.
RecursionState ehmc_recursion(const Matrix& m, double c, double alpha0,
                              int k_max);

struct EhmcSchedule {
  double kappa;             // lambda_max / lambda_min
  double t;                 // integration time
  double z;                 // 1 / (c sqrt(kappa))
  double kernel_pi_constant;  // 8 c^2 kappa
};

EhmcSchedule ehmc_schedule(const Matrix& m, double c);

/// Bounded-oscillation perturbation of the potential.
struct HolleyStroock { double oscillation; };
/// Lipschitz perturbation of the potential.
struct BrigatiLipschitz { double lipschitz; };
using Perturbation = std::variant<HolleyStroock, BrigatiLipschitz>;

/// LSI constant of exp(-(U + W)) where U is `strong_convexity`-strongly
/// convex and W is the perturbation:
///   Holley-Stroock:  e^B / s
///   Lipschitz:       exp(L^2 / s + 4 L / sqrt(s)) / s
double perturbed_lsi_constant(double strong_convexity, const Perturbation& p);

/// Backward-kernel constant of the proximal sampler with step eta on a
/// (mu-strongly convex + perturbation) target; strong convexity mu + 1/eta.
double proximal_backward_beta(double mu, double eta,
                              const std::optional<Perturbation>& p);

/// Step sizes above this value guarantee beta < eta for the proximal sampler:
///   Holley-Stroock:  (e^B - 1) / mu
///   Lipschitz:       (exp(L^2 / mu + 4 L / sqrt(mu)) - 1) / mu
double proximal_step_threshold(double mu, const Perturbation& p);

/// Limit of the ULA recursion from the strongly-convex formula
///   min{lambda - eta lambda^2 / 2, mu - eta mu^2 / 2}^{-1}.
double ula_limit_min_formula(double mu, double lambda, double eta);

const char* to_string(Scheme s);

}  // namespace twoscale::constants
