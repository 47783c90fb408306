#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "twoscale/samplers.hpp"

/// Empirical certificates of Poincare and log-Sobolev constants over sample
/// clouds, and the Monte Carlo / bias split of an estimation error.
namespace twoscale::estimators {

enum class FamilyKind { Linear, Quadratic, ExpLinear, Custom };

/// Smooth test function. For closed-form Gaussian expectations the family
/// parameters are kept alongside the callables:
///   Linear     <u, x>
///   Quadratic  x^T A x + <b, x> + c
///   ExpLinear  exp(lambda <u, x> / 2)
struct TestFunction {
  std::string id;
  FamilyKind family;
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;

  Vector u;
  Matrix a;
  Vector b;
  double c = 0.0;
  double lambda = 0.0;
};

TestFunction linear_function(std::string id, Vector u);
TestFunction quadratic_function(std::string id, Matrix a, Vector b, double c);
TestFunction exp_linear_function(std::string id, double lambda, Vector u);
TestFunction custom_function(std::string id,
                             std::function<double(const Vector&)> value,
                             std::function<Vector(const Vector&)> gradient);

/// d coordinate functions, the d(d+1)/2 products x_i x_j + 1, and
/// exp(lambda <v, x> / 2) for lambda in {-0.25, -0.1, 0.1, 0.25} along the
/// leading (at most two) eigenvectors v of the cloud covariance.
std::vector<TestFunction> standard_function_family(const samplers::SampleCloud& cloud);

/// Plug-in variance (1/N) with compensated, pivot-shifted means.
double empirical_variance(std::span<const double> values);

/// mean(f^2 log f^2) - mean(f^2) log mean(f^2) from samples of f.
/// Throws DomainError if any f^2 < 1e-300.
double empirical_entropy_of_square(std::span<const double> f_values);

struct FunctionRatio {
  std::string id;
  double numerator;
  double denominator;
  double ratio;
  double std_err;
  bool pass;
};

struct RatioCertificate {
  Inequality inequality;
  double predicted;
  double observed_sup_ratio;
  std::vector<FunctionRatio> per_function;
  bool pass;
  /// Functions skipped for a degenerate denominator (E|grad f|^2 < 1e-12).
  std::vector<std::string> skipped;
};

/// Number of batches in the batch-means standard error.
inline constexpr int kBatches = 50;
inline constexpr int kMinCloudSize = 1000;
inline constexpr double kSlackMultiplier = 5.0;

/// var[f] / E|grad f|^2 per function; passes iff every ratio <= gamma + 5 se.
/// Throws BadConfig if the cloud has fewer than 1000 points.
RatioCertificate certify_pi(const samplers::SampleCloud& cloud,
                            const std::vector<TestFunction>& fns, double gamma);

/// ent[f^2] / (2 E|grad f|^2) per function. Throws DomainError when f^2
/// underflows on the cloud.
RatioCertificate certify_lsi(const samplers::SampleCloud& cloud,
                             const std::vector<TestFunction>& fns, double gamma);

RatioCertificate certify(Inequality inequality, const samplers::SampleCloud& cloud,
                         const std::vector<TestFunction>& fns, double gamma);

/// `fn_id,numerator,denominator,ratio,std_err,pass`, 17 significant digits.
void write_certificate_csv(std::ostream& out, const RatioCertificate& cert);

/// E f(X) for X ~ N(mean, cov). Throws Unavailable for Custom functions.
double gaussian_expectation(const TestFunction& f, const samplers::GaussianLaw& law);

/// E f under the stationary law N(0, M^{-1}) of a Quadratic target.
/// Throws Unavailable for other targets.
double target_expectation(const TestFunction& f, const kernels::TargetPotential& target);

struct ErrorSplit {
  double total;      // |mean_N f - E_target f|
  double mc_term;    // |mean_N f - E_algorithm f|
  double bias_term;  // |E_algorithm f - E_target f|
};

ErrorSplit estimation_error_split(const samplers::SampleCloud& cloud,
                                  const TestFunction& f,
                                  const samplers::GaussianLaw& algorithm_law,
                                  double target_mean);

/// Uses the analytic law of the cloud's iteration under `config`.
/// Throws Unavailable when the target is not Quadratic.
ErrorSplit estimation_error_split(const samplers::SampleCloud& cloud,
                                  const TestFunction& f,
                                  const samplers::ChainConfig& config,
                                  double target_mean);

const char* to_string(FamilyKind kind);

}  // namespace twoscale::estimators
