#pragma once

#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "twoscale/kernels.hpp"

/// Checks of the two-scale criteria on the y-score of a conditional family:
///
///   Var:  E[<u, score>^2]          <= Lbar^2 |u|^2
///   MGF:  log E[exp <u, score>]    <= Lbar^2 |u|^2 / 2
///
/// Both quantify over every u and y. Gaussian families with an affine mean
/// map are certified globally by eigen-analysis; everything else is certified
/// on the supplied probe grids only.
namespace twoscale::criteria {

enum class CriterionKind { Var, MGF };

enum class CheckMethod { Analytic, MonteCarlo };

enum class Certification { Global, GridCertified };

/// Standard errors tolerated before a Monte Carlo probe counts as violated.
inline constexpr double kSlackSigmas = 5.0;

struct Probe {
  Vector y;
  Vector u;       // unit direction
  double scale;   // lambda multiplying u (1 for Var)
  double observed;
  double bound;
  double margin;  // bound - observed
  double slack;   // statistical slack granted (0 for analytic probes)
  bool overflow = false;
};

struct CriterionReport {
  CriterionKind kind;
  double l_bar;
  CheckMethod method;
  Certification certification;
  std::vector<Probe> probes;
  /// Largest observed second moment (Var) or log-MGF / (scale^2/2) (MGF),
  /// i.e. the smallest L-bar^2 consistent with the probes.
  double sup_observed = 0.0;
  bool violated = false;
  bool overflow_warning = false;
};

/// Request to force the Monte Carlo path even for Gaussian families.
enum class MethodRequest { Auto, MonteCarlo };

/// Throws NonUnitProbe when some u is not unit-norm within 1e-12 and
/// SamplerUnavailable when Monte Carlo is needed but impossible. The Monte Carlo
/// draws at y_grid[i] come from stream i of `seed`.
CriterionReport check_var_criterion(const kernels::ConditionalFamily& family,
                                    const std::vector<Vector>& y_grid,
                                    const std::vector<Vector>& u_grid,
                                    double l_bar, int n_mc, std::uint64_t seed,
                                    MethodRequest method = MethodRequest::Auto);

CriterionReport check_mgf_criterion(const kernels::ConditionalFamily& family,
                                    const std::vector<Vector>& y_grid,
                                    const std::vector<Vector>& u_grid,
                                    const std::vector<double>& lambda_grid,
                                    double l_bar, int n_mc, std::uint64_t seed,
                                    MethodRequest method = MethodRequest::Auto);

/// Sufficient conditions on the family implying one or both criteria.
struct BoundedScore { double b; };
struct BoundedVariance { double b; };
struct LipschitzPlusPI { double lipschitz; double beta; };
struct SubGaussianScore { double sigma; };
struct LipschitzPlusLSI { double lipschitz; double beta; };

using SufficientCondition = std::variant<BoundedScore, BoundedVariance,
                                         LipschitzPlusPI, SubGaussianScore,
                                         LipschitzPlusLSI>;

struct ImpliedLBar {
  std::optional<double> var;
  std::optional<double> mgf;
};

/// Throws BadConfig on negative or non-finite constants.
ImpliedLBar derive_l_bar(const SufficientCondition& cond);

/// Coordinate unit vectors e_1..e_d.
std::vector<Vector> coordinate_directions(Index dim);

const char* to_string(CriterionKind kind);
const char* to_string(CheckMethod method);

}  // namespace twoscale::criteria
