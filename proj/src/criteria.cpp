#include "twoscale/criteria.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "twoscale/errors.hpp"

namespace twoscale::criteria {

namespace {

using kernels::ConditionalFamily;

// Relative round-off allowance for exact (analytic) comparisons.
constexpr double kAnalyticTolerance = 1e-12;

bool exceeds(double observed, double bound, double slack) {
  return observed > bound + slack + kAnalyticTolerance * std::max(1.0, std::abs(bound));
}

void validate_grids(const ConditionalFamily& family,
                    const std::vector<Vector>& y_grid,
                    const std::vector<Vector>& u_grid, double l_bar) {
  if (!(l_bar >= 0.0) || !std::isfinite(l_bar)) {
    throw BadConfig("L-bar must be finite and >= 0");
  }
  if (y_grid.empty() || u_grid.empty()) {
    throw BadConfig("probe grids must be non-empty");
  }
  for (const Vector& y : y_grid) {
    if (y.size() != family.dim_y()) throw BadConfig("y probe has wrong dimension");
  }
  for (const Vector& u : u_grid) {
    if (u.size() != family.dim_y()) throw BadConfig("u probe has wrong dimension");
    if (std::abs(u.norm() - 1.0) > 1e-12) {
      throw NonUnitProbe("probe direction is not unit-norm within 1e-12");
    }
  }
}

bool use_analytic(const ConditionalFamily& family, MethodRequest method) {
  return method == MethodRequest::Auto && family.gaussian_spec() != nullptr;
}

// Samples of h_i = <u, score(x_i, y)> for x_i ~ P_y, for every u in the grid.
// Row j of the result holds the samples for u_grid[j].
Matrix projected_scores(const ConditionalFamily& family, const Vector& y,
                        const std::vector<Vector>& u_grid, int n_mc, Rng& rng,
                        MethodRequest method) {
  if (n_mc < 2) throw BadConfig("n_mc must be >= 2 for Monte Carlo probes");
  if (!family.has_sampler()) {
    throw SamplerUnavailable("family '" + family.name() + "' has no sampler");
  }
  const Index dy = family.dim_y();
  Matrix grads(dy, n_mc);
  for (int i = 0; i < n_mc; ++i) {
    grads.col(i) = family.grad2_energy(family.sample(y, rng), y);
  }
  Vector expected;
  if (method == MethodRequest::Auto && family.has_expected_grad2()) {
    expected = family.expected_grad2(y);
  } else {
    expected = grads.rowwise().mean();
  }
  const Matrix scores = (-grads).colwise() + expected;
  Matrix u(static_cast<Index>(u_grid.size()), dy);
  for (std::size_t j = 0; j < u_grid.size(); ++j) {
    u.row(static_cast<Index>(j)) = u_grid[j].transpose();
  }
  return u * scores;
}

double sample_mean(const Eigen::ArrayXd& a) { return a.mean(); }

double sample_sd(const Eigen::ArrayXd& a) {
  const double m = a.mean();
  return std::sqrt((a - m).square().sum() / static_cast<double>(a.size() - 1));
}

Certification certification_for(const ConditionalFamily& family, bool analytic) {
  if (analytic && family.gaussian_spec()->is_affine()) return Certification::Global;
  return Certification::GridCertified;
}

}  // namespace

CriterionReport check_var_criterion(const ConditionalFamily& family,
                                    const std::vector<Vector>& y_grid,
                                    const std::vector<Vector>& u_grid,
                                    double l_bar, int n_mc, std::uint64_t seed,
                                    MethodRequest method) {
  validate_grids(family, y_grid, u_grid, l_bar);
  const bool analytic = use_analytic(family, method);
  CriterionReport report{CriterionKind::Var, l_bar,
                         analytic ? CheckMethod::Analytic : CheckMethod::MonteCarlo,
                         certification_for(family, analytic), {}, 0.0, false, false};
  const double bound = l_bar * l_bar;

  for (std::size_t i = 0; i < y_grid.size(); ++i) {
    const Vector& y = y_grid[i];
    if (analytic) {
      const Matrix s = family.gaussian_spec()->score_covariance(y);
      // Supremum over all unit u at this y.
      const double sup_u = lambda_max(s);
      report.sup_observed = std::max(report.sup_observed, sup_u);
      report.violated = report.violated || exceeds(sup_u, bound, 0.0);
      for (const Vector& u : u_grid) {
        const double obs = u.dot(s * u);
        report.probes.push_back({y, u, 1.0, obs, bound, bound - obs, 0.0});
        report.violated = report.violated || exceeds(obs, bound, 0.0);
      }
      continue;
    }
    Rng rng = make_stream(seed, i);
    const Matrix h = projected_scores(family, y, u_grid, n_mc, rng, method);
    for (std::size_t j = 0; j < u_grid.size(); ++j) {
      const Eigen::ArrayXd sq = h.row(static_cast<Index>(j)).array().square();
      const double obs = sample_mean(sq);
      const double slack = kSlackSigmas * sample_sd(sq) / std::sqrt(sq.size());
      report.probes.push_back({y, u_grid[j], 1.0, obs, bound, bound - obs, slack});
      report.sup_observed = std::max(report.sup_observed, obs);
      report.violated = report.violated || exceeds(obs, bound, slack);
    }
  }
  return report;
}

CriterionReport check_mgf_criterion(const ConditionalFamily& family,
                                    const std::vector<Vector>& y_grid,
                                    const std::vector<Vector>& u_grid,
                                    const std::vector<double>& lambda_grid,
                                    double l_bar, int n_mc, std::uint64_t seed,
                                    MethodRequest method) {
  validate_grids(family, y_grid, u_grid, l_bar);
  if (lambda_grid.empty()) throw BadConfig("lambda grid must be non-empty");
  for (double lam : lambda_grid) {
    if (!std::isfinite(lam) || lam == 0.0) {
      throw BadConfig("lambda probes must be finite and non-zero");
    }
  }
  const bool analytic = use_analytic(family, method);
  CriterionReport report{CriterionKind::MGF, l_bar,
                         analytic ? CheckMethod::Analytic : CheckMethod::MonteCarlo,
                         certification_for(family, analytic), {}, 0.0, false, false};

  for (std::size_t i = 0; i < y_grid.size(); ++i) {
    const Vector& y = y_grid[i];
    if (analytic) {
      // <u, score> is centred Gaussian, so log E exp(lambda <u, score>) =
      // lambda^2 u^T S u / 2 exactly.
      const Matrix s = family.gaussian_spec()->score_covariance(y);
      const double sup_u = lambda_max(s);
      report.sup_observed = std::max(report.sup_observed, sup_u);
      report.violated = report.violated || exceeds(sup_u, l_bar * l_bar, 0.0);
      for (const Vector& u : u_grid) {
        const double var = u.dot(s * u);
        for (double lam : lambda_grid) {
          const double obs = 0.5 * lam * lam * var;
          const double bound = 0.5 * l_bar * l_bar * lam * lam;
          report.probes.push_back({y, u, lam, obs, bound, bound - obs, 0.0});
          report.violated = report.violated || exceeds(obs, bound, 0.0);
        }
      }
      continue;
    }
    Rng rng = make_stream(seed, i);
    const Matrix h = projected_scores(family, y, u_grid, n_mc, rng, method);
    for (std::size_t j = 0; j < u_grid.size(); ++j) {
      for (double lam : lambda_grid) {
        const Eigen::ArrayXd a = lam * h.row(static_cast<Index>(j)).array();
        const double shift = a.maxCoeff();
        const Eigen::ArrayXd e = (a - shift).exp();
        const double m = e.mean();
        const double obs = shift + std::log(m);
        const double slack =
            kSlackSigmas * sample_sd(e) / (std::sqrt(e.size()) * m);
        const double bound = 0.5 * l_bar * l_bar * lam * lam;
        Probe p{y, u_grid[j], lam, obs, bound, bound - obs, slack};
        if (!std::isfinite(obs) || !std::isfinite(slack)) {
          p.overflow = true;
          report.overflow_warning = true;
          report.probes.push_back(p);
          continue;
        }
        report.probes.push_back(p);
        report.sup_observed = std::max(report.sup_observed, 2.0 * obs / (lam * lam));
        report.violated = report.violated || exceeds(obs, bound, slack);
      }
    }
  }
  return report;
}

ImpliedLBar derive_l_bar(const SufficientCondition& cond) {
  auto check = [](double v) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw BadConfig("sufficient-condition constants must be finite and >= 0");
    }
    return v;
  };
  return std::visit(
      [&](const auto& c) -> ImpliedLBar {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, BoundedScore>) {
          return {check(c.b), c.b};
        } else if constexpr (std::is_same_v<T, BoundedVariance>) {
          return {check(c.b), std::nullopt};
        } else if constexpr (std::is_same_v<T, LipschitzPlusPI>) {
          return {std::sqrt(check(c.beta)) * check(c.lipschitz), std::nullopt};
        } else if constexpr (std::is_same_v<T, SubGaussianScore>) {
          return {2.0 * check(c.sigma), c.sigma};
        } else {
          return {std::nullopt, std::sqrt(check(c.beta)) * check(c.lipschitz)};
        }
      },
      cond);
}

std::vector<Vector> coordinate_directions(Index dim) {
  std::vector<Vector> out;
  for (Index i = 0; i < dim; ++i) out.push_back(Vector::Unit(dim, i));
  return out;
}

const char* to_string(CriterionKind kind) {
  return kind == CriterionKind::Var ? "Var" : "MGF";
}

const char* to_string(CheckMethod method) {
  return method == CheckMethod::Analytic ? "analytic" : "monte_carlo";
}

}  // namespace twoscale::criteria
