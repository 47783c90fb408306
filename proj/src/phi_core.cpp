#include "twoscale/phi_core.hpp"

#include <cmath>
#include <string>

#include "twoscale/errors.hpp"
#include "twoscale/numeric.hpp"

namespace twoscale::phi {

namespace {

void require_domain(const PhiFunction& phi, double t, const char* where) {
  if (!phi.in_domain(t)) {
    throw DomainError(std::string(where) + ": argument " + std::to_string(t) +
                      " outside the generator's domain");
  }
}

void require_legendre(const PhiFunction& phi, const char* where) {
  if (!phi.is_legendre()) {
    throw Unsupported(std::string(where) +
                      ": conjugate machinery is not available for PowerP");
  }
}

// J^Phi over raw weights; weights are assumed validated by the caller.
double entropy_raw(const PhiFunction& phi, std::span<const double> weights,
                   std::span<const double> f) {
  if (f.size() != weights.size()) {
    throw DomainError("phi_entropy: function size does not match atoms");
  }
  std::vector<double> phi_f(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    require_domain(phi, f[i], "phi_entropy");
    phi_f[i] = phi_eval(phi, f[i]).value;
  }
  const double m = weighted_mean(f, weights);
  require_domain(phi, m, "phi_entropy(mean)");
  return weighted_mean(phi_f, weights) - phi_eval(phi, m).value;
}

}  // namespace

PhiFunction PhiFunction::power(double p) {
  if (!(p > 1.0 && p <= 2.0)) {
    throw DomainError("PowerP exponent must lie in (1, 2]");
  }
  return PhiFunction(PhiKind::PowerP, p);
}

bool PhiFunction::in_domain(double t) const {
  if (!std::isfinite(t)) return false;
  if (kind_ == PhiKind::Square) return true;
  return t >= kPositiveFloor;
}

PhiValue phi_eval(const PhiFunction& phi, double t) {
  require_domain(phi, t, "phi_eval");
  switch (phi.kind()) {
    case PhiKind::Square:
      return {t * t, 2.0 * t, 2.0};
    case PhiKind::XLogX: {
      const double lt = std::log(t);
      return {t * lt, 1.0 + lt, 1.0 / t};
    }
    case PhiKind::PowerP: {
      const double p = phi.exponent();
      const double tp = std::pow(t, p);
      return {(tp - 1.0) / (p - 1.0), p * std::pow(t, p - 1.0) / (p - 1.0),
              p * std::pow(t, p - 2.0)};
    }
  }
  return {0.0, 0.0, 0.0};
}

double conjugate_eval(const PhiFunction& phi, double s) {
  require_legendre(phi, "conjugate_eval");
  if (!std::isfinite(s)) throw DomainError("conjugate_eval: non-finite slope");
  if (phi.kind() == PhiKind::Square) return 0.25 * s * s;
  return std::exp(s - 1.0);
}

double conjugate_derivative(const PhiFunction& phi, double s) {
  require_legendre(phi, "conjugate_derivative");
  if (!std::isfinite(s)) {
    throw DomainError("conjugate_derivative: non-finite slope");
  }
  if (phi.kind() == PhiKind::Square) return 0.5 * s;
  return std::exp(s - 1.0);
}

FiniteDistribution::FiniteDistribution(std::vector<double> weights)
    : weights_(std::move(weights)) {
  if (weights_.empty()) throw DomainError("distribution has no atoms");
  CompensatedSum total;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw DomainError("distribution weights must be finite and >= 0");
    }
    total.add(w);
  }
  if (std::abs(total.value() - 1.0) > 1e-12) {
    throw DomainError("distribution weights must sum to 1 within 1e-12");
  }
}

FiniteDistribution FiniteDistribution::uniform(std::size_t n) {
  return FiniteDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

FiniteDistribution FiniteDistribution::point_mass(std::size_t n, std::size_t at) {
  std::vector<double> w(n, 0.0);
  w.at(at) = 1.0;
  return FiniteDistribution(std::move(w));
}

DiscreteMixtureModel::DiscreteMixtureModel(
    FiniteDistribution mixing, std::vector<FiniteDistribution> components)
    : mixing_(std::move(mixing)), components_(std::move(components)) {
  if (components_.size() != mixing_.size()) {
    throw DomainError("one component is required per mixing label");
  }
  for (const auto& c : components_) {
    if (c.size() != components_.front().size()) {
      throw DomainError("components must share the same ground set");
    }
  }
}

FiniteDistribution DiscreteMixtureModel::mixture() const {
  std::vector<double> w(num_atoms());
  for (std::size_t x = 0; x < num_atoms(); ++x) {
    CompensatedSum s;
    for (std::size_t y = 0; y < num_labels(); ++y) {
      s.add(mixing_[y] * components_[y][x]);
    }
    w[x] = s.value();
  }
  return FiniteDistribution(std::move(w));
}

double phi_entropy(const PhiFunction& phi, const FiniteDistribution& dist,
                   std::span<const double> f) {
  return entropy_raw(phi, dist.weights(), f);
}

EntropyDecomposition entropy_decomposition(const PhiFunction& phi,
                                           const DiscreteMixtureModel& model,
                                           const Matrix& f) {
  const std::size_t nx = model.num_atoms();
  const std::size_t ny = model.num_labels();
  if (static_cast<std::size_t>(f.rows()) != nx ||
      static_cast<std::size_t>(f.cols()) != ny) {
    throw DomainError("entropy_decomposition: f must be (atoms x labels)");
  }

  std::vector<double> joint_w;
  std::vector<double> joint_f;
  joint_w.reserve(nx * ny);
  joint_f.reserve(nx * ny);
  for (std::size_t y = 0; y < ny; ++y) {
    for (std::size_t x = 0; x < nx; ++x) {
      joint_w.push_back(model.mixing()[y] * model.component(y)[x]);
      joint_f.push_back(f(x, y));
    }
  }
  const double total = entropy_raw(phi, joint_w, joint_f);

  std::vector<double> inner(ny);
  std::vector<double> cond_mean(ny);
  std::vector<double> column(nx);
  for (std::size_t y = 0; y < ny; ++y) {
    for (std::size_t x = 0; x < nx; ++x) column[x] = f(x, y);
    inner[y] = entropy_raw(phi, model.component(y).weights(), column);
    cond_mean[y] = weighted_mean(column, model.component(y).weights());
  }
  const double within = weighted_mean(inner, model.mixing().weights());
  const double between = entropy_raw(phi, model.mixing().weights(), cond_mean);
  return {total, within, between};
}

EntropyDecomposition entropy_decomposition(const PhiFunction& phi,
                                           const DiscreteMixtureModel& model,
                                           std::span<const double> f_of_x) {
  if (f_of_x.size() != model.num_atoms()) {
    throw DomainError("entropy_decomposition: f must have one value per atom");
  }
  Matrix f(static_cast<Index>(model.num_atoms()),
           static_cast<Index>(model.num_labels()));
  for (Index x = 0; x < f.rows(); ++x) f.row(x).setConstant(f_of_x[x]);
  EntropyDecomposition out = entropy_decomposition(phi, model, f);
  out.total = phi_entropy(phi, model.mixture(), f_of_x);
  return out;
}

double duality_gap(const PhiFunction& phi, const FiniteDistribution& dist,
                   std::span<const double> f, std::span<const double> g) {
  require_legendre(phi, "duality_gap");
  const std::size_t n = dist.size();
  if (f.size() != n || g.size() != n) {
    throw DomainError("duality_gap: function sizes do not match atoms");
  }
  const auto w = dist.weights();

  std::vector<double> slope(n);
  std::vector<double> conj_of_slope(n);
  for (std::size_t i = 0; i < n; ++i) {
    require_domain(phi, g[i], "duality_gap(g)");
    slope[i] = phi_eval(phi, f[i]).first;
    conj_of_slope[i] = conjugate_eval(phi, slope[i]);
  }
  const double mean_f = weighted_mean(f, w);
  const double mean_g = weighted_mean(g, w);
  const double mean_slope = weighted_mean(slope, w);

  std::vector<double> centred(n);
  for (std::size_t i = 0; i < n; ++i) {
    centred[i] = (slope[i] - mean_slope) * g[i];
  }
  const double lhs = weighted_mean(centred, w);

  const double slope_at_mean = phi_eval(phi, mean_f).first;
  const double conj_entropy = weighted_mean(conj_of_slope, w) -
                              conjugate_eval(phi, slope_at_mean);
  const double rhs = entropy_raw(phi, w, g) +
                     mean_g * (slope_at_mean - mean_slope) + conj_entropy;
  return rhs - lhs;
}

}  // namespace twoscale::phi
