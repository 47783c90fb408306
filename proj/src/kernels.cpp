#include "twoscale/kernels.hpp"

#include <cmath>
#include <memory>
#include <numbers>

#include "twoscale/errors.hpp"

namespace twoscale::kernels {

namespace {

constexpr double kEigenFloor = 1e-14;
constexpr long kMaxRejectionAttempts = 1000000;

void require_positive_step(double eta, const char* what) {
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw BadStep(std::string(what) + " must be positive and finite");
  }
}

// Eigenvalues of an SPD matrix, clamped at kEigenFloor against round-off.
SymmetricEigen spd_eigen(const Matrix& m) {
  SymmetricEigen eig = symmetric_eigen(m);
  if (eig.values.minCoeff() < -kEigenFloor) {
    throw NotSPD("matrix has a negative eigenvalue");
  }
  eig.values = eig.values.cwiseMax(kEigenFloor);
  return eig;
}

}  // namespace

// ---------------------------------------------------------------------------
// Perturbations and targets

Perturbation cosine_bump(double oscillation, Vector frequency) {
  if (!(oscillation >= 0.0)) throw BadConfig("oscillation must be >= 0");
  const double half = 0.5 * oscillation;
  Perturbation p;
  p.value = [half, frequency](const Vector& x) {
    return half * (1.0 + std::cos(frequency.dot(x)));
  };
  p.gradient = [half, frequency](const Vector& x) -> Vector {
    return -half * std::sin(frequency.dot(x)) * frequency;
  };
  p.hessian = [half, frequency](const Vector& x) -> Matrix {
    return -half * std::cos(frequency.dot(x)) * frequency * frequency.transpose();
  };
  return p;
}

Perturbation smoothed_abs(double lipschitz, Vector direction) {
  if (!(lipschitz >= 0.0)) throw BadConfig("Lipschitz constant must be >= 0");
  if (std::abs(direction.norm() - 1.0) > 1e-12) {
    throw BadConfig("smoothed_abs direction must be a unit vector");
  }
  Perturbation p;
  p.value = [lipschitz, direction](const Vector& x) {
    const double s = direction.dot(x);
    return lipschitz * std::sqrt(1.0 + s * s);
  };
  p.gradient = [lipschitz, direction](const Vector& x) -> Vector {
    const double s = direction.dot(x);
    return lipschitz * s / std::sqrt(1.0 + s * s) * direction;
  };
  p.hessian = [lipschitz, direction](const Vector& x) -> Matrix {
    const double s = direction.dot(x);
    return lipschitz * std::pow(1.0 + s * s, -1.5) * direction *
           direction.transpose();
  };
  return p;
}

TargetPotential::TargetPotential(PotentialKind kind, Matrix m)
    : kind_(kind), base_(std::move(m)) {
  const SymmetricEigen eig = symmetric_eigen(base_);
  if (eig.values.minCoeff() <= kEigenFloor) {
    throw NotSPD("quadratic part of the potential must be positive-definite");
  }
  mu_ = eig.values.minCoeff();
  lambda_ = eig.values.maxCoeff();
}

TargetPotential TargetPotential::quadratic(Matrix m) {
  return TargetPotential(PotentialKind::Quadratic, std::move(m));
}

TargetPotential TargetPotential::strongly_convex_plus_bounded(
    Matrix m, Perturbation bounded, std::optional<double> oscillation,
    std::optional<double> infimum) {
  if (oscillation && !(*oscillation >= 0.0)) {
    throw BadConfig("oscillation B must be >= 0");
  }
  TargetPotential t(PotentialKind::StronglyConvexPlusBounded, std::move(m));
  t.perturbation_ = std::move(bounded);
  t.oscillation_ = oscillation;
  t.infimum_ = infimum;
  return t;
}

TargetPotential TargetPotential::strongly_convex_plus_lipschitz(
    Matrix m, Perturbation lip, double lipschitz) {
  if (!(lipschitz >= 0.0)) throw BadConfig("Lipschitz constant L must be >= 0");
  TargetPotential t(PotentialKind::StronglyConvexPlusLipschitz, std::move(m));
  t.perturbation_ = std::move(lip);
  t.lipschitz_ = lipschitz;
  return t;
}

double TargetPotential::value(const Vector& x) const {
  double v = 0.5 * x.dot(base_ * x);
  if (perturbation_) v += perturbation_->value(x);
  return v;
}

Vector TargetPotential::gradient(const Vector& x) const {
  Vector g = base_ * x;
  if (perturbation_) g += perturbation_->gradient(x);
  return g;
}

Matrix TargetPotential::hessian(const Vector& x) const {
  Matrix h = base_;
  if (!perturbation_) return h;
  if (perturbation_->hessian) return h + perturbation_->hessian(x);
  const double step = 1e-6;
  Matrix fd(dim(), dim());
  for (Index j = 0; j < dim(); ++j) {
    Vector e = Vector::Zero(dim());
    e(j) = step;
    fd.col(j) = (perturbation_->gradient(x + e) - perturbation_->gradient(x - e)) /
                (2.0 * step);
  }
  return h + 0.5 * (fd + fd.transpose());
}

std::optional<double> TargetPotential::smoothness() const {
  if (kind_ == PotentialKind::Quadratic) return lambda_;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Gaussian kernels

GaussianKernelSpec::GaussianKernelSpec(MeanMap mean, JacobianMap jacobian,
                                       Matrix covariance, Index dim_y,
                                       bool affine)
    : mean_(std::move(mean)),
      jacobian_(std::move(jacobian)),
      cov_(std::move(covariance)),
      dim_y_(dim_y),
      affine_(affine) {
  const SymmetricEigen eig = symmetric_eigen(cov_);
  if (eig.values.minCoeff() <= 0.0) {
    throw NotSPD("kernel covariance must be positive-definite");
  }
  Eigen::LLT<Matrix> llt(cov_);
  if (llt.info() != Eigen::Success) {
    throw NotSPD("kernel covariance Cholesky factorisation failed");
  }
  chol_ = llt.matrixL();
  precision_ = llt.solve(Matrix::Identity(cov_.rows(), cov_.cols()));
  precision_ = 0.5 * (precision_ + precision_.transpose());
  const double log_det = 2.0 * chol_.diagonal().array().log().sum();
  log_norm_ = -0.5 * (static_cast<double>(cov_.rows()) *
                          std::log(2.0 * std::numbers::pi) +
                      log_det);
}

GaussianKernelSpec GaussianKernelSpec::affine(Matrix a, Vector b,
                                              Matrix covariance) {
  if (a.rows() != covariance.rows() || b.size() != a.rows()) {
    throw BadConfig("affine kernel: dimension mismatch");
  }
  const Index dim_y = a.cols();
  return GaussianKernelSpec(
      [a, b](const Vector& y) -> Vector { return a * y + b; },
      [a](const Vector&) -> Matrix { return a; }, std::move(covariance), dim_y,
      true);
}

Vector GaussianKernelSpec::sample(const Vector& y, Rng& rng) const {
  return mean_(y) + chol_ * standard_normal_vector(cov_.rows(), rng);
}

double GaussianKernelSpec::log_density(const Vector& x, const Vector& y) const {
  const Vector r = x - mean_(y);
  return log_norm_ - 0.5 * r.dot(precision_ * r);
}

Vector GaussianKernelSpec::score(const Vector& x, const Vector& y) const {
  return jacobian_(y).transpose() * (precision_ * (x - mean_(y)));
}

Matrix GaussianKernelSpec::score_covariance(const Vector& y) const {
  const Matrix j = jacobian_(y);
  Matrix s = j.transpose() * precision_ * j;
  return 0.5 * (s + s.transpose());
}

// ---------------------------------------------------------------------------
// Conditional families

ConditionalFamily::ConditionalFamily(std::string name, Index dim_x, Index dim_y,
                                     Energy g, EnergyGradient grad2_g)
    : name_(std::move(name)),
      dim_x_(dim_x),
      dim_y_(dim_y),
      g_(std::move(g)),
      grad2_g_(std::move(grad2_g)) {}

ConditionalFamily ConditionalFamily::gaussian(std::string name,
                                              GaussianKernelSpec spec) {
  const auto shared = std::make_shared<const GaussianKernelSpec>(spec);
  ConditionalFamily family(
      std::move(name), spec.dim_x(), spec.dim_y(),
      [shared](const Vector& x, const Vector& y) {
        const Vector r = x - shared->mean(y);
        return 0.5 * r.dot(shared->precision() * r);
      },
      [shared](const Vector& x, const Vector& y) -> Vector {
        return -shared->score(x, y);
      });
  family.set_sampler(
      [shared](const Vector& y, Rng& rng) { return shared->sample(y, rng); });
  const Index dim_y = spec.dim_y();
  family.set_expected_grad2(
      [dim_y](const Vector&) -> Vector { return Vector::Zero(dim_y); });

  KernelConstants c;
  c.beta = lambda_max(spec.covariance());
  c.beta_kind = Inequality::LSI;
  if (spec.is_affine()) {
    const Vector y0 = Vector::Zero(dim_y);
    const Matrix j = spec.jacobian(y0);
    c.grad2_lipschitz = operator_norm(j.transpose() * spec.precision());
    c.l_bar = std::sqrt(std::max(0.0, lambda_max(spec.score_covariance(y0))));
  }
  family.set_constants(c);
  family.set_gaussian(std::move(spec));
  return family;
}

Vector ConditionalFamily::sample(const Vector& y, Rng& rng) const {
  if (!sampler_) {
    throw SamplerUnavailable("family '" + name_ + "' has no sampler");
  }
  return sampler_(y, rng);
}

ConditionalFamily& ConditionalFamily::set_sampler(Sampler s) {
  sampler_ = std::move(s);
  return *this;
}

ConditionalFamily& ConditionalFamily::set_expected_grad2(ExpectedGradient e) {
  expected_grad2_ = std::move(e);
  return *this;
}

ConditionalFamily& ConditionalFamily::set_gaussian(GaussianKernelSpec spec) {
  gaussian_ = std::move(spec);
  return *this;
}

ConditionalFamily& ConditionalFamily::set_constants(KernelConstants c) {
  constants_ = c;
  return *this;
}

// ---------------------------------------------------------------------------
// Score identities

Vector score_in_y(const ConditionalFamily& family, const Vector& x,
                  const Vector& y, int n_mc, Rng& rng, Expectation mode) {
  if (mode == Expectation::Auto && family.has_expected_grad2()) {
    return family.expected_grad2(y) - family.grad2_energy(x, y);
  }
  if (n_mc < 1) throw BadConfig("score_in_y: n_mc must be >= 1");
  if (!family.has_sampler()) {
    throw SamplerUnavailable("score_in_y: family '" + family.name() +
                             "' has neither a sampler nor an exact expectation");
  }
  Vector acc = Vector::Zero(family.dim_y());
  for (int i = 0; i < n_mc; ++i) {
    acc += family.grad2_energy(family.sample(y, rng), y);
  }
  return acc / static_cast<double>(n_mc) - family.grad2_energy(x, y);
}

McEstimate expectation_gradient(const ConditionalFamily& family,
                                const KernelTestFunction& psi, const Vector& y,
                                int n_mc, Rng& rng, Expectation mode) {
  if (n_mc < 2) throw BadConfig("expectation_gradient: n_mc must be >= 2");
  if (!family.has_sampler()) {
    throw SamplerUnavailable("expectation_gradient: family '" + family.name() +
                             "' has no sampler");
  }
  const Index dy = family.dim_y();
  std::vector<Vector> xs;
  xs.reserve(static_cast<std::size_t>(n_mc));
  for (int i = 0; i < n_mc; ++i) xs.push_back(family.sample(y, rng));

  Vector expected_grad;
  if (mode == Expectation::Auto && family.has_expected_grad2()) {
    expected_grad = family.expected_grad2(y);
  } else {
    expected_grad = Vector::Zero(dy);
    for (const Vector& x : xs) expected_grad += family.grad2_energy(x, y);
    expected_grad /= static_cast<double>(n_mc);
  }

  Matrix terms(dy, n_mc);
  for (int i = 0; i < n_mc; ++i) {
    const Vector& x = xs[static_cast<std::size_t>(i)];
    const Vector score = expected_grad - family.grad2_energy(x, y);
    terms.col(i) = score * psi.value(x, y) + psi.grad_y(x, y);
  }
  const Vector mean = terms.rowwise().mean();
  const Vector var =
      (terms.colwise() - mean).array().square().rowwise().sum() /
      static_cast<double>(n_mc - 1);
  return {mean, (var / static_cast<double>(n_mc)).cwiseSqrt()};
}

// ---------------------------------------------------------------------------
// ULA

double ula_contraction(double mu, double lambda, double eta) {
  return std::max(std::abs(1.0 - eta * lambda), std::abs(1.0 - eta * mu));
}

ConditionalFamily make_ula_kernel(const TargetPotential& target, double eta) {
  require_positive_step(eta, "ULA step size eta");
  const Index d = target.dim();
  const auto tgt = std::make_shared<const TargetPotential>(target);
  const bool affine = target.kind() == PotentialKind::Quadratic;
  GaussianKernelSpec spec(
      [tgt, eta](const Vector& y) -> Vector { return y - eta * tgt->gradient(y); },
      [tgt, eta, d](const Vector& y) -> Matrix {
        return Matrix::Identity(d, d) - eta * tgt->hessian(y);
      },
      2.0 * eta * Matrix::Identity(d, d), d, affine);
  ConditionalFamily family = ConditionalFamily::gaussian("ula", std::move(spec));

  KernelConstants c = family.constants();
  if (auto lambda = target.smoothness()) {
    c.l_bar = ula_contraction(target.mu(), *lambda, eta) / std::sqrt(2.0 * eta);
  }
  family.set_constants(c);
  return family;
}

// ---------------------------------------------------------------------------
// Proximal sampler

ProximalKernels make_proximal_kernels(const TargetPotential& target, double eta) {
  require_positive_step(eta, "proximal step size eta");
  const Index d = target.dim();
  const Matrix identity = Matrix::Identity(d, d);

  ConditionalFamily forward = ConditionalFamily::gaussian(
      "proximal_forward",
      GaussianKernelSpec::affine(identity, Vector::Zero(d), eta * identity));

  const auto tgt = std::make_shared<const TargetPotential>(target);
  ConditionalFamily backward(
      "proximal_backward", d, d,
      [tgt, eta](const Vector& x, const Vector& y) {
        return tgt->value(x) + (y - x).squaredNorm() / (2.0 * eta);
      },
      [eta](const Vector& x, const Vector& y) -> Vector { return (y - x) / eta; });

  // Quadratic part of the backward energy: precision M + I / eta.
  const Matrix precision = target.base_matrix() + identity / eta;
  Matrix quad_cov = precision.inverse();
  quad_cov = 0.5 * (quad_cov + quad_cov.transpose());
  const Matrix mean_map = quad_cov / eta;
  const double strong_convexity = target.mu() + 1.0 / eta;

  KernelConstants c;
  c.beta_kind = Inequality::LSI;
  c.grad2_lipschitz = 1.0 / eta;

  switch (target.kind()) {
    case PotentialKind::Quadratic: {
      GaussianKernelSpec spec =
          GaussianKernelSpec::affine(mean_map, Vector::Zero(d), quad_cov);
      auto shared = std::make_shared<const GaussianKernelSpec>(spec);
      backward.set_sampler(
          [shared](const Vector& y, Rng& rng) { return shared->sample(y, rng); });
      backward.set_expected_grad2([shared, eta](const Vector& y) -> Vector {
        return (y - shared->mean(y)) / eta;
      });
      backward.set_gaussian(std::move(spec));
      c.beta = lambda_max(quad_cov);
      break;
    }
    case PotentialKind::StronglyConvexPlusBounded: {
      const auto osc = target.oscillation();
      const auto inf = target.perturbation_infimum();
      if (!osc || !inf) {
        throw RejectionInfeasible(
            "bounded perturbation needs its oscillation B and infimum to "
            "certify the rejection envelope");
      }
      const double infimum = *inf;
      auto proposal = std::make_shared<const GaussianKernelSpec>(
          GaussianKernelSpec::affine(mean_map, Vector::Zero(d), quad_cov));
      backward.set_sampler([proposal, tgt, infimum](const Vector& y, Rng& rng) {
        for (long attempt = 0; attempt < kMaxRejectionAttempts; ++attempt) {
          Vector x = proposal->sample(y, rng);
          const double excess = tgt->perturbation()->value(x) - infimum;
          if (excess < -1e-12) {
            throw RejectionInfeasible(
                "bounded perturbation falls below its declared infimum");
          }
          if (uniform_real(0.0, 1.0, rng) <= std::exp(-std::max(0.0, excess))) return x;
        }
        throw RejectionInfeasible("rejection sampler exceeded attempt budget");
      });
      c.beta = std::exp(*osc) / strong_convexity;
      break;
    }
    case PotentialKind::StronglyConvexPlusLipschitz: {
      const double l = *target.lipschitz();
      c.beta = std::exp(l * l / strong_convexity +
                        4.0 * l / std::sqrt(strong_convexity)) /
               strong_convexity;
      break;
    }
  }
  c.l_bar = std::sqrt(*c.beta) / eta;
  backward.set_constants(c);
  return {std::move(forward), std::move(backward)};
}

// ---------------------------------------------------------------------------
// Exact HMC on quadratic potentials

EhmcFlow make_ehmc_flow(const Matrix& m, double t) {
  require_positive_step(t, "integration time T");
  const SymmetricEigen eig = spd_eigen(m);
  return {
      apply_spectral(eig, [t](double l) { return std::cos(std::sqrt(l) * t); }),
      apply_spectral(eig, [t](double l) { return t * sinc(std::sqrt(l) * t); }),
  };
}

EhmcConstants ehmc_constants(const Matrix& m, double t) {
  require_positive_step(t, "integration time T");
  const SymmetricEigen eig = spd_eigen(m);
  const Matrix phi =
      apply_spectral(eig, [t](double l) { return flow_phi(std::sqrt(l) * t); });
  const Matrix phi_inv_cos = apply_spectral(eig, [t](double l) {
    const double z = std::sqrt(l) * t;
    return std::cos(z) / flow_phi(z);
  });
  const double beta = t * t * lambda_max(phi);
  const double lip = operator_norm(phi_inv_cos) / (t * t);
  return {beta, lip, std::sqrt(beta) * lip};
}

ConditionalFamily make_ehmc_kernel(const Matrix& m, double t) {
  require_positive_step(t, "integration time T");
  const SymmetricEigen eig = spd_eigen(m);
  const Matrix position =
      apply_spectral(eig, [t](double l) { return std::cos(std::sqrt(l) * t); });
  Matrix cov = apply_spectral(
      eig, [t](double l) { return t * t * flow_phi(std::sqrt(l) * t); });
  cov = 0.5 * (cov + cov.transpose());
  ConditionalFamily family = ConditionalFamily::gaussian(
      "ehmc",
      GaussianKernelSpec::affine(position, Vector::Zero(m.rows()), cov));
  const EhmcConstants ec = ehmc_constants(m, t);
  KernelConstants c = family.constants();
  c.beta = ec.beta;
  c.grad2_lipschitz = ec.lipschitz;
  c.l_bar = ec.l_bar;
  family.set_constants(c);
  return family;
}

}  // namespace twoscale::kernels
