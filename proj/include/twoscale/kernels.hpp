#pragma once

#include <functional>
#include <optional>
#include <string>

#include "twoscale/numeric.hpp"
#include "twoscale/types.hpp"

/// Conditional families x ~ P_{X|Y=y} with density exp(-G(x, y)) / Z(y),
/// their y-scores, and the kernels of ULA, the proximal sampler and exact HMC.
namespace twoscale::kernels {

// ---------------------------------------------------------------------------
// Target potentials V*(x)

enum class PotentialKind {
  Quadratic,
  StronglyConvexPlusBounded,
  StronglyConvexPlusLipschitz,
};

/// Non-quadratic part of a perturbed potential.
struct Perturbation {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  std::function<Matrix(const Vector&)> hessian;  // may be empty
};

/// (B/2) (1 + cos <w, x>): oscillation B, infimum 0.
Perturbation cosine_bump(double oscillation, Vector frequency);

/// L sqrt(1 + <u, x>^2) for a unit vector u: L-Lipschitz.
Perturbation smoothed_abs(double lipschitz, Vector direction);

/// V*(x) = x^T M x / 2 + perturbation(x).
class TargetPotential {
 public:
  /// Throws NotSPD unless M is symmetric positive-definite.
  static TargetPotential quadratic(Matrix m);

  /// `oscillation` (B) and `infimum` of the bounded part are optional at
  /// construction; the proximal backward sampler needs both.
  static TargetPotential strongly_convex_plus_bounded(
      Matrix m, Perturbation bounded, std::optional<double> oscillation,
      std::optional<double> infimum);

  static TargetPotential strongly_convex_plus_lipschitz(Matrix m,
                                                        Perturbation lip,
                                                        double lipschitz);

  PotentialKind kind() const { return kind_; }
  Index dim() const { return base_.rows(); }

  double value(const Vector& x) const;
  Vector gradient(const Vector& x) const;
  /// Exact when available, central differences of the gradient otherwise.
  Matrix hessian(const Vector& x) const;

  /// Quadratic part M.
  const Matrix& base_matrix() const { return base_; }
  /// Strong convexity of the quadratic part, lambda_min(M).
  double mu() const { return mu_; }
  /// Smoothness lambda_max(M); known only for Quadratic targets.
  std::optional<double> smoothness() const;

  std::optional<double> oscillation() const { return oscillation_; }
  std::optional<double> perturbation_infimum() const { return infimum_; }
  std::optional<double> lipschitz() const { return lipschitz_; }
  const Perturbation* perturbation() const {
    return perturbation_ ? &*perturbation_ : nullptr;
  }

 private:
  TargetPotential(PotentialKind kind, Matrix m);

  PotentialKind kind_;
  Matrix base_;
  double mu_ = 0.0;
  double lambda_ = 0.0;
  std::optional<Perturbation> perturbation_;
  std::optional<double> oscillation_;
  std::optional<double> infimum_;
  std::optional<double> lipschitz_;
};

// ---------------------------------------------------------------------------
// Gaussian kernels N(m(y), Sigma)

class GaussianKernelSpec {
 public:
  using MeanMap = std::function<Vector(const Vector&)>;
  using JacobianMap = std::function<Matrix(const Vector&)>;

  /// Throws NotSPD unless `covariance` is symmetric positive-definite.
  GaussianKernelSpec(MeanMap mean, JacobianMap jacobian, Matrix covariance,
                     Index dim_y, bool affine);

  /// m(y) = A y + b.
  static GaussianKernelSpec affine(Matrix a, Vector b, Matrix covariance);

  Vector mean(const Vector& y) const { return mean_(y); }
  Matrix jacobian(const Vector& y) const { return jacobian_(y); }
  const Matrix& covariance() const { return cov_; }
  const Matrix& precision() const { return precision_; }
  Index dim_x() const { return cov_.rows(); }
  Index dim_y() const { return dim_y_; }
  bool is_affine() const { return affine_; }

  Vector sample(const Vector& y, Rng& rng) const;
  double log_density(const Vector& x, const Vector& y) const;

  /// grad_y log p(x | y) = J(y)^T Sigma^{-1} (x - m(y)).
  Vector score(const Vector& x, const Vector& y) const;

  /// Covariance of the score under x ~ P_y: J^T Sigma^{-1} J.
  Matrix score_covariance(const Vector& y) const;

 private:
  MeanMap mean_;
  JacobianMap jacobian_;
  Matrix cov_;
  Matrix precision_;
  Matrix chol_;
  double log_norm_ = 0.0;
  Index dim_y_ = 0;
  bool affine_ = false;
};

// ---------------------------------------------------------------------------
// Conditional families

/// Analytic metadata a kernel may carry.
struct KernelConstants {
  /// Every P_y satisfies `beta_kind`(beta).
  std::optional<double> beta;
  Inequality beta_kind = Inequality::LSI;
  /// Lipschitz constant of x -> grad_2 G(x, y), uniform in y.
  std::optional<double> grad2_lipschitz;
  /// L-bar for which both two-scale criteria hold.
  std::optional<double> l_bar;
};

class ConditionalFamily {
 public:
  using Energy = std::function<double(const Vector& x, const Vector& y)>;
  using EnergyGradient = std::function<Vector(const Vector& x, const Vector& y)>;
  using Sampler = std::function<Vector(const Vector& y, Rng& rng)>;
  using ExpectedGradient = std::function<Vector(const Vector& y)>;

  ConditionalFamily(std::string name, Index dim_x, Index dim_y, Energy g,
                    EnergyGradient grad2_g);

  /// Family with G(x, y) = (x - m(y))^T Sigma^{-1} (x - m(y)) / 2, its exact
  /// sampler, E[grad_2 G] = 0, and the Gaussian constants (beta =
  /// lambda_max(Sigma); L-bar and Lipschitz constants when the mean map is
  /// affine).
  static ConditionalFamily gaussian(std::string name, GaussianKernelSpec spec);

  const std::string& name() const { return name_; }
  Index dim_x() const { return dim_x_; }
  Index dim_y() const { return dim_y_; }

  double energy(const Vector& x, const Vector& y) const { return g_(x, y); }
  Vector grad2_energy(const Vector& x, const Vector& y) const {
    return grad2_g_(x, y);
  }

  bool has_sampler() const { return static_cast<bool>(sampler_); }
  /// Throws SamplerUnavailable when no sampler is attached.
  Vector sample(const Vector& y, Rng& rng) const;

  bool has_expected_grad2() const { return static_cast<bool>(expected_grad2_); }
  Vector expected_grad2(const Vector& y) const { return expected_grad2_(y); }

  const GaussianKernelSpec* gaussian_spec() const {
    return gaussian_ ? &*gaussian_ : nullptr;
  }
  const KernelConstants& constants() const { return constants_; }

  ConditionalFamily& set_sampler(Sampler s);
  ConditionalFamily& set_expected_grad2(ExpectedGradient e);
  ConditionalFamily& set_gaussian(GaussianKernelSpec spec);
  ConditionalFamily& set_constants(KernelConstants c);

 private:
  std::string name_;
  Index dim_x_;
  Index dim_y_;
  Energy g_;
  EnergyGradient grad2_g_;
  Sampler sampler_;
  ExpectedGradient expected_grad2_;
  std::optional<GaussianKernelSpec> gaussian_;
  KernelConstants constants_;
};

/// How E_{P_y}[grad_2 G] is obtained.
enum class Expectation {
  Auto,        // exact when the family declares it, Monte Carlo otherwise
  MonteCarlo,  // always Monte Carlo
};

inline constexpr int kDefaultScoreSamples = 10000;

/// grad_y log p(x | y) = E_{P_y}[grad_2 G] - grad_2 G(x, y).
Vector score_in_y(const ConditionalFamily& family, const Vector& x,
                  const Vector& y, int n_mc, Rng& rng,
                  Expectation mode = Expectation::Auto);

/// Test function psi(x, y) with its gradient in y.
struct KernelTestFunction {
  std::function<double(const Vector& x, const Vector& y)> value;
  std::function<Vector(const Vector& x, const Vector& y)> grad_y;
};

struct McEstimate {
  Vector value;
  Vector std_error;
};

/// Estimates grad M(y), M(y) = E_{P_y}[psi(., y)], through
///   E[grad_y log p * psi] + E[grad_2 psi].
McEstimate expectation_gradient(const ConditionalFamily& family,
                                const KernelTestFunction& psi, const Vector& y,
                                int n_mc, Rng& rng,
                                Expectation mode = Expectation::Auto);

// ---------------------------------------------------------------------------
// Sampler kernels

/// c_ULA = max{|1 - eta lambda|, |1 - eta mu|}.
double ula_contraction(double mu, double lambda, double eta);

/// N(y - eta grad V*(y), 2 eta I). Throws BadStep for eta <= 0.
ConditionalFamily make_ula_kernel(const TargetPotential& target, double eta);

struct ProximalKernels {
  ConditionalFamily forward;   // y' | x ~ N(x, eta I); conditioning variable x
  ConditionalFamily backward;  // x' | y' with G = V*(x) + |y - x|^2 / (2 eta)
};

/// Throws BadStep for eta <= 0 and RejectionInfeasible when a bounded
/// perturbation lacks its oscillation or infimum.
ProximalKernels make_proximal_kernels(const TargetPotential& target, double eta);

/// Closed-form Hamiltonian flow for V*(x) = x^T M x / 2 up to time T:
///   X_T = cos(sqrt(M) T) y + sqrt(M)^{-1} sin(sqrt(M) T) q.
struct EhmcFlow {
  Matrix position_map;  // cos(sqrt(M) T)
  Matrix momentum_map;  // sqrt(M)^{-1} sin(sqrt(M) T)
  Vector step(const Vector& y, const Vector& q) const {
    return position_map * y + momentum_map * q;
  }
};

EhmcFlow make_ehmc_flow(const Matrix& m, double t);

struct EhmcConstants {
  double beta;       // T^2 lambda_max(phi(sqrt(M) T))
  double lipschitz;  // T^-2 |phi(sqrt(M) T)^{-1} cos(sqrt(M) T)|_op
  double l_bar;      // sqrt(beta) * lipschitz
};

EhmcConstants ehmc_constants(const Matrix& m, double t);

/// N(cos(sqrt(M) T) y, T^2 phi(sqrt(M) T)), phi(z) = (sin z / z)^2.
/// Throws BadStep for T <= 0 and NotSPD unless M is positive-definite.
ConditionalFamily make_ehmc_kernel(const Matrix& m, double t);

}  // namespace twoscale::kernels
