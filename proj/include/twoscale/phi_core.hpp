#pragma once

#include <span>
#include <vector>

#include "twoscale/types.hpp"

/// Phi generators, Phi-entropies over finite distributions, and the
/// decomposition / duality identities built on top of them.
namespace twoscale::phi {

enum class PhiKind { Square, XLogX, PowerP };

/// Smallest admissible argument of the generators defined on (0, inf).
inline constexpr double kPositiveFloor = 1e-300;

struct PhiValue {
  double value;
  double first;
  double second;
};

/// A convex generator Phi on its domain S.
///
///   Square   Phi(t) = t^2                 S = R
///   XLogX    Phi(t) = t log t             S = (0, inf)
///   PowerP   Phi(t) = (t^p - 1) / (p - 1) S = (0, inf), p in (1, 2]
class PhiFunction {
 public:
  static PhiFunction square() { return PhiFunction(PhiKind::Square, 2.0); }
  static PhiFunction xlogx() { return PhiFunction(PhiKind::XLogX, 1.0); }
  /// Throws DomainError unless p lies in (1, 2].
  static PhiFunction power(double p);

  PhiKind kind() const { return kind_; }
  double exponent() const { return p_; }

  bool in_domain(double t) const;

  /// True for generators whose conjugate machinery is exposed.
  bool is_legendre() const { return kind_ != PhiKind::PowerP; }

 private:
  PhiFunction(PhiKind kind, double p) : kind_(kind), p_(p) {}
  PhiKind kind_;
  double p_;
};

/// Phi, Phi', Phi'' at t. Throws DomainError outside S.
PhiValue phi_eval(const PhiFunction& phi, double t);

/// Convex conjugate Phi*(s). Unsupported for PowerP.
double conjugate_eval(const PhiFunction& phi, double s);

/// Derivative of the conjugate, (Phi*)'(s). Unsupported for PowerP.
double conjugate_derivative(const PhiFunction& phi, double s);

/// Probability weights over a finite set of atoms. Atoms are identified by
/// index; functions on the atoms are passed as value arrays.
class FiniteDistribution {
 public:
  /// Throws DomainError for negative weights or a total off 1 by > 1e-12.
  explicit FiniteDistribution(std::vector<double> weights);

  static FiniteDistribution uniform(std::size_t n);
  static FiniteDistribution point_mass(std::size_t n, std::size_t at);

  std::size_t size() const { return weights_.size(); }
  std::span<const double> weights() const { return weights_; }
  double operator[](std::size_t i) const { return weights_[i]; }

 private:
  std::vector<double> weights_;
};

/// Mixing law rho over labels y together with one component P_y per label,
/// all supported on a shared ground set of x atoms.
class DiscreteMixtureModel {
 public:
  DiscreteMixtureModel(FiniteDistribution mixing,
                       std::vector<FiniteDistribution> components);

  std::size_t num_labels() const { return mixing_.size(); }
  std::size_t num_atoms() const { return components_.front().size(); }
  const FiniteDistribution& mixing() const { return mixing_; }
  const FiniteDistribution& component(std::size_t y) const {
    return components_[y];
  }

  /// The x-marginal, sum_y rho(y) P_y.
  FiniteDistribution mixture() const;

 private:
  FiniteDistribution mixing_;
  std::vector<FiniteDistribution> components_;
};

/// J^Phi_pi[f] = E_pi[Phi(f)] - Phi(E_pi[f]).
double phi_entropy(const PhiFunction& phi, const FiniteDistribution& dist,
                   std::span<const double> f);

struct EntropyDecomposition {
  double total;            // J^Phi under the joint law
  double within_expected;  // E_rho[ J^Phi_{P_y}[f(., y)] ]
  double between;          // J^Phi_rho[ E_{P_y}[f(., y)] ]
};

/// Decomposes the joint Phi-entropy of f(x, y). `f` is indexed
/// f(x_atom, y_label). The total is computed directly over the joint atoms,
/// independently of the two components.
EntropyDecomposition entropy_decomposition(const PhiFunction& phi,
                                           const DiscreteMixtureModel& model,
                                           const Matrix& f);

/// Same for a function of x alone; `total` is then the Phi-entropy under the
/// induced mixture.
EntropyDecomposition entropy_decomposition(const PhiFunction& phi,
                                           const DiscreteMixtureModel& model,
                                           std::span<const double> f_of_x);

/// RHS - LHS of
///   E[(Phi'(f) - E Phi'(f)) g] <= J^Phi[g] + E[g](Phi'(E f) - E Phi'(f))
///                                 + J^{Phi*(Phi')}[f].
/// Nonnegative up to round-off. Unsupported for PowerP.
double duality_gap(const PhiFunction& phi, const FiniteDistribution& dist,
                   std::span<const double> f, std::span<const double> g);

}  // namespace twoscale::phi
