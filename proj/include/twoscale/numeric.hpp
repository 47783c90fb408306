#pragma once

#include <cstdint>
#include <span>

#include "twoscale/types.hpp"

namespace twoscale {

/// Neumaier-compensated accumulator. Deterministic for a fixed input order.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Weighted mean computed around the first value as pivot, so that a
/// constant sequence returns that constant bit-exactly.
double weighted_mean(std::span<const double> values,
                     std::span<const double> weights);

/// Unweighted variant of weighted_mean.
double mean(std::span<const double> values);

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based engine: draw n is splitmix64 of (key + n * increment).
/// Construction is O(1), so one stream per chain stays cheap. Streams are
/// derived from a master seed and a stream counter, so stream k does not
/// depend on how many other streams exist or which thread consumes it.
class Rng {
 public:
  using result_type = std::uint64_t;
  Rng(std::uint64_t key, std::uint64_t increment) : state_(key), inc_(increment | 1u) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() {
    state_ += inc_;
    return splitmix64(state_);
  }

 private:
  std::uint64_t state_;
  std::uint64_t inc_;
};

Rng make_stream(std::uint64_t master_seed, std::uint64_t stream_id);

/// Standard normal draw (ziggurat, fixed project-wide).
double standard_normal(Rng& rng);
Vector standard_normal_vector(Index dim, Rng& rng);

/// Uniform draw on [a, b).
double uniform_real(double a, double b, Rng& rng);

/// Eigen-decomposition of a symmetric matrix with validation.
struct SymmetricEigen {
  Vector values;   // ascending
  Matrix vectors;  // columns
};

/// Throws NotSPD when the matrix is not symmetric within 1e-12.
SymmetricEigen symmetric_eigen(const Matrix& m);

/// Builds V diag(f(values)) V^T.
template <typename F>
Matrix apply_spectral(const SymmetricEigen& eig, F&& f) {
  Vector mapped(eig.values.size());
  for (Index i = 0; i < eig.values.size(); ++i) mapped(i) = f(eig.values(i));
  return eig.vectors * mapped.asDiagonal() * eig.vectors.transpose();
}

/// Largest eigenvalue of a symmetric matrix.
double lambda_max(const Matrix& m);
double lambda_min(const Matrix& m);

/// Spectral norm of a general matrix.
double operator_norm(const Matrix& m);

/// sin(z)/z with a series branch near zero.
double sinc(double z);

/// (sin z / z)^2, the flow covariance profile of exact HMC.
double flow_phi(double z);

}  // namespace twoscale
