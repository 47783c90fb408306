#include "twoscale/numeric.hpp"

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>
#include <cmath>

#include "twoscale/errors.hpp"

namespace twoscale {

double weighted_mean(std::span<const double> values,
                     std::span<const double> weights) {
  if (values.empty() || values.size() != weights.size()) {
    throw DomainError("weighted_mean: size mismatch or empty input");
  }
  const double pivot = values[0];
  CompensatedSum num;
  CompensatedSum den;
  for (std::size_t i = 0; i < values.size(); ++i) {
    num.add(weights[i] * (values[i] - pivot));
    den.add(weights[i]);
  }
  return pivot + num.value() / den.value();
}

double mean(std::span<const double> values) {
  if (values.empty()) throw DomainError("mean: empty input");
  const double pivot = values[0];
  CompensatedSum num;
  for (double v : values) num.add(v - pivot);
  return pivot + num.value() / static_cast<double>(values.size());
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng make_stream(std::uint64_t master_seed, std::uint64_t stream_id) {
  const std::uint64_t base = splitmix64(master_seed);
  return Rng(splitmix64(base ^ splitmix64(~stream_id)),
             splitmix64(splitmix64(stream_id) + base) | 1u);
}

double standard_normal(Rng& rng) {
  boost::random::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

Vector standard_normal_vector(Index dim, Rng& rng) {
  boost::random::normal_distribution<double> dist(0.0, 1.0);
  Vector v(dim);
  for (Index i = 0; i < dim; ++i) v(i) = dist(rng);
  return v;
}

double uniform_real(double a, double b, Rng& rng) {
  boost::random::uniform_real_distribution<double> dist(a, b);
  return dist(rng);
}

SymmetricEigen symmetric_eigen(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw NotSPD("matrix must be square and non-empty");
  }
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw NotSPD("matrix is not symmetric within 1e-12");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) {
    throw NotSPD("symmetric eigendecomposition failed");
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

double lambda_max(const Matrix& m) { return symmetric_eigen(m).values.maxCoeff(); }

double lambda_min(const Matrix& m) { return symmetric_eigen(m).values.minCoeff(); }

double operator_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

double sinc(double z) {
  if (std::abs(z) < 1e-4) {
    const double z2 = z * z;
    return 1.0 - z2 / 6.0 + z2 * z2 / 120.0;
  }
  return std::sin(z) / z;
}

double flow_phi(double z) {
  const double s = sinc(z);
  return s * s;
}

}  // namespace twoscale
