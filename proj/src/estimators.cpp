#include "twoscale/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "twoscale/errors.hpp"
#include "twoscale/numeric.hpp"

namespace twoscale::estimators {

namespace {

using samplers::GaussianLaw;
using samplers::SampleCloud;

constexpr double kDegenerateDenominator = 1e-12;
constexpr double kSquareFloor = 1e-300;

struct Evaluated {
  std::vector<double> values;
  std::vector<double> grad_sq;
};

Evaluated evaluate(const SampleCloud& cloud, const TestFunction& f) {
  Evaluated e;
  const Index n = cloud.size();
  e.values.resize(static_cast<std::size_t>(n));
  e.grad_sq.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const Vector x = cloud.points.row(i).transpose();
    e.values[static_cast<std::size_t>(i)] = f.value(x);
    e.grad_sq[static_cast<std::size_t>(i)] = f.gradient(x).squaredNorm();
  }
  return e;
}

// Numerator / denominator of the ratio over values[lo, hi).
std::pair<double, double> ratio_parts(Inequality inequality, const Evaluated& e,
                                      std::size_t lo, std::size_t hi) {
  const std::span<const double> v(e.values.data() + lo, hi - lo);
  const std::span<const double> g(e.grad_sq.data() + lo, hi - lo);
  if (inequality == Inequality::PI) return {empirical_variance(v), mean(g)};
  return {empirical_entropy_of_square(v), 2.0 * mean(g)};
}

double batch_std_err(Inequality inequality, const Evaluated& e) {
  const std::size_t n = e.values.size();
  std::vector<double> ratios;
  ratios.reserve(kBatches);
  for (int b = 0; b < kBatches; ++b) {
    const std::size_t lo = n * static_cast<std::size_t>(b) / kBatches;
    const std::size_t hi = n * static_cast<std::size_t>(b + 1) / kBatches;
    const auto [num, den] = ratio_parts(inequality, e, lo, hi);
    // A batch may see a zero energy even when the whole cloud does not.
    ratios.push_back(den > 0.0 ? num / den : 0.0);
  }
  const double m = mean(ratios);
  CompensatedSum s;
  for (double r : ratios) s.add((r - m) * (r - m));
  return std::sqrt(s.value() / (kBatches - 1)) / std::sqrt(static_cast<double>(kBatches));
}

std::string format_lambda(double lam) {
  std::ostringstream os;
  os << (lam < 0 ? 'm' : 'p') << std::abs(lam);
  return os.str();
}

}  // namespace

TestFunction linear_function(std::string id, Vector u) {
  TestFunction f;
  f.id = std::move(id);
  f.family = FamilyKind::Linear;
  f.u = u;
  f.value = [u](const Vector& x) { return u.dot(x); };
  f.gradient = [u](const Vector&) -> Vector { return u; };
  return f;
}

TestFunction quadratic_function(std::string id, Matrix a, Vector b, double c) {
  if (a.rows() != a.cols() || b.size() != a.rows()) {
    throw BadConfig("quadratic test function has inconsistent dimensions");
  }
  TestFunction f;
  f.id = std::move(id);
  f.family = FamilyKind::Quadratic;
  f.a = a;
  f.b = b;
  f.c = c;
  const Matrix sym = a + a.transpose();
  f.value = [a, b, c](const Vector& x) { return x.dot(a * x) + b.dot(x) + c; };
  f.gradient = [sym, b](const Vector& x) -> Vector { return sym * x + b; };
  return f;
}

TestFunction exp_linear_function(std::string id, double lambda, Vector u) {
  TestFunction f;
  f.id = std::move(id);
  f.family = FamilyKind::ExpLinear;
  f.lambda = lambda;
  f.u = u;
  f.value = [lambda, u](const Vector& x) { return std::exp(0.5 * lambda * u.dot(x)); };
  f.gradient = [lambda, u](const Vector& x) -> Vector {
    return (0.5 * lambda * std::exp(0.5 * lambda * u.dot(x))) * u;
  };
  return f;
}

TestFunction custom_function(std::string id, std::function<double(const Vector&)> value,
                             std::function<Vector(const Vector&)> gradient) {
  TestFunction f;
  f.id = std::move(id);
  f.family = FamilyKind::Custom;
  f.value = std::move(value);
  f.gradient = std::move(gradient);
  return f;
}

std::vector<TestFunction> standard_function_family(const SampleCloud& cloud) {
  const Index d = cloud.dim();
  if (d < 1 || cloud.size() < 2) throw BadConfig("cloud too small for a test family");
  std::vector<TestFunction> fns;
  for (Index i = 0; i < d; ++i) {
    fns.push_back(linear_function("lin_" + std::to_string(i), Vector::Unit(d, i)));
  }
  for (Index i = 0; i < d; ++i) {
    for (Index j = i; j < d; ++j) {
      Matrix a = Matrix::Zero(d, d);
      a(i, j) += 0.5;
      a(j, i) += 0.5;
      fns.push_back(quadratic_function(
          "quad_" + std::to_string(i) + "_" + std::to_string(j), a, Vector::Zero(d), 1.0));
    }
  }
  const Vector centre = cloud.points.colwise().mean().transpose();
  const Matrix dev = cloud.points.rowwise() - centre.transpose();
  Matrix cov = dev.transpose() * dev / static_cast<double>(cloud.size());
  cov = 0.5 * (cov + cov.transpose());
  const SymmetricEigen eig = symmetric_eigen(cov);
  const Index n_dirs = std::min<Index>(2, d);
  for (Index k = 0; k < n_dirs; ++k) {
    Vector v = eig.vectors.col(d - 1 - k);
    Index big;
    v.cwiseAbs().maxCoeff(&big);
    if (v(big) < 0) v = -v;
    for (double lam : {-0.25, -0.1, 0.1, 0.25}) {
      fns.push_back(exp_linear_function(
          "exp_v" + std::to_string(k) + "_" + format_lambda(lam), lam, v));
    }
  }
  return fns;
}

double empirical_variance(std::span<const double> values) {
  if (values.empty()) throw BadConfig("variance of an empty sample");
  const double m = mean(values);
  CompensatedSum s;
  for (double v : values) s.add((v - m) * (v - m));
  return s.value() / static_cast<double>(values.size());
}

double empirical_entropy_of_square(std::span<const double> f_values) {
  if (f_values.empty()) throw BadConfig("entropy of an empty sample");
  std::vector<double> sq(f_values.size());
  std::vector<double> sq_log(f_values.size());
  for (std::size_t i = 0; i < f_values.size(); ++i) {
    const double s = f_values[i] * f_values[i];
    if (!(s >= kSquareFloor) || !std::isfinite(s)) {
      throw DomainError("f^2 is below 1e-300 or not finite on the cloud");
    }
    sq[i] = s;
    sq_log[i] = s * std::log(s);
  }
  const double m = mean(sq);
  return mean(sq_log) - m * std::log(m);
}

RatioCertificate certify(Inequality inequality, const SampleCloud& cloud,
                         const std::vector<TestFunction>& fns, double gamma) {
  if (cloud.size() < kMinCloudSize) {
    throw BadConfig("certificates need at least 1000 cloud points");
  }
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw BadConfig("gamma must be >= 0");
  RatioCertificate cert{inequality, gamma, 0.0, {}, true, {}};
  const std::size_t n = static_cast<std::size_t>(cloud.size());
  for (const TestFunction& f : fns) {
    const Evaluated e = evaluate(cloud, f);
    const auto [num, den] = ratio_parts(inequality, e, 0, n);
    if (den < kDegenerateDenominator) {
      cert.skipped.push_back(f.id);
      continue;
    }
    const double ratio = num / den;
    const double se = batch_std_err(inequality, e);
    const bool pass = ratio <= gamma + kSlackMultiplier * se;
    cert.per_function.push_back({f.id, num, den, ratio, se, pass});
    cert.observed_sup_ratio = std::max(cert.observed_sup_ratio, ratio);
    cert.pass = cert.pass && pass;
  }
  return cert;
}

RatioCertificate certify_pi(const SampleCloud& cloud, const std::vector<TestFunction>& fns,
                            double gamma) {
  return certify(Inequality::PI, cloud, fns, gamma);
}

RatioCertificate certify_lsi(const SampleCloud& cloud, const std::vector<TestFunction>& fns,
                             double gamma) {
  return certify(Inequality::LSI, cloud, fns, gamma);
}

void write_certificate_csv(std::ostream& out, const RatioCertificate& cert) {
  out << "fn_id,numerator,denominator,ratio,std_err,pass\r\n";
  out << std::setprecision(17);
  for (const FunctionRatio& r : cert.per_function) {
    out << r.id << ',' << r.numerator << ',' << r.denominator << ',' << r.ratio << ','
        << r.std_err << ',' << (r.pass ? "true" : "false") << "\r\n";
  }
}

double gaussian_expectation(const TestFunction& f, const GaussianLaw& law) {
  switch (f.family) {
    case FamilyKind::Linear:
      return f.u.dot(law.mean);
    case FamilyKind::Quadratic:
      return (f.a * law.cov).trace() + law.mean.dot(f.a * law.mean) + f.b.dot(law.mean) +
             f.c;
    case FamilyKind::ExpLinear:
      return std::exp(0.5 * f.lambda * f.u.dot(law.mean) +
                      0.125 * f.lambda * f.lambda * f.u.dot(law.cov * f.u));
    case FamilyKind::Custom:
      break;
  }
  throw Unavailable("no closed-form Gaussian expectation for '" + f.id + "'");
}

double target_expectation(const TestFunction& f, const kernels::TargetPotential& target) {
  if (target.kind() != kernels::PotentialKind::Quadratic) {
    throw Unavailable("target mean is known in closed form for Quadratic targets only");
  }
  const SymmetricEigen eig = symmetric_eigen(target.base_matrix());
  const Matrix cov = apply_spectral(eig, [](double l) { return 1.0 / l; });
  return gaussian_expectation(f, {Vector::Zero(target.dim()), cov});
}

ErrorSplit estimation_error_split(const SampleCloud& cloud, const TestFunction& f,
                                  const GaussianLaw& algorithm_law, double target_mean) {
  if (cloud.size() < 1) throw BadConfig("empty cloud");
  std::vector<double> v(static_cast<std::size_t>(cloud.size()));
  for (Index i = 0; i < cloud.size(); ++i) {
    v[static_cast<std::size_t>(i)] = f.value(cloud.points.row(i).transpose());
  }
  const double avg = mean(v);
  const double algo = gaussian_expectation(f, algorithm_law);
  return {std::abs(avg - target_mean), std::abs(avg - algo), std::abs(algo - target_mean)};
}

ErrorSplit estimation_error_split(const SampleCloud& cloud, const TestFunction& f,
                                  const samplers::ChainConfig& config, double target_mean) {
  const auto law = samplers::analytic_law(config, cloud.iteration);
  if (!law) throw Unavailable("no analytic law for this chain configuration");
  return estimation_error_split(cloud, f, *law, target_mean);
}

const char* to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::Linear: return "linear";
    case FamilyKind::Quadratic: return "quadratic";
    case FamilyKind::ExpLinear: return "exp_linear";
    case FamilyKind::Custom: return "custom";
  }
  return "?";
}

}  // namespace twoscale::estimators
