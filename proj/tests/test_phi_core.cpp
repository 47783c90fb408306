#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "twoscale/errors.hpp"
#include "twoscale/numeric.hpp"
#include "twoscale/phi_core.hpp"

using namespace twoscale;
using namespace twoscale::phi;

namespace {

std::vector<double> random_weights(std::size_t n, Rng& rng) {
  std::vector<double> w(n);
  double total = 0.0;
  for (double& v : w) {
    v = -std::log(uniform_real(1e-12, 1.0, rng));
    total += v;
  }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace

TEST(PhiEval, ClosedForms) {
  const PhiValue sq = phi_eval(PhiFunction::square(), 3.0);
  EXPECT_EQ(sq.value, 9.0);
  EXPECT_EQ(sq.first, 6.0);
  EXPECT_EQ(sq.second, 2.0);

  const PhiValue xl = phi_eval(PhiFunction::xlogx(), 1.0);
  EXPECT_EQ(xl.value, 0.0);
  EXPECT_EQ(xl.first, 1.0);
  EXPECT_EQ(xl.second, 1.0);

  for (double t : {0.3, 1.0, 2.5}) {
    const PhiValue p2 = phi_eval(PhiFunction::power(2.0), t);
    EXPECT_NEAR(p2.value, t * t - 1.0, 1e-15);
    EXPECT_NEAR(p2.first, 2.0 * t, 1e-15);
    EXPECT_NEAR(p2.second, 2.0, 1e-15);
  }
}

TEST(PhiEval, DomainErrors) {
  EXPECT_THROW(phi_eval(PhiFunction::xlogx(), 0.0), DomainError);
  EXPECT_THROW(phi_eval(PhiFunction::xlogx(), -1.0), DomainError);
  EXPECT_THROW(phi_eval(PhiFunction::xlogx(), 1e-301), DomainError);
  EXPECT_THROW(phi_eval(PhiFunction::power(1.5), -0.5), DomainError);
  EXPECT_NO_THROW(phi_eval(PhiFunction::square(), -4.0));
  EXPECT_THROW(PhiFunction::power(1.0), DomainError);
  EXPECT_THROW(PhiFunction::power(2.5), DomainError);
}

TEST(PhiEval, ConvexityAndConcaveReciprocalSecond) {
  Rng rng = make_stream(1, 0);
  for (const PhiFunction& phi :
       {PhiFunction::square(), PhiFunction::xlogx(), PhiFunction::power(1.3)}) {
    for (int i = 0; i < 500; ++i) {
      const double a = uniform_real(0.01, 5.0, rng);
      const double b = uniform_real(0.01, 5.0, rng);
      const double m = 0.5 * (a + b);
      EXPECT_LE(phi_eval(phi, m).value,
                0.5 * (phi_eval(phi, a).value + phi_eval(phi, b).value) + 1e-14);
      const double inv_m = 1.0 / phi_eval(phi, m).second;
      const double inv_avg =
          0.5 * (1.0 / phi_eval(phi, a).second + 1.0 / phi_eval(phi, b).second);
      EXPECT_GE(inv_m, inv_avg - 1e-14);
    }
  }
}

TEST(Conjugate, ClosedFormsAndIdentity) {
  EXPECT_EQ(conjugate_eval(PhiFunction::square(), 6.0), 9.0);
  EXPECT_EQ(phi_eval(PhiFunction::square(), 3.0).value +
                conjugate_eval(PhiFunction::square(), 6.0),
            18.0);
  EXPECT_EQ(conjugate_eval(PhiFunction::xlogx(), 1.0), 1.0);
  EXPECT_THROW(conjugate_eval(PhiFunction::power(1.5), 1.0), Unsupported);
  EXPECT_THROW(conjugate_derivative(PhiFunction::power(1.5), 1.0), Unsupported);

  for (const PhiFunction& phi : {PhiFunction::square(), PhiFunction::xlogx()}) {
    for (int e = -60; e <= 60; ++e) {
      const double t = std::pow(10.0, e / 20.0);
      const PhiValue v = phi_eval(phi, t);
      const double lhs = v.value + conjugate_eval(phi, v.first);
      const double rhs = t * v.first;
      EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(rhs))) << "t=" << t;
      // (Phi*)' inverts Phi'.
      EXPECT_NEAR(conjugate_derivative(phi, v.first), t, 1e-12 * std::max(1.0, t));
    }
  }
}

TEST(FiniteDistribution, Validation) {
  EXPECT_THROW(FiniteDistribution({0.5, 0.6}), DomainError);
  EXPECT_THROW(FiniteDistribution({1.5, -0.5}), DomainError);
  EXPECT_THROW(FiniteDistribution(std::vector<double>{}), DomainError);
  EXPECT_NO_THROW(FiniteDistribution({0.25, 0.75}));
  EXPECT_EQ(FiniteDistribution::uniform(4)[2], 0.25);
  EXPECT_EQ(FiniteDistribution::point_mass(3, 1)[1], 1.0);
}

TEST(PhiEntropy, Examples) {
  const std::vector<double> f{1.0, 3.0};
  EXPECT_DOUBLE_EQ(phi_entropy(PhiFunction::square(), FiniteDistribution::uniform(2), f), 1.0);
  EXPECT_DOUBLE_EQ(phi_entropy(PhiFunction::square(), FiniteDistribution({0.75, 0.25}), f),
                   0.75);
  EXPECT_EQ(phi_entropy(PhiFunction::xlogx(), FiniteDistribution::point_mass(2, 1),
                        std::vector<double>{0.7, 2.3}),
            0.0);
  EXPECT_THROW(phi_entropy(PhiFunction::xlogx(), FiniteDistribution::uniform(2),
                           std::vector<double>{1.0, -1.0}),
               DomainError);
}

TEST(PhiEntropy, NonnegativeAndInterpolation) {
  Rng rng = make_stream(2, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 7;
    const FiniteDistribution pi(random_weights(n, rng));
    std::vector<double> f(n);
    for (double& v : f) v = uniform_real(0.1, 4.0, rng);
    const double var = phi_entropy(PhiFunction::square(), pi, f);
    const double ent = phi_entropy(PhiFunction::xlogx(), pi, f);
    EXPECT_GE(var, 0.0);
    EXPECT_GE(ent, 0.0);
    EXPECT_GE(phi_entropy(PhiFunction::power(1.5), pi, f), 0.0);
    // Phi_2(t) = t^2 - 1 differs from t^2 by a constant: same entropy.
    EXPECT_NEAR(phi_entropy(PhiFunction::power(2.0), pi, f), var, 1e-12 * std::max(1.0, var));
    if (ent > 1e-6) {
      EXPECT_NEAR(phi_entropy(PhiFunction::power(1.001), pi, f), ent, 1e-2 * ent);
    }
  }
}

TEST(EntropyDecomposition, WorkedExample) {
  const DiscreteMixtureModel model(FiniteDistribution::uniform(2),
                                   {FiniteDistribution({0.5, 0.5}),
                                    FiniteDistribution({1.0, 0.0})});
  const std::vector<double> fx{1.0, 3.0};
  const EntropyDecomposition d = entropy_decomposition(PhiFunction::square(), model, fx);
  EXPECT_NEAR(d.total, 0.75, 1e-15);
  EXPECT_NEAR(d.within_expected, 0.5, 1e-15);
  EXPECT_NEAR(d.between, 0.25, 1e-15);
  // Same f as a function of (x, y).
  Matrix f(2, 2);
  f << 1.0, 1.0, 3.0, 3.0;
  const EntropyDecomposition j = entropy_decomposition(PhiFunction::square(), model, f);
  EXPECT_NEAR(j.total, 0.75, 1e-15);
  EXPECT_NEAR(phi_entropy(PhiFunction::square(), model.mixture(), fx), 0.75, 1e-15);
}

TEST(EntropyDecomposition, DegenerateCases) {
  const DiscreteMixtureModel model(FiniteDistribution({0.3, 0.7}),
                                   {FiniteDistribution({0.2, 0.8}),
                                    FiniteDistribution({0.6, 0.4})});
  Matrix constant = Matrix::Constant(2, 2, 1.7);
  for (const PhiFunction& phi : {PhiFunction::square(), PhiFunction::xlogx()}) {
    const EntropyDecomposition d = entropy_decomposition(phi, model, constant);
    EXPECT_EQ(d.total, 0.0);
    EXPECT_EQ(d.within_expected, 0.0);
    EXPECT_EQ(d.between, 0.0);
  }
  const DiscreteMixtureModel single(FiniteDistribution::point_mass(2, 0),
                                    {FiniteDistribution({0.2, 0.8}),
                                     FiniteDistribution({0.6, 0.4})});
  Matrix f(2, 2);
  f << 1.0, 2.0, 3.0, 5.0;
  const EntropyDecomposition d = entropy_decomposition(PhiFunction::xlogx(), single, f);
  EXPECT_EQ(d.between, 0.0);
  EXPECT_NEAR(d.total, d.within_expected, 1e-15);
}

TEST(EntropyDecomposition, RandomModelsExact) {
  Rng rng = make_stream(3, 0);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t nx = 1 + rng() % 8;
    const std::size_t ny = 1 + rng() % 8;
    std::vector<FiniteDistribution> comps;
    for (std::size_t y = 0; y < ny; ++y) comps.emplace_back(random_weights(nx, rng));
    const DiscreteMixtureModel model(FiniteDistribution(random_weights(ny, rng)), comps);
    Matrix f(static_cast<Index>(nx), static_cast<Index>(ny));
    for (Index i = 0; i < f.size(); ++i) f.data()[i] = uniform_real(0.05, 5.0, rng);
    for (const PhiFunction& phi : {PhiFunction::square(), PhiFunction::xlogx()}) {
      const EntropyDecomposition d = entropy_decomposition(phi, model, f);
      EXPECT_NEAR(d.total, d.within_expected + d.between, 1e-12);
      EXPECT_GE(d.within_expected, -1e-15);
      EXPECT_GE(d.between, -1e-15);
    }
  }
}

TEST(DualityGap, Examples) {
  const FiniteDistribution pi({0.1, 0.2, 0.3, 0.4});
  const std::vector<double> f{0.5, 1.0, 2.0, 4.0};
  const double var = phi_entropy(PhiFunction::square(), pi, f);
  EXPECT_NEAR(duality_gap(PhiFunction::square(), pi, f, f), 0.0, 1e-12 * var);
  const std::vector<double> g(4, 2.0);
  for (const PhiFunction& phi : {PhiFunction::square(), PhiFunction::xlogx()}) {
    EXPECT_GE(duality_gap(phi, pi, f, g), -1e-12);
  }
  EXPECT_THROW(duality_gap(PhiFunction::power(1.5), pi, f, f), Unsupported);
}

TEST(DualityGap, RandomizedNonnegative) {
  Rng rng = make_stream(4, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const FiniteDistribution pi(random_weights(5, rng));
    std::vector<double> f(5), g(5);
    for (std::size_t i = 0; i < 5; ++i) {
      f[i] = uniform_real(0.05, 5.0, rng);
      g[i] = uniform_real(0.05, 5.0, rng);
    }
    EXPECT_GE(duality_gap(PhiFunction::square(), pi, f, g), -1e-10);
    EXPECT_GE(duality_gap(PhiFunction::xlogx(), pi, f, g), -1e-10);
  }
}
