#include "twoscale/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <iomanip>
#include <memory>
#include <ostream>
#include <thread>

#include "twoscale/errors.hpp"

namespace twoscale::samplers {

namespace {

using kernels::PotentialKind;
using kernels::TargetPotential;

using StepFn = std::function<Vector(const Vector&, Rng&)>;

void validate(const ChainConfig& config) {
  if (config.n_chains < 1) throw BadConfig("n_chains must be >= 1");
  if (config.n_iters < 0) throw BadConfig("n_iters must be >= 0");
  if (!(config.step > 0.0) || !std::isfinite(config.step)) {
    throw BadConfig("step parameter must be positive");
  }
  if (config.algorithm == Algorithm::EHMC) {
    if (config.target.kind() != PotentialKind::Quadratic) {
      throw BadConfig("exact HMC runs on Quadratic targets only");
    }
    if (config.step < 2.0) throw BadConfig("exact HMC needs c >= 2");
  }
  const Index d = config.target.dim();
  std::visit(
      [d](const auto& init) {
        using T = std::decay_t<decltype(init)>;
        if constexpr (std::is_same_v<T, GaussianInit>) {
          if (init.mean.size() != d || init.cov.rows() != d || init.cov.cols() != d) {
            throw BadConfig("Gaussian init has wrong dimension");
          }
        } else {
          if (init.point.size() != d) throw BadConfig("Dirac init has wrong dimension");
        }
      },
      config.init);
}

StepFn make_step(const ChainConfig& config) {
  const auto target = std::make_shared<const TargetPotential>(config.target);
  const double step = config.step;
  switch (config.algorithm) {
    case Algorithm::ULA: {
      const double noise = std::sqrt(2.0 * step);
      return [target, step, noise](const Vector& x, Rng& rng) -> Vector {
        return x - step * target->gradient(x) +
               noise * standard_normal_vector(x.size(), rng);
      };
    }
    case Algorithm::Proximal: {
      auto kernels = std::make_shared<const kernels::ProximalKernels>(
          kernels::make_proximal_kernels(config.target, step));
      if (!kernels->backward.has_sampler()) {
        throw SamplerUnavailable(
            "no exact backward sampler for this target (restricted Gaussian "
            "oracle available for Quadratic and bounded perturbations only)");
      }
      return [kernels](const Vector& x, Rng& rng) -> Vector {
        const Vector y = kernels->forward.sample(x, rng);
        return kernels->backward.sample(y, rng);
      };
    }
    case Algorithm::EHMC: {
      const auto flow = std::make_shared<const kernels::EhmcFlow>(kernels::make_ehmc_flow(
          config.target.base_matrix(), ehmc_integration_time(config.target, step)));
      return [flow](const Vector& x, Rng& rng) -> Vector {
        return flow->step(x, standard_normal_vector(x.size(), rng));
      };
    }
  }
  throw BadConfig("unknown algorithm");
}

std::function<Vector(Rng&)> make_init(const InitLaw& init) {
  return std::visit(
      [](const auto& law) -> std::function<Vector(Rng&)> {
        using T = std::decay_t<decltype(law)>;
        if constexpr (std::is_same_v<T, GaussianInit>) {
          Eigen::LDLT<Matrix> ldlt(law.cov);
          if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            throw BadConfig("Gaussian init covariance must be positive semi-definite");
          }
          // Symmetric square root handles singular covariances.
          const SymmetricEigen eig = symmetric_eigen(law.cov);
          const Matrix root = apply_spectral(
              eig, [](double l) { return std::sqrt(std::max(0.0, l)); });
          const Vector mean = law.mean;
          return [mean, root](Rng& rng) -> Vector {
            return mean + root * standard_normal_vector(mean.size(), rng);
          };
        } else {
          const Vector point = law.point;
          return [point](Rng&) -> Vector { return point; };
        }
      },
      init);
}

// Per-step affine Gaussian map x' = A x + noise(Q) on Quadratic targets.
std::pair<Matrix, Matrix> affine_step(const ChainConfig& config) {
  const Matrix& m = config.target.base_matrix();
  const Index d = m.rows();
  const Matrix id = Matrix::Identity(d, d);
  const double step = config.step;
  switch (config.algorithm) {
    case Algorithm::ULA:
      return {id - step * m, 2.0 * step * id};
    case Algorithm::Proximal: {
      Matrix back_cov = (m + id / step).inverse();
      back_cov = 0.5 * (back_cov + back_cov.transpose());
      const Matrix a = back_cov / step;
      return {a, step * a * a.transpose() + back_cov};
    }
    case Algorithm::EHMC: {
      const kernels::EhmcFlow flow =
          kernels::make_ehmc_flow(m, ehmc_integration_time(config.target, step));
      return {flow.position_map, flow.momentum_map * flow.momentum_map.transpose()};
    }
  }
  throw BadConfig("unknown algorithm");
}

}  // namespace

double ehmc_integration_time(const TargetPotential& target, double c) {
  return 1.0 / (c * std::sqrt(lambda_max(target.base_matrix())));
}

int transient_iterations(double c) {
  if (!(c >= 0.0 && c < 1.0)) throw BadConfig("contraction must lie in [0, 1)");
  if (c == 0.0) return 1;
  return std::max(1, static_cast<int>(std::ceil(std::log(1e-6) / std::log(c))));
}

std::vector<SampleCloud> run_chains(const ChainConfig& config, std::uint64_t seed,
                                    const RunOptions& options) {
  validate(config);
  std::vector<int> record = options.record;
  if (record.empty()) {
    for (int k = 0; k <= config.n_iters; ++k) record.push_back(k);
  }
  std::sort(record.begin(), record.end());
  record.erase(std::unique(record.begin(), record.end()), record.end());
  if (record.front() < 0 || record.back() > config.n_iters) {
    throw BadConfig("recorded iterations must lie in [0, n_iters]");
  }

  const StepFn step = make_step(config);
  const auto init = make_init(config.init);
  const Index d = config.target.dim();

  std::vector<SampleCloud> clouds;
  for (int k : record) {
    clouds.push_back({Matrix(config.n_chains, d), k, seed, config.n_chains});
  }

  auto run_range = [&](int lo, int hi) {
    for (int chain = lo; chain < hi; ++chain) {
      Rng rng = make_stream(seed, static_cast<std::uint64_t>(chain));
      Vector x = init(rng);
      std::size_t next = 0;
      for (int k = 0; k <= record.back(); ++k) {
        if (k > 0) x = step(x, rng);
        if (next < record.size() && record[next] == k) {
          clouds[next].points.row(chain) = x.transpose();
          ++next;
        }
      }
    }
  };

  const int threads = std::clamp(options.threads, 1, config.n_chains);
  if (threads == 1) {
    run_range(0, config.n_chains);
    return clouds;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  const int block = (config.n_chains + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int lo = t * block;
    const int hi = std::min(config.n_chains, lo + block);
    pool.emplace_back([&, t, lo, hi] {
      try {
        run_range(lo, hi);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return clouds;
}

std::optional<GaussianLaw> analytic_law(const ChainConfig& config, int k) {
  if (config.target.kind() != PotentialKind::Quadratic) return std::nullopt;
  validate(config);
  if (k < 0) throw BadConfig("iteration must be >= 0");
  GaussianLaw law = std::visit(
      [](const auto& init) -> GaussianLaw {
        using T = std::decay_t<decltype(init)>;
        if constexpr (std::is_same_v<T, GaussianInit>) {
          return {init.mean, init.cov};
        } else {
          const Index d = init.point.size();
          return {init.point, Matrix::Zero(d, d)};
        }
      },
      config.init);
  const auto [a, q] = affine_step(config);
  for (int i = 0; i < k; ++i) {
    law.mean = a * law.mean;
    law.cov = a * law.cov * a.transpose() + q;
    law.cov = 0.5 * (law.cov + law.cov.transpose());
  }
  return law;
}

GaussianLaw proximal_forward_law(const GaussianLaw& law, double eta) {
  if (!(eta > 0.0)) throw BadStep("eta must be > 0");
  const Index d = law.mean.size();
  return {law.mean, law.cov + eta * Matrix::Identity(d, d)};
}

void write_clouds_csv(std::ostream& out, const std::vector<SampleCloud>& clouds) {
  const Index d = clouds.empty() ? 0 : clouds.front().dim();
  out << "iter,chain";
  for (Index j = 0; j < d; ++j) out << ",dim" << j;
  out << "\r\n";
  out << std::setprecision(17);
  for (const SampleCloud& cloud : clouds) {
    for (Index i = 0; i < cloud.size(); ++i) {
      out << cloud.iteration << ',' << i;
      for (Index j = 0; j < cloud.dim(); ++j) out << ',' << cloud.points(i, j);
      out << "\r\n";
    }
  }
}

const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::ULA: return "ULA";
    case Algorithm::Proximal: return "Proximal";
    case Algorithm::EHMC: return "EHMC";
  }
  return "?";
}

}  // namespace twoscale::samplers
