#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <variant>
#include <vector>

#include "twoscale/kernels.hpp"

/// Parallel chains of ULA, the proximal sampler and exact HMC, recorded as
/// per-iteration sample clouds, plus the exact Gaussian law of each iterate
/// on quadratic targets.
namespace twoscale::samplers {

enum class Algorithm { ULA, Proximal, EHMC };

struct GaussianInit {
  Vector mean;
  Matrix cov;
};

struct DiracInit {
  Vector point;
};

using InitLaw = std::variant<GaussianInit, DiracInit>;

struct ChainConfig {
  Algorithm algorithm;
  /// eta for ULA and Proximal; the time-scale factor c for EHMC.
  double step;
  kernels::TargetPotential target;
  int n_chains;
  int n_iters;
  InitLaw init;
};

/// One point per chain at a given iteration; row i is chain i.
struct SampleCloud {
  Matrix points;
  int iteration;
  std::uint64_t seed;
  int stream_count;

  Index size() const { return points.rows(); }
  Index dim() const { return points.cols(); }
};

struct RunOptions {
  int threads = 1;
  /// Iterations to keep; empty keeps 0..n_iters.
  std::vector<int> record;
};

/// Runs `n_chains` independent chains. Chain i draws from stream i of
/// `seed`, so output is identical for any thread count. Throws BadConfig,
/// SamplerUnavailable or RejectionInfeasible.
std::vector<SampleCloud> run_chains(const ChainConfig& config, std::uint64_t seed,
                                    const RunOptions& options = {});

struct GaussianLaw {
  Vector mean;
  Matrix cov;
};

/// Exact law of iterate k on a Quadratic target; nullopt otherwise.
std::optional<GaussianLaw> analytic_law(const ChainConfig& config, int k);

/// Law of y' = x + sqrt(eta) g for x ~ law.
GaussianLaw proximal_forward_law(const GaussianLaw& law, double eta);

/// T = 1 / (c sqrt(lambda_max(M))).
double ehmc_integration_time(const kernels::TargetPotential& target, double c);

/// Iterations past which the geometric transient with contraction `c`
/// (0 <= c < 1) is below 1e-6: ceil(log(1e-6) / log(c)), at least 1.
int transient_iterations(double c);

/// CSV with header `iter,chain,dim0..dimK`, 17 significant digits.
void write_clouds_csv(std::ostream& out, const std::vector<SampleCloud>& clouds);

const char* to_string(Algorithm a);

}  // namespace twoscale::samplers
