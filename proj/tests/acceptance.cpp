// Acceptance run: one [PASS]/[FAIL] line per criterion, exit 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "twoscale/cli.hpp"
#include "twoscale/constants.hpp"
#include "twoscale/criteria.hpp"
#include "twoscale/estimators.hpp"
#include "twoscale/phi_core.hpp"
#include "twoscale/samplers.hpp"

#ifndef TWOSCALE_CONFIG_DIR
#define TWOSCALE_CONFIG_DIR "configs"
#endif

namespace fs = std::filesystem;
using namespace twoscale;
using kernels::TargetPotential;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

Matrix diag(std::initializer_list<double> v) {
  Vector d(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) d(i++) = x;
  return d.asDiagonal();
}

bool rel_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(1.0, std::abs(b));
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

Outcome ula_gaussian_exactness() {
  Outcome o;
  double worst_z = 0.0;
  for (double eta : {0.1, 0.5, 1.0}) {
    const double analytic = 2.0 * eta / (1.0 - (1.0 - eta) * (1.0 - eta));
    const auto rec = constants::ula_recursion(1.0, 1.0, eta, 0.0, 200);
    o.require(rec.limit.has_value() && rel_close(*rec.limit, analytic, 1e-12),
              "recursion limit differs at eta=" + fmt(eta));
    const double c = kernels::ula_contraction(1.0, 1.0, eta);
    const int iters = samplers::transient_iterations(c * c) + 5;
    const samplers::ChainConfig cfg{samplers::Algorithm::ULA, eta,
                                    TargetPotential::quadratic(diag({1.0})), 100000, iters,
                                    samplers::DiracInit{Vector::Zero(1)}};
    const auto cloud = samplers::run_chains(cfg, 1, {4, {iters}}).back();
    const Vector x = cloud.points.col(0);
    const double m = x.mean();
    const double var = (x.array() - m).square().sum() / static_cast<double>(x.size() - 1);
    const double sd = analytic * std::sqrt(2.0 / static_cast<double>(x.size()));
    worst_z = std::max(worst_z, std::abs(var - analytic) / sd);
    o.require(std::abs(var - analytic) <= 5.0 * sd,
              "empirical variance " + fmt(var) + " vs " + fmt(analytic));
  }
  if (o.pass) o.detail = "limits exact, worst empirical z = " + fmt(worst_z);
  return o;
}

Outcome endpoint_limits() {
  Outcome o;
  const auto ula = constants::ula_recursion(1.0, 1.0, 1.0, 0.0, 200);
  o.require(ula.limit && std::abs(*ula.limit - 2.0) <= 1e-10, "ULA limit != 2");
  o.require(std::abs(ula.history.back() - 2.0) <= 1e-10, "ULA iterate != 2");
  const double eta = 1.0;
  const double beta = constants::proximal_backward_beta(1.0, eta, std::nullopt);
  const auto prox = constants::proximal_recursion(beta, eta, 0.0, 200);
  o.require(prox.limit && std::abs(*prox.limit - 1.0) <= 1e-10, "proximal limit != 1");
  o.require(prox.limit_alt && std::abs(*prox.limit_alt - 1.0) <= 1e-10,
            "proximal alternate limit != 1");
  const auto ehmc = constants::ehmc_recursion(diag({1.0, 4.0}), 2.0, 0.0, 200);
  o.require(ehmc.limit && std::abs(*ehmc.limit - 1.0) <= 1e-10, "eHMC limit != 1");
  o.require(ehmc.limit_alt && std::abs(*ehmc.limit_alt - 1.0) <= 1e-10,
            "eHMC 1/lambda_min != 1");
  if (o.pass) {
    o.detail = "ULA " + fmt(*ula.limit) + ", proximal " + fmt(*prox.limit) + ", eHMC " +
               fmt(*ehmc.limit);
  }
  return o;
}

double zeta_by_minimization(double a, double b, double l) {
  auto objective = [&](double log_c) {
    const double c = std::exp(log_c);
    return std::max(b + a * (1.0 + 1.0 / c) * l * l * b, a * (1.0 + c));
  };
  // Coarse grid, then golden-section refinement around the best node.
  double best = -60.0;
  for (double x = -60.0; x <= 60.0; x += 0.5) {
    if (objective(x) < objective(best)) best = x;
  }
  double lo = best - 0.5, hi = best + 0.5;
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
  double f1 = objective(x1), f2 = objective(x2);
  for (int i = 0; i < 200; ++i) {
    if (f1 < f2) {
      hi = x2; x2 = x1; f2 = f1;
      x1 = hi - r * (hi - lo); f1 = objective(x1);
    } else {
      lo = x1; x1 = x2; f1 = f2;
      x2 = lo + r * (hi - lo); f2 = objective(x2);
    }
  }
  return std::min(f1, f2);
}

Outcome zeta_xi_cross_validation() {
  Outcome o;
  Rng rng = make_stream(3, 0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double a = 10.0 - uniform_real(0.0, 10.0, rng);
    const double b = 10.0 - uniform_real(0.0, 10.0, rng);
    const double l = 10.0 - uniform_real(0.0, 10.0, rng);
    const double z = constants::zeta({a, b, l});
    const double zm = zeta_by_minimization(a, b, l);
    worst = std::max(worst, std::abs(z - zm) / z);
    o.require(std::abs(z - zm) <= 1e-8 * z, "zeta mismatch at draw " + std::to_string(i));
    o.require(constants::xi({a, b, l}) <= z, "xi > zeta at draw " + std::to_string(i));
    o.require(constants::zeta({a, b, 0.0}) == std::max(a, b), "zeta(L=0) != max");
    o.require(constants::xi({a, b, 0.0}) == b, "xi(L=0) != beta");
  }
  if (o.pass) o.detail = "worst relative gap " + fmt(worst);
  return o;
}

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

Outcome identity_suite() {
  using namespace twoscale::phi;
  Outcome o;
  Rng rng = make_stream(4, 0);
  double worst_residual = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t nx = 1 + rng() % 8;
    const std::size_t ny = 1 + rng() % 8;
    std::vector<FiniteDistribution> comps;
    for (std::size_t y = 0; y < ny; ++y) comps.emplace_back(random_weights(nx, rng));
    const DiscreteMixtureModel model(FiniteDistribution(random_weights(ny, rng)), comps);
    Matrix f(static_cast<Index>(nx), static_cast<Index>(ny));
    for (Index i = 0; i < f.size(); ++i) f.data()[i] = uniform_real(0.05, 5.0, rng);
    for (const PhiFunction& phi : {PhiFunction::square(), PhiFunction::xlogx()}) {
      const auto d = entropy_decomposition(phi, model, f);
      const double res = std::abs(d.total - d.within_expected - d.between);
      worst_residual = std::max(worst_residual, res);
      o.require(res <= 1e-12, "decomposition residual " + fmt(res));
    }
  }
  double min_gap = INFINITY;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 1 + rng() % 8;
    const FiniteDistribution pi(random_weights(n, rng));
    std::vector<double> f(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      f[i] = uniform_real(0.05, 5.0, rng);
      g[i] = uniform_real(0.05, 5.0, rng);
    }
    for (const PhiFunction& phi : {PhiFunction::square(), PhiFunction::xlogx()}) {
      const double gap = duality_gap(phi, pi, f, g);
      min_gap = std::min(min_gap, gap);
      o.require(gap >= -1e-10, "duality gap " + fmt(gap));
    }
  }
  for (const PhiFunction& phi : {PhiFunction::square(), PhiFunction::xlogx()}) {
    for (int e = -60; e <= 60; ++e) {
      const double t = std::pow(10.0, e / 20.0);
      const PhiValue v = phi_eval(phi, t);
      const double rhs = t * v.first;
      o.require(std::abs(v.value + conjugate_eval(phi, v.first) - rhs) <=
                    1e-12 * std::max(1.0, std::abs(rhs)),
                "conjugate identity at t=" + fmt(t));
    }
  }
  if (o.pass) {
    o.detail = "max residual " + fmt(worst_residual) + ", min gap " + fmt(min_gap);
  }
  return o;
}

std::vector<Vector> grid_2d() {
  std::vector<Vector> g;
  for (double a : {-1.5, 0.0, 2.0}) {
    for (double b : {-0.5, 1.0}) g.push_back(Eigen::Vector2d(a, b));
  }
  return g;
}

std::vector<Vector> directions_2d() {
  std::vector<Vector> g = criteria::coordinate_directions(2);
  g.push_back(Eigen::Vector2d(1.0, 1.0).normalized());
  g.push_back(Eigen::Vector2d(2.0, -1.0).normalized());
  return g;
}

Outcome gaussian_criterion_exactness() {
  using namespace twoscale::criteria;
  Outcome o;
  const std::vector<double> lambdas{-2.0, -1.0, -0.5, 0.5, 1.0, 2.0};
  const double eta = 0.5;
  const Matrix m = diag({1.0, 2.0});
  const auto pk = kernels::make_proximal_kernels(TargetPotential::quadratic(m), eta);
  const auto fwd = check_mgf_criterion(pk.forward, grid_2d(), directions_2d(), lambdas,
                                       1.0 / std::sqrt(eta), 10, 1);
  o.require(!fwd.violated && fwd.method == CheckMethod::Analytic, "proximal forward MGF");
  for (const auto& p : fwd.probes) {
    o.require(std::abs(p.margin) <= 1e-12 * p.bound, "proximal forward margin not zero");
  }

  const auto ula = kernels::make_ula_kernel(TargetPotential::quadratic(m), 0.3);
  const double l_bar = kernels::ula_contraction(1.0, 2.0, 0.3) / std::sqrt(0.6);
  std::size_t compared = 0;
  for (CriterionKind kind : {CriterionKind::Var, CriterionKind::MGF}) {
    auto check = [&](MethodRequest req, int n_mc) {
      return kind == CriterionKind::Var
                 ? check_var_criterion(ula, grid_2d(), directions_2d(), l_bar, n_mc, 7, req)
                 : check_mgf_criterion(ula, grid_2d(), directions_2d(), lambdas, l_bar,
                                       n_mc, 7, req);
    };
    const auto an = check(MethodRequest::Auto, 10);
    const auto mc = check(MethodRequest::MonteCarlo, 10000);
    const std::string name = to_string(kind);
    o.require(!an.violated && an.method == CheckMethod::Analytic, name + " analytic");
    o.require(!mc.violated && mc.method == CheckMethod::MonteCarlo, name + " Monte Carlo");
    o.require(an.probes.size() == mc.probes.size(), name + " probe count");
    for (std::size_t i = 0; i < std::min(an.probes.size(), mc.probes.size()); ++i) {
      o.require(std::abs(an.probes[i].observed - mc.probes[i].observed) <= mc.probes[i].slack,
                name + " MC probe outside 5 sigma");
      ++compared;
    }
  }
  if (o.pass) o.detail = std::to_string(compared) + " MC probes within 5 sigma";
  return o;
}

Outcome mixture_bound() {
  using namespace twoscale::estimators;
  Outcome o;
  // rho = N(0, alpha I), P_y = N(A y, beta I).
  const double alpha = 1.5;
  const double beta = 0.5;
  Matrix a(2, 2);
  a << 1.0, 0.5, 0.0, 0.8;
  const auto family = kernels::ConditionalFamily::gaussian(
      "mixture", kernels::GaussianKernelSpec::affine(a, Vector::Zero(2),
                                                     beta * Matrix::Identity(2, 2)));
  const double l_bar = *family.constants().l_bar;
  const Index n = 100000;
  samplers::SampleCloud cloud{Matrix(n, 2), 0, 6, static_cast<int>(n)};
  for (Index i = 0; i < n; ++i) {
    Rng rng = make_stream(6, static_cast<std::uint64_t>(i));
    const Vector y = std::sqrt(alpha) * standard_normal_vector(2, rng);
    cloud.points.row(i) = family.sample(y, rng).transpose();
  }
  const auto fns = standard_function_family(cloud);
  std::string ratios;
  for (Inequality ineq : {Inequality::PI, Inequality::LSI}) {
    const double xi = constants::xi({alpha, beta, l_bar, ineq});
    const auto cert = certify(ineq, cloud, fns, xi);
    o.require(cert.pass, std::string(to_string(ineq)) + " certificate failed at xi");
    ratios += std::string(to_string(ineq)) + " sup " + fmt(cert.observed_sup_ratio) + " / xi " +
              fmt(xi) + "; ";
  }

  Matrix cov(2, 2);
  cov << 2.0, 0.6, 0.6, 1.0;
  const Matrix l = cov.llt().matrixL();
  samplers::SampleCloud gauss{Matrix(n, 2), 0, 7, static_cast<int>(n)};
  for (Index i = 0; i < n; ++i) {
    Rng rng = make_stream(7, static_cast<std::uint64_t>(i));
    gauss.points.row(i) = (l * standard_normal_vector(2, rng)).transpose();
  }
  const double lmax = lambda_max(cov);
  const Vector top = symmetric_eigen(cov).vectors.col(1);
  const auto tight = certify_pi(gauss, {linear_function("top", top)}, lmax);
  const auto& r = tight.per_function.front();
  o.require(std::abs(r.ratio - lmax) <= 5.0 * r.std_err, "linear ratio misses lambda_max");
  if (o.pass) ratios += "tightness " + fmt(r.ratio) + " vs " + fmt(lmax);
  o.detail = o.pass ? ratios : o.detail;
  return o;
}

void check_recursion(Outcome& o, const constants::RecursionState& rec, const std::string& name,
                     double alpha0) {
  for (std::size_t k = 0; k < rec.history.size(); ++k) {
    const double closed =
        constants::affine_recursion_closed_form(rec.c, rec.d, alpha0, static_cast<int>(k));
    o.require(rel_close(rec.history[k], closed, 1e-10) &&
                  rel_close(rec.closed_form[k], closed, 1e-10),
              name + " differs from closed form at k=" + std::to_string(k));
  }
  o.require(rec.history.size() == 201, name + " history length");
}

Outcome recursion_agreement() {
  Outcome o;
  for (double eta : {0.1, 0.5, 1.0, 1.9}) {
    check_recursion(o, constants::ula_recursion(1.0, 2.0, eta * 0.5, 0.7, 200), "ULA", 0.7);
  }
  check_recursion(o, constants::proximal_recursion(0.4, 1.0, 0.0, 200), "proximal", 0.0);
  check_recursion(o, constants::proximal_recursion(1.2, 1.0, 0.3, 200), "proximal", 0.3);
  check_recursion(o, constants::ehmc_recursion(diag({1.0, 4.0}), 2.0, 0.0, 200), "eHMC", 0.0);
  check_recursion(o, constants::ehmc_recursion(diag({0.5, 1.0, 3.0}), 3.0, 2.0, 200), "eHMC",
                  2.0);
  // mu = lambda = 1: c_ULA = |1 - eta| reaches 1 at eta = 2.
  const double below = std::nextafter(2.0, 0.0);
  o.require(!constants::ula_recursion(1.0, 1.0, below, 0.0, 10).diverges,
            "ULA diverges below c_ULA = 1");
  o.require(constants::ula_recursion(1.0, 1.0, 2.0, 0.0, 10).diverges,
            "ULA converges at c_ULA = 1");
  o.require(constants::ula_recursion(1.0, 1.0, 2.5, 0.0, 10).diverges,
            "ULA converges above c_ULA = 1");
  o.require(!constants::proximal_recursion(std::nextafter(1.0, 0.0), 1.0, 0.0, 10).diverges,
            "proximal diverges below beta = eta");
  o.require(constants::proximal_recursion(1.0, 1.0, 0.0, 10).diverges,
            "proximal converges at beta = eta");
  if (o.pass) o.detail = "ULA x4, proximal x2, eHMC x2 at every k <= 200; flags flip exactly";
  return o;
}

Outcome score_identities() {
  Outcome o;
  const Matrix m = diag({1.0, 2.0});
  const double eta = 0.5;
  const auto ula = kernels::make_ula_kernel(TargetPotential::quadratic(m), eta);
  const auto pk = kernels::make_proximal_kernels(TargetPotential::quadratic(m), eta);
  const auto ehmc = kernels::make_ehmc_kernel(m, constants::ehmc_schedule(m, 2.0).t);
  Rng rng = make_stream(8, 0);
  double worst_fd = 0.0;
  double worst_z = 0.0;
  for (const auto* family : {&ula, &pk.forward, &pk.backward, &ehmc}) {
    const auto* spec = family->gaussian_spec();
    o.require(spec != nullptr, family->name() + " has no Gaussian form");
    if (!spec) continue;
    for (int trial = 0; trial < 20; ++trial) {
      const Vector y = 2.0 * standard_normal_vector(2, rng);
      const Vector x = family->sample(y, rng);
      const Vector s = kernels::score_in_y(*family, x, y, 10, rng);
      for (Index i = 0; i < 2; ++i) {
        const double h = 1e-5;
        const Vector e = Vector::Unit(2, i) * h;
        const double fd = (spec->log_density(x, y + e) - spec->log_density(x, y - e)) / (2 * h);
        const double err = std::abs(s(i) - fd) / std::max(1.0, std::abs(fd));
        worst_fd = std::max(worst_fd, err);
        o.require(err <= 1e-6, family->name() + " score differs from finite differences");
      }
    }
    const Vector y = Eigen::Vector2d(0.7, -1.2);
    const int n = 10000;
    Matrix scores(n, 2);
    for (int i = 0; i < n; ++i) {
      Rng draw = make_stream(9, static_cast<std::uint64_t>(i));
      scores.row(i) = kernels::score_in_y(*family, family->sample(y, draw), y, 10, draw).transpose();
    }
    const Vector mean = scores.colwise().mean().transpose();
    for (Index i = 0; i < 2; ++i) {
      const double sd = std::sqrt((scores.col(i).array() - mean(i)).square().sum() / (n - 1) / n);
      if (sd == 0.0) continue;
      worst_z = std::max(worst_z, std::abs(mean(i)) / sd);
      o.require(std::abs(mean(i)) <= 5.0 * sd, family->name() + " mean score not zero");
    }
  }
  if (o.pass) o.detail = "worst FD error " + fmt(worst_fd) + ", worst mean-score z " + fmt(worst_z);
  return o;
}

std::map<std::string, std::string> read_csvs(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.path().extension() != ".csv") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return files;
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "twoscale_acceptance";
  fs::remove_all(root);
  std::vector<fs::path> configs;
  for (const auto& e : fs::directory_iterator(TWOSCALE_CONFIG_DIR)) {
    if (e.path().extension() == ".json") configs.push_back(e.path());
  }
  std::sort(configs.begin(), configs.end());
  o.require(!configs.empty(), "no configs found");
  std::map<int, std::map<std::string, std::string>> by_threads;
  for (int threads : {1, 4, 8}) {
    const fs::path out = root / ("t" + std::to_string(threads));
    for (const auto& cfg : configs) {
      cli::Options opts;
      opts.config_path = cfg.string();
      opts.out = out.string();
      opts.threads = threads;
      opts.quiet = true;
      std::ostringstream sink, err;
      const int code = cli::run(opts, sink, err);
      o.require(code == cli::kExitOk, cfg.filename().string() + " exited " +
                                          std::to_string(code) + ": " + err.str());
    }
    by_threads[threads] = read_csvs(out);
  }
  o.require(!by_threads[1].empty(), "no CSVs written");
  o.require(by_threads[1] == by_threads[4], "CSVs differ between 1 and 4 threads");
  o.require(by_threads[1] == by_threads[8], "CSVs differ between 1 and 8 threads");
  if (o.pass) {
    o.detail = std::to_string(configs.size()) + " configs, " +
               std::to_string(by_threads[1].size()) + " CSVs byte-identical";
  }
  fs::remove_all(root);
  return o;
}

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
  double time_limit;  // seconds, 0 for none
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "ULA Gaussian exactness", ula_gaussian_exactness, 10.0},
      {2, "endpoint limits", endpoint_limits, 0.0},
      {3, "zeta/xi cross-validation", zeta_xi_cross_validation, 5.0},
      {4, "identity suite", identity_suite, 30.0},
      {5, "Gaussian criterion exactness", gaussian_criterion_exactness, 0.0},
      {6, "mixture bound non-violation", mixture_bound, 0.0},
      {7, "recursion closed forms", recursion_agreement, 0.0},
      {8, "score identities", score_identities, 0.0},
      {9, "determinism across threads", determinism, 0.0},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.time_limit > 0.0 && secs >= c.time_limit) {
      o.pass = false;
      o.detail += " (over the " + fmt(c.time_limit) + " s budget)";
    }
    std::printf("[%s] %d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
