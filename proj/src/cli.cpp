#include "twoscale/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "twoscale/constants.hpp"
#include "twoscale/criteria.hpp"
#include "twoscale/errors.hpp"
#include "twoscale/estimators.hpp"
#include "twoscale/numeric.hpp"
#include "twoscale/phi_core.hpp"
#include "twoscale/samplers.hpp"

namespace twoscale::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using kernels::TargetPotential;
using samplers::Algorithm;

constexpr const char* kEol = "\r\n";

// ---------------------------------------------------------------------------
// JSON helpers

const json& require(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) {
    throw ConfigError(ctx + ": missing required field '" + key + "'");
  }
  return j.at(key);
}

double as_double(const json& j, const std::string& ctx) {
  if (!j.is_number()) throw ConfigError(ctx + ": expected a number");
  return j.get<double>();
}

int as_int(const json& j, const std::string& ctx) {
  if (!j.is_number_integer()) throw ConfigError(ctx + ": expected an integer");
  return j.get<int>();
}

std::string as_string(const json& j, const std::string& ctx) {
  if (!j.is_string()) throw ConfigError(ctx + ": expected a string");
  return j.get<std::string>();
}

double get_double(const json& j, const std::string& key, const std::string& ctx) {
  return as_double(require(j, key, ctx), ctx + "." + key);
}

double get_double(const json& j, const std::string& key, const std::string& ctx,
                  double fallback) {
  return j.contains(key) ? as_double(j.at(key), ctx + "." + key) : fallback;
}

int get_int(const json& j, const std::string& key, const std::string& ctx, int fallback) {
  return j.contains(key) ? as_int(j.at(key), ctx + "." + key) : fallback;
}

Vector as_vector(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.empty()) throw ConfigError(ctx + ": expected a non-empty array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Index>(i)) = as_double(j[i], ctx + "[" + std::to_string(i) + "]");
  }
  return v;
}

Matrix as_matrix(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.empty()) throw ConfigError(ctx + ": expected an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const Vector row = as_vector(j[r], ctx + "[" + std::to_string(r) + "]");
    if (static_cast<std::size_t>(row.size()) != cols) {
      throw ConfigError(ctx + ": ragged matrix");
    }
    m.row(static_cast<Index>(r)) = row.transpose();
  }
  return m;
}

// "matrix": [[..]] or "diag": [..]
Matrix square_matrix_field(const json& j, const std::string& ctx) {
  if (j.contains("matrix")) {
    Matrix m = as_matrix(j.at("matrix"), ctx + ".matrix");
    if (m.rows() != m.cols()) throw ConfigError(ctx + ".matrix: not square");
    return m;
  }
  if (j.contains("diag")) return as_vector(j.at("diag"), ctx + ".diag").asDiagonal();
  throw ConfigError(ctx + ": needs 'matrix' or 'diag'");
}

std::vector<Vector> vector_list(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.empty()) throw ConfigError(ctx + ": expected a non-empty array");
  std::vector<Vector> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(as_vector(j[i], ctx + "[" + std::to_string(i) + "]"));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Formatting

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string fmt(const Vector& v) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (Index i = 0; i < v.size(); ++i) os << (i ? " " : "") << v(i);
  return os.str();
}

const char* flag(bool b) { return b ? "true" : "false"; }

class Summary {
 public:
  template <typename T>
  void add(const std::string& key, const T& value) {
    os_ << key << ": " << value << '\n';
  }
  void add(const std::string& key, double value) { os_ << key << ": " << fmt(value) << '\n'; }
  void line(const std::string& text) { os_ << text << '\n'; }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
};

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << content;
}

// ---------------------------------------------------------------------------
// Experiment pieces

struct Context {
  const json& cfg;
  std::optional<std::uint64_t> seed;
  int threads;
  fs::path dir;
  Summary summary;
  std::vector<std::pair<std::string, std::string>> files;

  std::uint64_t require_seed() const {
    if (!seed) throw ConfigError("this mode is stochastic and needs a 'seed'");
    return *seed;
  }
  void emit(const std::string& name, const std::string& content) {
    files.emplace_back(name, content);
  }
};

TargetPotential parse_target(const json& cfg) {
  const json& t = require(cfg, "target", "config");
  const std::string kind = as_string(require(t, "kind", "target"), "target.kind");
  const Matrix m = square_matrix_field(t, "target");
  if (kind == "quadratic") return TargetPotential::quadratic(m);
  if (kind == "bounded") {
    const double osc = get_double(t, "oscillation", "target");
    const Vector freq = t.contains("frequency") ? as_vector(t.at("frequency"), "target.frequency")
                                                : Vector(Vector::Ones(m.rows()));
    if (freq.size() != m.rows()) throw ConfigError("target.frequency: wrong dimension");
    return TargetPotential::strongly_convex_plus_bounded(m, kernels::cosine_bump(osc, freq),
                                                         osc, 0.0);
  }
  if (kind == "lipschitz") {
    const double lip = get_double(t, "lipschitz", "target");
    Vector dir = t.contains("direction") ? as_vector(t.at("direction"), "target.direction")
                                         : Vector(Vector::Unit(m.rows(), 0));
    if (dir.size() != m.rows()) throw ConfigError("target.direction: wrong dimension");
    dir.normalize();
    return TargetPotential::strongly_convex_plus_lipschitz(m, kernels::smoothed_abs(lip, dir),
                                                           lip);
  }
  throw ConfigError("target.kind: unknown '" + kind + "'");
}

std::optional<constants::Perturbation> target_perturbation(const TargetPotential& target) {
  if (target.oscillation()) return constants::HolleyStroock{*target.oscillation()};
  if (target.lipschitz()) return constants::BrigatiLipschitz{*target.lipschitz()};
  return std::nullopt;
}

struct AlgorithmSpec {
  Algorithm kind;
  double step;
  std::optional<double> mu;
  std::optional<double> lambda;
};

AlgorithmSpec parse_algorithm(const json& cfg) {
  const json& a = require(cfg, "algorithm", "config");
  const std::string kind = as_string(require(a, "kind", "algorithm"), "algorithm.kind");
  AlgorithmSpec spec{};
  if (kind == "ULA") {
    spec = {Algorithm::ULA, get_double(a, "eta", "algorithm"), {}, {}};
  } else if (kind == "Proximal") {
    spec = {Algorithm::Proximal, get_double(a, "eta", "algorithm"), {}, {}};
  } else if (kind == "EHMC") {
    spec = {Algorithm::EHMC, get_double(a, "c", "algorithm"), {}, {}};
  } else {
    throw ConfigError("algorithm.kind: unknown '" + kind + "'");
  }
  if (a.contains("mu")) spec.mu = as_double(a.at("mu"), "algorithm.mu");
  if (a.contains("lambda")) spec.lambda = as_double(a.at("lambda"), "algorithm.lambda");
  return spec;
}

samplers::InitLaw parse_init(const json& chains, Index dim) {
  if (!chains.contains("init")) return samplers::DiracInit{Vector::Zero(dim)};
  const json& i = chains.at("init");
  const std::string kind = as_string(require(i, "kind", "chains.init"), "chains.init.kind");
  if (kind == "dirac") return samplers::DiracInit{as_vector(require(i, "point", "chains.init"), "chains.init.point")};
  if (kind == "gaussian") {
    return samplers::GaussianInit{as_vector(require(i, "mean", "chains.init"), "chains.init.mean"),
                                  as_matrix(require(i, "cov", "chains.init"), "chains.init.cov")};
  }
  throw ConfigError("chains.init.kind: unknown '" + kind + "'");
}

double init_constant(const samplers::InitLaw& init) {
  if (const auto* g = std::get_if<samplers::GaussianInit>(&init)) return lambda_max(g->cov);
  return 0.0;
}

constants::RecursionState recursion_for(const AlgorithmSpec& alg, const TargetPotential& target,
                                        double alpha0, int k_max) {
  switch (alg.kind) {
    case Algorithm::ULA: {
      const double mu = alg.mu.value_or(target.mu());
      std::optional<double> lambda = alg.lambda;
      if (!lambda) lambda = target.smoothness();
      if (!lambda) {
        throw ConfigError("ULA tracking on a non-quadratic target needs algorithm.lambda");
      }
      return constants::ula_recursion(mu, *lambda, alg.step, alpha0, k_max);
    }
    case Algorithm::Proximal: {
      const double mu = alg.mu.value_or(target.mu());
      const double beta =
          constants::proximal_backward_beta(mu, alg.step, target_perturbation(target));
      return constants::proximal_recursion(beta, alg.step, alpha0, k_max);
    }
    case Algorithm::EHMC:
      if (target.kind() != kernels::PotentialKind::Quadratic) {
        throw ConfigError("EHMC tracking needs a quadratic target");
      }
      return constants::ehmc_recursion(target.base_matrix(), alg.step, alpha0, k_max);
  }
  throw ConfigError("unknown algorithm");
}

std::string recursion_csv(const constants::RecursionState& s) {
  std::ostringstream os;
  os << "k,alpha_k,closed_form,abs_diff" << kEol;
  for (std::size_t k = 0; k < s.history.size(); ++k) {
    os << k << ',' << fmt(s.history[k]) << ',' << fmt(s.closed_form[k]) << ','
       << fmt(std::abs(s.history[k] - s.closed_form[k])) << kEol;
  }
  return os.str();
}

void summarize_recursion(Summary& sum, const constants::RecursionState& s) {
  sum.add("scheme", constants::to_string(s.scheme));
  for (const auto& [k, v] : s.params) sum.add("param." + k, v);
  sum.add("c", s.c);
  sum.add("d", s.d);
  sum.add("diverges", flag(s.diverges));
  if (s.limit) sum.add("limit", *s.limit);
  if (s.limit_alt) sum.add("limit_alt", *s.limit_alt);
  sum.add("alpha_final", s.history.back());
  double worst = 0.0;
  for (std::size_t k = 0; k < s.history.size(); ++k) {
    worst = std::max(worst, std::abs(s.history[k] - s.closed_form[k]));
  }
  sum.add("max_abs_diff_closed_form", worst);
}

samplers::ChainConfig chain_config(const json& chains, const AlgorithmSpec& alg,
                                   const TargetPotential& target) {
  return {alg.kind,
          alg.step,
          target,
          as_int(require(chains, "n_chains", "chains"), "chains.n_chains"),
          as_int(require(chains, "n_iters", "chains"), "chains.n_iters"),
          parse_init(chains, target.dim())};
}

std::vector<int> record_list(const json& chains, int n_iters) {
  if (!chains.contains("record")) return {n_iters};
  std::vector<int> out;
  for (const json& k : chains.at("record")) out.push_back(as_int(k, "chains.record"));
  return out;
}

std::string clouds_csv(const std::vector<samplers::SampleCloud>& clouds) {
  std::ostringstream os;
  samplers::write_clouds_csv(os, clouds);
  return os.str();
}

// ---------------------------------------------------------------------------
// Modes

bool mode_constants(Context& ctx) {
  const json& cfg = ctx.cfg;
  const double alpha = get_double(cfg, "alpha", "config");
  const double beta = get_double(cfg, "beta", "config");
  double l_bar = 0.0;
  if (cfg.contains("l_bar")) {
    l_bar = as_double(cfg.at("l_bar"), "config.l_bar");
  } else if (cfg.contains("condition")) {
    const json& c = cfg.at("condition");
    const std::string kind = as_string(require(c, "kind", "condition"), "condition.kind");
    criteria::SufficientCondition cond;
    if (kind == "bounded_score") {
      cond = criteria::BoundedScore{get_double(c, "b", "condition")};
    } else if (kind == "bounded_variance") {
      cond = criteria::BoundedVariance{get_double(c, "b", "condition")};
    } else if (kind == "lipschitz_plus_pi") {
      cond = criteria::LipschitzPlusPI{get_double(c, "lipschitz", "condition"),
                                       get_double(c, "beta", "condition")};
    } else if (kind == "sub_gaussian_score") {
      cond = criteria::SubGaussianScore{get_double(c, "sigma", "condition")};
    } else if (kind == "lipschitz_plus_lsi") {
      cond = criteria::LipschitzPlusLSI{get_double(c, "lipschitz", "condition"),
                                        get_double(c, "beta", "condition")};
    } else {
      throw ConfigError("condition.kind: unknown '" + kind + "'");
    }
    const criteria::ImpliedLBar implied = criteria::derive_l_bar(cond);
    const std::string ineq = cfg.value("inequality", std::string("PI"));
    const std::optional<double> chosen = ineq == "LSI" ? implied.mgf : implied.var;
    if (!chosen) {
      throw ConfigError("condition '" + kind + "' gives no L-bar for " + ineq);
    }
    l_bar = *chosen;
  } else {
    throw ConfigError("constants mode needs 'l_bar' or 'condition'");
  }
  const std::string ineq = cfg.value("inequality", std::string("PI"));
  if (ineq != "PI" && ineq != "LSI") throw ConfigError("inequality must be PI or LSI");
  const constants::TwoScaleInput in{alpha, beta, l_bar,
                                    ineq == "PI" ? Inequality::PI : Inequality::LSI};
  const double zeta = constants::zeta(in);
  const double xi = constants::xi(in);
  const auto pc = constants::product_convolution_constants(alpha, beta);

  std::ostringstream csv;
  csv << "quantity,value" << kEol;
  csv << "alpha," << fmt(alpha) << kEol << "beta," << fmt(beta) << kEol;
  csv << "l_bar," << fmt(l_bar) << kEol << "zeta," << fmt(zeta) << kEol;
  csv << "xi," << fmt(xi) << kEol << "product," << fmt(pc.product) << kEol;
  csv << "convolution," << fmt(pc.convolution) << kEol;
  ctx.emit("constants.csv", csv.str());

  ctx.summary.add("inequality", ineq);
  ctx.summary.add("alpha", alpha);
  ctx.summary.add("beta", beta);
  ctx.summary.add("l_bar", l_bar);
  ctx.summary.add("zeta", zeta);
  ctx.summary.add("xi", xi);
  ctx.summary.add("product", pc.product);
  ctx.summary.add("convolution", pc.convolution);
  return true;
}

bool mode_track(Context& ctx) {
  const json& cfg = ctx.cfg;
  const AlgorithmSpec alg = parse_algorithm(cfg);
  const TargetPotential target = parse_target(cfg);
  const int k_max = get_int(cfg, "k_max", "config", 200);

  std::optional<samplers::ChainConfig> chains;
  if (cfg.contains("chains")) chains = chain_config(cfg.at("chains"), alg, target);
  const double alpha0 = get_double(cfg, "alpha0", "config",
                                   chains ? init_constant(chains->init) : 0.0);

  const constants::RecursionState s = recursion_for(alg, target, alpha0, k_max);
  ctx.emit("recursion.csv", recursion_csv(s));
  summarize_recursion(ctx.summary, s);
  if (!chains) return true;

  if (chains->n_iters > k_max) throw ConfigError("chains.n_iters exceeds k_max");
  samplers::RunOptions opts{ctx.threads, record_list(cfg.at("chains"), chains->n_iters)};
  const auto clouds = samplers::run_chains(*chains, ctx.require_seed(), opts);
  ctx.emit("clouds.csv", clouds_csv(clouds));

  // The tracked constant must dominate every test-function ratio of the cloud.
  bool pass = true;
  std::ostringstream csv;
  csv << "iter,alpha_k,sup_ratio,max_std_err,pass" << kEol;
  for (const auto& cloud : clouds) {
    const double alpha_k = s.history[static_cast<std::size_t>(cloud.iteration)];
    const auto cert = estimators::certify_pi(
        cloud, estimators::standard_function_family(cloud), alpha_k);
    double se = 0.0;
    for (const auto& r : cert.per_function) se = std::max(se, r.std_err);
    csv << cloud.iteration << ',' << fmt(alpha_k) << ',' << fmt(cert.observed_sup_ratio)
        << ',' << fmt(se) << ',' << flag(cert.pass) << kEol;
    pass = pass && cert.pass;
  }
  ctx.emit("tracking.csv", csv.str());
  ctx.summary.add("chains", chains->n_chains);
  ctx.summary.add("tracking_pass", flag(pass));
  return pass;
}

bool mode_certify(Context& ctx) {
  const json& cfg = ctx.cfg;
  const AlgorithmSpec alg = parse_algorithm(cfg);
  const TargetPotential target = parse_target(cfg);
  const json& chains_cfg = require(cfg, "chains", "config");
  const samplers::ChainConfig chains = chain_config(chains_cfg, alg, target);
  const std::string ineq = cfg.value("inequality", std::string("PI"));
  if (ineq != "PI" && ineq != "LSI") throw ConfigError("inequality must be PI or LSI");

  double gamma = 0.0;
  const json& g = require(cfg, "gamma", "config");
  if (g.is_string() && g.get<std::string>() == "recursion") {
    const auto s = recursion_for(alg, target, get_double(cfg, "alpha0", "config",
                                                         init_constant(chains.init)),
                                 chains.n_iters);
    gamma = s.history.back();
  } else {
    gamma = as_double(g, "config.gamma");
  }

  std::vector<int> record = record_list(chains_cfg, chains.n_iters);
  if (std::find(record.begin(), record.end(), chains.n_iters) == record.end()) {
    record.push_back(chains.n_iters);
  }
  const auto clouds =
      samplers::run_chains(chains, ctx.require_seed(), {ctx.threads, record});
  if (cfg.value("write_clouds", true)) ctx.emit("clouds.csv", clouds_csv(clouds));

  const auto& cloud = clouds.back();
  const auto cert = estimators::certify(ineq == "PI" ? Inequality::PI : Inequality::LSI,
                                        cloud, estimators::standard_function_family(cloud),
                                        gamma);
  std::ostringstream csv;
  estimators::write_certificate_csv(csv, cert);
  ctx.emit("certificate.csv", csv.str());

  ctx.summary.add("algorithm", samplers::to_string(alg.kind));
  ctx.summary.add("inequality", ineq);
  ctx.summary.add("iteration", cloud.iteration);
  ctx.summary.add("n_points", cloud.size());
  ctx.summary.add("gamma", gamma);
  ctx.summary.add("observed_sup_ratio", cert.observed_sup_ratio);
  for (const auto& id : cert.skipped) ctx.summary.add("warning", "skipped " + id + " (degenerate denominator)");
  ctx.summary.add("pass", flag(cert.pass));
  return cert.pass;
}

kernels::ConditionalFamily parse_kernel(const json& cfg) {
  const json& k = require(cfg, "kernel", "config");
  const std::string kind = as_string(require(k, "kind", "kernel"), "kernel.kind");
  if (kind == "affine") {
    const Matrix a = as_matrix(require(k, "a", "kernel"), "kernel.a");
    const Vector b = k.contains("b") ? as_vector(k.at("b"), "kernel.b")
                                     : Vector(Vector::Zero(a.rows()));
    const Matrix cov = as_matrix(require(k, "cov", "kernel"), "kernel.cov");
    return kernels::ConditionalFamily::gaussian(
        "affine", kernels::GaussianKernelSpec::affine(a, b, cov));
  }
  if (kind == "ehmc") {
    const Matrix m = square_matrix_field(k, "kernel");
    const double c = get_double(k, "c", "kernel");
    return kernels::make_ehmc_kernel(
        m, samplers::ehmc_integration_time(TargetPotential::quadratic(m), c));
  }
  const TargetPotential target = parse_target(cfg);
  const double eta = get_double(k, "eta", "kernel");
  if (kind == "ula") return kernels::make_ula_kernel(target, eta);
  if (kind == "proximal_forward") return kernels::make_proximal_kernels(target, eta).forward;
  if (kind == "proximal_backward") return kernels::make_proximal_kernels(target, eta).backward;
  throw ConfigError("kernel.kind: unknown '" + kind + "'");
}

std::string criteria_rows(const criteria::CriterionReport& r) {
  std::ostringstream os;
  for (std::size_t i = 0; i < r.probes.size(); ++i) {
    const criteria::Probe& p = r.probes[i];
    const bool pass = p.overflow || p.observed <= p.bound + p.slack;
    os << criteria::to_string(r.kind) << ',' << i << ',' << fmt(p.y) << ',' << fmt(p.u)
       << ',' << fmt(p.scale) << ',' << fmt(p.observed) << ',' << fmt(p.bound) << ','
       << fmt(p.margin) << ',' << fmt(p.slack) << ',' << flag(p.overflow) << ','
       << flag(pass) << kEol;
  }
  return os.str();
}

bool mode_criteria(Context& ctx) {
  const json& cfg = ctx.cfg;
  const kernels::ConditionalFamily family = parse_kernel(cfg);
  const Index dy = family.dim_y();

  double l_bar;
  if (cfg.contains("l_bar")) {
    l_bar = as_double(cfg.at("l_bar"), "config.l_bar");
  } else if (family.constants().l_bar) {
    l_bar = *family.constants().l_bar;
  } else {
    throw ConfigError("kernel has no analytic L-bar; supply 'l_bar'");
  }

  std::vector<Vector> y_grid;
  if (cfg.contains("y_grid")) {
    y_grid = vector_list(cfg.at("y_grid"), "config.y_grid");
  } else {
    y_grid.push_back(Vector::Zero(dy));
    for (Index i = 0; i < dy; ++i) {
      y_grid.push_back(Vector::Unit(dy, i));
      y_grid.push_back(-Vector::Unit(dy, i));
    }
  }
  std::vector<Vector> u_grid = cfg.contains("u_grid")
                                   ? vector_list(cfg.at("u_grid"), "config.u_grid")
                                   : criteria::coordinate_directions(dy);
  std::vector<double> lambda_grid{-2.0, -1.0, -0.5, 0.5, 1.0, 2.0};
  if (cfg.contains("lambda_grid")) {
    lambda_grid.clear();
    for (const json& l : cfg.at("lambda_grid")) lambda_grid.push_back(as_double(l, "lambda_grid"));
  }
  const int n_mc = get_int(cfg, "n_mc", "config", 10000);
  const std::string method_name = cfg.value("method", std::string("auto"));
  if (method_name != "auto" && method_name != "monte_carlo") {
    throw ConfigError("method must be 'auto' or 'monte_carlo'");
  }
  const auto method = method_name == "auto" ? criteria::MethodRequest::Auto
                                            : criteria::MethodRequest::MonteCarlo;
  const std::string which = cfg.value("criterion", std::string("both"));
  if (which != "var" && which != "mgf" && which != "both") {
    throw ConfigError("criterion must be 'var', 'mgf' or 'both'");
  }
  const bool analytic_possible = method == criteria::MethodRequest::Auto &&
                                 family.gaussian_spec() != nullptr;
  const std::uint64_t seed = analytic_possible ? ctx.seed.value_or(0) : ctx.require_seed();

  std::vector<criteria::CriterionReport> reports;
  if (which != "mgf") {
    reports.push_back(
        criteria::check_var_criterion(family, y_grid, u_grid, l_bar, n_mc, seed, method));
  }
  if (which != "var") {
    reports.push_back(criteria::check_mgf_criterion(family, y_grid, u_grid, lambda_grid, l_bar,
                                                    n_mc, seed, method));
  }

  std::ostringstream csv;
  csv << "criterion,probe,y,u,scale,observed,bound,margin,slack,overflow,pass" << kEol;
  bool pass = true;
  ctx.summary.add("kernel", family.name());
  ctx.summary.add("l_bar", l_bar);
  for (const auto& r : reports) {
    csv << criteria_rows(r);
    const std::string k = criteria::to_string(r.kind);
    ctx.summary.add(k + ".method", criteria::to_string(r.method));
    ctx.summary.add(k + ".certification",
                    r.certification == criteria::Certification::Global ? "global" : "grid");
    ctx.summary.add(k + ".sup_observed", r.sup_observed);
    ctx.summary.add(k + ".l_bar_squared", l_bar * l_bar);
    ctx.summary.add(k + ".violated", flag(r.violated));
    if (r.overflow_warning) ctx.summary.add(k + ".warning", "overflowing probes skipped");
    pass = pass && !r.violated;
  }
  ctx.emit("criteria.csv", csv.str());
  ctx.summary.add("pass", flag(pass));
  return pass;
}

std::vector<double> random_weights(std::size_t n, Rng& rng) {
  std::vector<double> w(n);
  double total = 0.0;
  for (double& v : w) {
    v = -std::log(uniform_real(1e-12, 1.0, rng));
    total += v;
  }
  for (double& v : w) v /= total;
  // Push rounding into the largest weight so the sum is 1 to machine precision.
  double sum = 0.0;
  for (double v : w) sum += v;
  *std::max_element(w.begin(), w.end()) += 1.0 - sum;
  return w;
}

bool mode_identities(Context& ctx) {
  const json& cfg = ctx.cfg;
  const std::uint64_t seed = ctx.require_seed();
  const int trials = get_int(cfg, "n_trials", "config", 1000);
  const int max_atoms = get_int(cfg, "max_atoms", "config", 8);
  if (trials < 1 || max_atoms < 1) throw ConfigError("n_trials and max_atoms must be >= 1");
  const double decomposition_tol = get_double(cfg, "decomposition_tol", "config", 1e-12);
  const double gap_tol = get_double(cfg, "gap_tol", "config", 1e-10);

  const std::vector<std::pair<std::string, phi::PhiFunction>> phis{
      {"square", phi::PhiFunction::square()}, {"xlogx", phi::PhiFunction::xlogx()}};

  std::ostringstream csv;
  csv << "trial,phi,check,value" << kEol;
  double worst_residual = 0.0;
  double min_gap = std::numeric_limits<double>::infinity();
  bool pass = true;
  for (int t = 0; t < trials; ++t) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(t));
    const auto nx = static_cast<std::size_t>(1 + rng() % static_cast<unsigned>(max_atoms));
    const auto ny = static_cast<std::size_t>(1 + rng() % static_cast<unsigned>(max_atoms));
    std::vector<phi::FiniteDistribution> comps;
    for (std::size_t y = 0; y < ny; ++y) comps.emplace_back(random_weights(nx, rng));
    const phi::DiscreteMixtureModel model(phi::FiniteDistribution(random_weights(ny, rng)),
                                          comps);
    Matrix f(static_cast<Index>(nx), static_cast<Index>(ny));
    for (Index i = 0; i < f.size(); ++i) f.data()[i] = uniform_real(0.1, 3.0, rng);
    const phi::FiniteDistribution pi(random_weights(nx, rng));
    std::vector<double> fx(nx), gx(nx);
    for (std::size_t i = 0; i < nx; ++i) {
      fx[i] = uniform_real(0.1, 3.0, rng);
      gx[i] = uniform_real(0.1, 3.0, rng);
    }
    for (const auto& [name, phi_fn] : phis) {
      const auto dec = phi::entropy_decomposition(phi_fn, model, f);
      const double residual = std::abs(dec.total - dec.within_expected - dec.between);
      const double gap = phi::duality_gap(phi_fn, pi, fx, gx);
      csv << t << ',' << name << ",decomposition_residual," << fmt(residual) << kEol;
      csv << t << ',' << name << ",duality_gap," << fmt(gap) << kEol;
      worst_residual = std::max(worst_residual, residual);
      min_gap = std::min(min_gap, gap);
      pass = pass && residual <= decomposition_tol * std::max(1.0, std::abs(dec.total)) &&
             gap >= -gap_tol;
    }
  }

  // Phi*(Phi'(t)) = t Phi'(t) - Phi(t) on a grid.
  double worst_conjugate = 0.0;
  for (const auto& [name, phi_fn] : phis) {
    for (int i = 1; i <= 200; ++i) {
      const double t = 0.025 * i;
      const phi::PhiValue v = phi::phi_eval(phi_fn, t);
      const double err =
          std::abs(phi::conjugate_eval(phi_fn, v.first) - (t * v.first - v.value));
      worst_conjugate = std::max(worst_conjugate, err / std::max(1.0, std::abs(v.value)));
    }
  }
  pass = pass && worst_conjugate <= 1e-12;
  ctx.emit("identities.csv", csv.str());
  ctx.summary.add("n_trials", trials);
  ctx.summary.add("max_abs_decomposition_residual", worst_residual);
  ctx.summary.add("min_duality_gap", min_gap);
  ctx.summary.add("max_conjugate_identity_error", worst_conjugate);
  ctx.summary.add("pass", flag(pass));
  return pass;
}

std::uint64_t parse_seed(const json& j) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) {
    return static_cast<std::uint64_t>(j.get<std::int64_t>());
  }
  throw ConfigError("seed must be a non-negative integer");
}

}  // namespace

int run(const Options& options, std::ostream& out, std::ostream& err) {
  try {
    std::ifstream in(options.config_path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config '" + options.config_path + "'");
    json cfg;
    try {
      cfg = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
    if (!cfg.contains("schema") || cfg.at("schema") != 1) {
      throw ConfigError("unsupported or missing 'schema' (expected 1)");
    }
    const std::string name = as_string(require(cfg, "name", "config"), "config.name");
    if (name.empty() || name.find('/') != std::string::npos || name == "." || name == "..") {
      throw ConfigError("config.name must be a plain directory name");
    }
    const std::string mode = as_string(require(cfg, "mode", "config"), "config.mode");
    std::optional<std::uint64_t> seed = options.seed;
    if (!seed && cfg.contains("seed")) seed = parse_seed(cfg.at("seed"));
    const fs::path root = options.out ? fs::path(*options.out)
                                       : fs::path(cfg.value("output_dir", std::string("out")));
    const int threads = options.threads.value_or(get_int(cfg, "threads", "config", 1));
    if (threads < 1) throw ConfigError("threads must be >= 1");

    Context ctx{cfg, seed, threads, root / name, {}, {}};
    ctx.summary.add("name", name);
    ctx.summary.add("mode", mode);
    if (seed) ctx.summary.add("seed", *seed);

    bool pass;
    try {
      if (mode == "constants") {
        pass = mode_constants(ctx);
      } else if (mode == "track") {
        pass = mode_track(ctx);
      } else if (mode == "certify") {
        pass = mode_certify(ctx);
      } else if (mode == "criteria") {
        pass = mode_criteria(ctx);
      } else if (mode == "identities") {
        pass = mode_identities(ctx);
      } else {
        throw ConfigError("config.mode: unknown '" + mode + "'");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    } catch (const Error& e) {
      err << "error in mode '" << mode << "': " << e.what() << '\n';
      return kExitError;
    }

    fs::create_directories(ctx.dir);
    for (const auto& [file, content] : ctx.files) write_file(ctx.dir / file, content);
    const std::string summary = ctx.summary.str();
    write_file(ctx.dir / "summary.txt", summary);
    if (!options.quiet) out << summary;
    return pass ? kExitOk : kExitFailedCheck;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

int main(int argc, char** argv) {
  CLI::App app{"Two-scale functional inequality experiments"};
  Options options;
  std::uint64_t seed = 0;
  std::string out;
  int threads = 1;
  app.add_option("--config", options.config_path, "Experiment config (JSON)")->required();
  auto* seed_opt = app.add_option("--seed", seed, "Seed, overrides the config");
  auto* out_opt = app.add_option("--out", out, "Output directory, overrides output_dir");
  auto* threads_opt =
      app.add_option("--threads", threads, "Worker threads for chain simulation")
          ->check(CLI::PositiveNumber);
  app.add_flag("--quiet", options.quiet, "Do not print the summary");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }
  if (*seed_opt) options.seed = seed;
  if (*out_opt) options.out = out;
  if (*threads_opt) options.threads = threads;
  return run(options, std::cout, std::cerr);
}

}  // namespace twoscale::cli
