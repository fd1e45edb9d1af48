#pragma once

// Exact and inexact iterative projected gradient over the product cone model,
// epsilon schedules, and the convergence-bound calculators used to audit runs.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ctipg/model.hpp"
#include "ctipg/operators.hpp"

namespace ctipg {

enum class ApproxKind { Multiplicative, Additive };

struct EpsilonSchedule {
  enum class Variant { Constant, Geometric, ObjectiveFeedback, GradientFeedback };
  Variant variant = Variant::Constant;
  ApproxKind kind = ApproxKind::Multiplicative;
  double epsilon = 0.0;  // constant value, or epsilon_0 for geometric
  double decay = 0.5;    // geometric ratio r in (0, 1)
  double gamma = 0.0;    // feedback gain

  static EpsilonSchedule constant(double eps, ApproxKind kind = ApproxKind::Multiplicative) {
    return {Variant::Constant, kind, eps, 0.5, 0.0};
  }
  static EpsilonSchedule geometric(double eps0, double r, ApproxKind kind = ApproxKind::Multiplicative) {
    return {Variant::Geometric, kind, eps0, r, 0.0};
  }
  static EpsilonSchedule objective_feedback(double gamma) {
    return {Variant::ObjectiveFeedback, ApproxKind::Additive, 0.0, 0.5, gamma};
  }
  static EpsilonSchedule gradient_feedback(double gamma) {
    return {Variant::GradientFeedback, ApproxKind::Additive, 0.0, 0.5, gamma};
  }

  void validate() const {
    switch (variant) {
      case Variant::Constant:
        require(epsilon >= 0.0 && std::isfinite(epsilon), "constant schedule needs a finite epsilon >= 0");
        break;
      case Variant::Geometric:
        require(epsilon >= 0.0 && std::isfinite(epsilon), "geometric schedule needs a finite epsilon_0 >= 0");
        require(decay > 0.0 && decay < 1.0, "geometric decay must lie in (0, 1)");
        break;
      case Variant::ObjectiveFeedback:
      case Variant::GradientFeedback:
        require(gamma >= 0.0 && std::isfinite(gamma), "feedback gain gamma must be finite and >= 0");
        require(kind == ApproxKind::Additive, "feedback schedules emit squared-distance budgets; use additive mode");
        break;
    }
  }
};

struct ScheduleState {
  int k = 0;
  double objective = 0.0;         // |y - A x^k|^2
  double gradient_norm_sq = 0.0;  // |A^H (A x^k - y)|^2
  double mu = 1.0;
};

inline double next_epsilon(const EpsilonSchedule& s, const ScheduleState& state) {
  s.validate();
  switch (s.variant) {
    case EpsilonSchedule::Variant::Constant:
      return s.epsilon;
    case EpsilonSchedule::Variant::Geometric:
      return s.epsilon * std::pow(s.decay, state.k);
    case EpsilonSchedule::Variant::ObjectiveFeedback:
      require(state.objective >= 0.0 && std::isfinite(state.objective), "objective must be finite and >= 0");
      return s.gamma * state.mu * state.objective;
    case EpsilonSchedule::Variant::GradientFeedback:
      require(state.gradient_norm_sq >= 0.0 && std::isfinite(state.gradient_norm_sq),
              "gradient norm must be finite and >= 0");
      return s.gamma * state.gradient_norm_sq;
  }
  return 0.0;
}

struct SolverConfig {
  enum class Search { BruteExact, Tree };
  std::optional<double> step_size;  // default n/m
  int max_iters = 40;
  double tolerance = 1e-6;
  Search search = Search::BruteExact;
  EpsilonSchedule schedule;  // ignored by BruteExact
  double audit_fraction = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(!step_size || (*step_size > 0.0 && std::isfinite(*step_size)), "step size must be finite and > 0");
    require(max_iters >= 1, "max_iters must be >= 1");
    require(tolerance >= 0.0, "tolerance must be >= 0");
    require(audit_fraction >= 0.0 && audit_fraction <= 1.0, "audit fraction must lie in [0, 1]");
    if (search == Search::Tree) schedule.validate();
  }
};

struct IterationRecord {
  int iter = 0;
  double objective = 0.0;
  double error = std::numeric_limits<double>::quiet_NaN();  // |x^k - x_0|
  double rel_error = std::numeric_limits<double>::quiet_NaN();
  double t1_mae = std::numeric_limits<double>::quiet_NaN();
  double t2_mae = std::numeric_limits<double>::quiet_NaN();
  double epsilon = 0.0;  // approximation level used to produce this iterate
  std::uint64_t distances = 0;
  std::uint64_t distances_cum = 0;
  Index clamped_pixels = 0;
};

struct AuditReport {
  std::uint64_t checked = 0;
  std::uint64_t violations = 0;
  std::string first_violation;
};

struct SolverResult {
  CMatrix image;
  std::vector<Index> atom_ids;
  std::vector<double> gammas;
  std::vector<IterationRecord> records;
  double step_size = 0.0;
  bool converged = false;
  AuditReport audit;
};

/// Called after every recorded iterate to fill application metrics.
using IterationMetrics =
    std::function<void(const std::vector<Index>& atom_ids, const std::vector<double>& gammas, IterationRecord&)>;

namespace detail {

inline double cone_residual(const CVector& z, const CVector& projected) { return (z - projected).norm(); }

}  // namespace detail

/// x^{k+1} = P(x^k + mu A^H (y - A x^k)) from x^0 = 0.  Record k holds the
/// k-th iterate; record 0 is the zero start.
inline SolverResult ipg_run(const LinearOperator& op, const Dictionary& dict, const DictionaryTree* tree,
                            const CVector& y, const SolverConfig& config, const CMatrix* ground_truth = nullptr,
                            const IterationMetrics& metrics = {}) {
  config.validate();
  const Index nbar = dict.dim();
  require(op.input_dim() % nbar == 0, "operator input dimension is not a multiple of the atom length");
  const Index J = op.input_dim() / nbar;
  require(static_cast<Index>(y.size()) == op.output_dim(), "measurement length does not match the operator");
  require(y.allFinite(), "measurements contain non-finite values");
  if (ground_truth)
    require(static_cast<Index>(ground_truth->rows()) == nbar && static_cast<Index>(ground_truth->cols()) == J,
            "ground truth shape does not match the problem");
  const bool use_tree = config.search == SolverConfig::Search::Tree;
  if (use_tree) {
    require(tree != nullptr, "tree search requested without a cover tree");
    require(tree->size() == dict.size(), "cover tree does not index this dictionary");
  }

  SolverResult result;
  result.step_size = config.step_size.value_or(static_cast<double>(op.input_dim()) / static_cast<double>(op.output_dim()));
  const double mu = result.step_size;
  const double truth_norm = ground_truth ? ground_truth->norm() : 0.0;

  CMatrix X = CMatrix::Zero(nbar, J);
  std::vector<Index> ids(J, use_tree ? tree->root_point() : 0);
  std::vector<double> gammas(J, 0.0);
  std::uint64_t cum = 0;

  std::mt19937_64 audit_rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto record = [&](int k, const CVector& residual, double eps, std::uint64_t dist, Index clamped) {
    IterationRecord r;
    r.iter = k;
    r.objective = residual.squaredNorm();
    if (ground_truth) {
      r.error = (X - *ground_truth).norm();
      r.rel_error = truth_norm > 0.0 ? r.error / truth_norm : r.error;
    }
    r.epsilon = eps;
    r.distances = dist;
    cum += dist;
    r.distances_cum = cum;
    r.clamped_pixels = clamped;
    if (metrics) metrics(ids, gammas, r);
    result.records.push_back(r);
  };

  CVector residual = y;  // y - A x^0
  record(0, residual, 0.0, 0, 0);

  for (int k = 0; k < config.max_iters; ++k) {
    const CVector grad = op.adjoint(residual);  // A^H (y - A x)
    const CMatrix Z = X + mu * unvectorize(grad, nbar, J);

    ProjectionMode mode = ProjectionMode::exact();
    double eps = 0.0;
    if (use_tree) {
      ScheduleState state{k, residual.squaredNorm(), grad.squaredNorm(), mu};
      eps = next_epsilon(config.schedule, state);
      mode = config.schedule.kind == ApproxKind::Multiplicative
                 ? ProjectionMode::multiplicative(eps)
                 : ProjectionMode::additive(eps / static_cast<double>(J));  // product budget split over pixels
    }
    ProductProjection proj = product_project(dict, use_tree ? tree : nullptr, Z, ids, mode);

    if (config.audit_fraction > 0.0) {
      for (Index j = 0; j < J; ++j) {
        if (unit(audit_rng) >= config.audit_fraction) continue;
        const CVector z = Z.col(static_cast<Eigen::Index>(j));
        const ConeProjection exact = cone_project_exact(dict, z);
        const double got = detail::cone_residual(z, proj.image.col(static_cast<Eigen::Index>(j)));
        const double best = detail::cone_residual(z, exact.projected);
        bool ok = true;
        if (mode.kind == ProjectionMode::Kind::Multiplicative)
          ok = got <= (1.0 + mode.epsilon) * best * (1.0 + 1e-12) + 1e-15 * z.norm();
        else
          ok = got * got <= best * best + mode.epsilon + 1e-12 * z.squaredNorm();
        ++result.audit.checked;
        if (!ok) {
          if (result.audit.violations == 0)
            result.audit.first_violation = "iteration " + std::to_string(k + 1) + " pixel " + std::to_string(j) +
                                           ": residual " + std::to_string(got) + " vs exact " + std::to_string(best);
          ++result.audit.violations;
        }
      }
    }

    require(proj.image.allFinite(), "non-finite iterate at iteration " + std::to_string(k + 1));
    const double change = (proj.image - X).norm() / std::max(X.norm(), 1.0);
    X = std::move(proj.image);
    ids = std::move(proj.atom_ids);
    gammas = std::move(proj.gammas);
    residual = y - op.apply(vectorize(X));
    require(residual.allFinite(), "non-finite residual at iteration " + std::to_string(k + 1));
    record(k + 1, residual, eps, proj.distances, proj.clamped_pixels);
    if (change < config.tolerance) {
      result.converged = true;
      break;
    }
  }

  result.image = std::move(X);
  result.atom_ids = std::move(ids);
  result.gammas = std::move(gammas);
  return result;
}

enum class BoundTheorem { InexactMultiplicative, CsipaAdditive, GradientFeedback };

struct BoundInputs {
  double alpha = 0.0;
  double beta = 0.0;
  double mu = 0.0;
  double epsilon = 0.0;  // multiplicative approximation level
  std::optional<double> delta = std::nullopt;  // overrides the delta derived from epsilon
  double gamma = 0.0;    // gradient-feedback gain
  double op_norm = 1.0;  // |||A|||
};

struct ConvergenceBound {
  double rho = std::numeric_limits<double>::quiet_NaN();
  double kappa_w = std::numeric_limits<double>::quiet_NaN();  // multiplicative theorem
  double noise_gain = std::numeric_limits<double>::quiet_NaN();  // additive theorems, multiplies |w|^2
  double delta = 0.0;
  bool valid = false;
  std::vector<std::string> violated;
};

inline ConvergenceBound compute_bound(BoundTheorem theorem, const BoundInputs& in) {
  require(in.alpha > 0.0 && in.beta > 0.0, "bi-Lipschitz constants must be > 0");
  require(in.mu > 0.0, "step size must be > 0");
  ConvergenceBound b;
  auto check = [&](bool ok, const char* name) {
    if (!ok) b.violated.emplace_back(name);
  };
  const double a = in.alpha, be = in.beta, mu = in.mu;
  switch (theorem) {
    case BoundTheorem::InexactMultiplicative: {
      require(in.epsilon >= 0.0, "epsilon must be >= 0");
      const double needed = std::sqrt(in.epsilon + in.epsilon * in.epsilon) * in.op_norm / std::sqrt(a);
      b.delta = in.delta.value_or(needed);
      const double c = 2.0 - 2.0 * b.delta + b.delta * b.delta;
      const double inner = 1.0 / (mu * a) - 1.0;
      b.rho = std::sqrt(std::max(inner, 0.0)) + b.delta;
      b.kappa_w = 2.0 * std::sqrt(be) / a + std::sqrt(mu) * b.delta;
      check(b.delta >= 0.0 && b.delta < 1.0, "delta in [0,1)");
      check(needed <= b.delta, "sqrt(eps+eps^2) <= delta*sqrt(alpha)/|||A|||");
      check(be < c * a, "beta < (2-2delta+delta^2)*alpha");
      check(1.0 / (c * a) < mu, "mu > 1/((2-2delta+delta^2)*alpha)");
      check(mu <= 1.0 / be, "mu <= 1/beta");
      break;
    }
    case BoundTheorem::CsipaAdditive:
      b.rho = 2.0 * (1.0 / (mu * a) - 1.0);
      b.noise_gain = 4.0 / a;
      check(be < 1.5 * a, "beta < 1.5*alpha");
      check(2.0 / (3.0 * a) < mu, "mu > 2/(3*alpha)");
      check(mu <= 1.0 / be, "mu <= 1/beta");
      break;
    case BoundTheorem::GradientFeedback: {
      require(in.gamma >= 0.0, "gamma must be >= 0");
      const double g = 1.0 + 2.0 * in.gamma * std::pow(in.op_norm, 4);
      b.rho = 2.0 * (g / (mu * a) - 1.0);
      b.noise_gain = 4.0 / a * (1.0 + in.gamma * in.op_norm * in.op_norm / mu);
      check(be <= 3.0 * a / (2.0 * g), "beta <= 3*alpha/(2(1+2*gamma*|A|^4))");
      check(2.0 / 3.0 * g / a <= mu, "mu >= (2/3)(1+2*gamma*|A|^4)/alpha");
      check(mu <= 1.0 / be, "mu <= 1/beta");
      break;
    }
  }
  b.valid = b.violated.empty();
  if (b.valid) require(b.rho < 1.0, "internal: valid bound with rho >= 1");
  return b;
}

struct BoundCheck {
  bool pass = true;
  int first_failure = -1;
  std::vector<double> rhs;  // bound on |x^t - x_0|^2 per record
  std::string message;
};

/// Squared-error recursion  e_t <= rho^t e_0 + (2/(mu alpha)) sum_{i=1..t} rho^{t-i} eps_i
///                                 + (4/alpha) |w|^2 sum_{i=0..t-1} rho^i,
/// where eps_i is the level that produced iterate i.
inline BoundCheck residual_bound_check(const std::vector<IterationRecord>& records, const ConvergenceBound& bound,
                                       double alpha, double mu, double noise_norm, double slack = 1e-9) {
  require(!records.empty(), "no iteration records");
  require(!std::isnan(records.front().error), "residual bound check needs ground-truth errors");
  BoundCheck out;
  const double rho = bound.rho;
  const double e0 = records.front().error * records.front().error;
  double eps_term = 0.0;    // sum rho^{t-i} eps_i
  double noise_geom = 0.0;  // sum_{i<t} rho^i
  double rho_t = 1.0;
  for (Index t = 0; t < records.size(); ++t) {
    if (t > 0) {
      eps_term = rho * eps_term + records[t].epsilon;
      noise_geom += rho_t;
      rho_t *= rho;
    }
    const double rhs = rho_t * e0 + 2.0 / (mu * alpha) * eps_term + 4.0 / alpha * noise_norm * noise_norm * noise_geom;
    out.rhs.push_back(rhs);
    const double lhs = records[t].error * records[t].error;
    if (out.pass && !(lhs <= rhs + slack)) {
      out.pass = false;
      out.first_failure = static_cast<int>(t);
      out.message = "iteration " + std::to_string(t) + ": |x-x0|^2 = " + std::to_string(lhs) + " > bound " +
                    std::to_string(rhs);
    }
  }
  return out;
}

/// Noiseless one-step contraction e_{t+1} <= (1/(mu alpha) - 1) e_t + eps_t/(mu alpha).
inline BoundCheck noiseless_step_check(const std::vector<IterationRecord>& records, double alpha, double mu,
                                       double slack = 1e-9) {
  BoundCheck out;
  const double c = 1.0 / (mu * alpha) - 1.0;
  for (Index t = 1; t < records.size(); ++t) {
    const double prev = records[t - 1].error * records[t - 1].error;
    const double rhs = c * prev + records[t].epsilon / (mu * alpha);
    out.rhs.push_back(rhs);
    const double lhs = records[t].error * records[t].error;
    if (out.pass && !(lhs <= rhs + slack)) {
      out.pass = false;
      out.first_failure = static_cast<int>(t);
      out.message = "step " + std::to_string(t) + ": |x-x0|^2 = " + std::to_string(lhs) + " > " + std::to_string(rhs);
    }
  }
  return out;
}

}  // namespace ctipg
