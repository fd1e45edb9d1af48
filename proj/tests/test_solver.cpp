#include <gtest/gtest.h>

#include <algorithm>

#include "ctipg/solver.hpp"
#include "dense_instance.hpp"

using namespace ctipg;

namespace {

SolverConfig exact_config(double mu, int iters = 30) {
  SolverConfig c;
  c.step_size = mu;
  c.max_iters = iters;
  c.tolerance = 1e-12;
  return c;
}

SolverConfig tree_config(double mu, EpsilonSchedule s, int iters = 30) {
  SolverConfig c = exact_config(mu, iters);
  c.search = SolverConfig::Search::Tree;
  c.schedule = s;
  return c;
}

ConvergenceBound csipa(const dense::Instance& in, double mu) {
  return compute_bound(BoundTheorem::CsipaAdditive, {in.alpha, in.beta, mu});
}

}  // namespace

TEST(Schedule, Examples) {
  const auto g = EpsilonSchedule::geometric(0.8, 0.5);
  EXPECT_DOUBLE_EQ(next_epsilon(g, {3, 0, 0, 1}), 0.1);
  EXPECT_DOUBLE_EQ(next_epsilon(g, {0, 0, 0, 1}), 0.8);
  const auto of = EpsilonSchedule::objective_feedback(0.1);
  EXPECT_DOUBLE_EQ(next_epsilon(of, {0, 2.5, 0, 8.0}), 2.0);
  EXPECT_EQ(next_epsilon(of, {5, 0.0, 0, 8.0}), 0.0);
  EXPECT_DOUBLE_EQ(next_epsilon(EpsilonSchedule::gradient_feedback(0.5), {0, 0, 6.0, 1}), 3.0);
  EXPECT_DOUBLE_EQ(next_epsilon(EpsilonSchedule::constant(0.4), {9, 1, 1, 1}), 0.4);
}

TEST(Schedule, InvalidSettings) {
  EXPECT_THROW(next_epsilon(EpsilonSchedule::geometric(0.8, 1.0), {}), Error);
  EXPECT_THROW(next_epsilon(EpsilonSchedule::geometric(0.8, 0.0), {}), Error);
  EXPECT_THROW(next_epsilon(EpsilonSchedule::constant(-0.1), {}), Error);
  EXPECT_THROW(next_epsilon(EpsilonSchedule::objective_feedback(-1.0), {}), Error);
  auto bad = EpsilonSchedule::gradient_feedback(0.1);
  bad.kind = ApproxKind::Multiplicative;
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_THROW(next_epsilon(EpsilonSchedule::objective_feedback(0.1), {0, -1.0, 0, 1}), Error);
}

TEST(Bound, MultiplicativeExamples) {
  const auto b0 = compute_bound(BoundTheorem::InexactMultiplicative, {1.0, 1.0, 1.0, 0.0});
  EXPECT_EQ(b0.rho, 0.0);
  EXPECT_TRUE(b0.valid);
  const auto b1 = compute_bound(BoundTheorem::InexactMultiplicative, {1.0, 1.2, 1.0 / 1.2, 0.0});
  EXPECT_NEAR(b1.rho, std::sqrt(0.2), 1e-12);
  EXPECT_TRUE(b1.valid);
  // delta from epsilon: sqrt(eps + eps^2) |||A||| / sqrt(alpha)
  const auto b2 = compute_bound(BoundTheorem::InexactMultiplicative, {1.0, 1.0, 1.0, 0.01});
  EXPECT_NEAR(b2.delta, std::sqrt(0.0101), 1e-15);
  EXPECT_NEAR(b2.rho, std::sqrt(0.0101), 1e-15);
  const auto big = compute_bound(BoundTheorem::InexactMultiplicative, {1.0, 1.0, 1.0, 0.8});
  EXPECT_FALSE(big.valid);
  EXPECT_NE(std::find(big.violated.begin(), big.violated.end(), "delta in [0,1)"), big.violated.end());
}

TEST(Bound, AdditiveExamples) {
  const auto c = compute_bound(BoundTheorem::CsipaAdditive, {1.0, 1.2, 0.8});
  EXPECT_NEAR(c.rho, 0.5, 1e-15);
  EXPECT_NEAR(c.noise_gain, 4.0, 1e-15);
  EXPECT_TRUE(c.valid);
  const auto wide = compute_bound(BoundTheorem::CsipaAdditive, {1.0, 2.0, 0.5});
  EXPECT_FALSE(wide.valid);
  EXPECT_NE(std::find(wide.violated.begin(), wide.violated.end(), "beta < 1.5*alpha"), wide.violated.end());
  const auto g0 = compute_bound(BoundTheorem::GradientFeedback, {1.0, 1.2, 0.8, 0.0, std::nullopt, 0.0});
  EXPECT_DOUBLE_EQ(g0.rho, c.rho);
  const auto g1 = compute_bound(BoundTheorem::GradientFeedback, {1.0, 1.2, 0.8, 0.0, std::nullopt, 0.5});
  EXPECT_FALSE(g1.valid);  // g = 2 pushes the step-size window past 1/beta
  EXPECT_THROW(compute_bound(BoundTheorem::CsipaAdditive, {0.0, 1.0, 1.0}), Error);
  EXPECT_THROW(compute_bound(BoundTheorem::CsipaAdditive, {1.0, 1.0, 0.0}), Error);
}

TEST(Bound, ValidImpliesContraction) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int valid = 0;
  for (int k = 0; k < 5000; ++k) {
    const double a = 0.1 + u(rng), b = a * (1.0 + u(rng)), mu = (0.2 + 2.0 * u(rng)) / b;
    for (auto th : {BoundTheorem::InexactMultiplicative, BoundTheorem::CsipaAdditive, BoundTheorem::GradientFeedback}) {
      BoundInputs in{a, b, mu, 0.05 * u(rng)};
      in.gamma = 0.05 * u(rng);
      in.op_norm = std::sqrt(b);
      const auto bd = compute_bound(th, in);
      if (bd.valid) {
        ++valid;
        EXPECT_LT(bd.rho, 1.0);
        EXPECT_GE(bd.rho, 0.0);
      }
    }
  }
  EXPECT_GT(valid, 100);
}

TEST(Ipg, IdentityOperatorReachesTruthInOneStep) {
  const Dictionary dict = dense::random_dictionary(8, 12, 5);
  CMatrix X(8, 3);
  for (Index j = 0; j < 3; ++j) X.col(j) = (1.0 + j) * dict.atom(2 * j + 1);
  const DenseOperator I(CMatrix::Identity(24, 24));
  const SolverResult r = ipg_run(I, dict, nullptr, vectorize(X), exact_config(1.0), &X);
  EXPECT_TRUE(r.converged);
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_LE(r.records[1].error, 1e-12);
  EXPECT_EQ(r.atom_ids, (std::vector<Index>{1, 3, 5}));
  EXPECT_NEAR(r.gammas[2], 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.step_size, 1.0);
  EXPECT_EQ(r.records[0].iter, 0);
  EXPECT_NEAR(r.records[0].error, X.norm(), 1e-12);
}

TEST(Ipg, DefaultStepIsDimensionRatio) {
  const Dictionary dict = dense::random_dictionary(4, 6, 6);
  const EpiOperator op(lattice_epi_pattern(8, 2, 4, 4));
  SolverConfig c;
  c.max_iters = 1;
  const SolverResult r = ipg_run(op, dict, nullptr, CVector::Zero(op.output_dim()), c);
  EXPECT_DOUBLE_EQ(r.step_size, 4.0);
  EXPECT_EQ(r.image.norm(), 0.0);
}

TEST(Ipg, DenseExactSatisfiesBounds) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const dense::Instance in = dense::make(seed);
    const double mu = 1.0 / in.beta;
    const auto bound = csipa(in, mu);
    ASSERT_TRUE(bound.valid) << "seed " << seed;
    const SolverResult r = ipg_run(DenseOperator(in.A), in.dict, nullptr, in.y, exact_config(mu), &in.truth);
    const BoundCheck step = noiseless_step_check(r.records, in.alpha, mu);
    EXPECT_TRUE(step.pass) << step.message;
    const BoundCheck res = residual_bound_check(r.records, bound, in.alpha, mu, 0.0);
    EXPECT_TRUE(res.pass) << res.message;
    EXPECT_EQ(r.atom_ids, in.truth_ids);
    EXPECT_LE(r.records.back().rel_error, 1e-8);
    for (Index t = 1; t < r.records.size(); ++t) EXPECT_LE(r.records[t].error, r.records[t - 1].error + 1e-12);
  }
}

TEST(Ipg, TreeMultiplicativeMatchesExactIds) {
  const dense::Instance in = dense::make(21);
  const DictionaryTree tree = in.dict.build_tree();
  const double mu = 1.0 / in.beta;
  const DenseOperator A(in.A);
  const SolverResult ex = ipg_run(A, in.dict, nullptr, in.y, exact_config(mu), &in.truth);
  const SolverResult ann =
      ipg_run(A, in.dict, &tree, in.y, tree_config(mu, EpsilonSchedule::constant(0.4)), &in.truth);
  EXPECT_EQ(ann.atom_ids, ex.atom_ids);
  EXPECT_LE(ann.records.back().rel_error, 1e-8);
  EXPECT_DOUBLE_EQ(ann.records[1].epsilon, 0.4);
  EXPECT_EQ(ann.records[0].epsilon, 0.0);
}

TEST(Ipg, TreeAdditiveGeometricSatisfiesBounds) {
  const dense::Instance in = dense::make(31);
  const DictionaryTree tree = in.dict.build_tree();
  const double mu = 1.0 / in.beta;
  const auto bound = csipa(in, mu);
  const double e0 = in.truth.squaredNorm();
  const SolverResult r = ipg_run(DenseOperator(in.A), in.dict, &tree, in.y,
                                 tree_config(mu, EpsilonSchedule::geometric(0.1 * e0, 0.5 * bound.rho, ApproxKind::Additive)),
                                 &in.truth);
  EXPECT_TRUE(noiseless_step_check(r.records, in.alpha, mu).pass);
  const BoundCheck res = residual_bound_check(r.records, bound, in.alpha, mu, 0.0);
  EXPECT_TRUE(res.pass) << res.message;
  EXPECT_NEAR(r.records[2].epsilon, 0.1 * e0 * 0.5 * bound.rho, 1e-12 * e0);
}

TEST(Ipg, NoisyRunPlateausWithinBound) {
  const dense::Instance in = dense::make(41);
  const double mu = 1.0 / in.beta;
  const auto bound = csipa(in, mu);
  const double w = 0.05 * in.y.norm();
  const CVector y = add_noise(in.y, w, 7);
  const SolverResult r = ipg_run(DenseOperator(in.A), in.dict, nullptr, y, exact_config(mu), &in.truth);
  const BoundCheck res = residual_bound_check(r.records, bound, in.alpha, mu, w);
  EXPECT_TRUE(res.pass) << res.message;
  const double floor = bound.noise_gain * w * w / (1.0 - bound.rho);
  EXPECT_LE(r.records.back().error * r.records.back().error, floor);
  EXPECT_GT(r.records.back().error, 0.0);
}

TEST(Ipg, DeterministicRecords) {
  const dense::Instance in = dense::make(51);
  const DictionaryTree tree = in.dict.build_tree();
  const auto cfg = tree_config(1.0 / in.beta, EpsilonSchedule::constant(0.3));
  const DenseOperator A(in.A);
  const SolverResult a = ipg_run(A, in.dict, &tree, in.y, cfg, &in.truth);
  const SolverResult b = ipg_run(A, in.dict, &tree, in.y, cfg, &in.truth);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (Index t = 0; t < a.records.size(); ++t) {
    EXPECT_EQ(a.records[t].objective, b.records[t].objective);
    EXPECT_EQ(a.records[t].distances, b.records[t].distances);
  }
  EXPECT_EQ(a.image, b.image);
}

TEST(Ipg, DistanceAccountingAndMetricsHook) {
  const dense::Instance in = dense::make(61);
  int calls = 0;
  const SolverResult r = ipg_run(DenseOperator(in.A), in.dict, nullptr, in.y, exact_config(1.0 / in.beta, 5), nullptr,
                                 [&](const std::vector<Index>& ids, const std::vector<double>&, IterationRecord& rec) {
                                   ++calls;
                                   EXPECT_EQ(ids.size(), 4u);
                                   rec.t1_mae = rec.iter;
                                 });
  EXPECT_EQ(calls, static_cast<int>(r.records.size()));
  std::uint64_t sum = 0;
  for (const auto& rec : r.records) {
    sum += rec.distances;
    EXPECT_EQ(rec.distances_cum, sum);
    EXPECT_EQ(rec.t1_mae, rec.iter);
    EXPECT_TRUE(std::isnan(rec.error));
    if (rec.iter > 0) {
      EXPECT_EQ(rec.distances, 4u * 40u);  // brute scan: J * d
    }
  }
}

TEST(Ipg, AuditFindsNoViolations) {
  const dense::Instance in = dense::make(71);
  const DictionaryTree tree = in.dict.build_tree();
  for (auto sched : {EpsilonSchedule::constant(0.5), EpsilonSchedule::constant(0.2, ApproxKind::Additive)}) {
    SolverConfig cfg = tree_config(1.0 / in.beta, sched, 8);
    cfg.audit_fraction = 1.0;
    const SolverResult r = ipg_run(DenseOperator(in.A), in.dict, &tree, in.y, cfg);
    EXPECT_EQ(r.audit.checked, 4u * (r.records.size() - 1));
    EXPECT_EQ(r.audit.violations, 0u) << r.audit.first_violation;
  }
}

namespace {

class PoisonedOperator : public LinearOperator {
 public:
  explicit PoisonedOperator(Index n) : n_(n) {}
  Index input_dim() const override { return n_; }
  Index output_dim() const override { return n_; }
  CVector apply(const CVector& x) const override {
    CVector out = x;
    out[0] = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  CVector adjoint(const CVector& y) const override { return y; }

 private:
  Index n_;
};

}  // namespace

TEST(Ipg, ReportsNonFiniteIterate) {
  const Dictionary dict = dense::random_dictionary(4, 5, 8);
  const PoisonedOperator op(8);
  try {
    ipg_run(op, dict, nullptr, CVector::Ones(8), exact_config(1.0));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("iteration 1"), std::string::npos) << e.what();
  }
}

TEST(Ipg, RejectsInconsistentInputs) {
  const dense::Instance in = dense::make(81);
  const DenseOperator A(in.A);
  EXPECT_THROW(ipg_run(A, in.dict, nullptr, in.y, tree_config(1.0, EpsilonSchedule::constant(0.1))), Error);
  EXPECT_THROW(ipg_run(A, in.dict, nullptr, in.y.head(10), exact_config(1.0)), Error);
  const CMatrix wrong = CMatrix::Zero(3, 3);
  EXPECT_THROW(ipg_run(A, in.dict, nullptr, in.y, exact_config(1.0), &wrong), Error);
  SolverConfig bad = exact_config(1.0);
  bad.max_iters = 0;
  EXPECT_THROW(ipg_run(A, in.dict, nullptr, in.y, bad), Error);
  bad = exact_config(-1.0);
  EXPECT_THROW(ipg_run(A, in.dict, nullptr, in.y, bad), Error);
  const Dictionary other = dense::random_dictionary(16, 7, 2);
  const DictionaryTree t = other.build_tree();
  EXPECT_THROW(ipg_run(A, in.dict, &t, in.y, tree_config(1.0, EpsilonSchedule::constant(0.1))), Error);
}
