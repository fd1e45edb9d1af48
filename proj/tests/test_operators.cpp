#include <gtest/gtest.h>

#include <filesystem>

#include "ctipg/operators.hpp"
#include "oracles.hpp"

using namespace ctipg;

namespace {

CMatrix gaussian_matrix(Index m, Index n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  CMatrix A(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) A(i, j) = cplx(g(rng), g(rng));
  return A;
}

double adjoint_gap(const LinearOperator& op, std::mt19937_64& rng) {
  const CVector x = oracle::complex_gaussian(op.input_dim(), rng);
  const CVector y = oracle::complex_gaussian(op.output_dim(), rng);
  const cplx lhs = op.apply(x).dot(y);  // <Ax, y>
  const cplx rhs = x.dot(op.adjoint(y));
  return std::abs(lhs - rhs) / (x.norm() * y.norm());
}

}  // namespace

TEST(DenseOperator, IdentityAndZero) {
  const DenseOperator I(CMatrix::Identity(5, 5));
  std::mt19937_64 rng(1);
  const CVector x = oracle::complex_gaussian(5, rng);
  EXPECT_EQ(I.apply(x), x);
  EXPECT_EQ(I.adjoint(x), x);
  const DenseOperator Z(CMatrix::Zero(3, 5));
  EXPECT_EQ(Z.apply(x).norm(), 0.0);
  EXPECT_THROW(Z.apply(CVector::Zero(4)), Error);
  EXPECT_THROW(Z.adjoint(CVector::Zero(5)), Error);
  CMatrix bad = CMatrix::Zero(2, 2);
  bad(1, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(DenseOperator{bad}, Error);
}

TEST(DenseOperator, AdjointIdentity) {
  const DenseOperator A(gaussian_matrix(8, 20, 2));
  std::mt19937_64 rng(3);
  for (int k = 0; k < 100; ++k) EXPECT_LE(adjoint_gap(A, rng), 1e-12);
}

TEST(LatticePattern, RowsFollowShiftedLattice) {
  const EpiPattern p = lattice_epi_pattern(16, 4, 3, 8);
  ASSERT_EQ(p.slices(), 3u);
  EXPECT_EQ(p.rows[0], (std::vector<Index>{0, 8}));
  EXPECT_EQ(p.rows[1], (std::vector<Index>{1, 9}));
  EXPECT_EQ(p.rows[2], (std::vector<Index>{2, 10}));
  const EpiPattern full = lattice_epi_pattern(6, 2, 4, 1);
  for (const auto& r : full.rows) EXPECT_EQ(r, (std::vector<Index>{0, 1, 2, 3, 4, 5}));
  // slice 9 with ratio 8 wraps back to shift 1
  EXPECT_EQ(lattice_epi_pattern(16, 4, 10, 8).rows[9], (std::vector<Index>{1, 9}));
  EXPECT_THROW(lattice_epi_pattern(16, 4, 3, 5), Error);
  EXPECT_THROW(lattice_epi_pattern(16, 4, 3, 0), Error);
}

TEST(LatticePattern, ValidationAndJson) {
  EpiPattern p = lattice_epi_pattern(8, 8, 4, 2);
  const EpiPattern back = pattern_from_json(nlohmann::json::parse(pattern_to_json(p).dump()));
  EXPECT_EQ(back.rows, p.rows);
  EXPECT_EQ(back.height, 8u);
  p.rows[2][1] = 8;
  EXPECT_THROW(p.validate(), Error);
  EXPECT_THROW(EpiOperator{p}, Error);
  p.rows[2] = {0};
  EXPECT_THROW(p.validate(), Error);
  EXPECT_THROW(pattern_from_json(nlohmann::json{{"height", 4}}), Error);
}

TEST(EpiOperator, MatchesExplicitDft) {
  const Index H = 4, W = 6, L = 3;
  const EpiOperator op(lattice_epi_pattern(H, W, L, 2));
  std::mt19937_64 rng(4);
  const CVector x = oracle::complex_gaussian(op.input_dim(), rng);
  const CVector y = op.apply(x);
  const Index J = H * W;
  for (Index l = 0; l < L; ++l) {
    CMatrix img(H, W);
    for (Index c = 0; c < W; ++c)
      for (Index r = 0; r < H; ++r) img(r, c) = x[l * J + r + c * H];
    const CMatrix K = oracle::dft2(img);
    const auto& rows = op.pattern().rows[l];
    for (Index k = 0; k < rows.size(); ++k)
      for (Index c = 0; c < W; ++c)
        EXPECT_NEAR(std::abs(y[l * rows.size() * W + k * W + c] - K(rows[k], c)), 0.0, 1e-12);
  }
}

TEST(EpiOperator, FullSamplingIsIsometry) {
  const EpiOperator op(lattice_epi_pattern(16, 16, 4, 1));
  std::mt19937_64 rng(5);
  for (int k = 0; k < 10; ++k) {
    const CVector x = oracle::complex_gaussian(op.input_dim(), rng);
    EXPECT_NEAR(op.apply(x).norm() / x.norm(), 1.0, 1e-12);
    EXPECT_LE((op.adjoint(op.apply(x)) - x).norm(), 1e-12 * x.norm());
  }
}

TEST(EpiOperator, AdjointIdentityOnProbes) {
  const EpiOperator op(lattice_epi_pattern(16, 16, 32, 8));
  std::mt19937_64 rng(6);
  for (int k = 0; k < 100; ++k) EXPECT_LE(adjoint_gap(op, rng), 1e-10);
}

TEST(EpiOperator, SubsamplingGeometry) {
  const EpiOperator op(lattice_epi_pattern(32, 32, 16, 8));
  EXPECT_EQ(op.input_dim(), 16u * 1024u);
  EXPECT_EQ(op.output_dim() * 8, op.input_dim());
  EXPECT_DOUBLE_EQ(double(op.input_dim()) / double(op.output_dim()), 8.0);
  // Row selection after a unitary map: A A^H is the identity on C^m.
  std::mt19937_64 rng(7);
  const CVector y = oracle::complex_gaussian(op.output_dim(), rng);
  EXPECT_LE((op.apply(op.adjoint(y)) - y).norm(), 1e-12 * y.norm());
  EXPECT_NEAR(operator_norm(op, 30, 1), 1.0, 1e-10);
}

TEST(Bilipschitz, UnitaryAndScaledIdentity) {
  std::mt19937_64 rng(8);
  std::vector<CVector> pts;
  for (int i = 0; i < 10; ++i) pts.push_back(oracle::complex_gaussian(12, rng));
  const Eigen::HouseholderQR<CMatrix> qr(gaussian_matrix(12, 12, 9));
  const CMatrix Q = qr.householderQ();
  const EmbeddingEstimate u = estimate_bilipschitz(DenseOperator(Q), pts, 1000);
  EXPECT_NEAR(u.alpha_hat, 1.0, 1e-10);
  EXPECT_NEAR(u.beta_hat, 1.0, 1e-10);
  const EmbeddingEstimate two = estimate_bilipschitz(DenseOperator(2.0 * CMatrix::Identity(12, 12)), pts, 1000);
  EXPECT_NEAR(two.alpha_hat, 4.0, 1e-12);
  EXPECT_NEAR(two.beta_hat, 4.0, 1e-12);
  EXPECT_TRUE(two.exhaustive);
  EXPECT_EQ(two.pairs_evaluated, 45u);
}

TEST(Bilipschitz, ExhaustiveMatchesDoubleLoopAndSamplingBrackets) {
  const CMatrix A = gaussian_matrix(40, 64, 10, 1.0 / std::sqrt(80.0));
  std::mt19937_64 rng(11);
  std::vector<CVector> atoms;
  for (int i = 0; i < 50; ++i) atoms.push_back(oracle::complex_gaussian(64, rng).normalized());
  const DenseOperator op(A);
  const EmbeddingEstimate ex = estimate_bilipschitz(op, atoms, 50 * 49 / 2);
  const auto ref = oracle::pair_ratios(A, atoms);
  EXPECT_TRUE(ex.exhaustive);
  EXPECT_NEAR(ex.alpha_hat, ref.lo, 1e-12 * ref.lo);
  EXPECT_NEAR(ex.beta_hat, ref.hi, 1e-12 * ref.hi);
  const auto [ai, aj] = ex.alpha_witness;
  const CVector d = atoms[ai] - atoms[aj];
  EXPECT_NEAR((A * d).squaredNorm() / d.squaredNorm(), ex.alpha_hat, 1e-12);

  const EmbeddingEstimate s = estimate_bilipschitz(op, atoms, 300, 5);
  EXPECT_FALSE(s.exhaustive);
  EXPECT_GE(s.alpha_hat, ex.alpha_hat);
  EXPECT_LE(s.beta_hat, ex.beta_hat);
}

TEST(Bilipschitz, Degenerate) {
  const DenseOperator I(CMatrix::Identity(3, 3));
  const CVector v = CVector::Ones(3);
  EXPECT_THROW(estimate_bilipschitz(I, {v}, 10), Error);
  EXPECT_THROW(estimate_bilipschitz(I, {v, v, v}, 10), Error);
}

TEST(OperatorNorm, KnownCases) {
  EXPECT_NEAR(operator_norm(DenseOperator(CMatrix::Identity(6, 6)), 5), 1.0, 1e-8);
  CMatrix D = CMatrix::Identity(3, 3);
  D(0, 0) = 3.0;
  EXPECT_NEAR(operator_norm(DenseOperator(D), 50), 3.0, 1e-8);
  const CMatrix A = gaussian_matrix(8, 20, 12);
  const double svd = oracle::largest_singular_value(A);
  EXPECT_NEAR(operator_norm(DenseOperator(A), 200, 3), svd, 1e-6 * svd);
  EXPECT_EQ(operator_norm(DenseOperator(CMatrix::Zero(2, 2)), 10), 0.0);
  EXPECT_THROW(operator_norm(DenseOperator(A), 0), Error);
}

TEST(OperatorNorm, RayleighSequenceNondecreasing) {
  const NormEstimate est = operator_norm_trace(DenseOperator(gaussian_matrix(15, 30, 13)), 40, 2);
  ASSERT_EQ(est.rayleigh.size(), 40u);
  for (Index k = 1; k < est.rayleigh.size(); ++k) EXPECT_GE(est.rayleigh[k], est.rayleigh[k - 1]);
}

TEST(SpectralBounds, MatchSvdAndSubspace) {
  const CMatrix A = gaussian_matrix(30, 10, 14);
  const auto [lo, hi] = spectral_bounds(A);
  Eigen::JacobiSVD<CMatrix> svd(A);
  const auto s = svd.singularValues();
  EXPECT_NEAR(hi, s(0) * s(0), 1e-9 * hi);
  EXPECT_NEAR(lo, s(9) * s(9), 1e-9 * hi);
  const CMatrix B = CMatrix::Identity(10, 10).leftCols(3);
  const auto [slo, shi] = spectral_bounds(A, &B);
  EXPECT_GE(slo, lo - 1e-9);
  EXPECT_LE(shi, hi + 1e-9);
}

TEST(Noise, ExactNormAndDeterminism) {
  std::mt19937_64 rng(15);
  const CVector y = oracle::complex_gaussian(50, rng);
  const CVector a = add_noise(y, 0.3, 9);
  EXPECT_NEAR((a - y).norm(), 0.3, 1e-12);
  EXPECT_EQ(a, add_noise(y, 0.3, 9));
  EXPECT_EQ(add_noise(y, 0.0, 9), y);
  EXPECT_THROW(add_noise(y, -1.0, 9), Error);
}

TEST(MeasurementIO, RoundTrip) {
  std::mt19937_64 rng(16);
  const CVector y = oracle::complex_gaussian(37, rng);
  const auto path = std::filesystem::temp_directory_path() / "ctipg_test_y.bin";
  write_measurements(path.string(), y);
  EXPECT_EQ(read_measurements(path.string()), y);
  EXPECT_EQ(std::filesystem::file_size(path), 8u + 37u * 16u);
  std::filesystem::resize_file(path, 20);
  EXPECT_THROW(read_measurements(path.string()), Error);
  std::filesystem::remove(path);
}
