#pragma once

// Forward models A : C^n -> C^m with their adjoints, the shifted-lattice EPI
// Fourier sampler, and empirical embedding / norm estimators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/FFT>
#include <nlohmann/json.hpp>

#include "ctipg/types.hpp"

namespace ctipg {

class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual Index input_dim() const = 0;
  virtual Index output_dim() const = 0;
  virtual CVector apply(const CVector& x) const = 0;
  virtual CVector adjoint(const CVector& y) const = 0;

 protected:
  void check_input(const CVector& x) const {
    require(static_cast<Index>(x.size()) == input_dim(),
            "operator input has length " + std::to_string(x.size()) + ", expected " + std::to_string(input_dim()));
  }
  void check_output(const CVector& y) const {
    require(static_cast<Index>(y.size()) == output_dim(),
            "operator adjoint input has length " + std::to_string(y.size()) + ", expected " +
                std::to_string(output_dim()));
  }
};

class DenseOperator final : public LinearOperator {
 public:
  explicit DenseOperator(CMatrix matrix) : matrix_(std::move(matrix)) {
    require(matrix_.allFinite(), "dense operator has non-finite entries");
  }

  Index input_dim() const override { return static_cast<Index>(matrix_.cols()); }
  Index output_dim() const override { return static_cast<Index>(matrix_.rows()); }
  CVector apply(const CVector& x) const override {
    check_input(x);
    return matrix_ * x;
  }
  CVector adjoint(const CVector& y) const override {
    check_output(y);
    return matrix_.adjoint() * y;
  }
  const CMatrix& matrix() const { return matrix_; }

 private:
  CMatrix matrix_;
};

/// Retained k-space rows per time slice on a height x width grid.
struct EpiPattern {
  Index height = 0;
  Index width = 0;
  std::vector<std::vector<Index>> rows;  // rows[l] = Omega_l, ascending

  Index slices() const { return rows.size(); }
  Index pixels() const { return height * width; }
  Index rows_per_slice() const { return rows.empty() ? 0 : rows.front().size(); }

  void validate() const {
    require(height >= 1 && width >= 1, "pattern grid must be at least 1x1");
    require(!rows.empty(), "pattern needs at least one slice");
    const Index count = rows.front().size();
    require(count >= 1, "every slice must retain at least one row");
    for (Index l = 0; l < rows.size(); ++l) {
      require(rows[l].size() == count, "slice " + std::to_string(l) + " retains a different number of rows");
      for (Index k = 0; k < rows[l].size(); ++k) {
        require(rows[l][k] < height, "slice " + std::to_string(l) + " row index " + std::to_string(rows[l][k]) +
                                         " out of range for height " + std::to_string(height));
        require(k == 0 || rows[l][k] > rows[l][k - 1], "slice " + std::to_string(l) + " rows must be strictly ascending");
      }
    }
  }
};

/// Uniform row subselection, shifted by one row per slice: slice l keeps
/// rows (l mod ratio) + k*ratio.
inline EpiPattern lattice_epi_pattern(Index height, Index width, Index slices, Index ratio) {
  require(ratio >= 1, "subsampling ratio must be >= 1");
  require(slices >= 1, "need at least one slice");
  require(height >= 1 && height % ratio == 0,
          "subsampling ratio " + std::to_string(ratio) + " does not divide height " + std::to_string(height));
  EpiPattern pattern{height, width, {}};
  pattern.rows.resize(slices);
  for (Index l = 0; l < slices; ++l)
    for (Index r = l % ratio; r < height; r += ratio) pattern.rows[l].push_back(r);
  return pattern;
}

inline nlohmann::json pattern_to_json(const EpiPattern& p) {
  nlohmann::json slices = nlohmann::json::array();
  for (Index l = 0; l < p.rows.size(); ++l) slices.push_back({{"slice", l}, {"rows", p.rows[l]}});
  return {{"height", p.height}, {"width", p.width}, {"slices", slices}};
}

inline EpiPattern pattern_from_json(const nlohmann::json& j) {
  EpiPattern p;
  try {
    p.height = j.at("height").get<Index>();
    p.width = j.at("width").get<Index>();
    const auto& slices = j.at("slices");
    p.rows.resize(slices.size());
    for (const auto& s : slices) {
      const auto l = s.at("slice").get<Index>();
      require(l < p.rows.size(), "slice index out of range in pattern file");
      p.rows[l] = s.at("rows").get<std::vector<Index>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed pattern: ") + e.what());
  }
  p.validate();
  return p;
}

/// Per-slice unitary 2-D DFT followed by row subselection.
///   input  x[l*J + j], pixel j = r + c*height (column-major image)
///   output y[l*(|Omega|*width) + k*width + c] = K_l(Omega_l[k], c)
class EpiOperator final : public LinearOperator {
 public:
  explicit EpiOperator(EpiPattern pattern) : pattern_(std::move(pattern)) {
    pattern_.validate();
    scale_ = 1.0 / std::sqrt(static_cast<double>(pattern_.pixels()));
  }

  Index input_dim() const override { return pattern_.slices() * pattern_.pixels(); }
  Index output_dim() const override { return pattern_.slices() * pattern_.rows_per_slice() * pattern_.width; }
  const EpiPattern& pattern() const { return pattern_; }

  CVector apply(const CVector& x) const override {
    check_input(x);
    const Index H = pattern_.height, W = pattern_.width, J = pattern_.pixels(), R = pattern_.rows_per_slice();
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::Unscaled);
    CVector y(static_cast<Eigen::Index>(output_dim()));
    std::vector<cplx> in, out;
    CMatrix cols(H, W);
    for (Index l = 0; l < pattern_.slices(); ++l) {
      const cplx* slice = x.data() + l * J;
      in.resize(H);
      for (Index c = 0; c < W; ++c) {
        std::copy(slice + c * H, slice + (c + 1) * H, in.begin());
        fft.fwd(out, in);
        for (Index r = 0; r < H; ++r) cols(r, c) = out[r];
      }
      in.resize(W);
      for (Index k = 0; k < R; ++k) {
        const Index r = pattern_.rows[l][k];
        for (Index c = 0; c < W; ++c) in[c] = cols(r, c);
        fft.fwd(out, in);
        for (Index c = 0; c < W; ++c) y[l * R * W + k * W + c] = scale_ * out[c];
      }
    }
    return y;
  }

  CVector adjoint(const CVector& y) const override {
    check_output(y);
    const Index H = pattern_.height, W = pattern_.width, J = pattern_.pixels(), R = pattern_.rows_per_slice();
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::Unscaled);
    CVector x(static_cast<Eigen::Index>(input_dim()));
    std::vector<cplx> in, out;
    CMatrix cols(H, W);
    for (Index l = 0; l < pattern_.slices(); ++l) {
      cols.setZero();
      in.resize(W);
      for (Index k = 0; k < R; ++k) {
        const Index r = pattern_.rows[l][k];
        for (Index c = 0; c < W; ++c) in[c] = y[l * R * W + k * W + c];
        fft.inv(out, in);
        for (Index c = 0; c < W; ++c) cols(r, c) = out[c];
      }
      in.resize(H);
      cplx* slice = x.data() + l * J;
      for (Index c = 0; c < W; ++c) {
        for (Index r = 0; r < H; ++r) in[r] = cols(r, c);
        fft.inv(out, in);
        for (Index r = 0; r < H; ++r) slice[c * H + r] = scale_ * out[r];
      }
    }
    return x;
  }

 private:
  EpiPattern pattern_;
  double scale_ = 1.0;
};

struct EmbeddingEstimate {
  double alpha_hat = 0.0;
  double beta_hat = 0.0;
  std::pair<Index, Index> alpha_witness{0, 0};
  std::pair<Index, Index> beta_witness{0, 0};
  std::uint64_t pairs_evaluated = 0;
  bool exhaustive = true;
};

/// Extreme Rayleigh ratios |A(x-x')|^2 / |x-x'|^2 over pairs of a finite
/// point set.  All pairs (i < j, row-major) when there are at most
/// `pair_budget`, otherwise `pair_budget` uniformly drawn pairs.
inline EmbeddingEstimate estimate_bilipschitz(const LinearOperator& op, const std::vector<CVector>& points,
                                              std::uint64_t pair_budget, std::uint64_t seed = 0) {
  require(points.size() >= 2, "embedding estimate needs at least two points");
  require(pair_budget >= 1, "pair budget must be >= 1");
  const std::uint64_t n = points.size();
  const std::uint64_t total = n * (n - 1) / 2;

  EmbeddingEstimate est;
  est.alpha_hat = std::numeric_limits<double>::infinity();
  est.beta_hat = 0.0;
  est.exhaustive = total <= pair_budget;
  bool any = false;
  auto visit = [&](Index i, Index j) {
    const CVector diff = points[i] - points[j];
    const double den = diff.squaredNorm();
    if (den == 0.0) return;
    const double ratio = op.apply(diff).squaredNorm() / den;
    ++est.pairs_evaluated;
    any = true;
    if (ratio < est.alpha_hat) {
      est.alpha_hat = ratio;
      est.alpha_witness = {i, j};
    }
    if (ratio > est.beta_hat) {
      est.beta_hat = ratio;
      est.beta_witness = {i, j};
    }
  };
  if (est.exhaustive) {
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) visit(i, j);
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Index> pick(0, n - 1);
    for (std::uint64_t s = 0; s < pair_budget; ++s) {
      Index i = pick(rng), j = pick(rng);
      while (j == i) j = pick(rng);
      visit(std::min(i, j), std::max(i, j));
    }
  }
  require(any, "all point pairs coincide; embedding constants undefined");
  return est;
}

/// Exact extreme eigenvalues of B^H A^H A B for an explicit matrix; B (with
/// orthonormal columns) restricts to a subspace and defaults to the identity.
inline std::pair<double, double> spectral_bounds(const CMatrix& A, const CMatrix* basis = nullptr) {
  const CMatrix AB = basis ? CMatrix(A * *basis) : A;
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(AB.adjoint() * AB, Eigen::EigenvaluesOnly);
  require(eig.info() == Eigen::Success, "eigenvalue solver failed");
  return {std::max(eig.eigenvalues().minCoeff(), 0.0), eig.eigenvalues().maxCoeff()};
}

struct NormEstimate {
  double norm = 0.0;
  std::vector<double> rayleigh;  // running estimate per iteration
};

/// Power iteration on A^H A from a seeded complex Gaussian start.
inline NormEstimate operator_norm_trace(const LinearOperator& op, int iterations, std::uint64_t seed = 0) {
  require(iterations >= 1, "power iteration needs at least one iteration");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  CVector v(static_cast<Eigen::Index>(op.input_dim()));
  for (auto& c : v) c = cplx(gauss(rng), gauss(rng));
  v.normalize();
  NormEstimate est;
  double best = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const CVector Av = op.apply(v);
    best = std::max(best, std::sqrt(Av.squaredNorm()));  // |v| = 1
    est.rayleigh.push_back(best);
    CVector w = op.adjoint(Av);
    const double wn = w.norm();
    if (wn == 0.0) break;  // v in the null space; the estimate stays at 0 only for A = 0
    v = w / wn;
  }
  est.norm = best;
  return est;
}

inline double operator_norm(const LinearOperator& op, int iterations, std::uint64_t seed = 0) {
  return operator_norm_trace(op, iterations, seed).norm;
}

/// y + w, w complex Gaussian rescaled to |w| = noise_norm exactly.
inline CVector add_noise(const CVector& y, double noise_norm, std::uint64_t seed) {
  require(noise_norm >= 0.0 && std::isfinite(noise_norm), "noise norm must be finite and >= 0");
  if (noise_norm == 0.0 || y.size() == 0) return y;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  CVector w(y.size());
  for (auto& c : w) c = cplx(gauss(rng), gauss(rng));
  return y + (noise_norm / w.norm()) * w;
}

inline void write_measurements(const std::string& path, const CVector& y) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "cannot open " + path + " for writing");
  const std::uint64_t count = static_cast<std::uint64_t>(y.size());
  os.write(reinterpret_cast<const char*>(&count), sizeof count);
  os.write(reinterpret_cast<const char*>(y.data()), static_cast<std::streamsize>(count * sizeof(cplx)));
  require(static_cast<bool>(os), "write failed for " + path);
}

inline CVector read_measurements(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "cannot open " + path);
  std::uint64_t count = 0;
  is.read(reinterpret_cast<char*>(&count), sizeof count);
  require(static_cast<bool>(is) && count < (std::uint64_t{1} << 40), "corrupt measurement header in " + path);
  CVector y(static_cast<Eigen::Index>(count));
  is.read(reinterpret_cast<char*>(y.data()), static_cast<std::streamsize>(count * sizeof(cplx)));
  require(static_cast<bool>(is), "truncated measurement file " + path);
  return y;
}

}  // namespace ctipg
