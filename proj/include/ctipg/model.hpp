#pragma once

// Discrete cone model: a dictionary of atoms, single-pixel cone projections
// (exhaustive or tree-accelerated) and their column-wise product.

#include <cmath>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ctipg/cover_tree.hpp"
#include "ctipg/types.hpp"

namespace ctipg {

/// Parameter record attached to an atom.  For fingerprint dictionaries these
/// are relaxation times in ms; generic dictionaries may leave them zero.
struct AtomParams {
  double t1_ms = 0.0;
  double t2_ms = 0.0;

  bool operator==(const AtomParams&) const = default;
};

using DictionaryTree = CoverTree<cplx>;

/// d atoms of dimension n (stored column-wise), their norms and unit-norm copies.
class Dictionary {
 public:
  Dictionary() = default;

  Dictionary(CMatrix atoms, std::vector<AtomParams> params) : atoms_(std::move(atoms)), params_(std::move(params)) {
    require(atoms_.cols() >= 1 && atoms_.rows() >= 1, "dictionary must have at least one atom of dimension >= 1");
    require(static_cast<Eigen::Index>(params_.size()) == atoms_.cols(), "parameter table length must equal atom count");
    require(atoms_.allFinite(), "dictionary contains non-finite entries");
    norms_ = atoms_.colwise().norm().transpose();
    auto normalized = std::make_shared<CMatrix>(atoms_.rows(), atoms_.cols());
    for (Eigen::Index i = 0; i < atoms_.cols(); ++i) {
      require(norms_[i] > 0.0, "atom " + std::to_string(i) + " has zero norm");
      normalized->col(i) = atoms_.col(i) / norms_[i];
    }
    normalized_ = std::move(normalized);
  }

  Index size() const { return static_cast<Index>(atoms_.cols()); }
  Index dim() const { return static_cast<Index>(atoms_.rows()); }
  const CMatrix& atoms() const { return atoms_; }
  const CMatrix& normalized_atoms() const { return *normalized_; }
  std::shared_ptr<const CMatrix> shared_normalized() const { return normalized_; }
  const RVector& norms() const { return norms_; }
  const std::vector<AtomParams>& params() const { return params_; }

  auto atom(Index i) const { return atoms_.col(static_cast<Eigen::Index>(i)); }
  auto normalized_atom(Index i) const { return normalized_->col(static_cast<Eigen::Index>(i)); }

  /// Cover tree over the unit-norm atoms; tree point ids are atom ids.
  DictionaryTree build_tree() const { return DictionaryTree::build(normalized_); }

 private:
  CMatrix atoms_;
  RVector norms_;
  std::shared_ptr<const CMatrix> normalized_;
  std::vector<AtomParams> params_;
};

/// gamma * psi_{atom_id}, gamma real and nonnegative.
struct ConeProjection {
  Index atom_id = 0;
  double gamma = 0.0;
  CVector projected;
  std::uint64_t distances = 0;
  bool clamped = false;  // real inner product was <= 0, gamma forced to 0
};

namespace detail {

inline ConeProjection rescale(const Dictionary& dict, const CVector& z, Index atom_id, std::uint64_t distances) {
  ConeProjection out;
  out.atom_id = atom_id;
  out.distances = distances;
  const auto psi = dict.atom(atom_id);
  const double norm = dict.norms()[static_cast<Eigen::Index>(atom_id)];
  const double coherence = psi.dot(z).real();  // real(<z, psi>)
  out.clamped = !(coherence > 0.0);
  out.gamma = out.clamped ? 0.0 : coherence / (norm * norm);
  out.projected = out.gamma * psi;
  return out;
}

inline void check_dim(const Dictionary& dict, const CVector& z) {
  require(static_cast<Index>(z.size()) == dict.dim(), "signal dimension " + std::to_string(z.size()) +
                                                          " does not match dictionary dimension " +
                                                          std::to_string(dict.dim()));
}

}  // namespace detail

/// Exhaustive nearest unit atom to z/|z|, then nonnegative rescaling.  This is
/// the Euclidean projection onto the closed cone.  The query is normalized like
/// the tree searches so both rank atoms with identical distance arithmetic.
inline ConeProjection cone_project_exact(const Dictionary& dict, const CVector& z) {
  detail::check_dim(dict, z);
  const double norm = z.norm();
  const SearchResult nn = nn_exact_brute<cplx>(dict.normalized_atoms(), norm > 0.0 ? CVector(z / norm) : z);
  return detail::rescale(dict, z, nn.point_id, nn.distances_evaluated);
}

/// Tree search on z/|z| warm-started at `prev_atom`, (1+eps) multiplicative.
inline ConeProjection cone_project_approx(const Dictionary& dict, const DictionaryTree& tree, const CVector& z,
                                          Index prev_atom, double epsilon) {
  detail::check_dim(dict, z);
  require(prev_atom < dict.size(), "previous atom id out of range");
  const double norm = z.norm();
  if (norm == 0.0) {
    ConeProjection out;
    out.atom_id = prev_atom;
    out.projected = CVector::Zero(z.size());
    return out;
  }
  const SearchResult nn = tree.ann_search(z / norm, prev_atom, epsilon);
  return detail::rescale(dict, z, nn.point_id, nn.distances_evaluated);
}

/// Tree search whose cone residual is within eps_add (squared distance) of the
/// exact projection.  The budget is translated to the unit sphere as
/// eps_add / |z|^2, which bounds the cone excess by |z|^2 times that value.
inline ConeProjection cone_project_additive(const Dictionary& dict, const DictionaryTree& tree, const CVector& z,
                                            Index prev_atom, double eps_add) {
  detail::check_dim(dict, z);
  require(prev_atom < dict.size(), "previous atom id out of range");
  require(eps_add >= 0.0, "additive epsilon must be >= 0");
  const double norm_sq = z.squaredNorm();
  if (norm_sq == 0.0) {
    ConeProjection out;
    out.atom_id = prev_atom;
    out.projected = CVector::Zero(z.size());
    return out;
  }
  const SearchResult nn = tree.ann_search_additive(z / std::sqrt(norm_sq), prev_atom, eps_add / norm_sq);
  return detail::rescale(dict, z, nn.point_id, nn.distances_evaluated);
}

struct ProjectionMode {
  enum class Kind { Exact, Multiplicative, Additive };
  Kind kind = Kind::Exact;
  double epsilon = 0.0;  // (1+eps) factor, or per-pixel squared-distance budget

  static ProjectionMode exact() { return {Kind::Exact, 0.0}; }
  static ProjectionMode multiplicative(double eps) { return {Kind::Multiplicative, eps}; }
  static ProjectionMode additive(double eps) { return {Kind::Additive, eps}; }
};

struct ProductProjection {
  CMatrix image;  // n x J, column j = pixel j
  std::vector<Index> atom_ids;
  std::vector<double> gammas;
  std::uint64_t distances = 0;
  Index clamped_pixels = 0;
};

/// Column-wise cone projection of an n x J image.  Exact mode is exhaustive
/// and needs no tree; the approximate modes need `tree` and warm starts.
inline ProductProjection product_project(const Dictionary& dict, const DictionaryTree* tree, const CMatrix& Z,
                                         const std::vector<Index>& prev_atoms, ProjectionMode mode) {
  require(static_cast<Index>(Z.rows()) == dict.dim(), "image channel count does not match dictionary dimension");
  const Index J = static_cast<Index>(Z.cols());
  if (mode.kind != ProjectionMode::Kind::Exact) {
    require(tree != nullptr, "approximate projection requires a cover tree");
    require(prev_atoms.size() == J, "need one warm-start atom per pixel");
  }
  ProductProjection out;
  out.image.resize(Z.rows(), Z.cols());
  out.atom_ids.resize(J);
  out.gammas.resize(J);
  for (Index j = 0; j < J; ++j) {
    const CVector z = Z.col(static_cast<Eigen::Index>(j));
    ConeProjection p;
    try {
      switch (mode.kind) {
        case ProjectionMode::Kind::Exact:
          p = cone_project_exact(dict, z);
          break;
        case ProjectionMode::Kind::Multiplicative:
          p = cone_project_approx(dict, *tree, z, prev_atoms[j], mode.epsilon);
          break;
        case ProjectionMode::Kind::Additive:
          p = cone_project_additive(dict, *tree, z, prev_atoms[j], mode.epsilon);
          break;
      }
    } catch (const Error& e) {
      throw Error("pixel " + std::to_string(j) + ": " + e.what());
    }
    out.image.col(static_cast<Eigen::Index>(j)) = p.projected;
    out.atom_ids[j] = p.atom_id;
    out.gammas[j] = p.gamma;
    out.distances += p.distances;
    out.clamped_pixels += p.clamped ? 1 : 0;
  }
  return out;
}

/// Slice-major vectorization: x[l*J + j] = X(l, j).
inline CVector vectorize(const CMatrix& X) {
  CVector x(X.size());
  Eigen::Map<Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(x.data(), X.rows(), X.cols()) = X;
  return x;
}

inline CMatrix unvectorize(const CVector& x, Index channels, Index pixels) {
  require(static_cast<Index>(x.size()) == channels * pixels, "vector length does not match image shape");
  return Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      x.data(), static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(pixels));
}

/// Binary dictionary file: magic, uint64 d, uint64 n, then d atoms of n
/// interleaved complex doubles (atom i contiguous), then d (T1, T2) doubles.
inline void save_dictionary(const std::string& path, const Dictionary& dict) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "cannot open " + path + " for writing");
  os.write("CTIPGDC1", 8);
  detail::write_pod<std::uint64_t>(os, dict.size());
  detail::write_pod<std::uint64_t>(os, dict.dim());
  const CMatrix& a = dict.atoms();  // column-major: atom i is contiguous
  os.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(cplx)));
  for (const auto& p : dict.params()) {
    detail::write_pod<double>(os, p.t1_ms);
    detail::write_pod<double>(os, p.t2_ms);
  }
  require(static_cast<bool>(os), "write failed for " + path);
}

inline Dictionary load_dictionary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  require(is && std::string(magic, 8) == "CTIPGDC1", path + " is not a dictionary file");
  const auto d = detail::read_pod<std::uint64_t>(is);
  const auto n = detail::read_pod<std::uint64_t>(is);
  require(d >= 1 && n >= 1 && d < (1u << 30) && n < (1u << 20), "corrupt dictionary header in " + path);
  CMatrix atoms(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  is.read(reinterpret_cast<char*>(atoms.data()), static_cast<std::streamsize>(atoms.size() * sizeof(cplx)));
  require(static_cast<bool>(is), "truncated dictionary file " + path);
  std::vector<AtomParams> params(d);
  for (auto& p : params) {
    p.t1_ms = detail::read_pod<double>(is);
    p.t2_ms = detail::read_pod<double>(is);
  }
  return Dictionary(std::move(atoms), std::move(params));
}

}  // namespace ctipg
