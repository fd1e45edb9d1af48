#pragma once

// Explicit cover tree over a fixed point set with instrumented exact, (1+eps)
// multiplicative and additive approximate nearest neighbour search.
//
// Scales grow downwards: the root sits alone at scale 0 and the covering
// radius at scale l is sigma * 2^-l, where sigma is the largest distance from
// the root to any point.  Self-chains are stored explicitly only as deep as a
// point still has non-self descendants; a leaf implicitly repeats itself at
// every finer scale.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctipg/types.hpp"

namespace ctipg {

template <typename Scalar>
using PointMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Result of a nearest neighbour query.  `distance` is exactly the value the
/// search computed for `point_id`.
struct SearchResult {
  Index point_id = 0;
  double distance = 0.0;
  std::uint64_t distances_evaluated = 0;
};

struct CoverTreeNode {
  Index point_id = 0;
  int scale = 0;
  double maxdist = 0.0;
  std::vector<Index> children;
  std::vector<Index> duplicate_ids;
};

struct PropertyCheck {
  bool pass = true;
  std::string counterexample;

  void fail(std::string what) {
    if (pass) counterexample = std::move(what);
    pass = false;
  }
};

struct InvariantReport {
  PropertyCheck nesting;
  PropertyCheck covering;
  PropertyCheck separation;
  PropertyCheck maxdist;

  bool all() const { return nesting.pass && covering.pass && separation.pass && maxdist.pass; }
};

namespace detail {

template <typename A, typename B>
double distance(const A& a, const B& b) {
  return (a - b).norm();
}

// Relative slack used where a float triangle inequality decides whether a
// subtree may be discarded.  Only ever widens the retained set.
inline constexpr double kPruneSlack = 1e-12;

template <typename T>
void write_pod(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  require(static_cast<bool>(is), "unexpected end of stream");
  return value;
}

}  // namespace detail

/// Exhaustive scan.  Ties go to the smallest id; evaluates exactly d distances.
template <typename Scalar, typename Query>
SearchResult nn_exact_brute(const PointMatrix<Scalar>& points, const Query& query) {
  require(points.cols() > 0, "empty point set");
  require(query.size() == points.rows(), "query dimension mismatch");
  SearchResult best{0, std::numeric_limits<double>::infinity(), 0};
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const double d = detail::distance(points.col(i), query);
    ++best.distances_evaluated;
    if (d < best.distance) {
      best.distance = d;
      best.point_id = static_cast<Index>(i);
    }
  }
  return best;
}

template <typename Scalar>
class CoverTree {
 public:
  using Points = PointMatrix<Scalar>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  static constexpr Index kNone = std::numeric_limits<Index>::max();

  /// Builds the tree by single-point insertion in id order; point 0 is the root.
  static CoverTree build(std::shared_ptr<const Points> points) {
    require(points != nullptr, "null point set");
    require(points->cols() >= 1, "cannot build a cover tree over an empty point set");
    require(points->allFinite(), "point set contains non-finite coordinates");

    CoverTree tree;
    tree.points_ = std::move(points);
    const Index d = tree.size();
    tree.top_node_.assign(d, kNone);

    // sigma is the root's coverage radius; the root distances are reused by
    // every insertion below.
    std::vector<double> root_dist(d, 0.0);
    for (Index i = 1; i < d; ++i) {
      root_dist[i] = detail::distance(tree.point(0), tree.point(i));
      ++tree.build_distances_;
      tree.sigma_ = std::max(tree.sigma_, root_dist[i]);
    }
    tree.nodes_.push_back(CoverTreeNode{0, 0, 0.0, {}, {}});
    tree.parent_.push_back(kNone);
    tree.top_node_[0] = 0;

    for (Index i = 1; i < d; ++i) tree.insert(i, root_dist[i]);
    tree.finalize();
    return tree;
  }

  /// Reads a tree written by `save`, re-attaching it to its point set.
  static CoverTree load(std::istream& is, std::shared_ptr<const Points> points) {
    require(points != nullptr, "null point set");
    char magic[8];
    is.read(magic, sizeof magic);
    require(is && std::string(magic, 8) == std::string(kMagic, 8), "not a cover tree file");
    CoverTree tree;
    tree.points_ = std::move(points);
    const auto d = detail::read_pod<std::uint64_t>(is);
    const auto dim = detail::read_pod<std::uint64_t>(is);
    require(d == tree.size() && dim == static_cast<std::uint64_t>(tree.points_->rows()),
            "cover tree file does not match the supplied point set");
    tree.sigma_ = detail::read_pod<double>(is);
    tree.max_scale_ = detail::read_pod<std::int32_t>(is);
    const auto node_count = detail::read_pod<std::uint64_t>(is);
    tree.build_distances_ = detail::read_pod<std::uint64_t>(is);
    require(tree.max_scale_ >= 0 && node_count >= 1 &&
                node_count <= d * (static_cast<std::uint64_t>(tree.max_scale_) + 1),
            "corrupt node count");

    tree.nodes_.resize(node_count);
    tree.parent_.assign(node_count, kNone);
    tree.top_node_.assign(d, kNone);
    // Preorder records: node i's children are the next subtrees in order.
    std::vector<std::pair<Index, std::uint64_t>> stack;  // (node, children still to read)
    for (Index i = 0; i < node_count; ++i) {
      CoverTreeNode& node = tree.nodes_[i];
      node.point_id = detail::read_pod<std::uint64_t>(is);
      node.scale = detail::read_pod<std::int32_t>(is);
      node.maxdist = detail::read_pod<double>(is);
      const auto child_count = detail::read_pod<std::uint64_t>(is);
      const auto dup_count = detail::read_pod<std::uint64_t>(is);
      require(node.point_id < d && dup_count <= d, "corrupt node record");
      node.duplicate_ids.resize(dup_count);
      for (auto& id : node.duplicate_ids) {
        id = detail::read_pod<std::uint64_t>(is);
        require(id < d, "corrupt duplicate id");
      }
      if (i > 0) {
        require(!stack.empty(), "corrupt preorder layout");
        const Index parent = stack.back().first;
        tree.parent_[i] = parent;
        tree.nodes_[parent].children.push_back(i);
        if (--stack.back().second == 0) stack.pop_back();
      }
      if (i == 0 || tree.nodes_[tree.parent_[i]].point_id != node.point_id)
        tree.top_node_[node.point_id] = i;
      if (child_count > 0) stack.emplace_back(i, child_count);
    }
    require(stack.empty(), "truncated preorder layout");
    return tree;
  }

  /// Writes header (d, D, sigma, L_max, node count, build cost) then preorder
  /// node records.  Native little-endian layout.
  void save(std::ostream& os) const {
    os.write(kMagic, 8);
    detail::write_pod<std::uint64_t>(os, size());
    detail::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(points_->rows()));
    detail::write_pod<double>(os, sigma_);
    detail::write_pod<std::int32_t>(os, max_scale_);
    detail::write_pod<std::uint64_t>(os, nodes_.size());
    detail::write_pod<std::uint64_t>(os, build_distances_);
    // nodes_ is kept in preorder by finalize()/load().
    for (const auto& node : nodes_) {
      detail::write_pod<std::uint64_t>(os, node.point_id);
      detail::write_pod<std::int32_t>(os, node.scale);
      detail::write_pod<double>(os, node.maxdist);
      detail::write_pod<std::uint64_t>(os, node.children.size());
      detail::write_pod<std::uint64_t>(os, node.duplicate_ids.size());
      for (Index id : node.duplicate_ids) detail::write_pod<std::uint64_t>(os, id);
    }
  }

  Index size() const { return static_cast<Index>(points_->cols()); }
  Index dimension() const { return static_cast<Index>(points_->rows()); }
  double sigma() const { return sigma_; }
  int max_scale() const { return max_scale_; }
  Index root_point() const { return nodes_.front().point_id; }
  std::uint64_t build_distance_count() const { return build_distances_; }
  const std::vector<CoverTreeNode>& nodes() const { return nodes_; }
  const std::vector<Index>& parents() const { return parent_; }
  const Points& points() const { return *points_; }
  std::shared_ptr<const Points> shared_points() const { return points_; }
  auto point(Index i) const { return points_->col(static_cast<Eigen::Index>(i)); }

  /// Covering radius at a scale, sigma * 2^-scale.
  double radius(int scale) const { return std::ldexp(sigma_, -scale); }

  /// Branch-and-bound (1+eps)-ANN search warm-started at `current_estimate`.
  /// eps = 0 descends to the finest scale and is exact.
  template <typename Query>
  SearchResult ann_search(const Query& query, Index current_estimate, double epsilon) const {
    require(epsilon >= 0.0 && std::isfinite(epsilon), "epsilon must be finite and >= 0");
    const double inv_eps = epsilon > 0.0 ? 1.0 / epsilon : 0.0;
    return descend(query, current_estimate, [&](int scale, double d_min, const Frontier&) {
      if (epsilon == 0.0) return true;
      return std::ldexp(sigma_, 1 - scale) * (1.0 + inv_eps) > d_min;
    });
  }

  /// Search whose squared distance exceeds the optimum by at most eps_add.
  /// Stops once d_min^2 - L^2 <= eps_add, L a lower bound on the distance to
  /// any point still reachable from the candidate set.
  template <typename Query>
  SearchResult ann_search_additive(const Query& query, Index current_estimate, double eps_add) const {
    require(eps_add >= 0.0 && !std::isnan(eps_add), "additive epsilon must be >= 0");
    return descend(query, current_estimate, [&](int, double d_min, const Frontier& frontier) {
      double lower = std::numeric_limits<double>::infinity();
      for (const auto& c : frontier) {
        const double reach = nodes_[c.node].maxdist;
        lower = std::min(lower, std::max(c.dist - reach - detail::kPruneSlack * (c.dist + reach), 0.0));
      }
      return d_min * d_min - lower * lower > eps_add;
    });
  }

  /// Checks nesting, covering, separation and maxdist against the stored
  /// structure by direct enumeration.  O(d^2) for separation.
  InvariantReport validate() const {
    InvariantReport report;
    const Index d = size();
    std::vector<int> top_scale(d, -1);
    std::vector<int> seen(d, 0);

    for (Index i = 0; i < nodes_.size(); ++i) {
      const auto& node = nodes_[i];
      const bool is_top = (i == 0) || nodes_[parent_[i]].point_id != node.point_id;
      if (is_top) {
        if (++seen[node.point_id] > 1)
          report.nesting.fail("point " + std::to_string(node.point_id) + " heads more than one chain");
        top_scale[node.point_id] = node.scale;
        for (Index dup : node.duplicate_ids) {
          if (++seen[dup] > 1) report.nesting.fail("duplicate id " + std::to_string(dup) + " listed twice");
          if (detail::distance(point(dup), point(node.point_id)) != 0.0)
            report.nesting.fail("duplicate id " + std::to_string(dup) + " does not coincide with its node");
        }
      } else if (!node.duplicate_ids.empty()) {
        report.nesting.fail("self-chain node " + std::to_string(i) + " carries duplicates");
      }
      if (node.children.empty()) continue;
      int self_children = 0;
      for (Index c : node.children) {
        const auto& child = nodes_[c];
        if (child.scale != node.scale + 1)
          report.nesting.fail("node " + std::to_string(c) + " at scale " + std::to_string(child.scale) +
                              " is a child of scale " + std::to_string(node.scale));
        if (child.point_id == node.point_id) {
          ++self_children;
          continue;
        }
        const double dist = detail::distance(point(node.point_id), point(child.point_id));
        if (!(dist <= radius(node.scale))) {
          std::ostringstream msg;
          msg << "edge " << node.point_id << "@" << node.scale << " -> " << child.point_id << "@"
              << child.scale << " has length " << dist << " > " << radius(node.scale);
          report.covering.fail(msg.str());
        }
      }
      if (self_children != 1)
        report.nesting.fail("node " + std::to_string(i) + " (point " + std::to_string(node.point_id) +
                            ") has " + std::to_string(self_children) + " self-children");
    }
    for (Index p = 0; p < d; ++p)
      if (seen[p] != 1) report.nesting.fail("point " + std::to_string(p) + " appears " + std::to_string(seen[p]) + " times");

    // A point joins S_l at its top scale and stays in every finer scale.
    for (Index p = 0; p < d && report.separation.pass; ++p) {
      if (top_scale[p] < 0) continue;
      for (Index q = p + 1; q < d; ++q) {
        if (top_scale[q] < 0) continue;
        const int scale = std::max(top_scale[p], top_scale[q]);
        const double dist = detail::distance(point(p), point(q));
        if (!(dist > radius(scale))) {
          std::ostringstream msg;
          msg << "points " << p << " and " << q << " share scale " << scale << " at distance " << dist
              << " <= " << radius(scale);
          report.separation.fail(msg.str());
          break;
        }
      }
    }

    std::vector<double> true_maxdist(nodes_.size(), 0.0);
    for (Index i = nodes_.size(); i-- > 1;) {
      // Every ancestor of node i sees node i's point as a descendant.
      for (Index a = parent_[i]; a != kNone; a = parent_[a]) {
        const double dist = detail::distance(point(nodes_[a].point_id), point(nodes_[i].point_id));
        true_maxdist[a] = std::max(true_maxdist[a], dist);
      }
    }
    for (Index i = 0; i < nodes_.size(); ++i) {
      const auto& node = nodes_[i];
      const double expected = true_maxdist[i];
      std::ostringstream msg;
      if (std::abs(node.maxdist - expected) > 1e-12 * std::max(1.0, expected)) {
        msg << "node " << i << " (point " << node.point_id << ") stores maxdist " << node.maxdist
            << ", true value " << expected;
        report.maxdist.fail(msg.str());
      } else if (node.maxdist > std::ldexp(sigma_, 1 - node.scale)) {
        msg << "node " << i << " maxdist " << node.maxdist << " exceeds sigma*2^(1-" << node.scale << ")";
        report.maxdist.fail(msg.str());
      }
    }
    return report;
  }

  bool same_structure(const CoverTree& other) const {
    if (size() != other.size() || sigma_ != other.sigma_ || max_scale_ != other.max_scale_ ||
        nodes_.size() != other.nodes_.size())
      return false;
    for (Index i = 0; i < nodes_.size(); ++i) {
      const auto& a = nodes_[i];
      const auto& b = other.nodes_[i];
      if (a.point_id != b.point_id || a.scale != b.scale || a.maxdist != b.maxdist ||
          a.children != b.children || a.duplicate_ids != b.duplicate_ids)
        return false;
    }
    return true;
  }

  /// Test hook: direct node access for fault injection.
  std::vector<CoverTreeNode>& mutable_nodes_for_testing() { return nodes_; }

 private:
  static constexpr char kMagic[9] = "CTIPGTR1";

  struct Candidate {
    Index node;
    int scale;
    double dist;
  };
  using Frontier = std::vector<Candidate>;

  template <typename Query, typename Continue>
  SearchResult descend(const Query& query, Index current_estimate, Continue keep_going) const {
    require(static_cast<Index>(query.size()) == dimension(), "query dimension mismatch");
    require(current_estimate < size(), "current estimate id out of range");

    SearchResult best;
    best.point_id = current_estimate;
    best.distance = detail::distance(point(current_estimate), query);
    best.distances_evaluated = 1;
    auto offer = [&](Index id, double dist) {
      if (dist < best.distance || (dist == best.distance && id < best.point_id)) {
        best.distance = dist;
        best.point_id = id;
      }
    };

    const Index root = root_point();
    double root_dist = best.distance;
    if (root != current_estimate) {
      root_dist = detail::distance(point(root), query);
      ++best.distances_evaluated;
    }
    offer(root, root_dist);

    Frontier frontier{Candidate{0, 0, root_dist}};
    Frontier next;
    int scale = 0;
    while (scale < max_scale_ && !frontier.empty() && keep_going(scale, best.distance, frontier)) {
      next.clear();
      for (const auto& c : frontier) {
        const auto& node = nodes_[c.node];
        for (Index child : node.children) {
          const Index pid = nodes_[child].point_id;
          double dist = c.dist;  // self-children inherit the parent's distance
          if (pid != node.point_id) {
            dist = detail::distance(point(pid), query);
            ++best.distances_evaluated;
          }
          next.push_back(Candidate{child, scale + 1, dist});
        }
      }
      for (const auto& c : next) offer(nodes_[c.node].point_id, c.dist);
      frontier.clear();
      for (const auto& c : next) {
        const double bound = best.distance + nodes_[c.node].maxdist;
        if (c.dist <= bound * (1.0 + detail::kPruneSlack)) frontier.push_back(c);
      }
      ++scale;
    }
    return best;
  }

  void insert(Index p, double root_dist) {
    const auto query = point(p);
    if (root_dist == 0.0) {
      nodes_[0].duplicate_ids.push_back(p);
      return;
    }
    std::unordered_map<Index, double> known{{root_point(), root_dist}};
    auto dist_to = [&](Index pid) {
      auto it = known.find(pid);
      if (it != known.end()) return it->second;
      const double dist = detail::distance(point(pid), query);
      ++build_distances_;
      known.emplace(pid, dist);
      return dist;
    };

    std::vector<Frontier> levels{Frontier{Candidate{0, 0, root_dist}}};
    for (int l = 0;; ++l) {
      Frontier children;
      for (const auto& c : levels[l]) {
        const auto& node = nodes_[c.node];
        if (node.children.empty()) {
          children.push_back(Candidate{c.node, c.scale + 1, c.dist});
          continue;
        }
        for (Index child : node.children) {
          const Index pid = nodes_[child].point_id;
          children.push_back(Candidate{child, c.scale + 1, pid == node.point_id ? c.dist : dist_to(pid)});
        }
      }
      const Candidate* nearest = nullptr;
      for (const auto& c : children) {
        if (!nearest || c.dist < nearest->dist ||
            (c.dist == nearest->dist && nodes_[c.node].point_id < nodes_[nearest->node].point_id))
          nearest = &c;
      }
      if (nearest->dist == 0.0) {
        nodes_[top_node_[nodes_[nearest->node].point_id]].duplicate_ids.push_back(p);
        return;
      }
      if (nearest->dist > radius(l)) break;
      Frontier kept;
      for (const auto& c : children)
        if (c.dist <= radius(l) * (1.0 + detail::kPruneSlack)) kept.push_back(c);
      levels.push_back(std::move(kept));
    }

    // The search at the deepest level found no parent; walk back up until a
    // level offers a parent within its covering radius.
    for (int k = static_cast<int>(levels.size()) - 2; k >= 0; --k) {
      const Candidate* parent = nullptr;
      for (const auto& c : levels[k]) {
        if (c.dist > radius(k)) continue;
        if (!parent || c.dist < parent->dist ||
            (c.dist == parent->dist && nodes_[c.node].point_id < nodes_[parent->node].point_id))
          parent = &c;
      }
      if (!parent) continue;
      attach(p, parent->node, k, dist_to);
      return;
    }
    throw Error("cover tree insertion found no parent");  // unreachable: the root always covers
  }

  template <typename DistFn>
  void attach(Index p, Index node, int scale, DistFn& dist_to) {
    const Index pid = nodes_[node].point_id;
    while (nodes_[node].scale < scale) node = add_child(node, pid);
    if (nodes_[node].children.empty()) add_child(node, pid);
    top_node_[p] = add_child(node, p);
    for (Index a = node; a != kNone; a = parent_[a])
      nodes_[a].maxdist = std::max(nodes_[a].maxdist, dist_to(nodes_[a].point_id));
  }

  Index add_child(Index parent, Index pid) {
    const Index id = nodes_.size();
    nodes_.push_back(CoverTreeNode{pid, nodes_[parent].scale + 1, 0.0, {}, {}});
    parent_.push_back(parent);
    nodes_[parent].children.push_back(id);
    max_scale_ = std::max(max_scale_, nodes_[id].scale);
    return id;
  }

  // Renumbers nodes in preorder so that save/load round-trips node indices.
  void finalize() {
    std::vector<Index> order;
    order.reserve(nodes_.size());
    std::vector<Index> stack{0};
    while (!stack.empty()) {
      const Index n = stack.back();
      stack.pop_back();
      order.push_back(n);
      const auto& ch = nodes_[n].children;
      for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
    }
    std::vector<Index> remap(nodes_.size());
    for (Index i = 0; i < order.size(); ++i) remap[order[i]] = i;
    std::vector<CoverTreeNode> nodes(nodes_.size());
    std::vector<Index> parent(nodes_.size(), kNone);
    for (Index old = 0; old < nodes_.size(); ++old) {
      CoverTreeNode node = std::move(nodes_[old]);
      for (auto& c : node.children) c = remap[c];
      if (parent_[old] != kNone) parent[remap[old]] = remap[parent_[old]];
      nodes[remap[old]] = std::move(node);
    }
    for (auto& t : top_node_)
      if (t != kNone) t = remap[t];
    nodes_ = std::move(nodes);
    parent_ = std::move(parent);
  }

  std::shared_ptr<const Points> points_;
  std::vector<CoverTreeNode> nodes_;
  std::vector<Index> parent_;
  std::vector<Index> top_node_;
  double sigma_ = 0.0;
  int max_scale_ = 0;
  std::uint64_t build_distances_ = 0;
};

struct CostProfile {
  std::vector<std::uint64_t> counts;
  double median = 0.0;
  double mean = 0.0;
  std::uint64_t max = 0;
};

/// Per-query distance counts of (1+eps)-ANN searches warm-started at the root.
template <typename Scalar>
CostProfile query_cost_profile(const CoverTree<Scalar>& tree, const PointMatrix<Scalar>& queries, double epsilon) {
  require(queries.cols() > 0, "query list is empty");
  CostProfile profile;
  for (Eigen::Index q = 0; q < queries.cols(); ++q)
    profile.counts.push_back(tree.ann_search(queries.col(q), tree.root_point(), epsilon).distances_evaluated);
  std::vector<std::uint64_t> sorted = profile.counts;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  profile.median = n % 2 ? static_cast<double>(sorted[n / 2])
                         : 0.5 * static_cast<double>(sorted[n / 2 - 1] + sorted[n / 2]);
  double total = 0.0;
  for (auto c : sorted) total += static_cast<double>(c);
  profile.mean = total / static_cast<double>(n);
  profile.max = sorted.back();
  return profile;
}

/// Ratio of largest to smallest nonzero pairwise distance.  Diagnostic only.
template <typename Scalar>
double aspect_ratio(const PointMatrix<Scalar>& points) {
  require(points.cols() >= 2, "aspect ratio needs at least two points");
  require(points.cols() <= 5000, "aspect ratio is O(d^2); restricted to d <= 5000");
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (Eigen::Index i = 0; i < points.cols(); ++i)
    for (Eigen::Index j = i + 1; j < points.cols(); ++j) {
      const double dist = detail::distance(points.col(i), points.col(j));
      if (dist > 0.0) lo = std::min(lo, dist);
      hi = std::max(hi, dist);
    }
  return hi > 0.0 ? hi / lo : 1.0;
}

}  // namespace ctipg
