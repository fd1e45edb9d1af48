#pragma once

// Fingerprint simulation (bSSFP-style rotation/relaxation recursion),
// parameter grids, segment phantoms and the atom -> parameter lookup.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctipg/model.hpp"

namespace ctipg {

struct ExcitationSequence {
  std::vector<double> flip_deg;
  double tr_ms = 37.0;
  double te_ms = 18.5;

  Index length() const { return flip_deg.size(); }

  void validate() const {
    require(!flip_deg.empty(), "excitation sequence needs at least one flip angle");
    for (double a : flip_deg) require(std::isfinite(a) && a >= 0.0 && a <= 90.0, "flip angles must lie in [0, 90] degrees");
    require(tr_ms > 0.0 && std::isfinite(tr_ms), "TR must be > 0");
    require(te_ms >= 0.0 && te_ms <= tr_ms, "TE must lie in [0, TR]");
  }
};

/// Slowly varying 0..max_deg profile: half linear ramp, half sin^2 swell
/// with `half_periods` half-periods over the train.  Starts at 0 degrees.
inline std::vector<double> smooth_flip_profile(Index length, double max_deg = 60.0, double half_periods = 2.5) {
  require(length >= 1, "flip profile length must be >= 1");
  std::vector<double> out(length);
  for (Index n = 0; n < length; ++n) {
    const double t = length > 1 ? static_cast<double>(n) / static_cast<double>(length - 1) : 0.0;
    const double s = std::sin(half_periods * std::numbers::pi * t);
    out[n] = max_deg * (0.5 * t + 0.5 * s * s);
  }
  return out;
}

inline ExcitationSequence default_sequence(Index length = 64, double tr_ms = 37.0) {
  return ExcitationSequence{smooth_flip_profile(length), tr_ms, tr_ms / 2.0};
}

/// Per excitation: instantaneous rotation about x, readout of (Mx + i My)
/// attenuated by exp(-TE/T2), then relaxation over the full TR.  M starts at
/// equilibrium (0, 0, 1); off-resonance is zero.
inline CVector bloch_bssfp_fingerprint(const ExcitationSequence& seq, double t1_ms, double t2_ms) {
  seq.validate();
  require(std::isfinite(t1_ms) && std::isfinite(t2_ms) && t1_ms > 0.0 && t2_ms > 0.0,
          "relaxation times must be finite and > 0");
  const double E1 = std::exp(-seq.tr_ms / t1_ms);
  const double E2 = std::exp(-seq.tr_ms / t2_ms);
  const double Ete = std::exp(-seq.te_ms / t2_ms);
  double mx = 0.0, my = 0.0, mz = 1.0;
  CVector signal(static_cast<Eigen::Index>(seq.length()));
  for (Index n = 0; n < seq.length(); ++n) {
    const double a = seq.flip_deg[n] * std::numbers::pi / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    const double my_rot = c * my + s * mz;
    const double mz_rot = -s * my + c * mz;
    my = my_rot;
    mz = mz_rot;
    signal[static_cast<Eigen::Index>(n)] = cplx(mx, my) * Ete;
    mx *= E2;
    my *= E2;
    mz = mz * E1 + (1.0 - E1);
  }
  return signal;
}

struct ParameterGrid {
  std::vector<AtomParams> entries;

  Index size() const { return entries.size(); }
};

/// n points geometrically spaced from lo to hi inclusive.
inline std::vector<double> log_space(double lo, double hi, Index n) {
  require(lo > 0.0 && hi >= lo && n >= 1, "log spacing needs 0 < lo <= hi and n >= 1");
  std::vector<double> out(n);
  for (Index i = 0; i < n; ++i) {
    const double t = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
    out[i] = std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)));
  }
  out.front() = lo;
  out.back() = n > 1 ? hi : lo;
  return out;
}

/// Cartesian product of T1 x T2 values, T1-major, keeping T2 <= T1.
inline ParameterGrid make_grid(const std::vector<double>& t1_values, const std::vector<double>& t2_values) {
  ParameterGrid grid;
  for (double t1 : t1_values)
    for (double t2 : t2_values)
      if (t1 > 0.0 && t2 > 0.0 && t2 <= t1) grid.entries.push_back({t1, t2});
  require(!grid.entries.empty(), "parameter grid is empty after the T2 <= T1 filter");
  return grid;
}

struct GridSpec {
  double t1_min = 100.0, t1_max = 5000.0;
  Index t1_count = 40;
  double t2_min = 20.0, t2_max = 1800.0;
  Index t2_count = 40;
};

inline ParameterGrid make_grid(const GridSpec& g) {
  return make_grid(log_space(g.t1_min, g.t1_max, g.t1_count), log_space(g.t2_min, g.t2_max, g.t2_count));
}

/// Row i = normalized fingerprint of grid entry i.
inline Dictionary build_dictionary(const ExcitationSequence& seq, const ParameterGrid& grid) {
  require(grid.size() >= 1, "parameter grid is empty");
  CMatrix atoms(static_cast<Eigen::Index>(seq.length()), static_cast<Eigen::Index>(grid.size()));
  for (Index i = 0; i < grid.size(); ++i) {
    const auto& p = grid.entries[i];
    CVector f = bloch_bssfp_fingerprint(seq, p.t1_ms, p.t2_ms);
    const double norm = f.norm();
    require(norm > 0.0 && std::isfinite(norm), "fingerprint for T1=" + std::to_string(p.t1_ms) +
                                                   " ms, T2=" + std::to_string(p.t2_ms) + " ms has zero norm");
    atoms.col(static_cast<Eigen::Index>(i)) = f / norm;
  }
  return Dictionary(std::move(atoms), grid.entries);
}

struct EllipseSegment {
  std::string name;
  double cx = 0.0, cy = 0.0;  // centre, in pixel units (x = column, y = row)
  double rx = 1.0, ry = 1.0;
  double t1_ms = 0.0, t2_ms = 0.0, pd = 0.0;
};

/// Segments are painted in order; later ones overwrite earlier ones.
/// Label 0 is background, segment s gets label s + 1.
struct PhantomSpec {
  Index height = 32;
  Index width = 32;
  std::vector<EllipseSegment> segments;
};

struct Phantom {
  Index height = 0;
  Index width = 0;
  std::vector<int> labels;  // pixel j = r + c*height
  std::vector<double> t1, t2, pd;
  std::vector<std::string> segment_names;  // index = label

  Index pixels() const { return height * width; }
};

inline Phantom rasterize(const PhantomSpec& spec) {
  require(spec.height >= 1 && spec.width >= 1, "phantom grid must be at least 1x1");
  Phantom ph;
  ph.height = spec.height;
  ph.width = spec.width;
  const Index J = spec.height * spec.width;
  ph.labels.assign(J, 0);
  ph.t1.assign(J, 0.0);
  ph.t2.assign(J, 0.0);
  ph.pd.assign(J, 0.0);
  ph.segment_names.push_back("background");
  for (Index s = 0; s < spec.segments.size(); ++s) {
    const auto& seg = spec.segments[s];
    require(seg.rx > 0.0 && seg.ry > 0.0, "segment " + seg.name + " needs positive radii");
    require(seg.pd >= 0.0 && std::isfinite(seg.pd), "segment " + seg.name + " needs PD >= 0");
    require(seg.pd == 0.0 || (seg.t1_ms > 0.0 && seg.t2_ms > 0.0), "segment " + seg.name + " needs T1, T2 > 0");
    ph.segment_names.push_back(seg.name);
    for (Index c = 0; c < spec.width; ++c)
      for (Index r = 0; r < spec.height; ++r) {
        const double dx = (static_cast<double>(c) + 0.5 - seg.cx) / seg.rx;
        const double dy = (static_cast<double>(r) + 0.5 - seg.cy) / seg.ry;
        if (dx * dx + dy * dy > 1.0) continue;
        const Index j = r + c * spec.height;
        ph.labels[j] = static_cast<int>(s + 1);
        ph.t1[j] = seg.t1_ms;
        ph.t2[j] = seg.t2_ms;
        ph.pd[j] = seg.pd;
      }
  }
  return ph;
}

inline nlohmann::json phantom_spec_to_json(const PhantomSpec& spec) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : spec.segments)
    segs.push_back({{"name", s.name}, {"shape", "ellipse"}, {"cx", s.cx}, {"cy", s.cy}, {"rx", s.rx}, {"ry", s.ry},
                    {"t1_ms", s.t1_ms}, {"t2_ms", s.t2_ms}, {"pd", s.pd}});
  return {{"height", spec.height}, {"width", spec.width}, {"segments", segs}};
}

inline PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
  PhantomSpec spec;
  try {
    spec.height = j.at("height").get<Index>();
    spec.width = j.at("width").get<Index>();
    for (const auto& s : j.at("segments")) {
      require(s.value("shape", std::string("ellipse")) == "ellipse", "only ellipse segments are supported");
      spec.segments.push_back({s.at("name").get<std::string>(), s.at("cx").get<double>(), s.at("cy").get<double>(),
                               s.at("rx").get<double>(), s.at("ry").get<double>(), s.at("t1_ms").get<double>(),
                               s.at("t2_ms").get<double>(), s.at("pd").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed phantom spec: ") + e.what());
  }
  return spec;
}

/// Grid entry closest to (t1, t2) in log-parameter distance; ties to the
/// smallest index.
inline Index nearest_grid_entry(const std::vector<AtomParams>& table, double t1, double t2) {
  require(!table.empty(), "empty parameter table");
  Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < table.size(); ++i) {
    const double a = std::log(table[i].t1_ms / t1), b = std::log(table[i].t2_ms / t2);
    const double d = a * a + b * b;
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

/// Six-region head-like layout (background, skin, muscle, grey matter, white
/// matter, CSF) scaled to the grid, with tissue values snapped to `table`.
inline PhantomSpec desk_phantom_spec(const std::vector<AtomParams>& table, Index height = 32, Index width = 32) {
  struct Tissue {
    const char* name;
    double fx, fy, frx, fry;  // centre and radii as fractions of the grid
    double t1, t2, pd;
  };
  static constexpr Tissue tissues[] = {
      {"skin", 0.50, 0.50, 0.47, 0.44, 380.0, 90.0, 0.65},
      {"muscle", 0.50, 0.50, 0.41, 0.38, 1000.0, 45.0, 0.80},
      {"grey_matter", 0.50, 0.50, 0.34, 0.31, 1300.0, 100.0, 0.85},
      {"white_matter", 0.50, 0.52, 0.24, 0.20, 800.0, 70.0, 0.70},
      {"csf", 0.50, 0.48, 0.10, 0.14, 4000.0, 1600.0, 1.00},
  };
  PhantomSpec spec{height, width, {}};
  for (const auto& t : tissues) {
    const auto& p = table[nearest_grid_entry(table, t.t1, t.t2)];
    spec.segments.push_back({t.name, t.fx * static_cast<double>(width), t.fy * static_cast<double>(height),
                             t.frx * static_cast<double>(width), t.fry * static_cast<double>(height), p.t1_ms,
                             p.t2_ms, t.pd});
  }
  return spec;
}

struct SynthesizedImage {
  CMatrix X;  // nbar x J
  std::vector<Index> atom_ids;
  std::vector<double> gammas;
};

/// X_j = PD(j) * psi_{i(j)} with psi normalized.  Background (PD = 0) pixels
/// are zero with atom id 0.
inline SynthesizedImage synthesize_phantom(const Phantom& ph, const Dictionary& dict) {
  const Index J = ph.pixels();
  SynthesizedImage out;
  out.X = CMatrix::Zero(static_cast<Eigen::Index>(dict.dim()), static_cast<Eigen::Index>(J));
  out.atom_ids.assign(J, 0);
  out.gammas.assign(J, 0.0);
  const auto& table = dict.params();
  for (Index j = 0; j < J; ++j) {
    if (ph.pd[j] == 0.0) continue;
    auto it = std::find_if(table.begin(), table.end(),
                           [&](const AtomParams& p) { return p.t1_ms == ph.t1[j] && p.t2_ms == ph.t2[j]; });
    require(it != table.end(), "pixel " + std::to_string(j) + " has (T1=" + std::to_string(ph.t1[j]) +
                                   ", T2=" + std::to_string(ph.t2[j]) + ") which is not in the dictionary grid");
    const Index id = static_cast<Index>(it - table.begin());
    out.atom_ids[j] = id;
    out.gammas[j] = ph.pd[j];
    out.X.col(static_cast<Eigen::Index>(j)) = ph.pd[j] * dict.normalized_atom(id);
  }
  return out;
}

struct ParameterMaps {
  std::vector<double> t1, t2, pd;
};

/// Pixels whose intensity is at most this fraction of the peak intensity are
/// mapped as background.  Converged reconstructions leave residue of the order
/// of the solver tolerance in empty pixels.
inline constexpr double kBackgroundPdFloor = 1e-2;

/// Table lookup per pixel; background pixels (PD <= floor * max PD) map to
/// (0, 0, 0).
inline ParameterMaps params_from_atoms(const std::vector<Index>& ids, const std::vector<double>& gammas,
                                       const std::vector<AtomParams>& table,
                                       double pd_floor = kBackgroundPdFloor) {
  require(ids.size() == gammas.size(), "atom id and intensity lists differ in length");
  require(pd_floor >= 0.0 && pd_floor < 1.0, "PD floor must lie in [0, 1)");
  ParameterMaps maps;
  maps.t1.resize(ids.size());
  maps.t2.resize(ids.size());
  maps.pd = gammas;
  const double peak = gammas.empty() ? 0.0 : *std::max_element(gammas.begin(), gammas.end());
  const double cutoff = pd_floor * peak;
  for (Index j = 0; j < ids.size(); ++j) {
    require(ids[j] < table.size(), "atom id out of range at pixel " + std::to_string(j));
    const bool empty = gammas[j] <= cutoff;
    maps.t1[j] = empty ? 0.0 : table[ids[j]].t1_ms;
    maps.t2[j] = empty ? 0.0 : table[ids[j]].t2_ms;
  }
  return maps;
}

inline double mean_abs_error(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size() && !a.empty(), "MAE needs equal nonempty maps");
  double total = 0.0;
  for (Index i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

}  // namespace ctipg
