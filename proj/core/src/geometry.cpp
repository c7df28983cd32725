#include "umate/geometry.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace umate::geom {

using nlohmann::json;

nd::Tensor Topology::coords_tensor() const {
  nd::Tensor t({node_count(), 3});
  for (int i = 0; i < node_count(); ++i)
    for (int j = 0; j < 3; ++j) t(i, j) = coords[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return t;
}

nd::Tensor Topology::adjacency_tensor() const {
  const int n = node_count();
  nd::Tensor a({n, n});
  for (const auto& [i, j] : edges) {
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  return a;
}

void Topology::validate() const {
  const int n = node_count();
  if (n < 2) throw ContractError("Topology: needs at least two nodes");
  for (const auto& c : coords)
    for (double x : c)
      if (!std::isfinite(x)) throw ContractError("Topology: non-finite coordinate");
  for (const auto& [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n || j >= n)
      throw ContractError("Topology: edge index out of range");
    if (i == j) throw ContractError("Topology: self-loop edge");
  }
}

void MTR::validate() const {
  topology.validate();
  if (!(density > 0.0 && density <= 1.0))
    throw ContractError("MTR: density must lie in (0, 1]");
  for (double p : properties)
    if (!std::isfinite(p)) throw ContractError("MTR: non-finite property");
}

Vec3 centroid(const std::vector<Vec3>& coords) {
  if (coords.empty()) throw ContractError("centroid: empty coordinate set");
  Vec3 c{0.0, 0.0, 0.0};
  for (const auto& x : coords) c = c + x;
  return (1.0 / static_cast<double>(coords.size())) * c;
}

namespace {

// Distances that agree to within this relative tolerance are treated as tied
// and resolved by node index. Exact geometric ties (symmetric structures)
// survive rotation only up to floating-point noise (~1e-16), so comparing raw
// doubles would let a rotation flip the decision; a tolerance band keeps every
// corner procedure rotation-stable.
constexpr double kTieTol = 1e-9;

bool near_tie(double a, double b) {
  return std::abs(a - b) <= kTieTol * (1.0 + std::max(std::abs(a), std::abs(b)));
}

}  // namespace

std::array<int, 8> find_corners(const std::vector<Vec3>& coords) {
  const int n = static_cast<int>(coords.size());
  if (n < 8)
    throw MetricInapplicable("find_corners: fewer than 8 vertices");
  const Vec3 c = centroid(coords);
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  auto dist = [&](int a) { return norm(coords[static_cast<std::size_t>(a)] - c); };
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    const double da = dist(a), db = dist(b);
    if (da != db) return da > db;
    return a < b;
  });
  // Re-sort runs of near-tied distances by node index.
  for (std::size_t lo = 0; lo < idx.size();) {
    std::size_t hi = lo + 1;
    while (hi < idx.size() && near_tie(dist(idx[hi - 1]), dist(idx[hi]))) ++hi;
    std::sort(idx.begin() + static_cast<std::ptrdiff_t>(lo),
              idx.begin() + static_cast<std::ptrdiff_t>(hi));
    lo = hi;
  }
  std::array<int, 8> out{};
  for (int i = 0; i < 8; ++i) out[static_cast<std::size_t>(i)] = idx[static_cast<std::size_t>(i)];
  return out;
}

CornerPairing pair_corners(const std::vector<Vec3>& coords,
                           const std::array<int, 8>& corners) {
  {
    std::array<int, 8> sorted = corners;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ContractError("pair_corners: corner indices must be distinct");
  }
  CornerPairing cp;
  cp.corners = corners;
  cp.anchor = corners[0];

  auto at = [&](int i) { return coords[static_cast<std::size_t>(i)]; };

  // Greedy farthest-partner matching in corner-list order; ties by the
  // partner with the lowest node index.
  std::vector<int> remaining(corners.begin(), corners.end());
  int pair_slot = 0;
  while (!remaining.empty()) {
    const int a = remaining.front();
    remaining.erase(remaining.begin());
    int best = -1;
    double best_d = -1.0;
    for (int b : remaining) {
      const double d = norm(at(b) - at(a));
      if (best < 0 || (d > best_d && !near_tie(d, best_d))) {
        best = b;
        best_d = d;
      } else if (near_tie(d, best_d) && b < best) {
        best = b;
        best_d = std::max(best_d, d);
      }
    }
    remaining.erase(std::find(remaining.begin(), remaining.end(), best));
    cp.pairs[static_cast<std::size_t>(pair_slot++)] = {a, best};
  }
  cp.anchor_antipode = cp.pairs[0].antipode;

  // In each non-anchor pair the member closer to the anchor is positive.
  struct Labeled {
    int pos, neg;
    double dist_to_anchor;
  };
  std::array<Labeled, 3> labeled{};
  for (int k = 1; k < 4; ++k) {
    const auto& pr = cp.pairs[static_cast<std::size_t>(k)];
    const double dc = norm(at(pr.corner) - at(cp.anchor));
    const double da = norm(at(pr.antipode) - at(cp.anchor));
    int pos = pr.corner, neg = pr.antipode;
    if (near_tie(da, dc) ? pr.antipode < pr.corner : da < dc) std::swap(pos, neg);
    labeled[static_cast<std::size_t>(k - 1)] = {pos, neg, norm(at(pos) - at(cp.anchor))};
  }
  // Labels 2, 3, 4 by ascending distance from the anchor, ties by index.
  // Fixed-size bubble sort: the tolerance comparison is not a strict weak
  // ordering, so std::sort must not see it.
  auto in_order = [](const Labeled& a, const Labeled& b) {
    if (near_tie(a.dist_to_anchor, b.dist_to_anchor)) return a.pos < b.pos;
    return a.dist_to_anchor < b.dist_to_anchor;
  };
  for (int pass = 0; pass < 2; ++pass)
    for (int k = 0; k < 2; ++k)
      if (!in_order(labeled[static_cast<std::size_t>(k)],
                    labeled[static_cast<std::size_t>(k + 1)]))
        std::swap(labeled[static_cast<std::size_t>(k)],
                  labeled[static_cast<std::size_t>(k + 1)]);
  for (int k = 0; k < 3; ++k) {
    cp.positive[static_cast<std::size_t>(k)] = labeled[static_cast<std::size_t>(k)].pos;
    cp.negative[static_cast<std::size_t>(k)] = labeled[static_cast<std::size_t>(k)].neg;
  }
  return cp;
}

Mat3 lattice_axes(const std::vector<Vec3>& coords) {
  return lattice_axes(coords, pair_corners(coords, find_corners(coords)));
}

Mat3 lattice_axes(const std::vector<Vec3>& coords, const CornerPairing& cp) {
  auto at = [&](int i) { return coords[static_cast<std::size_t>(i)]; };
  const Vec3 x1 = at(cp.anchor);
  const Vec3 x1p = at(cp.anchor_antipode);
  const Vec3 x2 = at(cp.positive[0]), x2p = at(cp.negative[0]);
  const Vec3 x3 = at(cp.positive[1]), x3p = at(cp.negative[1]);
  const Vec3 x4 = at(cp.positive[2]), x4p = at(cp.negative[2]);

  const Vec3 l1 = 0.25 * ((x2 - x1) + (x4p - x3) + (x1p - x2p) + (x3p - x4));
  const Vec3 l2 = 0.25 * ((x3 - x1) + (x4p - x2) + (x1p - x3p) + (x2p - x4));
  const Vec3 l3 = 0.25 * ((x4 - x1) + (x2p - x3) + (x3p - x2) + (x1p - x4p));
  return {l1, l2, l3};
}

namespace {

// Bounding box of the eight corner vertices; edges are classified against
// its boundary planes.
struct CellBox {
  Vec3 lo, hi;
};

CellBox corner_box(const std::vector<Vec3>& coords, const std::array<int, 8>& corners) {
  CellBox box{{1e300, 1e300, 1e300}, {-1e300, -1e300, -1e300}};
  for (int idx : corners)
    for (int k = 0; k < 3; ++k) {
      box.lo[static_cast<std::size_t>(k)] = std::min(box.lo[static_cast<std::size_t>(k)], coords[static_cast<std::size_t>(idx)][static_cast<std::size_t>(k)]);
      box.hi[static_cast<std::size_t>(k)] = std::max(box.hi[static_cast<std::size_t>(k)], coords[static_cast<std::size_t>(idx)][static_cast<std::size_t>(k)]);
    }
  return box;
}

// Number of boundary planes that contain both endpoints.
int planes_containing(const Vec3& a, const Vec3& b, const CellBox& box, double tol) {
  int count = 0;
  for (int k = 0; k < 3; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    if (std::abs(a[kk] - box.lo[kk]) <= tol && std::abs(b[kk] - box.lo[kk]) <= tol) ++count;
    if (std::abs(a[kk] - box.hi[kk]) <= tol && std::abs(b[kk] - box.hi[kk]) <= tol) ++count;
  }
  return count;
}

}  // namespace

EdgeClass classify_edge(const Topology& topo, int edge_index, double tol) {
  const auto& [i, j] = topo.edges[static_cast<std::size_t>(edge_index)];
  const Vec3& a = topo.coords[static_cast<std::size_t>(i)];
  const Vec3& b = topo.coords[static_cast<std::size_t>(j)];
  // Too few vertices to infer a cell box; everything counts as inner.
  if (topo.node_count() < 8) return EdgeClass::Inner;
  const auto corners = find_corners(topo.coords);
  const CellBox box = corner_box(topo.coords, corners);
  const int planes = planes_containing(a, b, box, tol);
  auto is_corner = [&](const Vec3& p) {
    for (int idx : corners)
      if (norm(p - topo.coords[static_cast<std::size_t>(idx)]) <= tol) return true;
    return false;
  };
  if (planes >= 2 && is_corner(a) && is_corner(b)) return EdgeClass::Frame;
  if (planes >= 1) return EdgeClass::Face;
  return EdgeClass::Inner;
}

double equivalent_edge_length(const Topology& topo) {
  double total = 0.0;
  for (int e = 0; e < static_cast<int>(topo.edges.size()); ++e) {
    const auto& [i, j] = topo.edges[static_cast<std::size_t>(e)];
    const double len = norm(topo.coords[static_cast<std::size_t>(i)] - topo.coords[static_cast<std::size_t>(j)]);
    if (len == 0.0) throw ContractError("equivalent_edge_length: zero-length edge");
    switch (classify_edge(topo, e)) {
      case EdgeClass::Inner: total += len; break;
      case EdgeClass::Face: total += 0.5 * len; break;
      case EdgeClass::Frame: total += 0.25 * len; break;
    }
  }
  return total;
}

ConvertResult density_radius_convert(double value, double l_equ,
                                     ConvertDirection direction) {
  if (value <= 0.0 || l_equ <= 0.0)
    throw ContractError("density_radius_convert: inputs must be positive");
  constexpr double kPi = 3.14159265358979323846;
  ConvertResult out{};
  if (direction == ConvertDirection::RadiusToDensity) {
    out.value = kPi * value * value * l_equ;
    out.non_physical = out.value > 1.0;
  } else {
    out.value = std::sqrt(value / (kPi * l_equ));
    out.non_physical = value > 1.0;
  }
  return out;
}

bool is_rotation(const Mat3& r, double tol) {
  // RᵀR = I
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += r[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] * r[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
      if (std::abs(s - (i == j ? 1.0 : 0.0)) > tol) return false;
    }
  const double det =
      r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) -
      r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
      r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
  return std::abs(det - 1.0) <= 1e-9 + tol;
}

MTR rotate_mtr(const MTR& sample, const Mat3& rotation,
               const PropertyRotationRule& rule) {
  if (!is_rotation(rotation))
    throw ContractError("rotate_mtr: matrix is not a proper rotation");
  MTR out = sample;
  for (auto& x : out.topology.coords) x = matvec(rotation, x);
  for (auto& l : out.topology.lattice) l = matvec(rotation, l);
  if (rule) out.properties = rule(sample.properties, rotation);
  return out;
}

Mat3 random_rotation(Rng& rng) {
  // Uniform unit quaternion.
  double q[4];
  double s;
  do {
    s = 0.0;
    for (double& v : q) {
      v = rand_normal(rng);
      s += v * v;
    }
  } while (s == 0.0);
  s = std::sqrt(s);
  for (double& v : q) v /= s;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

// ---- interchange ----

json topology_to_json_obj(const Topology& topo) {
  json j;
  j["lattice"] = json::array();
  for (const auto& l : topo.lattice) j["lattice"].push_back({l[0], l[1], l[2]});
  j["coords"] = json::array();
  for (const auto& c : topo.coords) j["coords"].push_back({c[0], c[1], c[2]});
  j["edges"] = json::array();
  for (const auto& [a, b] : topo.edges) j["edges"].push_back({a, b});
  return j;
}

Topology topology_from_json_obj(const json& j) {
  Topology topo;
  const auto& lat = j.at("lattice");
  if (lat.size() != 3) throw FormatError("topology: lattice must have 3 rows");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) topo.lattice[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = lat[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
  for (const auto& c : j.at("coords"))
    topo.coords.push_back({c[0].get<double>(), c[1].get<double>(), c[2].get<double>()});
  for (const auto& e : j.at("edges")) {
    int a = e[0].get<int>(), b = e[1].get<int>();
    if (a == b) throw FormatError("topology: self-loop edge in file");
    if (a > b) std::swap(a, b);
    topo.edges.emplace_back(a, b);
  }
  topo.validate();
  return topo;
}

std::string topology_to_json(const Topology& topo) {
  return topology_to_json_obj(topo).dump();
}

Topology topology_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("topology: invalid JSON: ") + e.what());
  }
  try {
    return topology_from_json_obj(j);
  } catch (const json::exception& e) {
    throw FormatError(std::string("topology: bad record: ") + e.what());
  }
}

void save_topology(const Topology& topo, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("save_topology: cannot open " + path);
  out << topology_to_json(topo) << "\n";
}

Topology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("load_topology: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return topology_from_json(buf.str());
}

void export_obj(const Topology& topo, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("export_obj: cannot open " + path);
  out << "# truss unit cell, " << topo.node_count() << " vertices, "
      << topo.edges.size() << " edges\n";
  out.precision(17);
  for (const auto& c : topo.coords)
    out << "v " << c[0] << " " << c[1] << " " << c[2] << "\n";
  for (const auto& [a, b] : topo.edges) out << "l " << a + 1 << " " << b + 1 << "\n";
}

Topology unit_cube_frame() {
  Topology t;
  t.lattice = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  for (int x = 0; x <= 1; ++x)
    for (int y = 0; y <= 1; ++y)
      for (int z = 0; z <= 1; ++z)
        t.coords.push_back({static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)});
  // corner index = 4x + 2y + z
  auto add = [&](int a, int b) { t.edges.emplace_back(std::min(a, b), std::max(a, b)); };
  for (int a = 0; a < 8; ++a)
    for (int bit = 0; bit < 3; ++bit) {
      const int b = a ^ (1 << bit);
      if (a < b) add(a, b);
    }
  return t;
}

}  // namespace umate::geom
