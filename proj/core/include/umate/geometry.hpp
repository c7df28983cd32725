#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "umate/errors.hpp"
#include "umate/tensor.hpp"

namespace umate::geom {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;  // rows are the three axis vectors

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double c, const Vec3& a) { return {c * a[0], c * a[1], c * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 matvec(const Mat3& r, const Vec3& x) {
  return {dot(r[0], x), dot(r[1], x), dot(r[2], x)};
}

// Unit-cell truss graph: lattice axes, node coordinates, undirected edges.
struct Topology {
  Mat3 lattice{};                           // [l1; l2; l3]
  std::vector<Vec3> coords;                 // n x 3
  std::vector<std::pair<int, int>> edges;   // i < j, no self-loops

  int node_count() const { return static_cast<int>(coords.size()); }
  nd::Tensor coords_tensor() const;
  nd::Tensor adjacency_tensor() const;      // symmetric, zero diagonal
  void validate() const;                    // throws ContractError
};

// One metamaterial sample: topology, relative density, property vector.
struct MTR {
  Topology topology;
  double density = 0.0;                     // in (0, 1]
  std::vector<double> properties;           // length m

  void validate() const;
};

// Eight extreme vertices matched into four antipodal pairs around a
// deterministic anchor. Positive corners carry axis labels 2, 3, 4.
struct CornerPairing {
  std::array<int, 8> corners{};   // sorted by descending centroid distance
  int anchor = -1;                // == corners[0]
  int anchor_antipode = -1;
  struct Pair {
    int corner;
    int antipode;
  };
  std::array<Pair, 4> pairs{};    // pairs[0] is the anchor pair
  std::array<int, 3> positive{};  // node indices labelled 2, 3, 4
  std::array<int, 3> negative{};  // their antipodes 2', 3', 4'
};

Vec3 centroid(const std::vector<Vec3>& coords);

// Indices of the 8 vertices farthest from the centroid, descending by
// distance, ties by ascending index. Throws MetricInapplicable for n < 8.
std::array<int, 8> find_corners(const std::vector<Vec3>& coords);

CornerPairing pair_corners(const std::vector<Vec3>& coords,
                           const std::array<int, 8>& corners);

// Average axes from the four edge vectors per direction.
Mat3 lattice_axes(const std::vector<Vec3>& coords);
Mat3 lattice_axes(const std::vector<Vec3>& coords, const CornerPairing& cp);

enum class EdgeClass { Inner, Face, Frame };

EdgeClass classify_edge(const Topology& topo, int edge_index,
                        double tol = 1e-9);

// Weighted edge-length total: inner edges count fully, face edges half,
// frame edges a quarter.
double equivalent_edge_length(const Topology& topo);

enum class ConvertDirection { RadiusToDensity, DensityToRadius };

struct ConvertResult {
  double value;
  bool non_physical = false;  // set when the implied density exceeds 1
};

ConvertResult density_radius_convert(double value, double l_equ,
                                     ConvertDirection direction);

// Optional rule for transforming the property vector under rotation; the
// default keeps scalar properties unchanged.
using PropertyRotationRule =
    std::function<std::vector<double>(const std::vector<double>&, const Mat3&)>;

MTR rotate_mtr(const MTR& sample, const Mat3& rotation,
               const PropertyRotationRule& rule = nullptr);

// Proper rotation drawn uniformly from SO(3) via a random unit quaternion.
Mat3 random_rotation(Rng& rng);

bool is_rotation(const Mat3& r, double tol = 1e-10);

// ---- interchange ----
std::string topology_to_json(const Topology& topo);
Topology topology_from_json(const std::string& text);
void save_topology(const Topology& topo, const std::string& path);
Topology load_topology(const std::string& path);
// Wavefront-style mesh (v/l records) for visual inspection.
void export_obj(const Topology& topo, const std::string& path);

// Canonical unit-cube wireframe (8 corners, 12 frame edges, identity axes).
Topology unit_cube_frame();

}  // namespace umate::geom
