#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "umate/geometry.hpp"

namespace umate::data {

struct Sample {
  geom::MTR mtr;
  std::int64_t base_id = 0;      // shared by all rotated copies of one topology
  int rotation_id = 0;           // 0 = original
};

struct NormStats {
  double density_min = 0.0, density_max = 1.0;
  std::vector<double> prop_min, prop_max;  // per dimension

  double normalize_density(double rho) const;
  double denormalize_density(double v) const;
  std::vector<double> normalize_properties(const std::vector<double>& p) const;
  std::vector<double> denormalize_properties(const std::vector<double>& p) const;
};

struct Dataset {
  std::vector<Sample> samples;
  int property_dim = 3;
  std::uint64_t seed = 0;
  std::string provenance;
  NormStats norm;
  std::vector<std::string> warnings;  // e.g. non-physical densities on load

  void recompute_norm_stats();
  void validate() const;
};

struct SplitSpec {
  double train = 0.7, validation = 0.15, test = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitResult {
  Dataset train, validation, test;
};

// Physically-inspired surrogate for the homogenized property vector
// (E, G, nu). Directional stiffness per axis is the density-weighted sum of
// edge length fractions times cos^4 of the edge/axis angle, averaged over the
// three lattice axes; G = E/2.6 and nu = 0.3(1 - rho/2). This is a smooth
// deterministic stand-in, not a simulation result; externally computed
// properties can be supplied through the dataset file instead.
std::vector<double> surrogate_properties(const geom::Topology& topology,
                                         double density);

// Random cubic-cell truss: cube frame plus randomly chosen face/body
// diagonals and edge-subdivision nodes, capped at `max_nodes`.
geom::Topology random_topology(Rng& rng, int max_nodes = 20);

Dataset generate_dataset(int n_topologies, int densities_per, std::uint64_t seed);

// Adds k uniformly random rotated copies per sample; originals retained.
Dataset augment_rotations(const Dataset& ds, int k, std::uint64_t seed);

// Seeded shuffle into disjoint splits. All rotated copies of one base
// topology land in the same split.
SplitResult split(const Dataset& ds, const SplitSpec& spec);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Predicate filter over "density", "E", "G", "nu" with comparisons against
// constants or quantile tokens q25/q50/q75, joined by &&.
// Example: "density<0.35 && E>q75".
Dataset filter_dataset(const Dataset& ds, const std::string& expr);

}  // namespace umate::data
