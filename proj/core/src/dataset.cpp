#include "umate/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace umate::data {

using geom::operator+;
using geom::operator-;
using geom::operator*;

using geom::Topology;
using geom::Vec3;
using nlohmann::json;

// ---- normalization ----

namespace {
double to_unit(double v, double lo, double hi) {
  return hi > lo ? (v - lo) / (hi - lo) : 0.5;
}
double from_unit(double v, double lo, double hi) {
  return lo + v * (hi - lo);
}
}  // namespace

double NormStats::normalize_density(double rho) const {
  return to_unit(rho, density_min, density_max);
}
double NormStats::denormalize_density(double v) const {
  return from_unit(v, density_min, density_max);
}
std::vector<double> NormStats::normalize_properties(const std::vector<double>& p) const {
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = to_unit(p[i], prop_min[i], prop_max[i]);
  return out;
}
std::vector<double> NormStats::denormalize_properties(const std::vector<double>& p) const {
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = from_unit(p[i], prop_min[i], prop_max[i]);
  return out;
}

void Dataset::recompute_norm_stats() {
  norm.prop_min.assign(static_cast<std::size_t>(property_dim), std::numeric_limits<double>::infinity());
  norm.prop_max.assign(static_cast<std::size_t>(property_dim), -std::numeric_limits<double>::infinity());
  norm.density_min = std::numeric_limits<double>::infinity();
  norm.density_max = -std::numeric_limits<double>::infinity();
  for (const auto& s : samples) {
    norm.density_min = std::min(norm.density_min, s.mtr.density);
    norm.density_max = std::max(norm.density_max, s.mtr.density);
    for (int j = 0; j < property_dim; ++j) {
      norm.prop_min[static_cast<std::size_t>(j)] = std::min(norm.prop_min[static_cast<std::size_t>(j)], s.mtr.properties[static_cast<std::size_t>(j)]);
      norm.prop_max[static_cast<std::size_t>(j)] = std::max(norm.prop_max[static_cast<std::size_t>(j)], s.mtr.properties[static_cast<std::size_t>(j)]);
    }
  }
}

void Dataset::validate() const {
  for (const auto& s : samples) {
    s.mtr.validate();
    if (static_cast<int>(s.mtr.properties.size()) != property_dim)
      throw ContractError("Dataset: sample property dimension mismatch");
  }
}

void SplitSpec::validate() const {
  if (train <= 0.0 || validation <= 0.0 || test <= 0.0)
    throw ContractError("SplitSpec: fractions must be positive");
  if (std::abs(train + validation + test - 1.0) > 1e-9)
    throw ContractError("SplitSpec: fractions must sum to 1");
}

// ---- surrogate property oracle ----

std::vector<double> surrogate_properties(const Topology& topology, double density) {
  if (!(density > 0.0 && density <= 1.0))
    throw ContractError("surrogate_properties: density must lie in (0, 1]");
  topology.validate();
  double total_len = 0.0;
  for (const auto& [i, j] : topology.edges)
    total_len += geom::norm(topology.coords[static_cast<std::size_t>(i)] - topology.coords[static_cast<std::size_t>(j)]);
  if (total_len <= 0.0)
    throw ContractError("surrogate_properties: zero total edge length");

  double e_mean = 0.0;
  for (int a = 0; a < 3; ++a) {
    const Vec3& axis = topology.lattice[static_cast<std::size_t>(a)];
    const double axis_norm = geom::norm(axis);
    if (axis_norm == 0.0) throw ContractError("surrogate_properties: zero lattice axis");
    double e_axis = 0.0;
    for (const auto& [i, j] : topology.edges) {
      const Vec3 e = topology.coords[static_cast<std::size_t>(j)] - topology.coords[static_cast<std::size_t>(i)];
      const double len = geom::norm(e);
      const double c = geom::dot(e, axis) / (len * axis_norm);
      e_axis += (len / total_len) * c * c * c * c;
    }
    e_mean += density * e_axis;
  }
  e_mean /= 3.0;
  return {e_mean, e_mean / 2.6, 0.3 * (1.0 - density / 2.0)};
}

// ---- topology family ----

Topology random_topology(Rng& rng, int max_nodes) {
  Topology t = geom::unit_cube_frame();

  // Face diagonals: each face picks none, one, or both diagonals.
  struct Face {
    std::array<int, 4> quad;  // corner indices in cyclic order
  };
  static const std::array<Face, 6> faces = {{
      {{0, 1, 3, 2}},  // x = 0
      {{4, 5, 7, 6}},  // x = 1
      {{0, 1, 5, 4}},  // y = 0
      {{2, 3, 7, 6}},  // y = 1
      {{0, 2, 6, 4}},  // z = 0
      {{1, 3, 7, 5}},  // z = 1
  }};
  auto add_edge = [&](int a, int b) {
    if (a > b) std::swap(a, b);
    const auto e = std::make_pair(a, b);
    if (std::find(t.edges.begin(), t.edges.end(), e) == t.edges.end())
      t.edges.push_back(e);
  };
  for (const auto& f : faces) {
    const int pick = rand_int(rng, 0, 3);  // 0 none, 1/2 one diagonal, 3 both
    if (pick & 1) add_edge(f.quad[0], f.quad[2]);
    if (pick & 2) add_edge(f.quad[1], f.quad[3]);
  }

  // Body diagonals through the cell center.
  static const std::array<std::pair<int, int>, 4> body = {{{0, 7}, {1, 6}, {2, 5}, {3, 4}}};
  for (const auto& [a, b] : body)
    if (rand_uniform(rng) < 0.3) add_edge(a, b);

  // Optional center node joined to a random subset of corners.
  if (t.node_count() < max_nodes && rand_uniform(rng) < 0.5) {
    const int center = t.node_count();
    t.coords.push_back({0.5, 0.5, 0.5});
    int attached = 0;
    for (int c = 0; c < 8; ++c)
      if (rand_uniform(rng) < 0.5) {
        add_edge(c, center);
        ++attached;
      }
    if (attached == 0) add_edge(0, center);
  }

  // Subdivide random edges until the node budget is reached.
  const int extra = rand_int(rng, 0, std::max(0, max_nodes - t.node_count()));
  for (int k = 0; k < extra && t.node_count() < max_nodes; ++k) {
    const int e = rand_int(rng, 0, static_cast<int>(t.edges.size()) - 1);
    const auto [a, b] = t.edges[static_cast<std::size_t>(e)];
    const int mid = t.node_count();
    t.coords.push_back(0.5 * (t.coords[static_cast<std::size_t>(a)] + t.coords[static_cast<std::size_t>(b)]));
    t.edges.erase(t.edges.begin() + e);
    add_edge(a, mid);
    add_edge(mid, b);
  }

  t.validate();
  return t;
}

Dataset generate_dataset(int n_topologies, int densities_per, std::uint64_t seed) {
  if (n_topologies < 1 || densities_per < 1)
    throw ContractError("generate_dataset: counts must be >= 1");
  Dataset ds;
  ds.seed = seed;
  ds.property_dim = 3;
  ds.provenance = "generated cubic-truss family with surrogate properties";
  for (int i = 0; i < n_topologies; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const Topology topo = random_topology(rng);
    for (int k = 0; k < densities_per; ++k) {
      Sample s;
      s.mtr.topology = topo;
      s.mtr.density = rand_uniform(rng, 0.05, 0.6);
      s.mtr.properties = surrogate_properties(topo, s.mtr.density);
      s.base_id = i;
      s.rotation_id = 0;
      ds.samples.push_back(std::move(s));
    }
  }
  ds.recompute_norm_stats();
  return ds;
}

Dataset augment_rotations(const Dataset& ds, int k, std::uint64_t seed) {
  if (k < 0) throw ContractError("augment_rotations: k must be >= 0");
  Dataset out = ds;
  if (k == 0) return out;
  std::uint64_t counter = 0;
  std::vector<Sample> extra;
  for (const auto& s : ds.samples) {
    Rng rng(derive_seed(seed ^ 0x517cc1b727220a95ULL, counter++));
    for (int r = 1; r <= k; ++r) {
      Sample rotated = s;
      rotated.mtr = geom::rotate_mtr(s.mtr, geom::random_rotation(rng));
      rotated.rotation_id = r;
      extra.push_back(std::move(rotated));
    }
  }
  out.samples.insert(out.samples.end(), extra.begin(), extra.end());
  out.recompute_norm_stats();
  return out;
}

SplitResult split(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  if (ds.samples.empty()) throw ContractError("split: empty dataset");

  // Group samples by base topology so rotated copies cannot leak across
  // splits.
  std::vector<std::int64_t> base_ids;
  for (const auto& s : ds.samples)
    if (std::find(base_ids.begin(), base_ids.end(), s.base_id) == base_ids.end())
      base_ids.push_back(s.base_id);
  Rng rng(spec.seed);
  std::shuffle(base_ids.begin(), base_ids.end(), rng);

  const double total = static_cast<double>(ds.samples.size());
  const std::array<double, 3> frac = {spec.train, spec.validation, spec.test};
  std::array<double, 3> assigned = {0, 0, 0};
  std::array<std::vector<std::int64_t>, 3> groups;
  for (std::int64_t id : base_ids) {
    std::size_t count = 0;
    for (const auto& s : ds.samples)
      if (s.base_id == id) ++count;
    // Largest remaining deficit, ties broken train > validation > test.
    int best = 0;
    double best_deficit = -std::numeric_limits<double>::infinity();
    for (int g = 0; g < 3; ++g) {
      const double deficit = frac[static_cast<std::size_t>(g)] * total - assigned[static_cast<std::size_t>(g)];
      if (deficit > best_deficit) {
        best = g;
        best_deficit = deficit;
      }
    }
    groups[static_cast<std::size_t>(best)].push_back(id);
    assigned[static_cast<std::size_t>(best)] += static_cast<double>(count);
  }

  SplitResult out;
  std::array<Dataset*, 3> parts = {&out.train, &out.validation, &out.test};
  for (int g = 0; g < 3; ++g) {
    Dataset& part = *parts[static_cast<std::size_t>(g)];
    part.property_dim = ds.property_dim;
    part.seed = ds.seed;
    part.provenance = ds.provenance;
    for (const auto& s : ds.samples)
      if (std::find(groups[static_cast<std::size_t>(g)].begin(), groups[static_cast<std::size_t>(g)].end(), s.base_id) != groups[static_cast<std::size_t>(g)].end())
        part.samples.push_back(s);
    if (part.samples.empty())
      throw ContractError("split: a split received zero samples");
    part.recompute_norm_stats();
  }
  return out;
}

// ---- persistence ----

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("save_dataset: cannot open " + path);
  json header;
  header["version"] = 1;
  header["m"] = ds.property_dim;
  header["seed"] = ds.seed;
  header["provenance"] = ds.provenance;
  header["norm"] = {{"density_min", ds.norm.density_min},
                    {"density_max", ds.norm.density_max},
                    {"prop_min", ds.norm.prop_min},
                    {"prop_max", ds.norm.prop_max}};
  out << header.dump() << "\n";
  for (const auto& s : ds.samples) {
    json rec = json::parse(geom::topology_to_json(s.mtr.topology));
    rec["density"] = s.mtr.density;
    rec["properties"] = s.mtr.properties;
    rec["base_id"] = s.base_id;
    rec["rotation_id"] = s.rotation_id;
    out << rec.dump() << "\n";
  }
  if (!out) throw FormatError("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("load_dataset: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw FormatError("load_dataset: missing header line");
  Dataset ds;
  try {
    const json header = json::parse(line);
    const int version = header.at("version").get<int>();
    if (version != 1)
      throw FormatError("load_dataset: unsupported version " + std::to_string(version));
    ds.property_dim = header.at("m").get<int>();
    ds.seed = header.at("seed").get<std::uint64_t>();
    ds.provenance = header.value("provenance", "");
    const auto& n = header.at("norm");
    ds.norm.density_min = n.at("density_min").get<double>();
    ds.norm.density_max = n.at("density_max").get<double>();
    ds.norm.prop_min = n.at("prop_min").get<std::vector<double>>();
    ds.norm.prop_max = n.at("prop_max").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("load_dataset: bad header: ") + e.what());
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      Sample s;
      s.mtr.topology = geom::topology_from_json(line);
      s.mtr.density = rec.at("density").get<double>();
      s.mtr.properties = rec.at("properties").get<std::vector<double>>();
      s.base_id = rec.at("base_id").get<std::int64_t>();
      s.rotation_id = rec.at("rotation_id").get<int>();
      if (static_cast<int>(s.mtr.properties.size()) != ds.property_dim)
        throw FormatError("property dimension mismatch");
      if (s.mtr.density > 1.0)
        ds.warnings.push_back("line " + std::to_string(line_no) +
                              ": non-physical density " + std::to_string(s.mtr.density));
      else
        s.mtr.validate();
      ds.samples.push_back(std::move(s));
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception& e) {
      throw FormatError("load_dataset: line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return ds;
}

// ---- filter mini-language ----

namespace {

struct Clause {
  std::string field;
  char op;  // '<' or '>'
  std::string rhs;
};

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  const auto b = s.find_last_not_of(" \t");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

double field_value(const Sample& s, const std::string& field) {
  if (field == "density") return s.mtr.density;
  if (field == "E") return s.mtr.properties.at(0);
  if (field == "G") return s.mtr.properties.at(1);
  if (field == "nu") return s.mtr.properties.at(2);
  throw FormatError("filter: unknown field '" + field + "'");
}

double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - w) + values[hi] * w;
}

}  // namespace

Dataset filter_dataset(const Dataset& ds, const std::string& expr) {
  std::vector<Clause> clauses;
  std::size_t pos = 0;
  while (pos < expr.size()) {
    auto next = expr.find("&&", pos);
    const std::string part = trim(expr.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
    pos = next == std::string::npos ? expr.size() : next + 2;
    if (part.empty()) continue;
    const auto cmp = part.find_first_of("<>");
    if (cmp == std::string::npos)
      throw FormatError("filter: clause '" + part + "' needs < or >");
    clauses.push_back({trim(part.substr(0, cmp)), part[cmp], trim(part.substr(cmp + 1))});
  }

  std::vector<double> thresholds;
  for (const auto& c : clauses) {
    if (c.rhs.size() > 1 && c.rhs[0] == 'q') {
      const double q = std::stod(c.rhs.substr(1)) / 100.0;
      std::vector<double> vals;
      for (const auto& t : ds.samples) vals.push_back(field_value(t, c.field));
      if (vals.empty()) throw ContractError("filter: empty dataset");
      thresholds.push_back(quantile(std::move(vals), q));
    } else {
      try {
        thresholds.push_back(std::stod(c.rhs));
      } catch (const std::exception&) {
        throw FormatError("filter: bad constant '" + c.rhs + "'");
      }
    }
  }

  Dataset out;
  out.property_dim = ds.property_dim;
  out.seed = ds.seed;
  out.provenance = ds.provenance + " | filter: " + expr;
  for (const auto& s : ds.samples) {
    bool keep = true;
    for (std::size_t ci = 0; ci < clauses.size(); ++ci) {
      const double lhs = field_value(s, clauses[ci].field);
      keep = keep && (clauses[ci].op == '<' ? lhs < thresholds[ci] : lhs > thresholds[ci]);
    }
    if (keep) out.samples.push_back(s);
  }
  if (!out.samples.empty()) out.recompute_norm_stats();
  return out;
}

}  // namespace umate::data
