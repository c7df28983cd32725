#pragma once

#include <string>
#include <utility>
#include <vector>

#include "umate/autodiff.hpp"

namespace umate::ot {

enum class Modality { Topology = 0, Density = 1, Property = 2 };

// Per-modality codebook-index frequencies; each vector sums to 1.
struct Marginals {
  std::vector<double> topology, density, property;

  int kappa() const { return static_cast<int>(topology.size()); }
  const std::vector<double>& of(Modality m) const;
  void validate() const;
};

// Normalized histograms over codebook indices. Zero-count entries receive a
// 1e-9 floor before renormalization so unused prototypes cannot blow up the
// scaling divisions.
Marginals token_frequencies(const std::vector<std::vector<int>>& topology_batches,
                            const std::vector<std::vector<int>>& density_batches,
                            const std::vector<std::vector<int>>& property_batches,
                            int kappa);

// Literal: cost is the sum of the three pairwise cosine similarities, as
// defined. Aligned: 1 - CosSim per pair, so that minimizing the expected
// cost pulls the modalities together. See README for the discrepancy note.
enum class CostMode { Literal, Aligned };

struct SinkhornOptions {
  double epsilon = 0.05;
  int max_iter = 500;
  double tol = 1e-6;   // max marginal violation; tol = 0 runs all iterations
  int unroll_tail = 25;  // sweeps kept on the tape for the gradient path
  CostMode cost_mode = CostMode::Literal;
};

// kappa^3 cost tensor and its Gibbs kernel, flattened with index
// (i * kappa + j) * kappa + k.
struct CostKernel {
  int kappa = 0;
  std::vector<double> cost;
  std::vector<double> kernel;  // exp(-(C - shift)/epsilon); shift = min C
  double shift = 0.0;
  double epsilon = 0.0;
};

CostKernel cost_kernel(const nd::Tensor& codebook, double epsilon,
                       CostMode mode = CostMode::Literal);

struct TransportPlan {
  int kappa = 0;
  std::vector<double> plan;  // kappa^3, same flattening as CostKernel
  double distance = 0.0;     // <C, plan>
  int iterations = 0;
  bool converged = false;
  double epsilon = 0.0;
  double tol = 0.0;

  double at(int i, int j, int k) const {
    return plan[static_cast<std::size_t>((i * kappa + j) * kappa + k)];
  }
  // Marginal over one modality axis.
  std::vector<double> marginal(Modality m) const;
  double max_marginal_violation(const Marginals& f) const;

  void save(const std::string& path) const;
  static TransportPlan load(const std::string& path);
};

// Cyclic scaling iteration u <- F_T / (M v w), then v, then w. Converged
// when the worst marginal violation drops below tol.
TransportPlan tripartite_sinkhorn(const Marginals& f, const CostKernel& ck,
                                  const SinkhornOptions& opt);

// Differentiable transport distance: the cost construction and the last
// `unroll_tail` sweeps are recorded on the tape, so gradients reach the
// codebook through C; marginals are treated as constants.
nd::Var transport_distance(const nd::Var& codebook, const Marginals& f,
                           const SinkhornOptions& opt,
                           TransportPlan* plan_out = nullptr);

// Distribution over the unknown modality's codebook indices given observed
// tokens. Per-token conditionals are averaged; an all-zero slice falls back
// to the unknown modality's marginal.
std::vector<double> conditional_plan(const TransportPlan& plan,
                                     const std::vector<std::pair<Modality, int>>& known,
                                     Modality unknown, bool* fallback_used = nullptr);

}  // namespace umate::ot
