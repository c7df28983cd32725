#pragma once

#include <string>
#include <vector>

#include "umate/align.hpp"
#include "umate/optim.hpp"
#include "umate/tokenizer.hpp"

namespace umate::diff {

// Annealed noise ladder: L strictly decreasing levels, a fixed number of
// update steps per level, step size alpha_i = eps_step * sigma_i^2 / sigma_L^2.
struct DiffusionSchedule {
  std::vector<double> sigmas;
  int steps_per_level = 2;
  double eps_step = 2e-5;

  static DiffusionSchedule geometric(int levels = 10, double sigma_hi = 1.0,
                                     double sigma_lo = 0.01, int steps_per_level = 2,
                                     double eps_step = 2e-5);

  int total_steps() const { return static_cast<int>(sigmas.size()) * steps_per_level; }
  double sigma(int step) const;  // noise level active at global step index
  double alpha(int step) const;
  void validate() const;
};

// Partition of LMTR rows into frozen context (I_kn) and rows being
// generated (I_un).
struct MaskSpec {
  int h = 0;
  std::vector<bool> unknown;  // unknown[r] == true iff r is in I_un

  static MaskSpec all_unknown(int h);
  static MaskSpec all_known(int h);
  // The segment of one modality is I_un, everything else is context.
  static MaskSpec segment(const tok::LmtrSegments& segs, ot::Modality which);

  void validate() const;
  bool is_unknown(int row) const { return unknown[static_cast<std::size_t>(row)]; }
  std::vector<int> unknown_rows() const;
};

struct BackboneConfig {
  int d = 32;
  int layers = 2;
  int heads = 4;
  int max_rows = 64;               // learned positional table size
  bool positional = true;          // add per-row learned embeddings
  bool segment_embeddings = true;  // add per-modality learned embeddings
};

// Full self-attention stack over the h LMTR rows. Weights live in the
// ParamStore under the "bb." prefix.
class Backbone {
 public:
  Backbone(nd::ParamStore& store, const BackboneConfig& cfg, Rng& rng);

  const BackboneConfig& config() const { return cfg_; }

  // segs may be null when the rows carry no modality structure; positional
  // and segment embeddings are then skipped for the parts that need it.
  nd::Var forward(const nd::Var& tokens, const tok::LmtrSegments* segs = nullptr) const;

 private:
  nd::Var layer(const nd::Var& x, const std::string& prefix) const;

  BackboneConfig cfg_;
  nd::ParamStore* store_;
};

// Backbone output at I_un, input rows bit-exact at I_kn.
nd::Var frozen_forward(const nd::Var& tokens, const MaskSpec& mask,
                       const Backbone& backbone, const tok::LmtrSegments* segs = nullptr);

struct DenoiseOptions {
  // Literal update: the increment and the Gaussian term hit every row, so
  // context rows drift. Off by default; the frozen variant keeps I_kn
  // bit-exact across the whole chain.
  bool literal_update = false;
  bool zero_noise = false;  // force Z_t = 0 (deterministic limit)
};

// T sequential annealed-Langevin updates; differentiable through the whole
// unroll. rng fully determines the noise sequence.
nd::Var denoise_chain(const nd::Var& start, const MaskSpec& mask,
                      const DiffusionSchedule& schedule, const Backbone& backbone,
                      Rng& rng, const tok::LmtrSegments* segs = nullptr,
                      const DenoiseOptions& opt = {});

struct NoiseResult {
  nd::Var noised;
  MaskSpec mask;
  ot::Modality chosen = ot::Modality::Topology;
};

// Picks one modality uniformly, perturbs its rows with N(0, sigma^2) noise,
// leaves the other segments bit-exact, and marks the noised segment as I_un.
// With probability resample_prob the corruption instead replaces the chosen
// segment's rows by random rows of resample_pool (the codebook). Inference
// initializes the unknown segment at sampled prototypes, so this trains the
// chain on the same inputs it will see there; replaced rows carry no gradient
// back to the encoders.
NoiseResult noise_random_modality(const nd::Var& lmtr, const tok::LmtrSegments& segs,
                                  double sigma, Rng& rng,
                                  const nd::Tensor* resample_pool = nullptr,
                                  double resample_prob = 0.0);

// Frobenius distance between the rounded tokens and the denoised chain output.
nd::Var generation_loss(const nd::Var& rounded, const nd::Var& denoised);

nd::Var total_loss(const nd::Var& align_loss, const nd::Var& gen_loss,
                   double lambda_align, double lambda_gen);

}  // namespace umate::diff
