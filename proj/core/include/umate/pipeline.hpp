#pragma once

#include <memory>
#include <string>
#include <vector>

#include "umate/dataset.hpp"
#include "umate/diffuse.hpp"
#include "umate/metrics.hpp"

namespace umate::pipe {

// Every knob of the run, loadable from a nested JSON config file. Unknown
// keys are rejected so typos fail loudly.
struct Config {
  // model
  int d = 32;
  int kappa = 64;
  int m = 3;
  int n_max = 20;
  int gcn_layers = 3;
  int dec_layers = 2;
  int dec_heads = 4;
  int mlp_hidden = 32;
  int bb_layers = 2;
  int bb_heads = 4;
  double theta_edge = 0.5;
  bool adjacency_normalized = true;
  bool edge_features_latent = true;  // CosSim on latent features vs. coordinates

  // denoising schedule
  int diff_levels = 10;
  double sigma_hi = 1.0;
  double sigma_lo = 0.01;
  int steps_per_level = 2;
  double eps_step = 2e-5;
  double train_noise_sigma = 0.5;  // noise scale applied to one modality per sample
  bool literal_update = false;     // un-frozen denoising update (fidelity switch)
  // Langevin noise inside the training chain. Off by default: the modality
  // corruption above already randomizes the chain input, and the deterministic
  // chain gives far better-conditioned gradients through the unrolled steps.
  bool train_chain_noise = false;
  // Probability that the corrupted modality is replaced by random codebook
  // prototypes instead of additive noise. Inference starts the unknown
  // segment at sampled prototypes, so this exposes training to that regime.
  double train_resample_prob = 0.5;

  // transport
  double epsilon = 0.05;
  double tol = 1e-6;
  int max_iter = 500;
  int unroll_tail = 25;
  std::string cost_mode = "literal";  // or "aligned"

  // loss weights
  double alpha_topology = 1.0;
  double alpha_density = 1.0;
  double alpha_property = 1.0;
  double alpha_transport = 0.1;
  double lambda_align = 1.0;
  double lambda_gen = 1.0;

  // training
  int batch_size = 16;
  int epochs = 10;
  double lr = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
  static Config from_json(const std::string& text);
  static Config from_file(const std::string& path);
  std::string to_json() const;

  tok::TokenizerConfig tokenizer_config() const;
  diff::BackboneConfig backbone_config() const;
  diff::DiffusionSchedule schedule() const;
  ot::SinkhornOptions sinkhorn_options() const;
};

// The full trainable state plus the cached artifacts inference needs.
struct Model {
  Config cfg;
  nd::ParamStore store;
  std::unique_ptr<tok::Tokenizer> tokenizer;
  std::unique_ptr<diff::Backbone> backbone;
  data::NormStats norm;
  ot::TransportPlan plan;   // refreshed each training epoch
  bool has_plan = false;
  int typical_n = 8;        // topology rows used for unconditional shapes
  long training_steps = 0;

  Model(const Config& cfg, Rng& rng);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
};

// Binary, versioned; load reproduces inference bit-exactly.
void save_checkpoint(const Model& model, const std::string& path);
std::unique_ptr<Model> load_checkpoint(const std::string& path);

struct TrainResult {
  std::vector<double> epoch_losses;  // mean per-sample total loss
  std::vector<double> transport_distances;  // d_w per epoch
};

// Codebook warm-up from encoder outputs over the dataset; called once before
// train() on a fresh model.
void warm_up_codebook(Model& model, const data::Dataset& ds, Rng& rng);

TrainResult train(Model& model, const data::Dataset& train_split, Rng& rng);

struct GenerateResult {
  geom::Topology topology;
  std::vector<int> init_indices;  // prototypes the chain started from
  bool plan_fallback = false;
};

GenerateResult task_generate(Model& model, double density,
                             const std::vector<double>& properties, Rng& rng);
std::vector<double> task_predict(Model& model, const geom::Topology& topology,
                                 double density, Rng& rng);
double task_confirm(Model& model, const geom::Topology& topology,
                    const std::vector<double>& properties, Rng& rng);

metrics::EvalReport evaluate(Model& model, const data::Dataset& test_split, Rng& rng);

}  // namespace umate::pipe
