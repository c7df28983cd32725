#pragma once

#include <vector>

#include "umate/geometry.hpp"
#include "umate/optim.hpp"

namespace umate::tok {

struct TokenizerConfig {
  int d = 32;           // token dimension
  int kappa = 64;       // codebook size
  int m = 3;            // property dimension
  int gcn_layers = 3;
  int dec_layers = 2;
  int dec_heads = 4;
  int mlp_hidden = 32;
  double theta_edge = 0.5;
  bool adjacency_normalized = true;  // A+I row-normalized; false = raw A
  bool edge_features_latent = true;  // CosSim on latent features; false = coords
};

// Straight-through pair produced by rounding one token block.
struct RoundResult {
  nd::Var straight;          // value = prototypes, gradient -> encoder tokens
  nd::Var quantized;         // gather on the codebook, gradient -> prototypes
  std::vector<int> indices;  // chosen codebook rows
};

struct LmtrSegments {
  int n = 0;  // topology rows
  int m = 0;  // property rows
  int h() const { return n + 1 + m; }
  int topo_begin() const { return 0; }
  int density_row() const { return n; }
  int prop_begin() const { return n + 1; }
};

struct TopologyDecodeResult {
  nd::Var coords;         // n x 3
  nd::Var features;       // n x d pre-projection transformer output
  nd::Var adj_raw;        // n x n cosine similarities
  nd::Tensor adj_binary;  // thresholded, zero diagonal
  bool lattice_ok = false;
  geom::Mat3 lattice{};
};

// Encoders, decoders, and the shared codebook. Weights live in the
// ParamStore passed at construction so training and checkpointing see them.
class Tokenizer {
 public:
  Tokenizer(nd::ParamStore& store, const TokenizerConfig& cfg, Rng& rng);

  const TokenizerConfig& config() const { return cfg_; }
  nd::Var codebook() const { return codebook_; }

  // Graph-convolution stack over raw coordinates; returns n x d tokens.
  nd::Var encode_topology(const nd::Tensor& coords, const nd::Tensor& adjacency) const;
  nd::Var encode_density(double rho) const;                      // 1 x d
  nd::Var encode_property(const std::vector<double>& p) const;   // m x d

  RoundResult round_tokens(const nd::Var& tokens) const;
  static std::vector<int> nearest_prototypes(const nd::Tensor& tokens,
                                             const nd::Tensor& codebook);

  static nd::Var assemble_lmtr(const nd::Var& topo_tokens, const nd::Var& density_token,
                               const nd::Var& property_tokens, LmtrSegments& segments_out);

  TopologyDecodeResult decode_topology(const nd::Var& rounded_tokens) const;
  nd::Var decode_density(const nd::Var& token) const;        // scalar in (0,1)
  nd::Var decode_property(const nd::Var& tokens) const;      // 1 x m

  // Replaces the Gaussian-initialized prototypes with jittered draws from the
  // warm-up encoder output rows (jitter scale: 2% of the median row norm), so
  // the codebook covers the token distribution before training starts. With
  // no warm-up rows, falls back to Gaussian rows at the median norm.
  void init_codebook(const std::vector<nd::Tensor>& warmup_tokens, Rng& rng);

 private:
  nd::Var mlp3(const nd::Var& x, const std::string& prefix, bool final_sigmoid) const;
  nd::Var encode_scalar(double v, const std::string& prefix) const;
  nd::Var transformer_layer(const nd::Var& x, const std::string& prefix) const;

  TokenizerConfig cfg_;
  nd::ParamStore* store_;
  nd::Var codebook_;
};

struct AlignmentWeights {
  double alpha_topology = 1.0;
  double alpha_density = 1.0;
  double alpha_property = 1.0;
  double alpha_transport = 0.1;
};

// Everything the alignment loss consumes for one sample.
struct ForwardArtifacts {
  nd::Var x_recon, x_tokens, x_quantized;
  nd::Var adj_raw;
  nd::Var rho_recon, rho_token, rho_quantized;
  nd::Var p_recon, p_tokens, p_quantized;
  nd::Tensor x_target;       // n x 3
  nd::Tensor adj_target;     // n x n
  double rho_target = 0.0;
  std::vector<double> p_target;
};

// Weighted sum of the reconstruction, rounding, and transport terms.
// Frobenius/L2 norms throughout; the adjacency term ignores the diagonal
// (the raw similarity matrix is identically 1 there).
nd::Var alignment_loss(const ForwardArtifacts& fa, const nd::Var& transport_distance,
                       const AlignmentWeights& weights);

}  // namespace umate::tok
