#include "umate/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace umate::tok {

using nd::Tensor;
using nd::Var;

namespace {

Tensor glorot(int fan_in, int fan_out, Rng& rng) {
  const double s = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  return Tensor::randn({fan_in, fan_out}, rng, s);
}

}  // namespace

Tokenizer::Tokenizer(nd::ParamStore& store, const TokenizerConfig& cfg, Rng& rng)
    : cfg_(cfg), store_(&store) {
  if (cfg.d < 1 || cfg.kappa < 1 || cfg.m < 1 || cfg.gcn_layers < 1 ||
      cfg.dec_layers < 1 || cfg.dec_heads < 1 || cfg.d % cfg.dec_heads != 0)
    throw ContractError("TokenizerConfig: invalid dimensions");

  for (int l = 1; l <= cfg.gcn_layers; ++l) {
    const int fan_in = (l == 1) ? 3 : cfg.d;
    store.add("enc_topo.W" + std::to_string(l), glorot(fan_in, cfg.d, rng));
  }
  // Linear skip from the raw coordinates into the token. The stacked
  // neighborhood averaging smooths node features toward each other, so
  // without it every node of a sample rounds to the same prototype and the
  // decoder cannot tell the nodes apart.
  store.add("enc_topo.skip", Tensor::randn({3, cfg.d}, rng));

  // Scalar-input encoders need a wide first layer: at glorot scale the token
  // is nearly constant over the normalized [0, 1] input range, so every value
  // rounds to the same prototype and the decoder degenerates to a constant.
  auto add_mlp = [&](const std::string& prefix, int in, int hidden, int out,
                     double in_gain = 1.0) {
    Tensor w1 = glorot(in, hidden, rng);
    for (double& v : w1.data) v *= in_gain;
    store.add(prefix + ".W1", std::move(w1));
    store.add(prefix + ".b1", Tensor::zeros({1, hidden}));
    store.add(prefix + ".W2", glorot(hidden, hidden, rng));
    store.add(prefix + ".b2", Tensor::zeros({1, hidden}));
    store.add(prefix + ".W3", glorot(hidden, out, rng));
    store.add(prefix + ".b3", Tensor::zeros({1, out}));
  };
  constexpr double kScalarGain = 8.0;
  auto add_scalar_encoder = [&](const std::string& prefix) {
    add_mlp(prefix, 1, cfg.mlp_hidden, cfg.d, kScalarGain);
    store.add(prefix + ".skip", Tensor::randn({1, cfg.d}, rng));
  };
  add_scalar_encoder("enc_rho");
  add_mlp("dec_rho", cfg.d, cfg.mlp_hidden, 1);
  for (int j = 0; j < cfg.m; ++j) {
    add_scalar_encoder("enc_p" + std::to_string(j));
    add_mlp("dec_p" + std::to_string(j), cfg.d, cfg.mlp_hidden, 1);
  }

  for (int l = 0; l < cfg.dec_layers; ++l) {
    const std::string p = "dec_topo.layer" + std::to_string(l);
    store.add(p + ".Wq", glorot(cfg.d, cfg.d, rng));
    store.add(p + ".Wk", glorot(cfg.d, cfg.d, rng));
    store.add(p + ".Wv", glorot(cfg.d, cfg.d, rng));
    store.add(p + ".Wo", glorot(cfg.d, cfg.d, rng));
    store.add(p + ".ln1.g", Tensor::full({1, cfg.d}, 1.0));
    store.add(p + ".ln1.b", Tensor::zeros({1, cfg.d}));
    store.add(p + ".ff.W1", glorot(cfg.d, 2 * cfg.d, rng));
    store.add(p + ".ff.b1", Tensor::zeros({1, 2 * cfg.d}));
    store.add(p + ".ff.W2", glorot(2 * cfg.d, cfg.d, rng));
    store.add(p + ".ff.b2", Tensor::zeros({1, cfg.d}));
    store.add(p + ".ln2.g", Tensor::full({1, cfg.d}, 1.0));
    store.add(p + ".ln2.b", Tensor::zeros({1, cfg.d}));
  }
  store.add("dec_topo.Wout", glorot(cfg.d, 3, rng));

  codebook_ = store.add("codebook", Tensor::randn({cfg.kappa, cfg.d}, rng));
}

Var Tokenizer::encode_topology(const Tensor& coords, const Tensor& adjacency) const {
  if (coords.ndim() != 2 || coords.cols() != 3)
    throw ContractError("encode_topology: coords must be n x 3");
  const int n = coords.rows();
  if (adjacency.ndim() != 2 || adjacency.rows() != n || adjacency.cols() != n)
    throw ContractError("encode_topology: adjacency must be n x n");

  Tensor a = adjacency;
  if (cfg_.adjacency_normalized) {
    // A + I, row-normalized.
    for (int i = 0; i < n; ++i) a(i, i) += 1.0;
    for (int i = 0; i < n; ++i) {
      double row = 0.0;
      for (int j = 0; j < n; ++j) row += a(i, j);
      if (row > 0.0)
        for (int j = 0; j < n; ++j) a(i, j) /= row;
    }
  }
  const Var a_const = Var::constant(std::move(a));

  Var x = Var::constant(coords);
  for (int l = 1; l <= cfg_.gcn_layers; ++l) {
    const Var w = *store_->find("enc_topo.W" + std::to_string(l));
    x = nd::matmul(nd::matmul(a_const, nd::sigmoid(x)), w);
  }
  return nd::add(x, nd::matmul(Var::constant(coords), *store_->find("enc_topo.skip")));
}

Var Tokenizer::mlp3(const Var& x, const std::string& prefix, bool final_sigmoid) const {
  auto layer = [&](const Var& in, const std::string& w, const std::string& b) {
    return nd::add_rowvec(nd::matmul(in, *store_->find(prefix + w)), *store_->find(prefix + b));
  };
  Var h = nd::sigmoid(layer(x, ".W1", ".b1"));
  h = nd::sigmoid(layer(h, ".W2", ".b2"));
  h = layer(h, ".W3", ".b3");
  return final_sigmoid ? nd::sigmoid(h) : h;
}

// Scalar encoders pair the MLP with a learned linear skip (value * direction).
// The skip moves the token by O(token norm) across the normalized input range,
// so distinct values land on distinct prototypes and the decoders see a
// first-order signal; the MLP alone starts nearly constant and trains too
// slowly to escape a single shared prototype.
Var Tokenizer::encode_scalar(double v, const std::string& prefix) const {
  Var base = mlp3(Var::constant(Tensor({1, 1}, {v})), prefix, false);
  return nd::add(base, nd::scale(*store_->find(prefix + ".skip"), v));
}

Var Tokenizer::encode_density(double rho) const { return encode_scalar(rho, "enc_rho"); }

Var Tokenizer::encode_property(const std::vector<double>& p) const {
  if (static_cast<int>(p.size()) != cfg_.m)
    throw ContractError("encode_property: expected " + std::to_string(cfg_.m) +
                        " dimensions, got " + std::to_string(p.size()));
  std::vector<Var> rows;
  rows.reserve(p.size());
  for (int j = 0; j < cfg_.m; ++j)
    rows.push_back(encode_scalar(p[static_cast<std::size_t>(j)], "enc_p" + std::to_string(j)));
  return nd::concat_rows(rows);
}

std::vector<int> Tokenizer::nearest_prototypes(const Tensor& tokens, const Tensor& codebook) {
  if (codebook.rows() < 1) throw ContractError("round_tokens: empty codebook");
  if (tokens.cols() != codebook.cols())
    throw ContractError("round_tokens: token dimension mismatch");
  std::vector<int> out(static_cast<std::size_t>(tokens.rows()));
  for (int i = 0; i < tokens.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < codebook.rows(); ++k) {
      double d = 0.0;
      for (int j = 0; j < tokens.cols(); ++j) {
        const double diff = tokens(i, j) - codebook(k, j);
        d += diff * diff;
      }
      if (d < best_d) {  // ties keep the lowest index
        best_d = d;
        best = k;
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

RoundResult Tokenizer::round_tokens(const Var& tokens) const {
  RoundResult r;
  r.indices = nearest_prototypes(tokens.value(), codebook_.value());
  r.quantized = nd::gather_rows(codebook_, r.indices);
  r.straight = nd::straight_through(tokens, r.quantized.value());
  return r;
}

Var Tokenizer::assemble_lmtr(const Var& topo_tokens, const Var& density_token,
                             const Var& property_tokens, LmtrSegments& segments_out) {
  segments_out.n = topo_tokens.value().rows();
  segments_out.m = property_tokens.value().rows();
  return nd::concat_rows({topo_tokens, density_token, property_tokens});
}

Var Tokenizer::transformer_layer(const Var& x, const std::string& prefix) const {
  auto p = [&](const std::string& name) { return *store_->find(prefix + name); };
  const int d = cfg_.d;
  const int heads = cfg_.dec_heads;
  const int dh = d / heads;

  Var h = nd::layer_norm(x, p(".ln1.g"), p(".ln1.b"));
  Var q = nd::matmul(h, p(".Wq"));
  Var k = nd::matmul(h, p(".Wk"));
  Var v = nd::matmul(h, p(".Wv"));
  std::vector<Var> head_outs;
  head_outs.reserve(static_cast<std::size_t>(heads));
  for (int hd = 0; hd < heads; ++hd) {
    const int c0 = hd * dh, c1 = (hd + 1) * dh;
    head_outs.push_back(nd::attention(nd::slice_cols(q, c0, c1),
                                      nd::slice_cols(k, c0, c1),
                                      nd::slice_cols(v, c0, c1)));
  }
  Var attn = nd::matmul(nd::concat_cols(head_outs), p(".Wo"));
  Var y = nd::add(x, attn);

  Var f = nd::layer_norm(y, p(".ln2.g"), p(".ln2.b"));
  f = nd::sigmoid(nd::add_rowvec(nd::matmul(f, p(".ff.W1")), p(".ff.b1")));
  f = nd::add_rowvec(nd::matmul(f, p(".ff.W2")), p(".ff.b2"));
  return nd::add(y, f);
}

TopologyDecodeResult Tokenizer::decode_topology(const Var& rounded_tokens) const {
  Var x = rounded_tokens;
  for (int l = 0; l < cfg_.dec_layers; ++l)
    x = transformer_layer(x, "dec_topo.layer" + std::to_string(l));

  TopologyDecodeResult out;
  out.features = x;
  out.coords = nd::matmul(x, *store_->find("dec_topo.Wout"));
  out.adj_raw = nd::row_cosine_matrix(cfg_.edge_features_latent ? out.features : out.coords);

  const int n = out.adj_raw.value().rows();
  out.adj_binary = Tensor({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double s = std::max(out.adj_raw.value()(i, j), out.adj_raw.value()(j, i));
      out.adj_binary(i, j) = s >= cfg_.theta_edge ? 1.0 : 0.0;
    }

  if (n >= 8) {
    std::vector<geom::Vec3> coords(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      coords[static_cast<std::size_t>(i)] = {out.coords.value()(i, 0), out.coords.value()(i, 1),
                                             out.coords.value()(i, 2)};
    try {
      out.lattice = geom::lattice_axes(coords);
      out.lattice_ok = true;
    } catch (const std::exception&) {
      out.lattice_ok = false;
    }
  }
  return out;
}

Var Tokenizer::decode_density(const Var& token) const {
  if (token.value().rows() != 1 || token.value().cols() != cfg_.d)
    throw ContractError("decode_density: expects a 1 x d token");
  return mlp3(token, "dec_rho", true);
}

Var Tokenizer::decode_property(const Var& tokens) const {
  if (tokens.value().rows() != cfg_.m || tokens.value().cols() != cfg_.d)
    throw ContractError("decode_property: expects m x d tokens");
  std::vector<Var> comps;
  comps.reserve(static_cast<std::size_t>(cfg_.m));
  for (int j = 0; j < cfg_.m; ++j)
    comps.push_back(mlp3(nd::slice_rows(tokens, j, j + 1), "dec_p" + std::to_string(j), false));
  return nd::concat_cols(comps);
}

void Tokenizer::init_codebook(const std::vector<Tensor>& warmup_tokens, Rng& rng) {
  // Pool every warm-up row; prototypes become jittered draws from the pool so
  // the codebook tiles the actual token distribution from the start (random
  // prototypes far from the data collapse all rows of a modality onto one or
  // two nearest neighbors, which caps reconstruction resolution).
  std::vector<std::pair<const Tensor*, int>> pool;
  std::vector<double> norms;
  for (const auto& t : warmup_tokens) {
    if (t.cols() != cfg_.d) throw ContractError("init_codebook: token width mismatch");
    for (int i = 0; i < t.rows(); ++i) {
      pool.emplace_back(&t, i);
      double s = 0.0;
      for (int j = 0; j < t.cols(); ++j) s += t(i, j) * t(i, j);
      norms.push_back(std::sqrt(s));
    }
  }
  Tensor& cb = codebook_.mutable_value();
  double target = 1.0;
  if (!norms.empty()) {
    std::sort(norms.begin(), norms.end());
    target = norms[norms.size() / 2];
    if (target <= 0.0) target = 1.0;
  }
  if (pool.empty()) {
    // No warm-up data: fall back to Gaussian rows at the unit/target norm.
    for (int k = 0; k < cb.rows(); ++k) {
      double s = 0.0;
      for (int j = 0; j < cb.cols(); ++j) {
        cb(k, j) = rand_normal(rng);
        s += cb(k, j) * cb(k, j);
      }
      const double scale = target / std::sqrt(s);
      for (int j = 0; j < cb.cols(); ++j) cb(k, j) *= scale;
    }
    return;
  }
  const double jitter = 0.02 * target;
  for (int k = 0; k < cb.rows(); ++k) {
    const auto& [src, row] =
        pool[static_cast<std::size_t>(rand_int(rng, 0, static_cast<int>(pool.size()) - 1))];
    for (int j = 0; j < cb.cols(); ++j)
      cb(k, j) = (*src)(row, j) + rand_normal(rng, 0.0, jitter);
  }
}

Var alignment_loss(const ForwardArtifacts& fa, const Var& transport_distance,
                   const AlignmentWeights& w) {
  if (w.alpha_topology < 0.0 || w.alpha_density < 0.0 || w.alpha_property < 0.0 ||
      w.alpha_transport < 0.0)
    throw ContractError("alignment_loss: weights must be nonnegative");

  const int n = fa.adj_target.rows();
  Tensor mask({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) mask(i, j) = (i == j) ? 0.0 : 1.0;

  Var topo_term = nd::add(
      nd::add(nd::l2_norm(nd::sub(fa.x_recon, Var::constant(fa.x_target))),
              nd::l2_norm(nd::sub(fa.x_tokens, fa.x_quantized))),
      nd::l2_norm(nd::mul(nd::sub(fa.adj_raw, Var::constant(fa.adj_target)),
                          Var::constant(std::move(mask)))));

  Var rho_term = nd::add(
      nd::l2_norm(nd::sub(fa.rho_recon, Var::constant(Tensor({1, 1}, {fa.rho_target})))),
      nd::l2_norm(nd::sub(fa.rho_token, fa.rho_quantized)));

  Var p_target = Var::constant(Tensor({1, static_cast<int>(fa.p_target.size())}, fa.p_target));
  Var p_term = nd::add(nd::l2_norm(nd::sub(fa.p_recon, p_target)),
                       nd::l2_norm(nd::sub(fa.p_tokens, fa.p_quantized)));

  Var loss = nd::add(nd::add(nd::scale(topo_term, w.alpha_topology),
                             nd::scale(rho_term, w.alpha_density)),
                     nd::scale(p_term, w.alpha_property));
  return nd::add(loss, nd::scale(transport_distance, w.alpha_transport));
}

}  // namespace umate::tok
