#include "umate/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace umate::pipe {

using nd::Tensor;
using nd::Var;
using nlohmann::json;

// ---- config ----

void Config::validate() const {
  if (d < 1 || kappa < 1 || m < 1 || n_max < 1) throw ContractError("Config: non-positive dimension");
  if (gcn_layers < 1 || dec_layers < 1 || dec_heads < 1 || mlp_hidden < 1 ||
      bb_layers < 1 || bb_heads < 1)
    throw ContractError("Config: non-positive depth");
  if (d % dec_heads != 0 || d % bb_heads != 0)
    throw ContractError("Config: head count must divide d");
  if (diff_levels < 1 || steps_per_level < 1 || sigma_hi <= sigma_lo || sigma_lo <= 0.0)
    throw ContractError("Config: invalid schedule");
  if (eps_step < 0.0 || train_noise_sigma <= 0.0)
    throw ContractError("Config: invalid noise scales");
  if (train_resample_prob < 0.0 || train_resample_prob > 1.0)
    throw ContractError("Config: train_resample_prob outside [0, 1]");
  if (epsilon <= 0.0 || tol < 0.0 || max_iter < 1 || unroll_tail < 0)
    throw ContractError("Config: invalid transport settings");
  if (cost_mode != "literal" && cost_mode != "aligned")
    throw ContractError("Config: cost_mode must be 'literal' or 'aligned'");
  if (alpha_topology < 0 || alpha_density < 0 || alpha_property < 0 ||
      alpha_transport < 0 || lambda_align < 0 || lambda_gen < 0)
    throw ContractError("Config: negative loss weight");
  if (batch_size < 1 || epochs < 0 || lr <= 0.0)
    throw ContractError("Config: invalid training settings");
  if (theta_edge <= -1.0 || theta_edge >= 1.0)
    throw ContractError("Config: theta_edge must lie in (-1, 1)");
}

namespace {

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& group) {
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw FormatError("Config: unknown key '" + group + "." + key + "'");
}

}  // namespace

Config Config::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("Config: ") + e.what());
  }
  Config c;
  try {
    reject_unknown(j, {"model", "schedule", "transport", "loss", "train"}, "<root>");
    if (j.contains("model")) {
      const auto& m = j["model"];
      reject_unknown(m, {"d", "kappa", "m", "n_max", "gcn_layers", "dec_layers",
                         "dec_heads", "mlp_hidden", "bb_layers", "bb_heads",
                         "theta_edge", "adjacency_normalized", "edge_features_latent"},
                     "model");
      read_key(m, "d", c.d);
      read_key(m, "kappa", c.kappa);
      read_key(m, "m", c.m);
      read_key(m, "n_max", c.n_max);
      read_key(m, "gcn_layers", c.gcn_layers);
      read_key(m, "dec_layers", c.dec_layers);
      read_key(m, "dec_heads", c.dec_heads);
      read_key(m, "mlp_hidden", c.mlp_hidden);
      read_key(m, "bb_layers", c.bb_layers);
      read_key(m, "bb_heads", c.bb_heads);
      read_key(m, "theta_edge", c.theta_edge);
      read_key(m, "adjacency_normalized", c.adjacency_normalized);
      read_key(m, "edge_features_latent", c.edge_features_latent);
    }
    if (j.contains("schedule")) {
      const auto& s = j["schedule"];
      reject_unknown(s, {"levels", "sigma_hi", "sigma_lo", "steps_per_level",
                         "eps_step", "train_noise_sigma", "literal_update",
                         "train_chain_noise", "train_resample_prob"},
                     "schedule");
      read_key(s, "levels", c.diff_levels);
      read_key(s, "sigma_hi", c.sigma_hi);
      read_key(s, "sigma_lo", c.sigma_lo);
      read_key(s, "steps_per_level", c.steps_per_level);
      read_key(s, "eps_step", c.eps_step);
      read_key(s, "train_noise_sigma", c.train_noise_sigma);
      read_key(s, "literal_update", c.literal_update);
      read_key(s, "train_chain_noise", c.train_chain_noise);
      read_key(s, "train_resample_prob", c.train_resample_prob);
    }
    if (j.contains("transport")) {
      const auto& t = j["transport"];
      reject_unknown(t, {"epsilon", "tol", "max_iter", "unroll_tail", "cost_mode"},
                     "transport");
      read_key(t, "epsilon", c.epsilon);
      read_key(t, "tol", c.tol);
      read_key(t, "max_iter", c.max_iter);
      read_key(t, "unroll_tail", c.unroll_tail);
      read_key(t, "cost_mode", c.cost_mode);
    }
    if (j.contains("loss")) {
      const auto& l = j["loss"];
      reject_unknown(l, {"alpha_topology", "alpha_density", "alpha_property",
                         "alpha_transport", "lambda_align", "lambda_gen"},
                     "loss");
      read_key(l, "alpha_topology", c.alpha_topology);
      read_key(l, "alpha_density", c.alpha_density);
      read_key(l, "alpha_property", c.alpha_property);
      read_key(l, "alpha_transport", c.alpha_transport);
      read_key(l, "lambda_align", c.lambda_align);
      read_key(l, "lambda_gen", c.lambda_gen);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      reject_unknown(t, {"batch_size", "epochs", "lr", "seed"}, "train");
      read_key(t, "batch_size", c.batch_size);
      read_key(t, "epochs", c.epochs);
      read_key(t, "lr", c.lr);
      read_key(t, "seed", c.seed);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("Config: ") + e.what());
  }
  c.validate();
  return c;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("Config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string Config::to_json() const {
  json j;
  j["model"] = {{"d", d}, {"kappa", kappa}, {"m", m}, {"n_max", n_max},
                {"gcn_layers", gcn_layers}, {"dec_layers", dec_layers},
                {"dec_heads", dec_heads}, {"mlp_hidden", mlp_hidden},
                {"bb_layers", bb_layers}, {"bb_heads", bb_heads},
                {"theta_edge", theta_edge},
                {"adjacency_normalized", adjacency_normalized},
                {"edge_features_latent", edge_features_latent}};
  j["schedule"] = {{"levels", diff_levels}, {"sigma_hi", sigma_hi},
                   {"sigma_lo", sigma_lo}, {"steps_per_level", steps_per_level},
                   {"eps_step", eps_step}, {"train_noise_sigma", train_noise_sigma},
                   {"literal_update", literal_update},
                   {"train_chain_noise", train_chain_noise},
                   {"train_resample_prob", train_resample_prob}};
  j["transport"] = {{"epsilon", epsilon}, {"tol", tol}, {"max_iter", max_iter},
                    {"unroll_tail", unroll_tail}, {"cost_mode", cost_mode}};
  j["loss"] = {{"alpha_topology", alpha_topology}, {"alpha_density", alpha_density},
               {"alpha_property", alpha_property}, {"alpha_transport", alpha_transport},
               {"lambda_align", lambda_align}, {"lambda_gen", lambda_gen}};
  j["train"] = {{"batch_size", batch_size}, {"epochs", epochs}, {"lr", lr},
                {"seed", seed}};
  return j.dump(2);
}

tok::TokenizerConfig Config::tokenizer_config() const {
  tok::TokenizerConfig t;
  t.d = d;
  t.kappa = kappa;
  t.m = m;
  t.gcn_layers = gcn_layers;
  t.dec_layers = dec_layers;
  t.dec_heads = dec_heads;
  t.mlp_hidden = mlp_hidden;
  t.theta_edge = theta_edge;
  t.adjacency_normalized = adjacency_normalized;
  t.edge_features_latent = edge_features_latent;
  return t;
}

diff::BackboneConfig Config::backbone_config() const {
  diff::BackboneConfig b;
  b.d = d;
  b.layers = bb_layers;
  b.heads = bb_heads;
  b.max_rows = n_max + 1 + m;
  return b;
}

diff::DiffusionSchedule Config::schedule() const {
  return diff::DiffusionSchedule::geometric(diff_levels, sigma_hi, sigma_lo,
                                            steps_per_level, eps_step);
}

ot::SinkhornOptions Config::sinkhorn_options() const {
  ot::SinkhornOptions o;
  o.epsilon = epsilon;
  o.tol = tol;
  o.max_iter = max_iter;
  o.unroll_tail = unroll_tail;
  o.cost_mode = cost_mode == "aligned" ? ot::CostMode::Aligned : ot::CostMode::Literal;
  return o;
}

// ---- model ----

Model::Model(const Config& c, Rng& rng) : cfg(c) {
  cfg.validate();
  tokenizer = std::make_unique<tok::Tokenizer>(store, cfg.tokenizer_config(), rng);
  backbone = std::make_unique<diff::Backbone>(store, cfg.backbone_config(), rng);
  norm.prop_min.assign(static_cast<std::size_t>(cfg.m), 0.0);
  norm.prop_max.assign(static_cast<std::size_t>(cfg.m), 1.0);
}

// ---- per-sample graph ----

namespace {

struct Encoded {
  Var x_tokens, rho_token, p_tokens;  // encoder outputs
  tok::RoundResult x_round, rho_round, p_round;
  tok::LmtrSegments segs;
  Var lmtr;  // straight-through rows, so gradients reach the encoders
  double rho_norm = 0.0;
  std::vector<double> p_norm;
  Tensor coords, adjacency;
};

Encoded encode_sample(const Model& model, const geom::MTR& mtr) {
  if (mtr.topology.node_count() > model.cfg.n_max)
    throw ContractError("pipeline: topology exceeds n_max capacity");
  if (static_cast<int>(mtr.properties.size()) != model.cfg.m)
    throw ContractError("pipeline: property vector length mismatch");
  Encoded e;
  e.coords = mtr.topology.coords_tensor();
  e.adjacency = mtr.topology.adjacency_tensor();
  e.rho_norm = model.norm.normalize_density(mtr.density);
  e.p_norm = model.norm.normalize_properties(mtr.properties);
  e.x_tokens = model.tokenizer->encode_topology(e.coords, e.adjacency);
  e.rho_token = model.tokenizer->encode_density(e.rho_norm);
  e.p_tokens = model.tokenizer->encode_property(e.p_norm);
  e.x_round = model.tokenizer->round_tokens(e.x_tokens);
  e.rho_round = model.tokenizer->round_tokens(e.rho_token);
  e.p_round = model.tokenizer->round_tokens(e.p_tokens);
  e.lmtr = tok::Tokenizer::assemble_lmtr(e.x_round.straight, e.rho_round.straight,
                                         e.p_round.straight, e.segs);
  return e;
}

tok::ForwardArtifacts decode_sample(const Model& model, const Encoded& e) {
  tok::ForwardArtifacts fa;
  auto topo = model.tokenizer->decode_topology(e.x_round.straight);
  fa.x_recon = topo.coords;
  fa.adj_raw = topo.adj_raw;
  fa.rho_recon = model.tokenizer->decode_density(e.rho_round.straight);
  fa.p_recon = model.tokenizer->decode_property(e.p_round.straight);
  fa.x_tokens = e.x_tokens;
  fa.x_quantized = e.x_round.quantized;
  fa.rho_token = e.rho_token;
  fa.rho_quantized = e.rho_round.quantized;
  fa.p_tokens = e.p_tokens;
  fa.p_quantized = e.p_round.quantized;
  fa.x_target = e.coords;
  fa.adj_target = e.adjacency;
  fa.rho_target = e.rho_norm;
  fa.p_target = e.p_norm;
  return fa;
}

tok::AlignmentWeights weights_of(const Config& c) {
  tok::AlignmentWeights w;
  w.alpha_topology = c.alpha_topology;
  w.alpha_density = c.alpha_density;
  w.alpha_property = c.alpha_property;
  w.alpha_transport = c.alpha_transport;
  return w;
}

ot::Marginals collect_marginals(const Model& model, const data::Dataset& ds) {
  std::vector<std::vector<int>> topo, rho, prop;
  const Tensor cb = model.tokenizer->codebook().value();
  for (const auto& s : ds.samples) {
    Encoded e = encode_sample(model, s.mtr);
    topo.push_back(tok::Tokenizer::nearest_prototypes(e.x_tokens.value(), cb));
    rho.push_back(tok::Tokenizer::nearest_prototypes(e.rho_token.value(), cb));
    prop.push_back(tok::Tokenizer::nearest_prototypes(e.p_tokens.value(), cb));
  }
  return ot::token_frequencies(topo, rho, prop, model.cfg.kappa);
}

int median_node_count(const data::Dataset& ds) {
  std::vector<int> n;
  n.reserve(ds.samples.size());
  for (const auto& s : ds.samples) n.push_back(s.mtr.topology.node_count());
  std::sort(n.begin(), n.end());
  return n.empty() ? 8 : n[n.size() / 2];
}

}  // namespace

// ---- training ----

void warm_up_codebook(Model& model, const data::Dataset& ds, Rng& rng) {
  if (ds.samples.empty()) throw ContractError("warm_up_codebook: empty dataset");
  std::vector<Tensor> warmups;
  const std::size_t cap = std::min<std::size_t>(ds.samples.size(), 64);
  for (std::size_t i = 0; i < cap; ++i) {
    Encoded e = encode_sample(model, ds.samples[i].mtr);
    // Balance the pool across modalities: topology contributes n rows per
    // sample, so replicate the 1-row density and m-row property tokens to a
    // comparable count, or prototype sampling would starve those modalities.
    const int n = e.x_tokens.value().rows();
    const int m = std::max(1, e.p_tokens.value().rows());
    warmups.push_back(e.x_tokens.value());
    for (int r = 0; r < n; ++r) warmups.push_back(e.rho_token.value());
    for (int r = 0; r < (n + m - 1) / m; ++r) warmups.push_back(e.p_tokens.value());
  }
  model.tokenizer->init_codebook(warmups, rng);
}

TrainResult train(Model& model, const data::Dataset& train_split, Rng& rng) {
  if (train_split.samples.empty()) throw ContractError("train: empty dataset");
  model.norm = train_split.norm;
  model.typical_n = median_node_count(train_split);

  const Config& cfg = model.cfg;
  const auto schedule = cfg.schedule();
  const auto weights = weights_of(cfg);
  const bool learning = cfg.lambda_align > 0.0 || cfg.lambda_gen > 0.0;
  nd::Adam opt({cfg.lr});
  diff::DenoiseOptions dn;
  dn.literal_update = cfg.literal_update;
  dn.zero_noise = !cfg.train_chain_noise;

  TrainResult result;
  const std::size_t n = train_split.samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Refresh the transport plan from the whole split; its distance enters
    // every batch loss as a constant and gets one dedicated codebook step.
    const auto marginals = collect_marginals(model, train_split);
    Var d_w = ot::transport_distance(model.tokenizer->codebook(), marginals,
                                     cfg.sinkhorn_options(), &model.plan);
    model.has_plan = true;
    result.transport_distances.push_back(model.plan.distance);
    if (learning && cfg.lambda_align > 0.0 && cfg.alpha_transport > 0.0) {
      model.store.zero_grad();
      nd::backward(nd::scale(d_w, cfg.lambda_align * cfg.alpha_transport));
      opt.step(model.store.vars());
      ++model.training_steps;
    }
    const Var d_w_const = Var::constant(Tensor::scalar(model.plan.distance));

    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t b0 = 0; b0 < n; b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(n, b0 + static_cast<std::size_t>(cfg.batch_size));
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      model.store.zero_grad();
      for (std::size_t s = b0; s < b1; ++s) {
        const auto& mtr = train_split.samples[order[s]].mtr;
        Var align_l, gen_l;
        try {
          Encoded e = encode_sample(model, mtr);
          align_l = tok::alignment_loss(decode_sample(model, e), d_w_const, weights);
          // Generation target is the rounded sequence, held constant; the
          // chain input keeps its straight-through link to the encoders.
          auto noised = diff::noise_random_modality(
              e.lmtr, e.segs, cfg.train_noise_sigma, rng,
              &model.tokenizer->codebook().value(), cfg.train_resample_prob);
          Var chain = diff::denoise_chain(noised.noised, noised.mask, schedule,
                                          *model.backbone, rng, &e.segs, dn);
          gen_l = diff::generation_loss(Var::constant(e.lmtr.value()), chain);
        } catch (const NumericError& err) {
          throw NumericError("train: epoch " + std::to_string(epoch) + ": " +
                             err.what());
        }
        Var total = diff::total_loss(align_l, gen_l, cfg.lambda_align, cfg.lambda_gen);
        if (!std::isfinite(total.value().item()))
          throw NumericError("train: non-finite total loss at epoch " +
                             std::to_string(epoch));
        loss_sum += total.value().item();
        if (learning) nd::backward(nd::scale(total, inv));
      }
      if (learning) {
        opt.step(model.store.vars());
        ++model.training_steps;
      }
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(n));
  }
  return result;
}

// ---- checkpoint ----

namespace {

constexpr char kMagic[8] = {'U', 'M', 'C', 'K', 'P', 'T', '1', '\n'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
void get(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
}

void put_string(std::ostream& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  std::uint32_t len = 0;
  get(in, len);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  return s;
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
  put(out, static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream& in) {
  std::uint64_t len = 0;
  get(in, len);
  std::vector<double> v(static_cast<std::size_t>(len));
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw FormatError("save_checkpoint: cannot open " + tmp);
    out.write(kMagic, sizeof(kMagic));
    put_string(out, model.cfg.to_json());
    put(out, model.norm.density_min);
    put(out, model.norm.density_max);
    put_doubles(out, model.norm.prop_min);
    put_doubles(out, model.norm.prop_max);
    put(out, static_cast<std::int32_t>(model.typical_n));
    put(out, static_cast<std::int64_t>(model.training_steps));
    put(out, static_cast<std::uint8_t>(model.has_plan ? 1 : 0));
    if (model.has_plan) {
      put(out, static_cast<std::int32_t>(model.plan.kappa));
      put(out, model.plan.epsilon);
      put(out, model.plan.tol);
      put(out, static_cast<std::int32_t>(model.plan.iterations));
      put(out, static_cast<std::uint8_t>(model.plan.converged ? 1 : 0));
      put(out, model.plan.distance);
      put_doubles(out, model.plan.plan);
    }
    put(out, static_cast<std::uint64_t>(model.store.size()));
    for (std::size_t i = 0; i < model.store.size(); ++i) {
      put_string(out, model.store.name(i));
      const Tensor& t = model.store.var(i).value();
      put(out, static_cast<std::uint32_t>(t.shape.size()));
      for (int ddim : t.shape) put(out, static_cast<std::int32_t>(ddim));
      put_doubles(out, t.data);
    }
    if (!out) throw FormatError("save_checkpoint: write failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw FormatError("save_checkpoint: cannot move checkpoint into place");
}

std::unique_ptr<Model> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FormatError("load_checkpoint: bad magic or version");
  const Config cfg = Config::from_json(get_string(in));
  Rng scratch(0);  // initial weights are overwritten below
  auto model = std::make_unique<Model>(cfg, scratch);
  get(in, model->norm.density_min);
  get(in, model->norm.density_max);
  model->norm.prop_min = get_doubles(in);
  model->norm.prop_max = get_doubles(in);
  std::int32_t typical_n = 0;
  std::int64_t steps = 0;
  std::uint8_t has_plan = 0;
  get(in, typical_n);
  get(in, steps);
  get(in, has_plan);
  model->typical_n = typical_n;
  model->training_steps = steps;
  model->has_plan = has_plan != 0;
  if (model->has_plan) {
    std::int32_t kappa = 0, iters = 0;
    std::uint8_t conv = 0;
    get(in, kappa);
    get(in, model->plan.epsilon);
    get(in, model->plan.tol);
    get(in, iters);
    get(in, conv);
    get(in, model->plan.distance);
    model->plan.plan = get_doubles(in);
    model->plan.kappa = kappa;
    model->plan.iterations = iters;
    model->plan.converged = conv != 0;
    if (model->plan.plan.size() !=
        static_cast<std::size_t>(kappa) * kappa * kappa)
      throw FormatError("load_checkpoint: transport plan size mismatch");
  }
  std::uint64_t count = 0;
  get(in, count);
  if (count != model->store.size())
    throw FormatError("load_checkpoint: parameter count mismatch");
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = get_string(in);
    std::uint32_t ndim = 0;
    get(in, ndim);
    std::vector<int> shape(ndim);
    for (auto& dd : shape) {
      std::int32_t v = 0;
      get(in, v);
      dd = v;
    }
    std::vector<double> data = get_doubles(in);
    Var* target = model->store.find(name);
    if (!target) throw FormatError("load_checkpoint: unknown parameter " + name);
    if (target->value().shape != shape)
      throw FormatError("load_checkpoint: shape mismatch for " + name);
    target->mutable_value() = Tensor(shape, std::move(data));
  }
  if (!in) throw FormatError("load_checkpoint: truncated file");
  return model;
}

// ---- inference tasks ----

namespace {

std::vector<int> sample_indices(const std::vector<double>& dist, int count, Rng& rng) {
  std::discrete_distribution<int> d(dist.begin(), dist.end());
  std::vector<int> out(static_cast<std::size_t>(count));
  for (auto& x : out) x = d(rng);
  return out;
}

Tensor prototype_rows(const Model& model, const std::vector<int>& indices) {
  const Tensor& cb = model.tokenizer->codebook().value();
  Tensor out({static_cast<int>(indices.size()), model.cfg.d});
  for (std::size_t r = 0; r < indices.size(); ++r)
    for (int c = 0; c < model.cfg.d; ++c)
      out(static_cast<int>(r), c) = cb(indices[r], c);
  return out;
}

// Known segments frozen, one segment denoised from conditionally sampled
// prototypes; returns the final rows of the unknown segment, snapped to their
// nearest prototypes. The decoders only ever see exact codebook rows during
// training (the rounding is part of the representation), so feeding them the
// chain's raw continuous output would ask them to extrapolate off-manifold.
Var infill_segment(Model& model, const Tensor& lmtr_init,
                   const tok::LmtrSegments& segs, ot::Modality unknown, Rng& rng) {
  const diff::MaskSpec mask = diff::MaskSpec::segment(segs, unknown);
  // Drift-only chain at inference: the Langevin noise is a training-time
  // exploration device; leaving it on here would perturb a deterministic
  // readout. Variability across calls still comes from the sampled
  // prototype initialization.
  diff::DenoiseOptions opt;
  opt.literal_update = model.cfg.literal_update;
  opt.zero_noise = true;
  Var chain = diff::denoise_chain(Var::constant(lmtr_init), mask, model.cfg.schedule(),
                                  *model.backbone, rng, &segs, opt);
  int lo = 0, hi = 0;
  switch (unknown) {
    case ot::Modality::Topology: lo = segs.topo_begin(); hi = lo + segs.n; break;
    case ot::Modality::Density: lo = segs.density_row(); hi = lo + 1; break;
    default: lo = segs.prop_begin(); hi = lo + segs.m; break;
  }
  const Tensor raw = nd::slice_rows(chain, lo, hi).value();
  const auto idx =
      tok::Tokenizer::nearest_prototypes(raw, model.tokenizer->codebook().value());
  return Var::constant(prototype_rows(model, idx));
}

std::vector<double> conditional_or_uniform(const Model& model,
                                           const std::vector<std::pair<ot::Modality, int>>& known,
                                           ot::Modality unknown, bool* fallback) {
  if (model.has_plan)
    return ot::conditional_plan(model.plan, known, unknown, fallback);
  if (fallback) *fallback = true;
  return std::vector<double>(static_cast<std::size_t>(model.cfg.kappa),
                             1.0 / model.cfg.kappa);
}

}  // namespace

GenerateResult task_generate(Model& model, double density,
                             const std::vector<double>& properties, Rng& rng) {
  if (density <= 0.0 || density > 1.0)
    throw ContractError("task_generate: density must lie in (0, 1]");
  if (static_cast<int>(properties.size()) != model.cfg.m)
    throw ContractError("task_generate: property vector length mismatch");

  const double rho_n = model.norm.normalize_density(density);
  const auto p_n = model.norm.normalize_properties(properties);
  const Tensor cb = model.tokenizer->codebook().value();
  const auto rho_idx = tok::Tokenizer::nearest_prototypes(
      model.tokenizer->encode_density(rho_n).value(), cb);
  const auto p_idx = tok::Tokenizer::nearest_prototypes(
      model.tokenizer->encode_property(p_n).value(), cb);

  std::vector<std::pair<ot::Modality, int>> known{{ot::Modality::Density, rho_idx[0]}};
  for (int idx : p_idx) known.emplace_back(ot::Modality::Property, idx);

  GenerateResult out;
  const auto dist =
      conditional_or_uniform(model, known, ot::Modality::Topology, &out.plan_fallback);
  const int n = model.typical_n;
  out.init_indices = sample_indices(dist, n, rng);

  tok::LmtrSegments segs;
  segs.n = n;
  segs.m = model.cfg.m;
  Tensor lmtr({segs.h(), model.cfg.d});
  const Tensor topo_rows = prototype_rows(model, out.init_indices);
  const Tensor rho_row = prototype_rows(model, rho_idx);
  const Tensor p_rows = prototype_rows(model, p_idx);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < model.cfg.d; ++c) lmtr(r, c) = topo_rows(r, c);
  for (int c = 0; c < model.cfg.d; ++c) lmtr(segs.density_row(), c) = rho_row(0, c);
  for (int r = 0; r < segs.m; ++r)
    for (int c = 0; c < model.cfg.d; ++c) lmtr(segs.prop_begin() + r, c) = p_rows(r, c);

  Var topo_final = infill_segment(model, lmtr, segs, ot::Modality::Topology, rng);
  auto decoded = model.tokenizer->decode_topology(topo_final);

  geom::Topology topo;
  topo.lattice = decoded.lattice_ok
                     ? decoded.lattice
                     : geom::Mat3{{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
  topo.coords.resize(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r)
    topo.coords[static_cast<std::size_t>(r)] = {decoded.coords.value()(r, 0),
                                                decoded.coords.value()(r, 1),
                                                decoded.coords.value()(r, 2)};
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (decoded.adj_binary(i, j) != 0.0) topo.edges.emplace_back(i, j);
  out.topology = std::move(topo);
  return out;
}

std::vector<double> task_predict(Model& model, const geom::Topology& topology,
                                 double density, Rng& rng) {
  topology.validate();
  if (topology.node_count() > model.cfg.n_max)
    throw ContractError("task_predict: topology exceeds n_max capacity");
  if (density <= 0.0 || density > 1.0)
    throw ContractError("task_predict: density must lie in (0, 1]");

  const Tensor cb = model.tokenizer->codebook().value();
  const auto topo_idx = tok::Tokenizer::nearest_prototypes(
      model.tokenizer->encode_topology(topology.coords_tensor(),
                                       topology.adjacency_tensor()).value(), cb);
  const auto rho_idx = tok::Tokenizer::nearest_prototypes(
      model.tokenizer->encode_density(model.norm.normalize_density(density)).value(), cb);

  std::vector<std::pair<ot::Modality, int>> known{{ot::Modality::Density, rho_idx[0]}};
  for (int idx : topo_idx) known.emplace_back(ot::Modality::Topology, idx);
  const auto dist = conditional_or_uniform(model, known, ot::Modality::Property, nullptr);
  const auto p_init = sample_indices(dist, model.cfg.m, rng);

  tok::LmtrSegments segs;
  segs.n = topology.node_count();
  segs.m = model.cfg.m;
  Tensor lmtr({segs.h(), model.cfg.d});
  const Tensor topo_rows = prototype_rows(model, topo_idx);
  const Tensor rho_row = prototype_rows(model, rho_idx);
  const Tensor p_rows = prototype_rows(model, p_init);
  for (int r = 0; r < segs.n; ++r)
    for (int c = 0; c < model.cfg.d; ++c) lmtr(r, c) = topo_rows(r, c);
  for (int c = 0; c < model.cfg.d; ++c) lmtr(segs.density_row(), c) = rho_row(0, c);
  for (int r = 0; r < segs.m; ++r)
    for (int c = 0; c < model.cfg.d; ++c) lmtr(segs.prop_begin() + r, c) = p_rows(r, c);

  Var p_final = infill_segment(model, lmtr, segs, ot::Modality::Property, rng);
  const Tensor decoded = model.tokenizer->decode_property(p_final).value();
  std::vector<double> p_norm(decoded.data.begin(), decoded.data.end());
  return model.norm.denormalize_properties(p_norm);
}

double task_confirm(Model& model, const geom::Topology& topology,
                    const std::vector<double>& properties, Rng& rng) {
  topology.validate();
  if (topology.node_count() > model.cfg.n_max)
    throw ContractError("task_confirm: topology exceeds n_max capacity");
  if (static_cast<int>(properties.size()) != model.cfg.m)
    throw ContractError("task_confirm: property vector length mismatch");

  const Tensor cb = model.tokenizer->codebook().value();
  const auto topo_idx = tok::Tokenizer::nearest_prototypes(
      model.tokenizer->encode_topology(topology.coords_tensor(),
                                       topology.adjacency_tensor()).value(), cb);
  const auto p_idx = tok::Tokenizer::nearest_prototypes(
      model.tokenizer->encode_property(model.norm.normalize_properties(properties))
          .value(), cb);

  std::vector<std::pair<ot::Modality, int>> known;
  for (int idx : topo_idx) known.emplace_back(ot::Modality::Topology, idx);
  for (int idx : p_idx) known.emplace_back(ot::Modality::Property, idx);
  const auto dist = conditional_or_uniform(model, known, ot::Modality::Density, nullptr);
  const auto rho_init = sample_indices(dist, 1, rng);

  tok::LmtrSegments segs;
  segs.n = topology.node_count();
  segs.m = model.cfg.m;
  Tensor lmtr({segs.h(), model.cfg.d});
  const Tensor topo_rows = prototype_rows(model, topo_idx);
  const Tensor rho_row = prototype_rows(model, rho_init);
  const Tensor p_rows = prototype_rows(model, p_idx);
  for (int r = 0; r < segs.n; ++r)
    for (int c = 0; c < model.cfg.d; ++c) lmtr(r, c) = topo_rows(r, c);
  for (int c = 0; c < model.cfg.d; ++c) lmtr(segs.density_row(), c) = rho_row(0, c);
  for (int r = 0; r < segs.m; ++r)
    for (int c = 0; c < model.cfg.d; ++c) lmtr(segs.prop_begin() + r, c) = p_rows(r, c);

  Var rho_final = infill_segment(model, lmtr, segs, ot::Modality::Density, rng);
  const double rho_n = model.tokenizer->decode_density(rho_final).value().item();
  return model.norm.denormalize_density(rho_n);
}

// ---- evaluation ----

metrics::EvalReport evaluate(Model& model, const data::Dataset& test_split, Rng& rng) {
  if (test_split.samples.empty()) throw ContractError("evaluate: empty dataset");
  metrics::EvalReport report;
  std::vector<std::vector<double>> p_pred, p_gt;
  std::vector<double> rho_pred, rho_gt;
  for (const auto& sample : test_split.samples) {
    const auto& mtr = sample.mtr;
    auto gen = task_generate(model, mtr.density, mtr.properties, rng);
    try {
      const double fs = metrics::f_sym(gen.topology.coords);
      const double fp = metrics::f_per(gen.topology.coords);
      report.per_sample_f_sym.push_back(fs);
      report.per_sample_f_per.push_back(fp);
      report.per_sample_f_qua.push_back(metrics::f_qua(fs, fp));
    } catch (const MetricInapplicable&) {
      ++report.inapplicable_count;
    }
    report.per_sample_f_cond.push_back(
        metrics::f_cond(gen.topology.coords, mtr.topology.coords));

    p_pred.push_back(task_predict(model, mtr.topology, mtr.density, rng));
    p_gt.push_back(mtr.properties);
    rho_pred.push_back(task_confirm(model, mtr.topology, mtr.properties, rng));
    rho_gt.push_back(mtr.density);
  }
  report.nrmse_pp = metrics::nrmse(p_pred, p_gt, metrics::NrmseMode::PropertyPrediction);
  report.nrmse_cc = metrics::nrmse_scalar(rho_pred, rho_gt);
  report.finalize();
  return report;
}

}  // namespace umate::pipe
