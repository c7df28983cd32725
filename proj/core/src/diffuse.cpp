#include "umate/diffuse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace umate::diff {

using nd::Tensor;
using nd::Var;

// ---- schedule ----

DiffusionSchedule DiffusionSchedule::geometric(int levels, double sigma_hi,
                                               double sigma_lo, int steps_per_level,
                                               double eps_step) {
  if (levels < 1 || sigma_hi <= sigma_lo || sigma_lo <= 0.0)
    throw ContractError("DiffusionSchedule: invalid geometric ladder");
  DiffusionSchedule s;
  s.steps_per_level = steps_per_level;
  s.eps_step = eps_step;
  s.sigmas.resize(static_cast<std::size_t>(levels));
  if (levels == 1) {
    s.sigmas[0] = sigma_hi;
  } else {
    const double r = std::pow(sigma_lo / sigma_hi, 1.0 / (levels - 1));
    for (int i = 0; i < levels; ++i)
      s.sigmas[static_cast<std::size_t>(i)] = sigma_hi * std::pow(r, i);
  }
  s.validate();
  return s;
}

void DiffusionSchedule::validate() const {
  if (sigmas.empty() || steps_per_level < 1)
    throw ContractError("DiffusionSchedule: empty ladder");
  if (eps_step < 0.0) throw ContractError("DiffusionSchedule: negative step size");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (sigmas[i] <= 0.0) throw ContractError("DiffusionSchedule: non-positive sigma");
    if (i > 0 && sigmas[i] >= sigmas[i - 1])
      throw ContractError("DiffusionSchedule: sigmas must strictly decrease");
  }
}

double DiffusionSchedule::sigma(int step) const {
  if (step < 0 || step >= total_steps())
    throw ContractError("DiffusionSchedule: step out of range");
  return sigmas[static_cast<std::size_t>(step / steps_per_level)];
}

double DiffusionSchedule::alpha(int step) const {
  const double s = sigma(step);
  const double s_last = sigmas.back();
  return eps_step * (s * s) / (s_last * s_last);
}

// ---- mask ----

MaskSpec MaskSpec::all_unknown(int h) {
  MaskSpec m;
  m.h = h;
  m.unknown.assign(static_cast<std::size_t>(h), true);
  return m;
}

MaskSpec MaskSpec::all_known(int h) {
  MaskSpec m;
  m.h = h;
  m.unknown.assign(static_cast<std::size_t>(h), false);
  return m;
}

MaskSpec MaskSpec::segment(const tok::LmtrSegments& segs, ot::Modality which) {
  MaskSpec m = all_known(segs.h());
  int lo = 0, hi = 0;
  switch (which) {
    case ot::Modality::Topology: lo = segs.topo_begin(); hi = lo + segs.n; break;
    case ot::Modality::Density: lo = segs.density_row(); hi = lo + 1; break;
    default: lo = segs.prop_begin(); hi = lo + segs.m; break;
  }
  for (int r = lo; r < hi; ++r) m.unknown[static_cast<std::size_t>(r)] = true;
  return m;
}

void MaskSpec::validate() const {
  if (h < 1 || unknown.size() != static_cast<std::size_t>(h))
    throw ContractError("MaskSpec: mask length must equal row count");
}

std::vector<int> MaskSpec::unknown_rows() const {
  std::vector<int> rows;
  for (int r = 0; r < h; ++r)
    if (unknown[static_cast<std::size_t>(r)]) rows.push_back(r);
  return rows;
}

// ---- backbone ----

namespace {

Tensor glorot(int fan_in, int fan_out, Rng& rng) {
  const double s = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  return Tensor::randn({fan_in, fan_out}, rng, s);
}

}  // namespace

Backbone::Backbone(nd::ParamStore& store, const BackboneConfig& cfg, Rng& rng)
    : cfg_(cfg), store_(&store) {
  if (cfg.d < 1 || cfg.layers < 1 || cfg.heads < 1 || cfg.d % cfg.heads != 0 ||
      cfg.max_rows < 1)
    throw ContractError("BackboneConfig: invalid dimensions");
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "bb.layer" + std::to_string(l);
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
  if (cfg.positional)
    store.add("bb.pos", Tensor::randn({cfg.max_rows, cfg.d}, rng, 0.02));
  if (cfg.segment_embeddings)
    store.add("bb.seg", Tensor::randn({3, cfg.d}, rng, 0.02));
}

Var Backbone::layer(const Var& x, const std::string& prefix) const {
  auto p = [&](const std::string& name) { return *store_->find(prefix + name); };
  const int dh = cfg_.d / cfg_.heads;

  Var h = nd::layer_norm(x, p(".ln1.g"), p(".ln1.b"));
  Var q = nd::matmul(h, p(".Wq"));
  Var k = nd::matmul(h, p(".Wk"));
  Var v = nd::matmul(h, p(".Wv"));
  std::vector<Var> head_outs;
  head_outs.reserve(static_cast<std::size_t>(cfg_.heads));
  for (int hd = 0; hd < cfg_.heads; ++hd) {
    const int c0 = hd * dh, c1 = (hd + 1) * dh;
    head_outs.push_back(nd::attention(nd::slice_cols(q, c0, c1),
                                      nd::slice_cols(k, c0, c1),
                                      nd::slice_cols(v, c0, c1)));
  }
  Var y = nd::add(x, nd::matmul(nd::concat_cols(head_outs), p(".Wo")));

  Var f = nd::layer_norm(y, p(".ln2.g"), p(".ln2.b"));
  f = nd::add_rowvec(nd::matmul(f, p(".ff.W1")), p(".ff.b1"));
  f = nd::add_rowvec(nd::matmul(nd::sigmoid(f), p(".ff.W2")), p(".ff.b2"));
  return nd::add(y, f);
}

Var Backbone::forward(const Var& tokens, const tok::LmtrSegments* segs) const {
  const int h = tokens.value().rows();
  if (tokens.value().cols() != cfg_.d)
    throw ContractError("Backbone: token width does not match model width");
  Var x = tokens;
  if (cfg_.positional) {
    if (h > cfg_.max_rows)
      throw ContractError("Backbone: more rows than the positional table covers");
    // Index positions within each segment when the layout is known: the
    // topology row count varies per sample, so absolute indices would give
    // "property row j" a different encoding in every sample and the model
    // could never learn a stable identity for it.
    std::vector<int> idx(static_cast<std::size_t>(h));
    if (segs) {
      for (int r = 0; r < segs->n; ++r) idx[static_cast<std::size_t>(r)] = r;
      idx[static_cast<std::size_t>(segs->density_row())] = 0;
      for (int r = segs->prop_begin(); r < h; ++r)
        idx[static_cast<std::size_t>(r)] = r - segs->prop_begin();
    } else {
      std::iota(idx.begin(), idx.end(), 0);
    }
    x = nd::add(x, nd::gather_rows(*store_->find("bb.pos"), idx));
  }
  if (cfg_.segment_embeddings && segs) {
    if (segs->h() != h) throw ContractError("Backbone: segment layout mismatch");
    std::vector<int> ids(static_cast<std::size_t>(h), 0);
    ids[static_cast<std::size_t>(segs->density_row())] = 1;
    for (int r = segs->prop_begin(); r < h; ++r) ids[static_cast<std::size_t>(r)] = 2;
    x = nd::add(x, nd::gather_rows(*store_->find("bb.seg"), ids));
  }
  for (int l = 0; l < cfg_.layers; ++l)
    x = layer(x, "bb.layer" + std::to_string(l));
  return x;
}

// ---- frozen processing ----

namespace {

// Rows at I_un come from `update`, rows at I_kn are copied from `base`
// bit-exactly (no arithmetic touches them).
Var masked_merge(const Var& base, const Var& update, const MaskSpec& mask) {
  const Tensor& b = base.value();
  Tensor out = b;
  const int d = b.cols();
  for (int r = 0; r < mask.h; ++r)
    if (mask.is_unknown(r))
      for (int c = 0; c < d; ++c) out(r, c) = update.value()(r, c);
  return nd::make_op(std::move(out), {base, update}, [mask, d](nd::Node& ndn) {
    nd::Node* pb = ndn.parents[0].get();
    nd::Node* pu = ndn.parents[1].get();
    if (pb->requires_grad) pb->ensure_grad();
    if (pu->requires_grad) pu->ensure_grad();
    for (int r = 0; r < mask.h; ++r) {
      nd::Node* dst = mask.is_unknown(r) ? pu : pb;
      if (!dst->requires_grad) continue;
      for (int c = 0; c < d; ++c) dst->grad(r, c) += ndn.grad(r, c);
    }
  }, "masked_merge");
}

// One Langevin update restricted to I_un: out = prev + (alpha/2) phi + noise
// there, prev copied bit-exactly elsewhere. `noise` is pre-scaled by
// sqrt(alpha) and zero outside I_un.
Var masked_update(const Var& prev, const Var& phi, const Tensor& noise, double alpha,
                  const MaskSpec& mask) {
  const Tensor& p = prev.value();
  Tensor out = p;
  const int d = p.cols();
  for (int r = 0; r < mask.h; ++r)
    if (mask.is_unknown(r))
      for (int c = 0; c < d; ++c)
        out(r, c) = p(r, c) + 0.5 * alpha * phi.value()(r, c) + noise(r, c);
  return nd::make_op(std::move(out), {prev, phi},
                     [mask, d, alpha](nd::Node& ndn) {
    nd::Node* pp = ndn.parents[0].get();
    nd::Node* pf = ndn.parents[1].get();
    if (pp->requires_grad) pp->ensure_grad();
    if (pf->requires_grad) pf->ensure_grad();
    for (int r = 0; r < mask.h; ++r)
      for (int c = 0; c < d; ++c) {
        const double g = ndn.grad(r, c);
        if (pp->requires_grad) pp->grad(r, c) += g;
        if (pf->requires_grad && mask.is_unknown(r))
          pf->grad(r, c) += 0.5 * alpha * g;
      }
  }, "masked_update");
}

}  // namespace

Var frozen_forward(const Var& tokens, const MaskSpec& mask, const Backbone& backbone,
                   const tok::LmtrSegments* segs) {
  mask.validate();
  if (tokens.value().rows() != mask.h)
    throw ContractError("frozen_forward: mask/row-count mismatch");
  if (mask.unknown_rows().empty()) return masked_merge(tokens, tokens, mask);
  return masked_merge(tokens, backbone.forward(tokens, segs), mask);
}

Var denoise_chain(const Var& start, const MaskSpec& mask,
                  const DiffusionSchedule& schedule, const Backbone& backbone,
                  Rng& rng, const tok::LmtrSegments* segs, const DenoiseOptions& opt) {
  schedule.validate();
  mask.validate();
  if (start.value().rows() != mask.h)
    throw ContractError("denoise_chain: mask/row-count mismatch");
  const int h = mask.h, d = start.value().cols();
  const bool nothing_to_do = mask.unknown_rows().empty();

  Var state = start;
  for (int t = 0; t < schedule.total_steps(); ++t) {
    const double alpha = schedule.alpha(t);
    Tensor noise({h, d});
    // Draw in row order so the consumed stream is independent of the mask
    // layout for a fixed (h, d).
    const double scale = std::sqrt(alpha);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < d; ++c) {
        const double z = opt.zero_noise ? 0.0 : rand_normal(rng);
        const bool active = opt.literal_update || mask.is_unknown(r);
        noise(r, c) = active ? scale * z : 0.0;
      }
    if (nothing_to_do && !opt.literal_update) continue;
    try {
      Var phi = frozen_forward(state, mask, backbone, segs);
      if (opt.literal_update) {
        state = nd::add(nd::add(state, nd::scale(phi, 0.5 * alpha)),
                        Var::constant(noise));
      } else if (alpha == 0.0 && opt.zero_noise) {
        // Degenerate step: nothing moves, keep the state bit-exact.
      } else {
        state = masked_update(state, phi, noise, alpha, mask);
      }
    } catch (const NumericError& e) {
      throw NumericError("denoise_chain: step " + std::to_string(t) + ": " + e.what());
    }
    if (!state.value().all_finite())
      throw NumericError("denoise_chain: non-finite state at step " + std::to_string(t));
  }
  return state;
}

NoiseResult noise_random_modality(const Var& lmtr, const tok::LmtrSegments& segs,
                                  double sigma, Rng& rng,
                                  const Tensor* resample_pool, double resample_prob) {
  if (sigma <= 0.0) throw ContractError("noise_random_modality: sigma must be positive");
  if (lmtr.value().rows() != segs.h())
    throw ContractError("noise_random_modality: segment layout mismatch");
  if (resample_prob < 0.0 || resample_prob > 1.0)
    throw ContractError("noise_random_modality: resample_prob outside [0, 1]");
  if (resample_prob > 0.0 && resample_pool == nullptr)
    throw ContractError("noise_random_modality: resample_prob without a pool");
  const auto which = static_cast<ot::Modality>(rand_int(rng, 0, 2));
  NoiseResult out;
  out.chosen = which;
  out.mask = MaskSpec::segment(segs, which);

  const int h = segs.h(), d = lmtr.value().cols();
  const bool resample =
      resample_prob > 0.0 && rand_uniform(rng) < resample_prob;
  Tensor noised = lmtr.value();
  for (int r = 0; r < h; ++r) {
    if (!out.mask.is_unknown(r)) continue;
    if (resample) {
      if (resample_pool->cols() != d)
        throw ContractError("noise_random_modality: pool width mismatch");
      const int k = rand_int(rng, 0, resample_pool->rows() - 1);
      for (int c = 0; c < d; ++c) noised(r, c) = (*resample_pool)(k, c);
    } else {
      for (int c = 0; c < d; ++c) noised(r, c) += rand_normal(rng, 0.0, sigma);
    }
  }
  const MaskSpec mask = out.mask;
  out.noised = nd::make_op(std::move(noised), {lmtr},
                           [mask, d, resample](nd::Node& ndn) {
    nd::Node* p = ndn.parents[0].get();
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int r = 0; r < mask.h; ++r) {
      // Rows overwritten by pool prototypes no longer depend on the input.
      if (resample && mask.is_unknown(r)) continue;
      for (int c = 0; c < d; ++c) p->grad(r, c) += ndn.grad(r, c);
    }
  }, "segment_noise");
  return out;
}

Var generation_loss(const Var& rounded, const Var& denoised) {
  if (!rounded.value().same_shape(denoised.value()))
    throw ContractError("generation_loss: shape mismatch");
  return nd::l2_norm(nd::sub(rounded, denoised));
}

Var total_loss(const Var& align_loss, const Var& gen_loss, double lambda_align,
               double lambda_gen) {
  if (lambda_align < 0.0 || lambda_gen < 0.0)
    throw ContractError("total_loss: negative weight");
  return nd::add(nd::scale(align_loss, lambda_align), nd::scale(gen_loss, lambda_gen));
}

}  // namespace umate::diff
