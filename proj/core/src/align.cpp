#include "umate/align.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace umate::ot {

using nd::Tensor;
using nd::Var;

const std::vector<double>& Marginals::of(Modality m) const {
  switch (m) {
    case Modality::Topology: return topology;
    case Modality::Density: return density;
    default: return property;
  }
}

void Marginals::validate() const {
  const std::size_t k = topology.size();
  if (k == 0 || density.size() != k || property.size() != k)
    throw ContractError("Marginals: three kappa-length vectors required");
  for (const auto* v : {&topology, &density, &property}) {
    double s = 0.0;
    for (double x : *v) {
      if (x < 0.0) throw ContractError("Marginals: negative entry");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-12)
      throw ContractError("Marginals: entries must sum to 1");
  }
}

namespace {

std::vector<double> histogram(const std::vector<std::vector<int>>& batches, int kappa) {
  std::vector<double> f(static_cast<std::size_t>(kappa), 0.0);
  long total = 0;
  for (const auto& batch : batches)
    for (int idx : batch) {
      if (idx < 0 || idx >= kappa)
        throw ContractError("token_frequencies: index out of range");
      f[static_cast<std::size_t>(idx)] += 1.0;
      ++total;
    }
  if (total == 0) throw ContractError("token_frequencies: empty batch");
  for (double& x : f) x /= static_cast<double>(total);
  // Floor unused entries, then renormalize.
  constexpr double kFloor = 1e-9;
  double s = 0.0;
  for (double& x : f) {
    if (x == 0.0) x = kFloor;
    s += x;
  }
  for (double& x : f) x /= s;
  return f;
}

inline std::size_t idx3(int i, int j, int k, int kappa) {
  return static_cast<std::size_t>((i * kappa + j) * kappa + k);
}

}  // namespace

Marginals token_frequencies(const std::vector<std::vector<int>>& topology_batches,
                            const std::vector<std::vector<int>>& density_batches,
                            const std::vector<std::vector<int>>& property_batches,
                            int kappa) {
  Marginals f;
  f.topology = histogram(topology_batches, kappa);
  f.density = histogram(density_batches, kappa);
  f.property = histogram(property_batches, kappa);
  return f;
}

// ---- cost tensor ----

namespace {

std::vector<double> pairwise_cosine(const Tensor& codebook) {
  const int k = codebook.rows(), d = codebook.cols();
  std::vector<double> norms(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += codebook(i, j) * codebook(i, j);
    if (s == 0.0) throw ContractError("cost_kernel: zero-norm prototype");
    norms[static_cast<std::size_t>(i)] = std::sqrt(s);
  }
  std::vector<double> sim(static_cast<std::size_t>(k) * static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      double dot = 0.0;
      for (int t = 0; t < d; ++t) dot += codebook(i, t) * codebook(j, t);
      sim[static_cast<std::size_t>(i * k + j)] =
          dot / (norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)]);
    }
  return sim;
}

std::vector<double> cost_from_sim(const std::vector<double>& sim, int kappa, CostMode mode) {
  std::vector<double> cost(static_cast<std::size_t>(kappa) * kappa * kappa);
  for (int i = 0; i < kappa; ++i)
    for (int j = 0; j < kappa; ++j) {
      const double sij = sim[static_cast<std::size_t>(i * kappa + j)];
      for (int k = 0; k < kappa; ++k) {
        const double s = sij + sim[static_cast<std::size_t>(j * kappa + k)] +
                         sim[static_cast<std::size_t>(i * kappa + k)];
        cost[idx3(i, j, k, kappa)] = mode == CostMode::Literal ? s : 3.0 - s;
      }
    }
  return cost;
}

}  // namespace

CostKernel cost_kernel(const Tensor& codebook, double epsilon, CostMode mode) {
  if (epsilon <= 0.0) throw ContractError("cost_kernel: epsilon must be positive");
  CostKernel ck;
  ck.kappa = codebook.rows();
  ck.epsilon = epsilon;
  ck.cost = cost_from_sim(pairwise_cosine(codebook), ck.kappa, mode);
  ck.shift = *std::min_element(ck.cost.begin(), ck.cost.end());
  ck.kernel.resize(ck.cost.size());
  for (std::size_t t = 0; t < ck.cost.size(); ++t)
    ck.kernel[t] = std::exp(-(ck.cost[t] - ck.shift) / epsilon);
  return ck;
}

// ---- value-phase iteration ----

namespace {

struct Scalings {
  std::vector<double> u, v, w;
};

// One cyclic sweep; throws NumericError if a scaling becomes non-finite.
void sweep(const std::vector<double>& kernel, int kappa, const Marginals& f,
           Scalings& s) {
  auto contract = [&](int axis, const std::vector<double>& a,
                      const std::vector<double>& b, std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < kappa; ++i)
      for (int j = 0; j < kappa; ++j) {
        const double* row = &kernel[idx3(i, j, 0, kappa)];
        double acc = 0.0;
        switch (axis) {
          case 0:
            for (int k = 0; k < kappa; ++k) acc += row[k] * b[static_cast<std::size_t>(k)];
            out[static_cast<std::size_t>(i)] += acc * a[static_cast<std::size_t>(j)];
            break;
          case 1:
            for (int k = 0; k < kappa; ++k) acc += row[k] * b[static_cast<std::size_t>(k)];
            out[static_cast<std::size_t>(j)] += acc * a[static_cast<std::size_t>(i)];
            break;
          default:
            for (int k = 0; k < kappa; ++k)
              out[static_cast<std::size_t>(k)] += row[k] * a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(j)];
            break;
        }
      }
  };
  std::vector<double> den(static_cast<std::size_t>(kappa));
  contract(0, s.v, s.w, den);
  for (int i = 0; i < kappa; ++i) s.u[static_cast<std::size_t>(i)] = f.topology[static_cast<std::size_t>(i)] / den[static_cast<std::size_t>(i)];
  contract(1, s.u, s.w, den);
  for (int j = 0; j < kappa; ++j) s.v[static_cast<std::size_t>(j)] = f.density[static_cast<std::size_t>(j)] / den[static_cast<std::size_t>(j)];
  contract(2, s.u, s.v, den);
  for (int k = 0; k < kappa; ++k) s.w[static_cast<std::size_t>(k)] = f.property[static_cast<std::size_t>(k)] / den[static_cast<std::size_t>(k)];
  for (const auto* vec : {&s.u, &s.v, &s.w})
    for (double x : *vec)
      if (!std::isfinite(x))
        throw NumericError(
            "tripartite_sinkhorn: non-finite scaling; epsilon is too small "
            "for this cost range, increase it");
}

double violation(const std::vector<double>& kernel, int kappa, const Marginals& f,
                 const Scalings& s) {
  double worst = 0.0;
  std::vector<double> marg(static_cast<std::size_t>(kappa), 0.0);
  // topology marginal
  for (int i = 0; i < kappa; ++i) {
    double acc = 0.0;
    for (int j = 0; j < kappa; ++j) {
      const double* row = &kernel[idx3(i, j, 0, kappa)];
      double inner = 0.0;
      for (int k = 0; k < kappa; ++k) inner += row[k] * s.w[static_cast<std::size_t>(k)];
      acc += inner * s.v[static_cast<std::size_t>(j)];
    }
    worst = std::max(worst, std::abs(acc * s.u[static_cast<std::size_t>(i)] - f.topology[static_cast<std::size_t>(i)]));
  }
  // density marginal
  std::fill(marg.begin(), marg.end(), 0.0);
  for (int i = 0; i < kappa; ++i)
    for (int j = 0; j < kappa; ++j) {
      const double* row = &kernel[idx3(i, j, 0, kappa)];
      double inner = 0.0;
      for (int k = 0; k < kappa; ++k) inner += row[k] * s.w[static_cast<std::size_t>(k)];
      marg[static_cast<std::size_t>(j)] += inner * s.u[static_cast<std::size_t>(i)];
    }
  for (int j = 0; j < kappa; ++j)
    worst = std::max(worst, std::abs(marg[static_cast<std::size_t>(j)] * s.v[static_cast<std::size_t>(j)] - f.density[static_cast<std::size_t>(j)]));
  // property marginal
  std::fill(marg.begin(), marg.end(), 0.0);
  for (int i = 0; i < kappa; ++i)
    for (int j = 0; j < kappa; ++j) {
      const double* row = &kernel[idx3(i, j, 0, kappa)];
      const double uv = s.u[static_cast<std::size_t>(i)] * s.v[static_cast<std::size_t>(j)];
      for (int k = 0; k < kappa; ++k) marg[static_cast<std::size_t>(k)] += row[k] * uv;
    }
  for (int k = 0; k < kappa; ++k)
    worst = std::max(worst, std::abs(marg[static_cast<std::size_t>(k)] * s.w[static_cast<std::size_t>(k)] - f.property[static_cast<std::size_t>(k)]));
  return worst;
}

}  // namespace

std::vector<double> TransportPlan::marginal(Modality m) const {
  std::vector<double> out(static_cast<std::size_t>(kappa), 0.0);
  for (int i = 0; i < kappa; ++i)
    for (int j = 0; j < kappa; ++j)
      for (int k = 0; k < kappa; ++k) {
        const double p = plan[idx3(i, j, k, kappa)];
        const int t = m == Modality::Topology ? i : (m == Modality::Density ? j : k);
        out[static_cast<std::size_t>(t)] += p;
      }
  return out;
}

double TransportPlan::max_marginal_violation(const Marginals& f) const {
  double worst = 0.0;
  for (Modality m : {Modality::Topology, Modality::Density, Modality::Property}) {
    const auto marg = marginal(m);
    const auto& target = f.of(m);
    for (int i = 0; i < kappa; ++i)
      worst = std::max(worst, std::abs(marg[static_cast<std::size_t>(i)] - target[static_cast<std::size_t>(i)]));
  }
  return worst;
}

TransportPlan tripartite_sinkhorn(const Marginals& f, const CostKernel& ck,
                                  const SinkhornOptions& opt) {
  f.validate();
  if (f.kappa() != ck.kappa)
    throw ContractError("tripartite_sinkhorn: marginal/kernel size mismatch");
  const int kappa = ck.kappa;
  Scalings s{std::vector<double>(static_cast<std::size_t>(kappa), 1.0 / kappa),
             std::vector<double>(static_cast<std::size_t>(kappa), 1.0 / kappa),
             std::vector<double>(static_cast<std::size_t>(kappa), 1.0 / kappa)};
  TransportPlan out;
  out.kappa = kappa;
  out.epsilon = ck.epsilon;
  out.tol = opt.tol;
  for (int it = 0; it < opt.max_iter; ++it) {
    sweep(ck.kernel, kappa, f, s);
    out.iterations = it + 1;
    if (opt.tol > 0.0 && violation(ck.kernel, kappa, f, s) < opt.tol) {
      out.converged = true;
      break;
    }
  }
  out.plan.resize(ck.kernel.size());
  out.distance = 0.0;
  for (int i = 0; i < kappa; ++i)
    for (int j = 0; j < kappa; ++j)
      for (int k = 0; k < kappa; ++k) {
        const std::size_t t = idx3(i, j, k, kappa);
        out.plan[t] = s.u[static_cast<std::size_t>(i)] * s.v[static_cast<std::size_t>(j)] *
                      s.w[static_cast<std::size_t>(k)] * ck.kernel[t];
        out.distance += out.plan[t] * ck.cost[t];
      }
  return out;
}

// ---- differentiable path ----

namespace {

Var cost3_op(const Var& sim, int kappa, CostMode mode) {
  const auto& S = sim.value();
  Tensor C({kappa, kappa, kappa});
  const double sign = mode == CostMode::Literal ? 1.0 : -1.0;
  for (int i = 0; i < kappa; ++i)
    for (int j = 0; j < kappa; ++j) {
      const double sij = S(i, j);
      for (int k = 0; k < kappa; ++k) {
        const double s = sij + S(j, k) + S(i, k);
        C.data[idx3(i, j, k, kappa)] = mode == CostMode::Literal ? s : 3.0 - s;
      }
    }
  return nd::make_op(std::move(C), {sim}, [kappa, sign](nd::Node& ndn) {
    nd::Node* ps = ndn.parents[0].get();
    ps->ensure_grad();
    for (int i = 0; i < kappa; ++i)
      for (int j = 0; j < kappa; ++j)
        for (int k = 0; k < kappa; ++k) {
          const double g = sign * ndn.grad.data[idx3(i, j, k, kappa)];
          ps->grad(i, j) += g;
          ps->grad(j, k) += g;
          ps->grad(i, k) += g;
        }
  }, "cost3");
}

Var gibbs_op(const Var& cost, double epsilon, double shift) {
  Tensor M(cost.value().shape);
  for (int t = 0; t < M.size(); ++t)
    M[t] = std::exp(-(cost.value()[t] - shift) / epsilon);
  return nd::make_op(std::move(M), {cost}, [epsilon](nd::Node& ndn) {
    nd::Node* pc = ndn.parents[0].get();
    pc->ensure_grad();
    for (int t = 0; t < ndn.value.size(); ++t)
      pc->grad[t] -= ndn.grad[t] * ndn.value[t] / epsilon;
  }, "gibbs_kernel");
}

// out over `axis` of sum_{other two} M * a * b, where a indexes the first
// remaining axis and b the second.
Var contract3_op(const Var& kernel, const Var& a, const Var& b, int axis, int kappa) {
  const auto& M = kernel.value();
  const auto& A = a.value();
  const auto& B = b.value();
  Tensor out({kappa});
  for (int i = 0; i < kappa; ++i)
    for (int j = 0; j < kappa; ++j) {
      const double* row = &M.data[idx3(i, j, 0, kappa)];
      for (int k = 0; k < kappa; ++k) {
        const double m = row[k];
        switch (axis) {
          case 0: out[i] += m * A[j] * B[k]; break;
          case 1: out[j] += m * A[i] * B[k]; break;
          default: out[k] += m * A[i] * B[j]; break;
        }
      }
    }
  return nd::make_op(std::move(out), {kernel, a, b}, [axis, kappa](nd::Node& ndn) {
    nd::Node* pm = ndn.parents[0].get();
    nd::Node* pa = ndn.parents[1].get();
    nd::Node* pb = ndn.parents[2].get();
    if (pm->requires_grad) pm->ensure_grad();
    if (pa->requires_grad) pa->ensure_grad();
    if (pb->requires_grad) pb->ensure_grad();
    for (int i = 0; i < kappa; ++i)
      for (int j = 0; j < kappa; ++j)
        for (int k = 0; k < kappa; ++k) {
          const std::size_t t = idx3(i, j, k, kappa);
          int oi, ai, bi;
          switch (axis) {
            case 0: oi = i; ai = j; bi = k; break;
            case 1: oi = j; ai = i; bi = k; break;
            default: oi = k; ai = i; bi = j; break;
          }
          const double g = ndn.grad[oi];
          if (g == 0.0) continue;
          const double m = pm->value[static_cast<int>(t)];
          if (pm->requires_grad)
            pm->grad[static_cast<int>(t)] += g * pa->value[ai] * pb->value[bi];
          if (pa->requires_grad) pa->grad[ai] += g * m * pb->value[bi];
          if (pb->requires_grad) pb->grad[bi] += g * m * pa->value[ai];
        }
  }, "contract3");
}

Var plan_cost_op(const Var& cost, const Var& kernel, const Var& u, const Var& v,
                 const Var& w, int kappa) {
  double s = 0.0;
  for (int i = 0; i < kappa; ++i)
    for (int j = 0; j < kappa; ++j)
      for (int k = 0; k < kappa; ++k) {
        const std::size_t t = idx3(i, j, k, kappa);
        s += cost.value()[static_cast<int>(t)] * kernel.value()[static_cast<int>(t)] *
             u.value()[i] * v.value()[j] * w.value()[k];
      }
  return nd::make_op(Tensor::scalar(s), {cost, kernel, u, v, w}, [kappa](nd::Node& ndn) {
    nd::Node* pc = ndn.parents[0].get();
    nd::Node* pm = ndn.parents[1].get();
    nd::Node* pu = ndn.parents[2].get();
    nd::Node* pv = ndn.parents[3].get();
    nd::Node* pw = ndn.parents[4].get();
    for (nd::Node* p : {pc, pm, pu, pv, pw})
      if (p->requires_grad) p->ensure_grad();
    const double g = ndn.grad[0];
    for (int i = 0; i < kappa; ++i)
      for (int j = 0; j < kappa; ++j)
        for (int k = 0; k < kappa; ++k) {
          const std::size_t t = idx3(i, j, k, kappa);
          const double c = pc->value[static_cast<int>(t)];
          const double m = pm->value[static_cast<int>(t)];
          const double uvw = pu->value[i] * pv->value[j] * pw->value[k];
          if (pc->requires_grad) pc->grad[static_cast<int>(t)] += g * m * uvw;
          if (pm->requires_grad) pm->grad[static_cast<int>(t)] += g * c * uvw;
          if (pu->requires_grad) pu->grad[i] += g * c * m * pv->value[j] * pw->value[k];
          if (pv->requires_grad) pv->grad[j] += g * c * m * pu->value[i] * pw->value[k];
          if (pw->requires_grad) pw->grad[k] += g * c * m * pu->value[i] * pv->value[j];
        }
  }, "plan_cost");
}

}  // namespace

Var transport_distance(const Var& codebook, const Marginals& f,
                       const SinkhornOptions& opt, TransportPlan* plan_out) {
  f.validate();
  const int kappa = codebook.value().rows();
  if (f.kappa() != kappa)
    throw ContractError("transport_distance: marginal/codebook size mismatch");
  if (opt.epsilon <= 0.0) throw ContractError("transport_distance: epsilon must be positive");

  Var sim = nd::row_cosine_matrix(codebook);
  Var cost = cost3_op(sim, kappa, opt.cost_mode);
  const double shift =
      *std::min_element(cost.value().data.begin(), cost.value().data.end());
  Var kernel = gibbs_op(cost, opt.epsilon, shift);

  const int tail = std::clamp(opt.unroll_tail, 0, opt.max_iter);
  const int pre = opt.max_iter - tail;

  Scalings s{std::vector<double>(static_cast<std::size_t>(kappa), 1.0 / kappa),
             std::vector<double>(static_cast<std::size_t>(kappa), 1.0 / kappa),
             std::vector<double>(static_cast<std::size_t>(kappa), 1.0 / kappa)};
  int iterations = 0;
  bool converged = false;
  // Value-only sweeps first; only the tail is recorded on the tape.
  std::vector<double> kernel_vals(kernel.value().data);
  for (int it = 0; it < pre; ++it) {
    sweep(kernel_vals, kappa, f, s);
    ++iterations;
    if (opt.tol > 0.0 && violation(kernel_vals, kappa, f, s) < opt.tol) {
      converged = true;
      break;
    }
  }

  auto vec_const = [&](const std::vector<double>& x) {
    return Var::constant(Tensor({kappa}, x));
  };
  Var ft = vec_const(f.topology), fr = vec_const(f.density), fp = vec_const(f.property);
  Var u = vec_const(s.u), v = vec_const(s.v), w = vec_const(s.w);
  for (int it = 0; it < tail; ++it) {
    u = nd::div(ft, contract3_op(kernel, v, w, 0, kappa));
    v = nd::div(fr, contract3_op(kernel, u, w, 1, kappa));
    w = nd::div(fp, contract3_op(kernel, u, v, 2, kappa));
    ++iterations;
    if (opt.tol > 0.0) {
      s.u = u.value().data;
      s.v = v.value().data;
      s.w = w.value().data;
      if (violation(kernel_vals, kappa, f, s) < opt.tol) {
        converged = true;
        break;
      }
    }
  }

  Var dw = plan_cost_op(cost, kernel, u, v, w, kappa);

  if (plan_out) {
    plan_out->kappa = kappa;
    plan_out->epsilon = opt.epsilon;
    plan_out->tol = opt.tol;
    plan_out->iterations = iterations;
    plan_out->converged = converged;
    plan_out->distance = dw.value().item();
    plan_out->plan.resize(kernel.value().data.size());
    for (int i = 0; i < kappa; ++i)
      for (int j = 0; j < kappa; ++j)
        for (int k = 0; k < kappa; ++k) {
          const std::size_t t = idx3(i, j, k, kappa);
          plan_out->plan[t] = u.value()[i] * v.value()[j] * w.value()[k] *
                              kernel.value()[static_cast<int>(t)];
        }
  }
  return dw;
}

// ---- conditioning ----

std::vector<double> conditional_plan(const TransportPlan& plan,
                                     const std::vector<std::pair<Modality, int>>& known,
                                     Modality unknown, bool* fallback_used) {
  if (known.empty()) throw ContractError("conditional_plan: no known tokens");
  const int kappa = plan.kappa;
  if (fallback_used) *fallback_used = false;
  std::vector<double> acc(static_cast<std::size_t>(kappa), 0.0);
  for (const auto& [mod, index] : known) {
    if (mod == unknown)
      throw ContractError("conditional_plan: known token in the unknown modality");
    if (index < 0 || index >= kappa)
      throw ContractError("conditional_plan: index out of range");
    std::vector<double> slice(static_cast<std::size_t>(kappa), 0.0);
    for (int i = 0; i < kappa; ++i)
      for (int j = 0; j < kappa; ++j)
        for (int k = 0; k < kappa; ++k) {
          const int coords[3] = {i, j, k};
          if (coords[static_cast<int>(mod)] != index) continue;
          slice[static_cast<std::size_t>(coords[static_cast<int>(unknown)])] +=
              plan.at(i, j, k);
        }
    double s = 0.0;
    for (double x : slice) s += x;
    if (s <= 0.0) {
      // Degenerate slice: use the unknown modality's marginal instead.
      slice = plan.marginal(unknown);
      s = 0.0;
      for (double x : slice) s += x;
      if (s <= 0.0) throw NumericError("conditional_plan: empty transport plan");
      if (fallback_used) *fallback_used = true;
    }
    for (int i = 0; i < kappa; ++i) acc[static_cast<std::size_t>(i)] += slice[static_cast<std::size_t>(i)] / s;
  }
  double total = 0.0;
  for (double x : acc) total += x;
  for (double& x : acc) x /= total;
  return acc;
}

// ---- persistence ----

void TransportPlan::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("TransportPlan::save: cannot open " + path);
  const char magic[8] = {'U', 'M', 'P', 'L', 'A', 'N', '1', '\n'};
  out.write(magic, sizeof(magic));
  const std::int32_t k = kappa;
  const std::uint8_t conv = converged ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&k), sizeof(k));
  out.write(reinterpret_cast<const char*>(&epsilon), sizeof(epsilon));
  out.write(reinterpret_cast<const char*>(&tol), sizeof(tol));
  out.write(reinterpret_cast<const char*>(&conv), sizeof(conv));
  out.write(reinterpret_cast<const char*>(&distance), sizeof(distance));
  out.write(reinterpret_cast<const char*>(plan.data()),
            static_cast<std::streamsize>(plan.size() * sizeof(double)));
  if (!out) throw FormatError("TransportPlan::save: write failed");
}

TransportPlan TransportPlan::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("TransportPlan::load: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, "UMPLAN1\n", 8) != 0)
    throw FormatError("TransportPlan::load: bad magic");
  TransportPlan p;
  std::int32_t k = 0;
  std::uint8_t conv = 0;
  in.read(reinterpret_cast<char*>(&k), sizeof(k));
  in.read(reinterpret_cast<char*>(&p.epsilon), sizeof(p.epsilon));
  in.read(reinterpret_cast<char*>(&p.tol), sizeof(p.tol));
  in.read(reinterpret_cast<char*>(&conv), sizeof(conv));
  in.read(reinterpret_cast<char*>(&p.distance), sizeof(p.distance));
  if (!in || k <= 0) throw FormatError("TransportPlan::load: truncated header");
  p.kappa = k;
  p.converged = conv != 0;
  p.plan.resize(static_cast<std::size_t>(k) * k * k);
  in.read(reinterpret_cast<char*>(p.plan.data()),
          static_cast<std::streamsize>(p.plan.size() * sizeof(double)));
  if (!in) throw FormatError("TransportPlan::load: truncated payload");
  return p;
}

}  // namespace umate::ot
