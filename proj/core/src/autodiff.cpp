#include "umate/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

namespace umate::nd {

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

namespace {

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite())
    throw NumericError(std::string("non-finite output in op '") + op + "'");
}

bool any_requires(const std::vector<Var>& parents) {
  for (const auto& p : parents)
    if (p.requires_grad()) return true;
  return false;
}

}  // namespace

Var Var::leaf(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var Var::constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = false;
  n->op = "const";
  return Var(std::move(n));
}

const Tensor& Var::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

Var make_op(Tensor value, std::vector<Var> parents,
            std::function<void(Node&)> backward_fn, const char* op_name) {
  check_finite(value, op_name);
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op_name;
  n->requires_grad = any_requires(parents);
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(n));
}

void backward(const Var& loss) {
  if (!loss.defined() || !loss.value().is_scalar())
    throw ContractError("backward: loss must be a scalar");
  // Topological order by iterative DFS from the loss.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad.data[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// ---- op implementations ----

Var matmul(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.ndim() != 2 || B.ndim() != 2 || A.cols() != B.rows())
    throw ContractError("matmul: inner dimensions must agree, got " +
                        A.shape_str() + " x " + B.shape_str());
  const int n = A.rows(), k = A.cols(), m = B.cols();
  Tensor C({n, m});
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < k; ++p) {
      const double aip = A(i, p);
      if (aip == 0.0) continue;
      const double* brow = &B.data[static_cast<std::size_t>(p) * m];
      double* crow = &C.data[static_cast<std::size_t>(i) * m];
      for (int j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  return make_op(std::move(C), {a, b}, [n, k, m](Node& nd) {
    const Tensor& g = nd.grad;
    Node* pa = nd.parents[0].get();
    Node* pb = nd.parents[1].get();
    const Tensor& A = pa->value;
    const Tensor& B = pb->value;
    if (pa->requires_grad) {  // dA = g Bᵀ
      pa->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
          double s = 0.0;
          const double* grow = &g.data[static_cast<std::size_t>(i) * m];
          const double* brow = &B.data[static_cast<std::size_t>(p) * m];
          for (int j = 0; j < m; ++j) s += grow[j] * brow[j];
          pa->grad(i, p) += s;
        }
    }
    if (pb->requires_grad) {  // dB = Aᵀ g
      pb->ensure_grad();
      for (int p = 0; p < k; ++p)
        for (int i = 0; i < n; ++i) {
          const double aip = A(i, p);
          if (aip == 0.0) continue;
          const double* grow = &g.data[static_cast<std::size_t>(i) * m];
          double* brow = &pb->grad.data[static_cast<std::size_t>(p) * m];
          for (int j = 0; j < m; ++j) brow[j] += aip * grow[j];
        }
    }
  }, "matmul");
}

Var transpose(const Var& a) {
  const Tensor& A = a.value();
  const int n = A.rows(), m = A.cols();
  Tensor C({m, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) C(j, i) = A(i, j);
  return make_op(std::move(C), {a}, [n, m](Node& nd) {
    Node* pa = nd.parents[0].get();
    pa->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) pa->grad(i, j) += nd.grad(j, i);
  }, "transpose");
}

namespace {

Var elementwise_binary(const Var& a, const Var& b, const char* name,
                       double (*fwd)(double, double),
                       void (*bwd)(double, double, double, double&, double&)) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (!A.same_shape(B))
    throw ContractError(std::string(name) + ": shape mismatch " + A.shape_str() +
                        " vs " + B.shape_str());
  Tensor C(A.shape);
  for (int i = 0; i < A.size(); ++i) C[i] = fwd(A[i], B[i]);
  return make_op(std::move(C), {a, b}, [bwd](Node& nd) {
    Node* pa = nd.parents[0].get();
    Node* pb = nd.parents[1].get();
    if (pa->requires_grad) pa->ensure_grad();
    if (pb->requires_grad) pb->ensure_grad();
    double dump = 0.0;
    for (int i = 0; i < nd.value.size(); ++i) {
      double& ga = pa->requires_grad ? pa->grad[i] : dump;
      double& gb = pb->requires_grad ? pb->grad[i] : dump;
      bwd(pa->value[i], pb->value[i], nd.grad[i], ga, gb);
    }
  }, name);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return elementwise_binary(a, b, "add",
      [](double x, double y) { return x + y; },
      [](double, double, double g, double& ga, double& gb) { ga += g; gb += g; });
}

Var sub(const Var& a, const Var& b) {
  return elementwise_binary(a, b, "sub",
      [](double x, double y) { return x - y; },
      [](double, double, double g, double& ga, double& gb) { ga += g; gb -= g; });
}

Var mul(const Var& a, const Var& b) {
  return elementwise_binary(a, b, "mul",
      [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& ga, double& gb) {
        ga += g * y;
        gb += g * x;
      });
}

Var div(const Var& a, const Var& b) {
  return elementwise_binary(a, b, "div",
      [](double x, double y) { return x / y; },
      [](double x, double y, double g, double& ga, double& gb) {
        ga += g / y;
        gb -= g * x / (y * y);
      });
}

Var add_rowvec(const Var& a, const Var& bias) {
  const Tensor& A = a.value();
  const Tensor& B = bias.value();
  if (A.ndim() != 2 || B.size() != A.cols())
    throw ContractError("add_rowvec: bias length must equal column count");
  const int n = A.rows(), m = A.cols();
  Tensor C(A.shape);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) C(i, j) = A(i, j) + B[j];
  return make_op(std::move(C), {a, bias}, [n, m](Node& nd) {
    Node* pa = nd.parents[0].get();
    Node* pb = nd.parents[1].get();
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (int i = 0; i < nd.grad.size(); ++i) pa->grad[i] += nd.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) pb->grad[j] += nd.grad(i, j);
    }
  }, "add_rowvec");
}

Var scale(const Var& a, double c) {
  Tensor C(a.value().shape);
  for (int i = 0; i < C.size(); ++i) C[i] = a.value()[i] * c;
  return make_op(std::move(C), {a}, [c](Node& nd) {
    Node* pa = nd.parents[0].get();
    pa->ensure_grad();
    for (int i = 0; i < nd.grad.size(); ++i) pa->grad[i] += c * nd.grad[i];
  }, "scale");
}

Var add_scalar(const Var& a, double c) {
  Tensor C(a.value().shape);
  for (int i = 0; i < C.size(); ++i) C[i] = a.value()[i] + c;
  return make_op(std::move(C), {a}, [](Node& nd) {
    Node* pa = nd.parents[0].get();
    pa->ensure_grad();
    for (int i = 0; i < nd.grad.size(); ++i) pa->grad[i] += nd.grad[i];
  }, "add_scalar");
}

Var sigmoid(const Var& a) {
  Tensor C(a.value().shape);
  for (int i = 0; i < C.size(); ++i) C[i] = 1.0 / (1.0 + std::exp(-a.value()[i]));
  return make_op(std::move(C), {a}, [](Node& nd) {
    Node* pa = nd.parents[0].get();
    pa->ensure_grad();
    for (int i = 0; i < nd.grad.size(); ++i) {
      const double s = nd.value[i];
      pa->grad[i] += nd.grad[i] * s * (1.0 - s);
    }
  }, "sigmoid");
}

Var exp_op(const Var& a) {
  Tensor C(a.value().shape);
  for (int i = 0; i < C.size(); ++i) C[i] = std::exp(a.value()[i]);
  return make_op(std::move(C), {a}, [](Node& nd) {
    Node* pa = nd.parents[0].get();
    pa->ensure_grad();
    for (int i = 0; i < nd.grad.size(); ++i) pa->grad[i] += nd.grad[i] * nd.value[i];
  }, "exp");
}

Var softmax_rows(const Var& a) {
  const Tensor& A = a.value();
  if (A.ndim() != 2) throw ContractError("softmax_rows: expects a matrix");
  const int n = A.rows(), m = A.cols();
  Tensor C(A.shape);
  for (int i = 0; i < n; ++i) {
    double mx = A(i, 0);
    for (int j = 1; j < m; ++j) mx = std::max(mx, A(i, j));
    double z = 0.0;
    for (int j = 0; j < m; ++j) {
      C(i, j) = std::exp(A(i, j) - mx);
      z += C(i, j);
    }
    for (int j = 0; j < m; ++j) C(i, j) /= z;
  }
  return make_op(std::move(C), {a}, [n, m](Node& nd) {
    Node* pa = nd.parents[0].get();
    pa->ensure_grad();
    for (int i = 0; i < n; ++i) {
      double dot = 0.0;
      for (int j = 0; j < m; ++j) dot += nd.grad(i, j) * nd.value(i, j);
      for (int j = 0; j < m; ++j)
        pa->grad(i, j) += nd.value(i, j) * (nd.grad(i, j) - dot);
    }
  }, "softmax");
}

Var layer_norm(const Var& a, const Var& gain, const Var& bias) {
  const Tensor& A = a.value();
  if (A.ndim() != 2) throw ContractError("layer_norm: expects a matrix");
  const int n = A.rows(), m = A.cols();
  if (gain.value().size() != m || bias.value().size() != m)
    throw ContractError("layer_norm: gain/bias length must equal width");
  constexpr double kEps = 1e-5;
  Tensor C(A.shape);
  Tensor xhat(A.shape);
  std::vector<double> inv_std(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double mu = 0.0;
    for (int j = 0; j < m; ++j) mu += A(i, j);
    mu /= m;
    double var = 0.0;
    for (int j = 0; j < m; ++j) var += (A(i, j) - mu) * (A(i, j) - mu);
    var /= m;
    const double is = 1.0 / std::sqrt(var + kEps);
    inv_std[static_cast<std::size_t>(i)] = is;
    for (int j = 0; j < m; ++j) {
      xhat(i, j) = (A(i, j) - mu) * is;
      C(i, j) = gain.value()[j] * xhat(i, j) + bias.value()[j];
    }
  }
  return make_op(std::move(C), {a, gain, bias},
                 [n, m, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& nd) {
    Node* pa = nd.parents[0].get();
    Node* pg = nd.parents[1].get();
    Node* pb = nd.parents[2].get();
    if (pg->requires_grad) {
      pg->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) pg->grad[j] += nd.grad(i, j) * xhat(i, j);
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) pb->grad[j] += nd.grad(i, j);
    }
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (int i = 0; i < n; ++i) {
        double s1 = 0.0, s2 = 0.0;
        for (int j = 0; j < m; ++j) {
          const double gj = nd.grad(i, j) * pg->value[j];
          s1 += gj;
          s2 += gj * xhat(i, j);
        }
        s1 /= m;
        s2 /= m;
        for (int j = 0; j < m; ++j) {
          const double gj = nd.grad(i, j) * pg->value[j];
          pa->grad(i, j) += (gj - s1 - xhat(i, j) * s2) * inv_std[static_cast<std::size_t>(i)];
        }
      }
    }
  }, "layer_norm");
}

Var sum(const Var& a) {
  double s = 0.0;
  for (int i = 0; i < a.value().size(); ++i) s += a.value()[i];
  return make_op(Tensor::scalar(s), {a}, [](Node& nd) {
    Node* pa = nd.parents[0].get();
    pa->ensure_grad();
    for (int i = 0; i < pa->grad.size(); ++i) pa->grad[i] += nd.grad[0];
  }, "sum");
}

Var mean(const Var& a) {
  const int n = a.value().size();
  if (n == 0) throw ContractError("mean: empty tensor");
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a.value()[i];
  return make_op(Tensor::scalar(s / n), {a}, [n](Node& nd) {
    Node* pa = nd.parents[0].get();
    pa->ensure_grad();
    for (int i = 0; i < n; ++i) pa->grad[i] += nd.grad[0] / n;
  }, "mean");
}

Var l2_norm(const Var& a) {
  double s = 0.0;
  for (int i = 0; i < a.value().size(); ++i) s += a.value()[i] * a.value()[i];
  const double norm = std::sqrt(s);
  return make_op(Tensor::scalar(norm), {a}, [](Node& nd) {
    Node* pa = nd.parents[0].get();
    pa->ensure_grad();
    const double norm = nd.value[0];
    if (norm == 0.0) return;  // subgradient 0 at the kink
    for (int i = 0; i < pa->grad.size(); ++i)
      pa->grad[i] += nd.grad[0] * pa->value[i] / norm;
  }, "l2_norm");
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  const int m = parts[0].value().cols();
  int n = 0;
  for (const auto& p : parts) {
    if (p.value().cols() != m)
      throw ContractError("concat_rows: column counts differ");
    n += p.value().rows();
  }
  Tensor C({n, m});
  int r = 0;
  for (const auto& p : parts) {
    std::memcpy(&C.data[static_cast<std::size_t>(r) * m], p.value().data.data(),
                p.value().data.size() * sizeof(double));
    r += p.value().rows();
  }
  std::vector<Var> vars(parts.begin(), parts.end());
  return make_op(std::move(C), vars, [m](Node& nd) {
    int r = 0;
    for (auto& pp : nd.parents) {
      const int nr = pp->value.rows();
      if (pp->requires_grad) {
        pp->ensure_grad();
        for (int i = 0; i < nr * m; ++i)
          pp->grad[i] += nd.grad[r * m + i];
      }
      r += nr;
    }
  }, "concat_rows");
}

Var slice_rows(const Var& a, int r0, int r1) {
  const Tensor& A = a.value();
  if (A.ndim() != 2 || r0 < 0 || r1 > A.rows() || r0 >= r1)
    throw ContractError("slice_rows: bad row range");
  const int m = A.cols();
  Tensor C({r1 - r0, m});
  std::memcpy(C.data.data(), &A.data[static_cast<std::size_t>(r0) * m],
              C.data.size() * sizeof(double));
  return make_op(std::move(C), {a}, [r0, m](Node& nd) {
    Node* pa = nd.parents[0].get();
    pa->ensure_grad();
    for (int i = 0; i < nd.grad.size(); ++i)
      pa->grad[r0 * m + i] += nd.grad[i];
  }, "slice_rows");
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  const int n = parts[0].value().rows();
  int m = 0;
  for (const auto& p : parts) {
    if (p.value().rows() != n) throw ContractError("concat_cols: row counts differ");
    m += p.value().cols();
  }
  Tensor C({n, m});
  int c = 0;
  for (const auto& p : parts) {
    const int pc = p.value().cols();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < pc; ++j) C(i, c + j) = p.value()(i, j);
    c += pc;
  }
  std::vector<Var> vars(parts.begin(), parts.end());
  return make_op(std::move(C), vars, [n](Node& nd) {
    int c = 0;
    for (auto& pp : nd.parents) {
      const int pc = pp->value.cols();
      if (pp->requires_grad) {
        pp->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < pc; ++j) pp->grad(i, j) += nd.grad(i, c + j);
      }
      c += pc;
    }
  }, "concat_cols");
}

Var slice_cols(const Var& a, int c0, int c1) {
  const Tensor& A = a.value();
  if (A.ndim() != 2 || c0 < 0 || c1 > A.cols() || c0 >= c1)
    throw ContractError("slice_cols: bad column range");
  const int n = A.rows();
  Tensor C({n, c1 - c0});
  for (int i = 0; i < n; ++i)
    for (int j = c0; j < c1; ++j) C(i, j - c0) = A(i, j);
  return make_op(std::move(C), {a}, [c0](Node& nd) {
    Node* pa = nd.parents[0].get();
    pa->ensure_grad();
    const int n = nd.value.rows(), w = nd.value.cols();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < w; ++j) pa->grad(i, c0 + j) += nd.grad(i, j);
  }, "slice_cols");
}

Var gather_rows(const Var& a, const std::vector<int>& indices) {
  const Tensor& A = a.value();
  if (A.ndim() != 2) throw ContractError("gather_rows: expects a matrix");
  const int m = A.cols();
  Tensor C({static_cast<int>(indices.size()), m});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] < 0 || indices[k] >= A.rows())
      throw ContractError("gather_rows: index out of range");
    std::memcpy(&C.data[k * m], &A.data[static_cast<std::size_t>(indices[k]) * m],
                static_cast<std::size_t>(m) * sizeof(double));
  }
  return make_op(std::move(C), {a}, [indices, m](Node& nd) {
    Node* pa = nd.parents[0].get();
    pa->ensure_grad();
    for (std::size_t k = 0; k < indices.size(); ++k)
      for (int j = 0; j < m; ++j)
        pa->grad(indices[k], j) += nd.grad(static_cast<int>(k), j);
  }, "gather_rows");
}

Var cosine(const Var& u, const Var& v) {
  const Tensor& U = u.value();
  const Tensor& V = v.value();
  if (U.size() != V.size()) throw ContractError("cosine: length mismatch");
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (int i = 0; i < U.size(); ++i) {
    uu += U[i] * U[i];
    vv += V[i] * V[i];
    uv += U[i] * V[i];
  }
  if (uu == 0.0 || vv == 0.0)
    throw ContractError("cosine: undefined for a zero vector");
  const double nu = std::sqrt(uu), nv = std::sqrt(vv);
  const double c = uv / (nu * nv);
  return make_op(Tensor::scalar(c), {u, v}, [nu, nv, c](Node& nd) {
    Node* pu = nd.parents[0].get();
    Node* pv = nd.parents[1].get();
    const double g = nd.grad[0];
    if (pu->requires_grad) {
      pu->ensure_grad();
      for (int i = 0; i < pu->grad.size(); ++i)
        pu->grad[i] += g * (pv->value[i] / (nu * nv) - c * pu->value[i] / (nu * nu));
    }
    if (pv->requires_grad) {
      pv->ensure_grad();
      for (int i = 0; i < pv->grad.size(); ++i)
        pv->grad[i] += g * (pu->value[i] / (nu * nv) - c * pv->value[i] / (nv * nv));
    }
  }, "cosine");
}

Var row_cosine_matrix(const Var& a) {
  const Tensor& A = a.value();
  if (A.ndim() != 2) throw ContractError("row_cosine_matrix: expects a matrix");
  const int n = A.rows(), m = A.cols();
  std::vector<double> norms(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < m; ++j) s += A(i, j) * A(i, j);
    if (s == 0.0) throw ContractError("row_cosine_matrix: zero-norm row");
    norms[static_cast<std::size_t>(i)] = std::sqrt(s);
  }
  Tensor C({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double dot = 0.0;
      for (int t = 0; t < m; ++t) dot += A(i, t) * A(j, t);
      C(i, j) = dot / (norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)]);
    }
  return make_op(std::move(C), {a}, [n, m, norms = std::move(norms)](Node& nd) {
    Node* pa = nd.parents[0].get();
    pa->ensure_grad();
    const Tensor& A = pa->value;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        // c_ij appears once; its gradient touches rows i and j.
        const double g = nd.grad(i, j);
        if (g == 0.0) continue;
        const double ni = norms[static_cast<std::size_t>(i)];
        const double nj = norms[static_cast<std::size_t>(j)];
        const double cij = nd.value(i, j);
        for (int t = 0; t < m; ++t) {
          pa->grad(i, t) += g * (A(j, t) / (ni * nj) - cij * A(i, t) / (ni * ni));
          pa->grad(j, t) += g * (A(i, t) / (ni * nj) - cij * A(j, t) / (nj * nj));
        }
      }
  }, "row_cosine_matrix");
}

Var straight_through(const Var& pre, Tensor target) {
  if (!pre.value().same_shape(target))
    throw ContractError("straight_through: shape mismatch");
  return make_op(std::move(target), {pre}, [](Node& nd) {
    Node* pa = nd.parents[0].get();
    pa->ensure_grad();
    for (int i = 0; i < nd.grad.size(); ++i) pa->grad[i] += nd.grad[i];
  }, "straight_through");
}

Var attention(const Var& q, const Var& k, const Var& v) {
  const int dk = k.value().cols();
  Var scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dk)));
  return matmul(softmax_rows(scores), v);
}

double grad_check(const std::function<Var()>& fn, std::vector<Var> params,
                  double eps) {
  if (eps <= 0.0) throw ContractError("grad_check: eps must be positive");
  Var loss = fn();
  if (!loss.value().is_scalar()) throw ContractError("grad_check: fn must return a scalar");
  for (auto& p : params) p.zero_grad();
  backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad());
  double max_err = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& val = params[pi].mutable_value();
    for (int i = 0; i < val.size(); ++i) {
      const double orig = val[i];
      val[i] = orig + eps;
      const double fp = fn().value().item();
      val[i] = orig - eps;
      const double fm = fn().value().item();
      val[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("grad_check: non-finite function value");
      const double num = (fp - fm) / (2.0 * eps);
      const double err = std::abs(analytic[pi][i] - num) / (std::abs(num) + 1e-12);
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace umate::nd
