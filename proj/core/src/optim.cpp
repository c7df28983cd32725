#include "umate/optim.hpp"

#include <cmath>

namespace umate::nd {

void Adam::step(std::vector<Var>& params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = Tensor::zeros(params[i].value().shape);
      v_[i] = Tensor::zeros(params[i].value().shape);
    }
  }
  if (m_.size() != params.size())
    throw ContractError("Adam: parameter list changed size");
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].mutable_value();
    const Tensor& g = params[i].grad();
    if (!p.same_shape(g) || !p.same_shape(m_[i]))
      throw ContractError("Adam: shape mismatch between parameter and state");
    for (int k = 0; k < p.size(); ++k) {
      m_[i][k] = cfg_.beta1 * m_[i][k] + (1.0 - cfg_.beta1) * g[k];
      v_[i][k] = cfg_.beta2 * v_[i][k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      const double mhat = m_[i][k] / bc1;
      const double vhat = v_[i][k] / bc2;
      p[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace umate::nd
