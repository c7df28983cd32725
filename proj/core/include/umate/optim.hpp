#pragma once

#include <string>
#include <vector>

#include "umate/autodiff.hpp"

namespace umate::nd {

// Named long-lived leaf variables. Models register their weights here so
// training, checkpointing, and gradient checks all see the same list.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init) {
    names_.push_back(name);
    vars_.push_back(Var::leaf(std::move(init)));
    return vars_.back();
  }

  std::size_t size() const { return vars_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Var& var(std::size_t i) { return vars_[i]; }
  const Var& var(std::size_t i) const { return vars_[i]; }
  std::vector<Var>& vars() { return vars_; }

  Var* find(const std::string& name) {
    for (std::size_t i = 0; i < vars_.size(); ++i)
      if (names_[i] == name) return &vars_[i];
    return nullptr;
  }

  void zero_grad() {
    for (auto& v : vars_) v.zero_grad();
  }

 private:
  std::vector<std::string> names_;
  std::vector<Var> vars_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected adaptive-moment optimizer.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Applies one update to every parameter from its accumulated gradient.
  void step(std::vector<Var>& params);

  long step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }

 private:
  AdamConfig cfg_;
  long step_count_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace umate::nd
