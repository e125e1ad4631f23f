#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace rdi {

// Parameter container with hierarchical naming. Shared submodules (e.g. a
// SPADE layer used by two streams) are registered once and deduplicated by
// node identity when collected.
class Module {
 public:
  virtual ~Module() = default;

  // Unique parameters, hierarchical name -> tensor, registration order.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  int64_t param_count() const;
  void zero_grad();

 protected:
  Tensor add_param(const std::string& name, Tensor t);

  template <class M>
  std::shared_ptr<M> add_module(const std::string& name, std::shared_ptr<M> m) {
    children_.emplace_back(name, m);
    return m;
  }

 private:
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out,
               std::vector<const Node*>& seen) const;

  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::pair<std::string, std::shared_ptr<Module>>> children_;
};

// Kaiming-normal init for conv weights {Cout,Cin,k,k} (fan-in variant).
Tensor kaiming_conv_weight(Shape shape, std::mt19937_64& rng);

struct AdamConfig {
  double beta1 = 0.0;
  double beta2 = 0.9;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg = {});

  void step(double lr);
  void zero_grad();

  int64_t step_count() const { return t_; }

  // Flat serialization of optimizer state (m, v, t), parameter order.
  std::vector<double> state_blob() const;
  void load_state_blob(const std::vector<double>& blob);

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace rdi
