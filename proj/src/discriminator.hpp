#pragma once

#include <memory>
#include <random>
#include <vector>

#include "generator.hpp"
#include "module.hpp"
#include "tensor.hpp"

namespace rdi {

// SN-PatchGAN critic: six stride-2 spectral-normalized K5 convolutions with
// leaky-ReLU (0.2), per-patch scores, no final sigmoid. The image critic
// takes 3 channels, the depth critic 1.
class PatchDiscriminator : public Module {
 public:
  PatchDiscriminator(int in_channels, const ModelConfig& cfg, std::mt19937_64& rng);

  // One power-iteration step per forward unless sigma estimates are frozen
  // (frozen mode keeps the forward pure for gradient checks).
  Tensor forward(const Tensor& x) const;

  void set_frozen_power_iteration(bool frozen) { frozen_ = frozen; }
  // largest-singular-value estimates of the normalized weights
  std::vector<double> sigma_estimates() const;
  int64_t mads(int h, int w) const;

  // power-iteration vectors, serialized with checkpoints
  std::vector<std::vector<double>> power_state() const;
  void load_power_state(const std::vector<std::vector<double>>& uv);

 private:
  struct SnConv {
    Tensor w, b;
    int cin, cout, stride;
    mutable std::vector<double> u, v;
  };
  std::vector<SnConv> convs_;
  int in_channels_;
  bool frozen_ = false;
};

}  // namespace rdi
