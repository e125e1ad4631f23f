#pragma once

#include <random>
#include <string>
#include <vector>

#include "core_types.hpp"
#include "tensor.hpp"

namespace rdi {

// Frozen conv stack standing in for a pretrained backbone. Gradients flow
// through it to the inputs; its own parameters never receive gradients.
class FeatureExtractor {
 public:
  // fixed-random stages (seeded); widths per stage, stride 2 each.
  explicit FeatureExtractor(uint64_t seed, int in_channels = 3,
                            std::vector<int> widths = {16, 32, 64});

  std::vector<Tensor> stages(const Tensor& x) const;
  std::string provenance() const { return provenance_; }
  int feature_dim() const;  // sum of stage widths (pooled descriptor size)

 private:
  std::vector<Tensor> weights_, biases_;
  std::string provenance_;
};

struct LossParts {
  Tensor rec_I, per, sty, adv_I;
  Tensor rec_D, grad, adv_D;
  Tensor seg, st, lt;
  Tensor total_D_I, total_D_D;  // report-only
};

struct LossReport {
  double rec_I = 0, per = 0, sty = 0, adv_I = 0;
  double rec_D = 0, grad = 0, adv_D = 0;
  double seg = 0, st = 0, lt = 0;
  double total_G = 0, total_D_I = 0, total_D_D = 0;

  bool all_finite() const;
  std::string dump() const;
  static const std::vector<std::string>& field_names();
  std::vector<double> values() const;
};

struct CombinedLoss {
  Tensor total_G;  // backward-able Eq. 1 objective
  LossReport report;
};

Tensor rec_l1(const Tensor& x, const Tensor& y);
Tensor perceptual(const Tensor& a, const Tensor& b, const FeatureExtractor& fx);
Tensor style(const Tensor& a, const Tensor& b, const FeatureExtractor& fx);
Tensor depth_gradient(const Tensor& d, const Tensor& d_o);
// logits upsampled (bilinear) to (h, w) before pixel-mean cross-entropy,
// averaged over the L scales.
Tensor seg_loss(const std::vector<Tensor>& seg_logits, const std::vector<int>& labels,
                int h, int w);
Tensor hinge_d(const Tensor& real_scores, const Tensor& fake_scores);
Tensor hinge_g(const Tensor& fake_scores);

// L_I = λ_rec rec_I + λ_per per + λ_sty sty + adv_I
// L_D = λ_rec rec_D + λ_grad grad + adv_D
// L_G = L_I + L_D + λ_seg seg + λ_t (st + lt)
// Missing (undefined) components are rejected; ablations pass explicit zeros.
CombinedLoss combine(const LossParts& parts, const LossWeights& w);

}  // namespace rdi
