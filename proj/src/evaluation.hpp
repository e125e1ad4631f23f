#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "core_types.hpp"
#include "discriminator.hpp"
#include "generator.hpp"
#include "losses.hpp"

namespace rdi {

enum class Region { kFull, kHole };

// Standard pixel metrics; PSNR peak = 2 for [-1,1] images. Identical inputs
// yield +infinity (capped to 99 dB when written to CSV).
double psnr(const RgbFrame& gt, const RgbFrame& out, const InpaintMask* mask,
            Region region);
double mae(const RgbFrame& gt, const RgbFrame& out, const InpaintMask* mask,
           Region region);
// Meters; maps are converted via their depth_scale before the residual.
double rmse_depth(const DepthMap& gt, const DepthMap& out, const InpaintMask* mask,
                  Region region);

inline constexpr double kPsnrCsvCap = 99.0;

// Occlusion-weighted mean warp residual across consecutive outputs; the
// short-term temporal kernel reported as a metric (st / (T-1)).
double warp_error(const std::vector<RgbFrame>& outputs, const SequenceSample& sample);

// Frechet distance over pooled extractor features:
// ||mu_A - mu_B||^2 + tr(S_A + S_B - 2 (S_A S_B)^{1/2});
// singular covariances get 1e-6 diagonal jitter.
double fid_proxy(const std::vector<RgbFrame>& set_a, const std::vector<RgbFrame>& set_b,
                 const FeatureExtractor& fx);

struct EfficiencyReport {
  Generator::ParamBreakdown params;
  int64_t disc_params_each = 0;
  int64_t mads = 0;          // generator MADs at the requested size
  int mads_size = 256;
  double ms_per_frame = -1;  // median; -1 when timing was skipped
};

// timing_frames > 0 measures wall-clock over that many frames after 10
// warmup frames (median reported).
EfficiencyReport efficiency_report(const ModelConfig& cfg, int timing_frames = 0,
                                   int mads_size = 256);

struct InferredFrame {
  RgbFrame image;
  DepthMap depth;
  std::vector<int> seg_argmax;  // finest-scale decoder segmentation; empty
                                // when the SPADE decoder is ablated
};

// Sequential inference over one sequence (recurrent state carried, no
// gradients). Outputs are the user-facing composited frames.
std::vector<InferredFrame> infer_sequence(const Generator& gen,
                                          const SequenceSample& sample);

// Rebuilds a generator from a checkpoint archive (training state ignored).
std::shared_ptr<Generator> load_generator(const std::filesystem::path& ckpt);

}  // namespace rdi
