#include "evaluation.hpp"

#include <lapacke.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "checkpoint.hpp"
#include "temporal.hpp"

namespace rdi {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

bool in_region(const InpaintMask* mask, Region region, int y, int x) {
  if (region == Region::kFull) return true;
  require(mask != nullptr, "hole-region metric requires a mask");
  return mask->at(y, x) != 0;
}

}  // namespace

double psnr(const RgbFrame& gt, const RgbFrame& out, const InpaintMask* mask,
            Region region) {
  require(gt.h == out.h && gt.w == out.w, "psnr: shape mismatch");
  double se = 0.0;
  int64_t n = 0;
  for (int y = 0; y < gt.h; ++y)
    for (int x = 0; x < gt.w; ++x) {
      if (!in_region(mask, region, y, x)) continue;
      for (int c = 0; c < 3; ++c) {
        const double d = gt.at(c, y, x) - out.at(c, y, x);
        se += d * d;
      }
      n += 3;
    }
  if (n == 0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(4.0 / mse);  // peak = 2 on [-1,1]
}

double mae(const RgbFrame& gt, const RgbFrame& out, const InpaintMask* mask,
           Region region) {
  require(gt.h == out.h && gt.w == out.w, "mae: shape mismatch");
  double ae = 0.0;
  int64_t n = 0;
  for (int y = 0; y < gt.h; ++y)
    for (int x = 0; x < gt.w; ++x) {
      if (!in_region(mask, region, y, x)) continue;
      for (int c = 0; c < 3; ++c) ae += std::fabs(gt.at(c, y, x) - out.at(c, y, x));
      n += 3;
    }
  return n ? ae / static_cast<double>(n) : 0.0;
}

double rmse_depth(const DepthMap& gt, const DepthMap& out, const InpaintMask* mask,
                  Region region) {
  require(gt.h == out.h && gt.w == out.w, "rmse_depth: shape mismatch");
  double se = 0.0;
  int64_t n = 0;
  for (int y = 0; y < gt.h; ++y)
    for (int x = 0; x < gt.w; ++x) {
      if (!in_region(mask, region, y, x)) continue;
      const double d = gt.at(y, x) * gt.depth_scale - out.at(y, x) * out.depth_scale;
      se += d * d;
      ++n;
    }
  return n ? std::sqrt(se / static_cast<double>(n)) : 0.0;
}

double warp_error(const std::vector<RgbFrame>& outputs, const SequenceSample& sample) {
  const int T = static_cast<int>(outputs.size());
  require(T >= 2, "warp_error: need T >= 2");
  require(T == sample.size(), "warp_error: output count differs from sequence");
  double total = 0.0;
  for (int t = 1; t < T; ++t) {
    const auto& flow = sample.flow_fwd[static_cast<size_t>(t)];
    const auto& occ = sample.occl[static_cast<size_t>(t)];
    require(flow.has_value() && occ.has_value(), "warp_error: missing flow for pair");
    const RgbFrame warped = backward_warp(outputs[static_cast<size_t>(t - 1)], *flow);
    const RgbFrame& cur = outputs[static_cast<size_t>(t)];
    double acc = 0.0;
    for (int y = 0; y < cur.h; ++y)
      for (int x = 0; x < cur.w; ++x)
        for (int c = 0; c < 3; ++c)
          acc += occ->at(y, x) * std::fabs(cur.at(c, y, x) - warped.at(c, y, x));
    total += acc / (3.0 * cur.h * cur.w);
  }
  return total / static_cast<double>(T - 1);
}

namespace {

// symmetric square root via eigen-decomposition; negative eigenvalues clamped
std::vector<double> sym_sqrt(std::vector<double> a, int n) {
  std::vector<double> evals(static_cast<size_t>(n));
  const int info = LAPACKE_dsyev(LAPACK_ROW_MAJOR, 'V', 'U', n, a.data(), n, evals.data());
  if (info != 0) throw std::runtime_error("fid_proxy: eigendecomposition failed");
  // a now holds eigenvectors (rows: original index, cols: eigenvector index)
  std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) {
        const double lam = evals[static_cast<size_t>(k)];
        const double sq = lam > 0 ? std::sqrt(lam) : 0.0;
        s += a[static_cast<size_t>(i) * n + k] * sq * a[static_cast<size_t>(j) * n + k];
      }
      out[static_cast<size_t>(i) * n + j] = s;
    }
  return out;
}

std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b,
                              int n) {
  std::vector<double> c(static_cast<size_t>(n) * n, 0.0);
  gemm_rm(false, false, n, n, n, 1.0, a.data(), b.data(), 0.0, c.data());
  return c;
}

std::vector<double> pooled_descriptor(const RgbFrame& f, const FeatureExtractor& fx) {
  NoGradGuard ng;
  auto stages = fx.stages(to_tensor(f));
  std::vector<double> desc;
  for (const auto& s : stages) {
    const int c = s.dim(1);
    const int64_t hw = static_cast<int64_t>(s.dim(2)) * s.dim(3);
    auto d = s.data();
    for (int ci = 0; ci < c; ++ci) {
      double m = 0.0;
      for (int64_t i = 0; i < hw; ++i) m += d[static_cast<size_t>(ci * hw + i)];
      desc.push_back(m / static_cast<double>(hw));
    }
  }
  return desc;
}

}  // namespace

double fid_proxy(const std::vector<RgbFrame>& set_a, const std::vector<RgbFrame>& set_b,
                 const FeatureExtractor& fx) {
  require(set_a.size() >= 2 && set_b.size() >= 2, "fid_proxy: need >= 2 frames per set");
  const int d = fx.feature_dim();
  auto stats = [&](const std::vector<RgbFrame>& frames) {
    std::vector<double> mu(static_cast<size_t>(d), 0.0);
    std::vector<std::vector<double>> feats;
    for (const auto& f : frames) {
      feats.push_back(pooled_descriptor(f, fx));
      for (int i = 0; i < d; ++i) mu[static_cast<size_t>(i)] += feats.back()[static_cast<size_t>(i)];
    }
    const double inv = 1.0 / static_cast<double>(frames.size());
    for (auto& v : mu) v *= inv;
    std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
    for (const auto& f : feats)
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          cov[static_cast<size_t>(i) * d + j] +=
              (f[static_cast<size_t>(i)] - mu[static_cast<size_t>(i)]) *
              (f[static_cast<size_t>(j)] - mu[static_cast<size_t>(j)]);
    const double invn = 1.0 / static_cast<double>(frames.size() - 1);
    for (auto& v : cov) v *= invn;
    for (int i = 0; i < d; ++i) cov[static_cast<size_t>(i) * d + i] += 1e-6;
    return std::make_pair(mu, cov);
  };
  auto [mu_a, cov_a] = stats(set_a);
  auto [mu_b, cov_b] = stats(set_b);

  double dist = 0.0;
  for (int i = 0; i < d; ++i) {
    const double diff = mu_a[static_cast<size_t>(i)] - mu_b[static_cast<size_t>(i)];
    dist += diff * diff;
  }
  // tr((S_A S_B)^{1/2}) = tr(sqrt(sqrt(S_A) S_B sqrt(S_A)))
  auto sqrt_a = sym_sqrt(cov_a, d);
  auto inner = matmul_sq(matmul_sq(sqrt_a, cov_b, d), sqrt_a, d);
  // enforce symmetry against fp drift before the second sqrt
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double s = 0.5 * (inner[static_cast<size_t>(i) * d + j] +
                              inner[static_cast<size_t>(j) * d + i]);
      inner[static_cast<size_t>(i) * d + j] = s;
      inner[static_cast<size_t>(j) * d + i] = s;
    }
  auto cross_sqrt = sym_sqrt(inner, d);
  double tr = 0.0;
  for (int i = 0; i < d; ++i)
    tr += cov_a[static_cast<size_t>(i) * d + i] + cov_b[static_cast<size_t>(i) * d + i] -
          2.0 * cross_sqrt[static_cast<size_t>(i) * d + i];
  return dist + tr;
}

EfficiencyReport efficiency_report(const ModelConfig& cfg, int timing_frames,
                                   int mads_size) {
  EfficiencyReport r;
  std::mt19937_64 rng(0);
  Generator g(cfg, rng);
  r.params = g.param_breakdown();
  {
    PatchDiscriminator d(3, cfg, rng);
    r.disc_params_each = d.param_count();
  }
  r.mads = g.count_mads(mads_size, mads_size);
  r.mads_size = mads_size;
  if (timing_frames > 0) {
    NoGradGuard ng2;
    const int s = cfg.image_size;
    std::mt19937_64 drng(7);
    Tensor img = rand_uniform({1, 3, s, s}, drng, -1.0, 1.0);
    Tensor dep = rand_uniform({1, 1, s, s}, drng, 0.0, 1.0);
    Tensor mask = zeros({1, 1, s, s});
    {
      auto m = mask.mutable_data();
      for (int y = s / 4; y < s / 2; ++y)
        for (int x = s / 4; x < s / 2; ++x) m[static_cast<size_t>(y) * s + x] = 1.0;
    }
    GeneratorState state;
    for (int i = 0; i < 10; ++i) {
      auto [out, ns] = g.step(img, dep, mask, state.defined() ? &state : nullptr);
      state = ns.detached();
    }
    std::vector<double> times;
    for (int i = 0; i < timing_frames; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      auto [out, ns] = g.step(img, dep, mask, state.defined() ? &state : nullptr);
      const auto t1 = std::chrono::steady_clock::now();
      state = ns.detached();
      times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    r.ms_per_frame = times[times.size() / 2];
  }
  return r;
}

std::vector<InferredFrame> infer_sequence(const Generator& gen,
                                          const SequenceSample& sample) {
  NoGradGuard ng;
  std::vector<InferredFrame> out;
  GeneratorState state;
  bool have_state = false;
  for (const auto& fr : sample.frames) {
    auto [o, ns] = gen.step(to_tensor(fr.color), to_tensor(fr.depth),
                            to_tensor(fr.mask), have_state ? &state : nullptr);
    state = ns;
    have_state = true;
    InferredFrame inf;
    inf.image = rgb_from_tensor(o.image);
    inf.depth = depth_from_tensor(o.depth, fr.depth.depth_scale);
    if (!o.seg_logits.empty()) {
      const Tensor& logits = o.seg_logits.back();  // finest scale
      Tensor up = (logits.dim(2) == fr.color.h && logits.dim(3) == fr.color.w)
                      ? logits
                      : upsample_bilinear(logits, fr.color.h, fr.color.w);
      const int c = up.dim(1);
      const int64_t hw = static_cast<int64_t>(up.dim(2)) * up.dim(3);
      auto d = up.data();
      inf.seg_argmax.resize(static_cast<size_t>(hw));
      for (int64_t j = 0; j < hw; ++j) {
        int best = 0;
        for (int ci = 1; ci < c; ++ci)
          if (d[static_cast<size_t>(ci * hw + j)] > d[static_cast<size_t>(best * hw + j)])
            best = ci;
        inf.seg_argmax[static_cast<size_t>(j)] = best;
      }
    }
    out.push_back(std::move(inf));
  }
  return out;
}

std::shared_ptr<Generator> load_generator(const std::filesystem::path& ckpt) {
  CheckpointData data = checkpoint_resume(ckpt);
  const ModelConfig cfg = ModelConfig::from_json(data.model_config_json);
  std::mt19937_64 rng(0);
  auto gen = std::make_shared<Generator>(cfg, rng);
  std::unordered_map<std::string, Tensor> table;
  for (auto& [name, t] : data.tensors) table.emplace(name, t);
  for (auto& [name, t] : gen->named_parameters()) {
    auto it = table.find("gen." + name);
    if (it == table.end())
      throw std::runtime_error("checkpoint missing tensor gen." + name);
    if (!shape_eq(it->second.shape(), t.shape()))
      throw std::runtime_error("checkpoint: shape mismatch for gen." + name);
    auto dst = t.mutable_data();
    auto src = it->second.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return gen;
}

}  // namespace rdi
