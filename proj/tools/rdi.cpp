// rdi — command line driver for the RGB-D video inpainting toolkit:
// synthetic data generation, training, inference, evaluation, plotting.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "evaluation.hpp"
#include "plot.hpp"
#include "synth/dataset_io.hpp"
#include "synth/scene.hpp"
#include "training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// exit codes: 2 = config, 3 = data, 4 = numeric
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int classify_exception(const std::exception& e) {
  const std::string what = e.what();
  if (what.find("non-finite") != std::string::npos) return kExitNumeric;
  if (dynamic_cast<const std::invalid_argument*>(&e)) return kExitConfig;
  if (dynamic_cast<const json::exception*>(&e)) return kExitConfig;
  return kExitData;
}

struct ExperimentConfig {
  rdi::ModelConfig model;
  rdi::TrainConfig train;
  std::string data_dir;
  std::string out_dir = "run";
};

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config file not found: " + path);
  json j;
  f >> j;
  ExperimentConfig c;
  if (j.contains("model")) c.model = rdi::ModelConfig::from_json(j["model"].dump());
  if (j.contains("train")) c.train = rdi::TrainConfig::from_json(j["train"].dump());
  c.data_dir = j.value("data_dir", std::string());
  c.out_dir = j.value("out_dir", c.out_dir);
  return c;
}

std::vector<rdi::SequenceSample> load_all_sequences(const fs::path& dir) {
  const auto manifest = rdi::synth::read_dataset(dir);
  std::vector<rdi::SequenceSample> out;
  for (size_t i = 0; i < manifest.sequences.size(); ++i)
    out.push_back(rdi::synth::read_sequence(manifest, static_cast<int>(i)));
  return out;
}

int cmd_generate(const std::string& out, int sequences, int frames, int size,
                 uint64_t seed, int classes, bool shadow_masks, bool tracked_masks,
                 bool force) {
  if (size % 8 != 0 || size < 16)
    throw std::invalid_argument("--size must be a positive multiple of 8 (2^L), got " +
                                std::to_string(size));
  if (sequences < 1 || frames < 1)
    throw std::invalid_argument("--sequences and --frames must be >= 1");
  const fs::path root(out);
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!force) {
      std::cerr << "output directory " << root
                << " already exists; re-run with --force to overwrite\n";
      return kExitData;
    }
    fs::remove_all(root);
  }
  fs::create_directories(root);

  rdi::synth::DatasetMeta meta;
  meta.num_classes = classes;
  meta.height = size;
  meta.width = size;
  std::vector<rdi::SequenceSample> samples;
  for (int i = 0; i < sequences; ++i) {
    const uint64_t sseed = seed + 0x9e3779b97f4a7c15ull * static_cast<uint64_t>(i + 1);
    auto spec = rdi::synth::make_random_scene(sseed, frames, size, classes);
    meta.depth_max = spec.depth_max;
    auto rendered = rdi::synth::render_sequence(spec);
    std::mt19937_64 mask_rng(sseed ^ 0xabcdef12345ull);
    rdi::InpaintMask static_mask;
    for (int t = 0; t < frames; ++t) {
      const auto& rf = rendered.frames[static_cast<size_t>(t)];
      if (t == 0 || tracked_masks) {
        std::mt19937_64 frame_rng = mask_rng;  // static mode reuses frame-0 draw
        if (tracked_masks) frame_rng.seed(sseed ^ 0xabcdef12345ull);
        static_mask = rdi::synth::sample_object_mask(
            rf.seg, tracked_masks ? frame_rng : mask_rng, shadow_masks,
            &rf.object_ids, &rf.shadow_caster);
      }
      rendered.sample.frames[static_cast<size_t>(t)].mask = static_mask;
    }
    samples.push_back(std::move(rendered.sample));
    std::printf("rendered %s/seq_%04d (%d frames)\n", out.c_str(), i, frames);
  }
  rdi::synth::write_dataset(root, meta, samples);
  std::printf("wrote manifest for %d sequences to %s\n", sequences, out.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& resume,
              int64_t iters_override, const std::string& data_override,
              const std::string& out_override) {
  ExperimentConfig cfg = load_experiment(config_path);
  if (!data_override.empty()) cfg.data_dir = data_override;
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (cfg.data_dir.empty())
    throw std::invalid_argument("config: data_dir missing (or pass --data)");
  auto dataset = load_all_sequences(cfg.data_dir);

  std::unique_ptr<rdi::Trainer> trainer;
  if (!resume.empty()) {
    trainer = rdi::Trainer::resume_checkpoint(resume, std::move(dataset));
  } else {
    trainer = std::make_unique<rdi::Trainer>(cfg.model, cfg.train, std::move(dataset));
  }
  const int64_t total =
      iters_override > 0 ? iters_override : trainer->train_config().total_iters;
  const int64_t remaining = total - trainer->iteration();
  if (remaining <= 0) {
    std::printf("checkpoint already at iteration %lld; nothing to do\n",
                static_cast<long long>(trainer->iteration()));
    return 0;
  }
  std::printf("training %lld iterations -> %s\n", static_cast<long long>(remaining),
              cfg.out_dir.c_str());
  rdi::run_training(*trainer, remaining, cfg.out_dir);
  trainer->save_checkpoint(fs::path(cfg.out_dir) / "checkpoint.rdick");
  std::printf("done at iteration %lld\n", static_cast<long long>(trainer->iteration()));
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& input, const std::string& out,
              bool force) {
  auto gen = rdi::load_generator(ckpt);
  const auto manifest = rdi::synth::read_dataset(input);
  const fs::path out_root(out);
  if (fs::exists(out_root) && !fs::is_empty(out_root) && !force) {
    std::cerr << "output directory exists; use --force\n";
    return kExitData;
  }
  fs::create_directories(out_root);
  for (size_t i = 0; i < manifest.sequences.size(); ++i) {
    const auto sample = rdi::synth::read_sequence(manifest, static_cast<int>(i));
    const auto frames = rdi::infer_sequence(*gen, sample);
    const fs::path dir = out_root / manifest.sequences[i].dir;
    fs::create_directories(dir);
    std::vector<rdi::RgbFrame> in_row, out_row, gt_row;
    for (size_t t = 0; t < frames.size(); ++t) {
      char name[64];
      const int h = frames[t].image.h, w = frames[t].image.w;
      std::snprintf(name, sizeof(name), "out_%04zu.color.png", t);
      std::vector<uint8_t> rgb(static_cast<size_t>(w) * h * 3);
      const auto q = rdi::denormalize_rgb(frames[t].image);
      for (int c = 0; c < 3; ++c)
        for (size_t px = 0; px < static_cast<size_t>(w) * h; ++px)
          rgb[px * 3 + static_cast<size_t>(c)] =
              static_cast<uint8_t>(q[static_cast<size_t>(c) * w * h + px]);
      rdi::synth::write_png_rgb8(dir / name, w, h, rgb);
      std::snprintf(name, sizeof(name), "out_%04zu.depth.png", t);
      std::vector<uint16_t> d16(static_cast<size_t>(w) * h);
      for (size_t px = 0; px < d16.size(); ++px)
        d16[px] = static_cast<uint16_t>(
            std::lround(std::clamp(frames[t].depth.data[px], 0.0, 1.0) * 65535.0));
      rdi::synth::write_png_gray16(dir / name, w, h, d16);
      if (!frames[t].seg_argmax.empty()) {
        std::snprintf(name, sizeof(name), "out_%04zu.seg.png", t);
        std::vector<uint8_t> seg(frames[t].seg_argmax.begin(), frames[t].seg_argmax.end());
        rdi::synth::write_png_gray8(dir / name, w, h, seg);
      }
      const auto& fr = sample.frames[t];
      in_row.push_back(rdi::apply_mask(fr.color, fr.mask));
      out_row.push_back(frames[t].image);
      gt_row.push_back(fr.color);
    }
    rdi::write_image_grid(dir / "grid.png", {in_row, out_row, gt_row});
    std::printf("inferred %s (%zu frames)\n",
                (out_root / manifest.sequences[i].dir).c_str(), frames.size());
  }
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& report) {
  auto gen = rdi::load_generator(ckpt);
  const auto manifest = rdi::synth::read_dataset(data);
  rdi::FeatureExtractor fx(77);

  std::ofstream csv(report);
  if (!csv) throw std::runtime_error("cannot open report file " + report);
  csv << "sequence,psnr_hole,psnr_full,mae_hole,mae_full,rmse_hole_m,rmse_full_m,"
         "warp_error\n";
  std::vector<rdi::RgbFrame> all_out, all_gt;
  json summary;
  double mean_psnr_hole = 0, mean_warp = 0, mean_rmse_hole = 0, mean_mae_hole = 0;
  auto cap = [](double v) { return std::isfinite(v) ? v : rdi::kPsnrCsvCap; };
  for (size_t i = 0; i < manifest.sequences.size(); ++i) {
    const auto sample = rdi::synth::read_sequence(manifest, static_cast<int>(i));
    const auto frames = rdi::infer_sequence(*gen, sample);
    double p_h = 0, p_f = 0, m_h = 0, m_f = 0, r_h = 0, r_f = 0;
    for (size_t t = 0; t < frames.size(); ++t) {
      const auto& fr = sample.frames[t];
      p_h += cap(rdi::psnr(fr.color, frames[t].image, &fr.mask, rdi::Region::kHole));
      p_f += cap(rdi::psnr(fr.color, frames[t].image, nullptr, rdi::Region::kFull));
      m_h += rdi::mae(fr.color, frames[t].image, &fr.mask, rdi::Region::kHole);
      m_f += rdi::mae(fr.color, frames[t].image, nullptr, rdi::Region::kFull);
      r_h += rdi::rmse_depth(fr.depth, frames[t].depth, &fr.mask, rdi::Region::kHole);
      r_f += rdi::rmse_depth(fr.depth, frames[t].depth, nullptr, rdi::Region::kFull);
      all_out.push_back(frames[t].image);
      all_gt.push_back(fr.color);
    }
    const double n = static_cast<double>(frames.size());
    std::vector<rdi::RgbFrame> outs;
    for (const auto& f : frames) outs.push_back(f.image);
    const double we = frames.size() >= 2 ? rdi::warp_error(outs, sample) : 0.0;
    csv << manifest.sequences[i].dir << "," << p_h / n << "," << p_f / n << ","
        << m_h / n << "," << m_f / n << "," << r_h / n << "," << r_f / n << ","
        << we << "\n";
    mean_psnr_hole += p_h / n;
    mean_mae_hole += m_h / n;
    mean_rmse_hole += r_h / n;
    mean_warp += we;
  }
  const double ns = static_cast<double>(manifest.sequences.size());
  summary["sequences"] = manifest.sequences.size();
  summary["mean_psnr_hole_db"] = mean_psnr_hole / ns;
  summary["mean_mae_hole"] = mean_mae_hole / ns;
  summary["mean_rmse_hole_m"] = mean_rmse_hole / ns;
  summary["mean_warp_error"] = mean_warp / ns;
  summary["fid_proxy"] = rdi::fid_proxy(all_out, all_gt, fx);
  summary["fid_proxy_extractor"] = fx.provenance();
  std::ofstream js(report + ".json");
  js << summary.dump(2) << "\n";
  std::printf("%s\n", summary.dump(2).c_str());
  return 0;
}

int cmd_count_params(const std::string& config_path) {
  rdi::ModelConfig mcfg;
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw std::invalid_argument("config file not found: " + config_path);
    json j;
    f >> j;
    mcfg = rdi::ModelConfig::from_json(j.contains("model") ? j["model"].dump() : j.dump());
  }
  const auto rep = rdi::efficiency_report(mcfg, 0, 256);
  std::printf("generator parameters (config: %dx%d, width_mult %.3g, %s)\n",
              mcfg.image_size, mcfg.image_size, mcfg.width_mult,
              mcfg.rgbd_spade_enabled ? "spade" : "transposed-conv decoder");
  std::printf("  coarse nets     : %12lld\n", static_cast<long long>(rep.params.coarse));
  std::printf("  fine encoders   : %12lld\n", static_cast<long long>(rep.params.encoders));
  std::printf("  bottleneck+lstm : %12lld\n", static_cast<long long>(rep.params.bottleneck));
  std::printf("  decoder+heads   : %12lld\n", static_cast<long long>(rep.params.decoder));
  std::printf("  total           : %12lld  (%.2f M)\n",
              static_cast<long long>(rep.params.total), rep.params.total / 1e6);
  std::printf("discriminator (each): %lld  (%.2f M)\n",
              static_cast<long long>(rep.disc_params_each), rep.disc_params_each / 1e6);
  std::printf("generator MADs at %dx%d: %lld  (%.1f G)\n", rep.mads_size, rep.mads_size,
              static_cast<long long>(rep.mads), rep.mads / 1e9);
  return 0;
}

int cmd_plot(const std::string& log, const std::string& out, const std::string& images) {
  const auto files = rdi::plot_csv(log, out);
  std::printf("wrote %zu plots to %s\n", files.size(), out.c_str());
  if (!images.empty()) {
    // assemble one grid per sequence directory of inference outputs
    for (const auto& entry : fs::directory_iterator(images)) {
      if (!entry.is_directory()) continue;
      std::vector<rdi::RgbFrame> row;
      for (int t = 0;; ++t) {
        char name[64];
        std::snprintf(name, sizeof(name), "out_%04d.color.png", t);
        const fs::path p = entry.path() / name;
        if (!fs::exists(p)) break;
        int w = 0, h = 0;
        const auto rgb = rdi::synth::read_png_rgb8(p, w, h);
        std::vector<int> planar(static_cast<size_t>(w) * h * 3);
        for (int c = 0; c < 3; ++c)
          for (size_t px = 0; px < static_cast<size_t>(w) * h; ++px)
            planar[static_cast<size_t>(c) * w * h + px] = rgb[px * 3 + static_cast<size_t>(c)];
        row.push_back(rdi::normalize_rgb(planar, h, w));
      }
      if (!row.empty()) {
        rdi::write_image_grid(fs::path(out) / (entry.path().filename().string() + "_grid.png"),
                              {row});
      }
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGB-D video inpainting toolkit"};
  app.require_subcommand(1);

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "render synthetic sequences");
  std::string g_out;
  int g_seqs = 2, g_frames = 5, g_size = 64, g_classes = 8;
  uint64_t g_seed = 7;
  bool g_shadow = false, g_tracked = false, g_force = false;
  gen->add_option("--out", g_out, "output dataset directory")->required();
  gen->add_option("--sequences", g_seqs, "number of sequences");
  gen->add_option("--frames", g_frames, "frames per sequence");
  gen->add_option("--size", g_size, "square image size");
  gen->add_option("--seed", g_seed, "master seed");
  gen->add_option("--classes", g_classes, "number of semantic classes");
  gen->add_flag("--shadow-masks", g_shadow, "dilate masks into cast shadows");
  gen->add_flag("--tracked-masks", g_tracked, "re-sample masks per frame");
  gen->add_flag("--force", g_force, "overwrite an existing output directory");

  // train
  auto* tr = app.add_subcommand("train", "train a model from a JSON experiment config");
  std::string t_config, t_resume, t_data, t_out;
  int64_t t_iters = 0;
  tr->add_option("--config", t_config, "experiment JSON")->required();
  tr->add_option("--resume", t_resume, "checkpoint to resume");
  tr->add_option("--iters", t_iters, "override total iterations");
  tr->add_option("--data", t_data, "override data_dir");
  tr->add_option("--out", t_out, "override out_dir");

  // infer
  auto* in = app.add_subcommand("infer", "run inference over a dataset");
  std::string i_ckpt, i_input, i_out;
  bool i_force = false;
  in->add_option("--ckpt", i_ckpt, "checkpoint")->required();
  in->add_option("--input", i_input, "input dataset directory")->required();
  in->add_option("--out", i_out, "output directory")->required();
  in->add_flag("--force", i_force, "overwrite existing outputs");

  // eval
  auto* ev = app.add_subcommand("eval", "compute metrics for a checkpoint");
  std::string e_ckpt, e_data, e_report;
  ev->add_option("--ckpt", e_ckpt, "checkpoint")->required();
  ev->add_option("--data", e_data, "dataset directory")->required();
  ev->add_option("--report", e_report, "CSV report path")->required();

  // count-params
  auto* cp = app.add_subcommand("count-params", "parameter/MAD breakdown");
  std::string c_config;
  cp->add_option("--config", c_config, "model or experiment JSON (default: paper scale)");

  // plot
  auto* pl = app.add_subcommand("plot", "render metric curves (and image grids)");
  std::string p_log, p_out, p_images;
  pl->add_option("--log", p_log, "metrics CSV")->required();
  pl->add_option("--out", p_out, "output directory")->required();
  pl->add_option("--images", p_images, "inference output directory for grids");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_generate(g_out, g_seqs, g_frames, g_size, g_seed, g_classes, g_shadow,
                          g_tracked, g_force);
    if (tr->parsed()) return cmd_train(t_config, t_resume, t_iters, t_data, t_out);
    if (in->parsed()) return cmd_infer(i_ckpt, i_input, i_out, i_force);
    if (ev->parsed()) return cmd_eval(e_ckpt, e_data, e_report);
    if (cp->parsed()) return cmd_count_params(c_config);
    if (pl->parsed()) return cmd_plot(p_log, p_out, p_images);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return classify_exception(e);
  }
  return 0;
}
