#include "training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "checkpoint.hpp"
#include "temporal.hpp"

namespace rdi {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

void TrainConfig::validate() const {
  require(total_iters >= 1, "TrainConfig: total_iters >= 1");
  require(batch_size >= 1, "TrainConfig: batch_size >= 1");
  require(t_trunc >= 1, "TrainConfig: T_trunc >= 1");
  require(drop_fraction > 0 && drop_fraction < 1, "TrainConfig: 0 < drop_fraction < 1");
  require(lr > 0 && lr_after_drop > 0, "TrainConfig: learning rates must be positive");
}

std::string TrainConfig::to_json() const {
  nlohmann::json j;
  j["total_iters"] = total_iters;
  j["batch_size"] = batch_size;
  j["t_trunc"] = t_trunc;
  j["lr"] = lr;
  j["lr_after_drop"] = lr_after_drop;
  j["drop_fraction"] = drop_fraction;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["seed"] = seed;
  j["feature_seed"] = feature_seed;
  j["coarse_rec_weight"] = coarse_rec_weight;
  j["checkpoint_every"] = checkpoint_every;
  j["log_every"] = log_every;
  j["weights"] = {{"rec", weights.rec},   {"per", weights.per},
                  {"sty", weights.sty},   {"grad", weights.grad},
                  {"seg", weights.seg},   {"temporal", weights.temporal}};
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  TrainConfig c;
  c.total_iters = j.value("total_iters", c.total_iters);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.t_trunc = j.value("t_trunc", c.t_trunc);
  c.lr = j.value("lr", c.lr);
  c.lr_after_drop = j.value("lr_after_drop", c.lr_after_drop);
  c.drop_fraction = j.value("drop_fraction", c.drop_fraction);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.seed = j.value("seed", c.seed);
  c.feature_seed = j.value("feature_seed", c.feature_seed);
  c.coarse_rec_weight = j.value("coarse_rec_weight", c.coarse_rec_weight);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.log_every = j.value("log_every", c.log_every);
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    c.weights.rec = w.value("rec", c.weights.rec);
    c.weights.per = w.value("per", c.weights.per);
    c.weights.sty = w.value("sty", c.weights.sty);
    c.weights.grad = w.value("grad", c.weights.grad);
    c.weights.seg = w.value("seg", c.weights.seg);
    c.weights.temporal = w.value("temporal", c.weights.temporal);
  }
  c.validate();
  return c;
}

double lr_schedule(int64_t iter, const TrainConfig& cfg) {
  const int64_t boundary =
      static_cast<int64_t>(std::llround(cfg.drop_fraction * static_cast<double>(cfg.total_iters)));
  return iter >= boundary ? cfg.lr_after_drop : cfg.lr;
}

Trainer::Trainer(const ModelConfig& mcfg, const TrainConfig& tcfg,
                 std::vector<SequenceSample> dataset)
    : Trainer(mcfg, tcfg, std::move(dataset), false) {}

Trainer::Trainer(const ModelConfig& mcfg, const TrainConfig& tcfg,
                 std::vector<SequenceSample> dataset, bool defer_init)
    : mcfg_(mcfg), tcfg_(tcfg), dataset_(std::move(dataset)), data_rng_(tcfg.seed) {
  mcfg_.validate();
  tcfg_.validate();
  require(!dataset_.empty(), "Trainer: empty dataset");
  const int T = dataset_[0].size();
  for (const auto& s : dataset_) {
    require(s.size() == T, "Trainer: all sequences must share T");
    require(s.frames[0].color.h == mcfg_.image_size &&
                s.frames[0].color.w == mcfg_.image_size,
            "Trainer: dataset resolution differs from model config");
  }
  require(T % tcfg_.t_trunc == 0,
          "Trainer: sequence length must be a multiple of T_trunc");
  require(tcfg_.batch_size <= static_cast<int>(dataset_.size()),
          "Trainer: batch size exceeds number of sequences");
  cursors_.resize(dataset_.size());

  std::mt19937_64 model_rng(tcfg_.seed * 0x9e3779b97f4a7c15ull + 1);
  gen_ = std::make_shared<Generator>(mcfg_, model_rng);
  disc_i_ = std::make_shared<PatchDiscriminator>(3, mcfg_, model_rng);
  disc_d_ = std::make_shared<PatchDiscriminator>(1, mcfg_, model_rng);
  fx_ = std::make_unique<FeatureExtractor>(tcfg_.feature_seed);
  if (!defer_init) init_optimizers();
}

void Trainer::init_optimizers() {
  AdamConfig ac{tcfg_.beta1, tcfg_.beta2, 1e-8};
  opt_g_ = std::make_unique<Adam>(gen_->parameters(), ac);
  opt_d_i_ = std::make_unique<Adam>(disc_i_->parameters(), ac);
  opt_d_d_ = std::make_unique<Adam>(disc_d_->parameters(), ac);
}

std::vector<int> Trainer::next_batch_indices() {
  std::vector<int> out;
  while (static_cast<int>(out.size()) < tcfg_.batch_size) {
    if (order_pos_ >= order_.size()) {
      order_.resize(dataset_.size());
      for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
      for (size_t i = order_.size() - 1; i > 0; --i)
        std::swap(order_[i], order_[data_rng_() % (i + 1)]);
      order_pos_ = 0;
    }
    const int cand = order_[order_pos_++];
    // a sequence may appear once per batch (it owns one recurrent state)
    if (std::find(out.begin(), out.end(), cand) == out.end()) out.push_back(cand);
  }
  return out;
}

Tensor Trainer::stack_frames(
    const std::vector<int>& seqs, int frame,
    const std::function<const std::vector<double>&(const FrameSample&)>& get,
    int channels) const {
  const int s = mcfg_.image_size;
  const int64_t plane = static_cast<int64_t>(channels) * s * s;
  std::vector<double> data(static_cast<size_t>(seqs.size()) * plane);
  for (size_t b = 0; b < seqs.size(); ++b) {
    const int pos = cursors_[static_cast<size_t>(seqs[b])].pos + frame;
    const auto& src = get(dataset_[static_cast<size_t>(seqs[b])].frames[static_cast<size_t>(pos)]);
    std::copy(src.begin(), src.end(), data.begin() + static_cast<int64_t>(b) * plane);
  }
  return from_vec({static_cast<int>(seqs.size()), channels, s, s}, std::move(data));
}

LossReport Trainer::train_step() {
  const std::vector<int> seqs = next_batch_indices();
  const int B = static_cast<int>(seqs.size());
  const int T = tcfg_.t_trunc;
  const int S = mcfg_.image_size;
  const double lr = lr_schedule(iter_, tcfg_);
  const bool clip_starts_at_zero =
      cursors_[static_cast<size_t>(seqs[0])].pos == 0;  // uniform: clips synchronized per sequence

  // batched clip tensors
  std::vector<Tensor> gt_img(static_cast<size_t>(T)), gt_dep(static_cast<size_t>(T)),
      masks(static_cast<size_t>(T));
  std::vector<std::vector<int>> labels(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    gt_img[static_cast<size_t>(t)] = stack_frames(
        seqs, t, [](const FrameSample& f) -> const std::vector<double>& { return f.color.data; }, 3);
    gt_dep[static_cast<size_t>(t)] = stack_frames(
        seqs, t, [](const FrameSample& f) -> const std::vector<double>& { return f.depth.data; }, 1);
    std::vector<double> m(static_cast<size_t>(B) * S * S);
    std::vector<int> lab(static_cast<size_t>(B) * S * S);
    for (int b = 0; b < B; ++b) {
      const int pos = cursors_[static_cast<size_t>(seqs[static_cast<size_t>(b)])].pos + t;
      const auto& fr =
          dataset_[static_cast<size_t>(seqs[static_cast<size_t>(b)])].frames[static_cast<size_t>(pos)];
      for (int i = 0; i < S * S; ++i) {
        m[static_cast<size_t>(b) * S * S + i] = fr.mask.data[static_cast<size_t>(i)];
        lab[static_cast<size_t>(b) * S * S + i] = fr.seg.classes[static_cast<size_t>(i)];
      }
    }
    masks[static_cast<size_t>(t)] = from_vec({B, 1, S, S}, std::move(m));
    labels[static_cast<size_t>(t)] = std::move(lab);
  }
  // flows for temporal losses (pairs within the clip)
  std::vector<Tensor> flow_fwd(static_cast<size_t>(T)), occl(static_cast<size_t>(T)),
      flow_first(static_cast<size_t>(T)), occl_first(static_cast<size_t>(T));
  if (mcfg_.temporal_enabled && T >= 2) {
    auto stack_flow = [&](int t, bool to_first, bool occl_map) -> Tensor {
      const int ch = occl_map ? 1 : 2;
      std::vector<double> data(static_cast<size_t>(B) * ch * S * S);
      for (int b = 0; b < B; ++b) {
        const auto& sample = dataset_[static_cast<size_t>(seqs[static_cast<size_t>(b)])];
        const int pos = cursors_[static_cast<size_t>(seqs[static_cast<size_t>(b)])].pos + t;
        const std::vector<double>* src = nullptr;
        if (to_first) {
          if (occl_map)
            src = &sample.occl_first[static_cast<size_t>(pos)]->data;
          else
            src = &sample.flow_to_first[static_cast<size_t>(pos)]->data;
        } else {
          if (occl_map)
            src = &sample.occl[static_cast<size_t>(pos)]->data;
          else
            src = &sample.flow_fwd[static_cast<size_t>(pos)]->data;
        }
        std::copy(src->begin(), src->end(),
                  data.begin() + static_cast<int64_t>(b) * ch * S * S);
      }
      return from_vec({B, ch, S, S}, std::move(data));
    };
    for (int t = 1; t < T; ++t) {
      flow_fwd[static_cast<size_t>(t)] = stack_flow(t, false, false);
      occl[static_cast<size_t>(t)] = stack_flow(t, false, true);
    }
    if (clip_starts_at_zero) {
      for (int t = 2; t < T; ++t) {
        flow_first[static_cast<size_t>(t)] = stack_flow(t, true, false);
        occl_first[static_cast<size_t>(t)] = stack_flow(t, true, true);
      }
    }
  }

  // ---- generator forward over the clip (one graph reused by both steps)
  std::vector<GeneratorState> states_in;
  std::vector<GeneratorOutput> outs;
  GeneratorState state;
  bool have_state = false;
  {
    // assemble the batched carried state
    std::vector<const GeneratorState*> per_seq;
    bool all_defined = true, any_defined = false;
    for (int b = 0; b < B; ++b) {
      const auto& st = cursors_[static_cast<size_t>(seqs[static_cast<size_t>(b)])].state;
      per_seq.push_back(&st);
      all_defined = all_defined && st.defined();
      any_defined = any_defined || st.defined();
    }
    require(!any_defined || all_defined,
            "Trainer: mixed fresh/carried states in one batch are unsupported");
    if (all_defined && any_defined) {
      auto stack_state = [&](auto getter) {
        std::vector<Tensor> parts;
        for (const auto* st : per_seq) parts.push_back(getter(*st));
        // batch-concat via channel trick is wrong; build explicitly
        const Shape sh = parts[0].shape();
        const int64_t plane = shape_numel(sh) / sh[0];
        std::vector<double> data(static_cast<size_t>(B) * plane);
        for (int b = 0; b < B; ++b) {
          auto d = parts[static_cast<size_t>(b)].data();
          std::copy(d.begin(), d.end(), data.begin() + static_cast<int64_t>(b) * plane);
        }
        Shape out_sh = sh;
        out_sh[0] = B;
        return from_vec(out_sh, std::move(data));
      };
      state.prev_in_image = stack_state([](const GeneratorState& s) { return s.prev_in_image; });
      state.prev_in_depth = stack_state([](const GeneratorState& s) { return s.prev_in_depth; });
      state.prev_out_image = stack_state([](const GeneratorState& s) { return s.prev_out_image; });
      state.prev_out_depth = stack_state([](const GeneratorState& s) { return s.prev_out_depth; });
      if (per_seq[0]->lstm.defined()) {
        state.lstm.hidden = stack_state([](const GeneratorState& s) { return s.lstm.hidden; });
        state.lstm.cell = stack_state([](const GeneratorState& s) { return s.lstm.cell; });
      }
      have_state = true;
    }
  }
  GeneratorState batch_state_in = state;
  for (int t = 0; t < T; ++t) {
    auto [out, ns] = gen_->step(gt_img[static_cast<size_t>(t)], gt_dep[static_cast<size_t>(t)],
                                masks[static_cast<size_t>(t)], have_state ? &state : nullptr);
    outs.push_back(out);
    state = ns;
    have_state = true;
  }

  // ---- (1) discriminator step on detached fakes
  auto fake_source = [&](const GeneratorOutput& o) {
    return mcfg_.adv_on_composited ? o.image : o.raw_image;
  };
  auto fake_source_d = [&](const GeneratorOutput& o) {
    return mcfg_.adv_on_composited ? o.depth : o.raw_depth;
  };
  opt_d_i_->zero_grad();
  opt_d_d_->zero_grad();
  Tensor d_i_loss, d_d_loss;
  for (int t = 0; t < T; ++t) {
    Tensor li = hinge_d(disc_i_->forward(gt_img[static_cast<size_t>(t)]),
                        disc_i_->forward(fake_source(outs[static_cast<size_t>(t)]).detach()));
    Tensor ld = hinge_d(disc_d_->forward(gt_dep[static_cast<size_t>(t)]),
                        disc_d_->forward(fake_source_d(outs[static_cast<size_t>(t)]).detach()));
    d_i_loss = d_i_loss.defined() ? d_i_loss + li : li;
    d_d_loss = d_d_loss.defined() ? d_d_loss + ld : ld;
  }
  d_i_loss.backward();
  d_d_loss.backward();
  opt_d_i_->step(lr);
  opt_d_d_->step(lr);

  // ---- (2) generator step: full objective through all clip frames
  opt_g_->zero_grad();
  LossParts parts;
  Tensor coarse_rec;
  std::vector<Tensor> out_images;
  for (int t = 0; t < T; ++t) {
    const auto& o = outs[static_cast<size_t>(t)];
    Tensor ri = rec_l1(o.raw_image, gt_img[static_cast<size_t>(t)]);
    Tensor rd = rec_l1(o.raw_depth, gt_dep[static_cast<size_t>(t)]);
    Tensor pe = perceptual(o.raw_image, gt_img[static_cast<size_t>(t)], *fx_);
    Tensor st = style(o.raw_image, gt_img[static_cast<size_t>(t)], *fx_);
    Tensor gr = depth_gradient(o.raw_depth, gt_dep[static_cast<size_t>(t)]);
    Tensor ai = hinge_g(disc_i_->forward(fake_source(o)));
    Tensor ad = hinge_g(disc_d_->forward(fake_source_d(o)));
    Tensor se = mcfg_.rgbd_spade_enabled
                    ? seg_loss(o.seg_logits, labels[static_cast<size_t>(t)], S, S)
                    : zeros({1});
    Tensor cr = rec_l1(o.coarse_image, gt_img[static_cast<size_t>(t)]) +
                rec_l1(o.coarse_depth, gt_dep[static_cast<size_t>(t)]);
    parts.rec_I = parts.rec_I.defined() ? parts.rec_I + ri : ri;
    parts.rec_D = parts.rec_D.defined() ? parts.rec_D + rd : rd;
    parts.per = parts.per.defined() ? parts.per + pe : pe;
    parts.sty = parts.sty.defined() ? parts.sty + st : st;
    parts.grad = parts.grad.defined() ? parts.grad + gr : gr;
    parts.adv_I = parts.adv_I.defined() ? parts.adv_I + ai : ai;
    parts.adv_D = parts.adv_D.defined() ? parts.adv_D + ad : ad;
    parts.seg = parts.seg.defined() ? parts.seg + se : se;
    coarse_rec = coarse_rec.defined() ? coarse_rec + cr : cr;
    out_images.push_back(o.raw_image);
  }
  if (mcfg_.temporal_enabled && T >= 2) {
    std::vector<Tensor> ff(flow_fwd.begin(), flow_fwd.end());
    std::vector<Tensor> oc(occl.begin(), occl.end());
    std::vector<Tensor> f1(flow_first.begin(), flow_first.end());
    std::vector<Tensor> o1(occl_first.begin(), occl_first.end());
    if (!clip_starts_at_zero || T < 3) {
      // long-term flows unavailable mid-sequence (clip-local convention)
      Tensor st_only = zeros({1});
      for (int t = 1; t < T; ++t) {
        Tensor warped = warp_bilinear(out_images[static_cast<size_t>(t - 1)],
                                      ff[static_cast<size_t>(t)]);
        std::vector<Tensor> reps(3, oc[static_cast<size_t>(t)]);
        st_only = st_only + mean_all(concat_channels(reps) *
                                     abs(out_images[static_cast<size_t>(t)] - warped));
      }
      parts.st = st_only;
      parts.lt = zeros({1});
    } else {
      auto tl = temporal_losses(out_images, ff, oc, f1, o1);
      parts.st = tl.st;
      parts.lt = tl.lt;
    }
  } else {
    parts.st = zeros({1});
    parts.lt = zeros({1});
  }
  parts.total_D_I = d_i_loss.detach();
  parts.total_D_D = d_d_loss.detach();

  CombinedLoss combined = combine(parts, tcfg_.weights);
  if (!combined.report.all_finite())
    throw std::runtime_error("train_step: non-finite loss at iter " +
                             std::to_string(iter_) + " | " + combined.report.dump());
  Tensor objective =
      combined.total_G +
      mul_scalar(coarse_rec, tcfg_.coarse_rec_weight * tcfg_.weights.rec);
  objective.backward();
  opt_g_->step(lr);

  // ---- carry per-sequence cursors and detached states
  GeneratorState detached = state.detached();
  for (int b = 0; b < B; ++b) {
    auto& cur = cursors_[static_cast<size_t>(seqs[static_cast<size_t>(b)])];
    // slice batch element b out of the batched state
    auto slice_b = [&](const Tensor& t) -> Tensor {
      const Shape sh = t.shape();
      const int64_t plane = shape_numel(sh) / sh[0];
      std::vector<double> data(static_cast<size_t>(plane));
      auto d = t.data();
      std::copy(d.begin() + static_cast<int64_t>(b) * plane,
                d.begin() + static_cast<int64_t>(b + 1) * plane, data.begin());
      Shape out_sh = sh;
      out_sh[0] = 1;
      return from_vec(out_sh, std::move(data));
    };
    GeneratorState out_state;
    out_state.prev_in_image = slice_b(detached.prev_in_image);
    out_state.prev_in_depth = slice_b(detached.prev_in_depth);
    out_state.prev_out_image = slice_b(detached.prev_out_image);
    out_state.prev_out_depth = slice_b(detached.prev_out_depth);
    if (detached.lstm.defined()) {
      out_state.lstm.hidden = slice_b(detached.lstm.hidden);
      out_state.lstm.cell = slice_b(detached.lstm.cell);
    }
    if (observer_) {
      GeneratorState in_state;
      if (batch_state_in.defined()) {
        in_state.prev_in_image = slice_b(batch_state_in.prev_in_image);
        in_state.prev_in_depth = slice_b(batch_state_in.prev_in_depth);
        in_state.prev_out_image = slice_b(batch_state_in.prev_out_image);
        in_state.prev_out_depth = slice_b(batch_state_in.prev_out_depth);
        if (batch_state_in.lstm.defined()) {
          in_state.lstm.hidden = slice_b(batch_state_in.lstm.hidden);
          in_state.lstm.cell = slice_b(batch_state_in.lstm.cell);
        }
      }
      observer_(seqs[static_cast<size_t>(b)], in_state, out_state);
    }
    cur.pos += T;
    if (cur.pos >= dataset_[static_cast<size_t>(seqs[static_cast<size_t>(b)])].size()) {
      cur.pos = 0;
      cur.state = GeneratorState{};
    } else {
      cur.state = out_state;
    }
  }

  ++iter_;
  return combined.report;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  CheckpointData data;
  data.model_config_json = mcfg_.to_json();
  data.train_config_json = tcfg_.to_json();
  data.iteration = iter_;
  for (const auto& [name, t] : gen_->named_parameters())
    data.tensors.emplace_back("gen." + name, t);
  for (const auto& [name, t] : disc_i_->named_parameters())
    data.tensors.emplace_back("disc_i." + name, t);
  for (const auto& [name, t] : disc_d_->named_parameters())
    data.tensors.emplace_back("disc_d." + name, t);
  for (size_t s = 0; s < cursors_.size(); ++s) {
    const auto& st = cursors_[s].state;
    if (!st.defined()) continue;
    const std::string p = "cursor" + std::to_string(s) + ".";
    data.tensors.emplace_back(p + "prev_in_image", st.prev_in_image);
    data.tensors.emplace_back(p + "prev_in_depth", st.prev_in_depth);
    data.tensors.emplace_back(p + "prev_out_image", st.prev_out_image);
    data.tensors.emplace_back(p + "prev_out_depth", st.prev_out_depth);
    if (st.lstm.defined()) {
      data.tensors.emplace_back(p + "lstm_h", st.lstm.hidden);
      data.tensors.emplace_back(p + "lstm_c", st.lstm.cell);
    }
  }
  data.opt_generator = opt_g_->state_blob();
  data.opt_disc_image = opt_d_i_->state_blob();
  data.opt_disc_depth = opt_d_d_->state_blob();
  data.power_disc_image = disc_i_->power_state();
  data.power_disc_depth = disc_d_->power_state();
  std::ostringstream rng;
  rng << data_rng_ << "|" << order_pos_;
  for (int v : order_) rng << "," << v;
  data.rng_state = rng.str();
  for (const auto& c : cursors_) data.cursor_positions.push_back(c.pos);
  checkpoint_save(path, data);
}

std::unique_ptr<Trainer> Trainer::resume_checkpoint(const std::filesystem::path& path,
                                                    std::vector<SequenceSample> dataset) {
  CheckpointData data = checkpoint_resume(path);
  const ModelConfig mcfg = ModelConfig::from_json(data.model_config_json);
  if (data.train_config_json.empty())
    throw std::runtime_error("checkpoint has no embedded train config");
  const TrainConfig tcfg = TrainConfig::from_json(data.train_config_json);
  auto trainer = std::unique_ptr<Trainer>(new Trainer(mcfg, tcfg, std::move(dataset), true));

  // restore tensors by name
  std::unordered_map<std::string, Tensor> table;
  for (auto& [name, t] : data.tensors) table.emplace(name, t);
  auto load_into = [&](Module& m, const std::string& prefix) {
    for (auto& [name, t] : m.named_parameters()) {
      auto it = table.find(prefix + name);
      if (it == table.end())
        throw std::runtime_error("checkpoint missing tensor " + prefix + name);
      if (!shape_eq(it->second.shape(), t.shape()))
        throw std::runtime_error("checkpoint: model config mismatch for tensor " +
                                 prefix + name + " (shape " +
                                 shape_str(it->second.shape()) + " vs " +
                                 shape_str(t.shape()) + ")");
      auto dst = t.mutable_data();
      auto src = it->second.data();
      std::copy(src.begin(), src.end(), dst.begin());
    }
  };
  load_into(*trainer->gen_, "gen.");
  load_into(*trainer->disc_i_, "disc_i.");
  load_into(*trainer->disc_d_, "disc_d.");
  trainer->disc_i_->load_power_state(data.power_disc_image);
  trainer->disc_d_->load_power_state(data.power_disc_depth);

  trainer->init_optimizers();
  trainer->opt_g_->load_state_blob(data.opt_generator);
  trainer->opt_d_i_->load_state_blob(data.opt_disc_image);
  trainer->opt_d_d_->load_state_blob(data.opt_disc_depth);
  trainer->iter_ = data.iteration;

  // rng + data order
  const std::string& rs = data.rng_state;
  const size_t bar = rs.find('|');
  if (bar == std::string::npos) throw std::runtime_error("checkpoint: bad rng_state");
  {
    std::istringstream is(rs.substr(0, bar));
    is >> trainer->data_rng_;
  }
  {
    std::string rest = rs.substr(bar + 1);
    std::istringstream is(rest);
    std::string tok;
    std::getline(is, tok, ',');
    trainer->order_pos_ = static_cast<size_t>(std::stoull(tok));
    trainer->order_.clear();
    while (std::getline(is, tok, ',')) trainer->order_.push_back(std::stoi(tok));
  }
  if (data.cursor_positions.size() == trainer->cursors_.size())
    for (size_t i = 0; i < trainer->cursors_.size(); ++i)
      trainer->cursors_[i].pos = data.cursor_positions[i];
  for (size_t s = 0; s < trainer->cursors_.size(); ++s) {
    const std::string p = "cursor" + std::to_string(s) + ".";
    auto it = table.find(p + "prev_in_image");
    if (it == table.end()) continue;
    GeneratorState st;
    st.prev_in_image = table.at(p + "prev_in_image");
    st.prev_in_depth = table.at(p + "prev_in_depth");
    st.prev_out_image = table.at(p + "prev_out_image");
    st.prev_out_depth = table.at(p + "prev_out_depth");
    if (table.count(p + "lstm_h")) {
      st.lstm.hidden = table.at(p + "lstm_h");
      st.lstm.cell = table.at(p + "lstm_c");
    }
    trainer->cursors_[s].state = st;
  }
  return trainer;
}

void run_training(Trainer& trainer, int64_t iters, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path csv_path = out_dir / "metrics.csv";
  const bool fresh = !std::filesystem::exists(csv_path);
  std::ofstream csv(csv_path, std::ios::app);
  if (fresh) {
    csv << "iter";
    for (const auto& name : LossReport::field_names()) csv << "," << name;
    csv << ",lr,wall_clock_s\n";
  }
  const auto t0 = std::chrono::steady_clock::now();
  for (int64_t i = 0; i < iters; ++i) {
    const double lr = trainer.current_lr();
    LossReport rep = trainer.train_step();
    if (trainer.iteration() % trainer.train_config().log_every == 0) {
      csv << trainer.iteration();
      for (double v : rep.values()) csv << "," << v;
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      csv << "," << lr << "," << wall << "\n";
      csv.flush();
    }
    if (trainer.train_config().checkpoint_every > 0 &&
        trainer.iteration() % trainer.train_config().checkpoint_every == 0) {
      trainer.save_checkpoint(out_dir / "checkpoint.rdick");
    }
  }
}

}  // namespace rdi
