#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "core_types.hpp"
#include "discriminator.hpp"
#include "generator.hpp"
#include "losses.hpp"
#include "module.hpp"

namespace rdi {

struct TrainConfig {
  int64_t total_iters = 20000;
  int batch_size = 4;
  int t_trunc = 5;
  double lr = 2e-4;
  double lr_after_drop = 2e-5;
  double drop_fraction = 0.5;
  double beta1 = 0.0;
  double beta2 = 0.9;
  uint64_t seed = 1;
  uint64_t feature_seed = 77;
  LossWeights weights;
  double coarse_rec_weight = 1.0;
  int64_t checkpoint_every = 1000;
  int64_t log_every = 1;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

// lr before drop_fraction * total_iters, lr_after_drop at and after the
// boundary (right-closed).
double lr_schedule(int64_t iter, const TrainConfig& cfg);

// Recurrent adversarial training over fixed-length clips with per-sequence
// ConvLSTM state carry (truncated BPTT; states detach at clip boundaries).
class Trainer {
 public:
  Trainer(const ModelConfig& mcfg, const TrainConfig& tcfg,
          std::vector<SequenceSample> dataset);

  LossReport train_step();
  int64_t iteration() const { return iter_; }
  double current_lr() const { return lr_schedule(iter_, tcfg_); }

  Generator& generator() { return *gen_; }
  const Generator& generator() const { return *gen_; }
  PatchDiscriminator& disc_image() { return *disc_i_; }
  PatchDiscriminator& disc_depth() { return *disc_d_; }
  const FeatureExtractor& features() const { return *fx_; }
  const TrainConfig& train_config() const { return tcfg_; }
  const ModelConfig& model_config() const { return mcfg_; }

  void save_checkpoint(const std::filesystem::path& path) const;
  // Model/optimizer/RNG state restored exactly; dataset is re-supplied.
  static std::unique_ptr<Trainer> resume_checkpoint(
      const std::filesystem::path& path, std::vector<SequenceSample> dataset);

  // instrumentation: called once per batch element per step with the state
  // that entered the clip and the detached state that left it
  using StateObserver = std::function<void(int seq_index, const GeneratorState& in,
                                           const GeneratorState& out)>;
  void set_state_observer(StateObserver obs) { observer_ = std::move(obs); }

 private:
  struct SeqCursor {
    int pos = 0;
    GeneratorState state;
  };

  Trainer(const ModelConfig& mcfg, const TrainConfig& tcfg,
          std::vector<SequenceSample> dataset, bool defer_init);
  void init_optimizers();
  std::vector<int> next_batch_indices();
  Tensor stack_frames(const std::vector<int>& seqs, int frame,
                      const std::function<const std::vector<double>&(const FrameSample&)>& get,
                      int channels) const;

  ModelConfig mcfg_;
  TrainConfig tcfg_;
  std::vector<SequenceSample> dataset_;
  std::shared_ptr<Generator> gen_;
  std::shared_ptr<PatchDiscriminator> disc_i_, disc_d_;
  std::unique_ptr<FeatureExtractor> fx_;
  std::unique_ptr<Adam> opt_g_, opt_d_i_, opt_d_d_;
  std::vector<SeqCursor> cursors_;
  std::vector<int> order_;
  size_t order_pos_ = 0;
  std::mt19937_64 data_rng_;
  int64_t iter_ = 0;
  StateObserver observer_;
};

// Convenience driver: runs iterations, appends the metric CSV (iter, each
// LossReport scalar, lr, wall-clock seconds), checkpoints on cadence.
void run_training(Trainer& trainer, int64_t iters, const std::filesystem::path& out_dir);

}  // namespace rdi
