#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "turbo_twin/backbones.hpp"
#include "turbo_twin/config.hpp"
#include "turbo_twin/critics.hpp"
#include "turbo_twin/data.hpp"
#include "turbo_twin/objectives.hpp"
#include "turbo_twin/tensor_io.hpp"

namespace turbo {

// Replay buffer of generated images for one adversarial term.
class ImagePool {
 public:
  explicit ImagePool(int capacity = 0, std::uint64_t seed = 0);

  // Per image: stored and returned while filling; once full, with
  // probability 1/2 swapped against a uniformly chosen stored image (which is
  // returned instead). Capacity 0 returns `fresh` unchanged.
  torch::Tensor query(const torch::Tensor& fresh);

  int capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return buffer_.size(); }
  // Number of images answered from the buffer so far.
  std::uint64_t swaps() const noexcept { return swaps_; }

  void save(TensorArchive& archive, const std::string& prefix) const;
  void load(const TensorArchive& archive, const std::string& prefix);

 private:
  int capacity_;
  std::vector<torch::Tensor> buffer_;
  std::mt19937_64 rng_;
  std::uint64_t swaps_ = 0;
};

inline torch::Tensor pool_query(ImagePool& pool, const torch::Tensor& fresh) { return pool.query(fresh); }

// `substep` counts critic and generator slots together: each cycle of n_d+1
// slots starts with n_d critic slots. With thresholds set (lsgan only) the
// slot is ignored and the rule is d_loss > D_threshold or g_loss < G_threshold.
bool should_update_critic(GanLoss kind, double d_loss, double g_loss, const HeuristicParams& h,
                          std::int64_t substep);

// labels: N floats, 1 = real, 0 = fake. Returns fresh tensors; inputs untouched.
std::pair<torch::Tensor, torch::Tensor> perturb_critic_inputs(const torch::Tensor& batch, const torch::Tensor& labels,
                                                              const HeuristicParams& h, std::mt19937_64& rng);

// Adam on a fixed parameter list.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<torch::Tensor> params, double lr, double beta1, double beta2, double eps = 1e-8);

  void zero_grad();
  void step();
  // True when every parameter gradient is finite (absent gradients count as finite).
  bool gradients_finite() const;

  std::int64_t steps() const noexcept { return t_; }
  const std::vector<torch::Tensor>& params() const noexcept { return params_; }

  void save(TensorArchive& archive, const std::string& prefix) const;
  void load(const TensorArchive& archive, const std::string& prefix);

 private:
  std::vector<torch::Tensor> params_;
  std::vector<torch::Tensor> m_;
  std::vector<torch::Tensor> v_;
  double lr_ = 2e-4;
  double beta1_ = 0.5;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::int64_t t_ = 0;
};

// Domain pair judged by the critic of an adversarial term.
struct CriticSides {
  const torch::Tensor* real;
  const torch::Tensor* fake;
};
CriticSides critic_sides(LossTerm term, const TensorBatch& batch, const PathOutputs& outputs);

// The full trainable system.
struct TrainState {
  TurboConfig cfg;
  Translator encoder;  // q(t|y)
  Translator decoder;  // p(y|t)
  std::map<LossTerm, Critic> critics;
  Adam generator_opt;
  std::map<LossTerm, Adam> critic_opts;
  std::map<LossTerm, ImagePool> pools;
  std::mt19937_64 rng;
  std::int64_t step = 0;
  std::int64_t substep = 0;
  std::int64_t generator_updates = 0;
  std::int64_t critic_updates = 0;
  std::uint64_t stream_epoch = 0;
  std::size_t stream_cursor = 0;

  CriticMap critic_map() const;
  // Hash of encoder+decoder tensors, and of every critic tensor.
  std::uint64_t generator_hash() const;
  std::uint64_t critic_hash() const;
};

// Fresh state from the config's seed. Validates cfg.
TrainState init_state(const TurboConfig& cfg);

TensorArchive state_archive(const TrainState& state);
TrainState state_from_archive(const TensorArchive& archive);
void save_state(const std::filesystem::path& path, const TrainState& state);
TrainState load_state(const std::filesystem::path& path);

struct StepRecord {
  std::int64_t step = 0;
  std::map<LossTerm, double> terms;
  double direct_total = 0.0;
  double reverse_total = 0.0;
  double grand_total = 0.0;
  // Last critic loss computed for each adversarial term (NaN when the batch
  // left one side empty).
  std::map<LossTerm, double> critic_losses;
  int critic_updates = 0;
};

// Column names of the loss CSV for cfg.
std::vector<std::string> loss_log_header(const TurboConfig& cfg);
std::string format_log_row(const TurboConfig& cfg, const StepRecord& record);

struct TrainOptions {
  std::filesystem::path log_path;         // empty: no CSV
  std::filesystem::path checkpoint_dir;   // empty: no checkpoints
  int checkpoint_every = 0;               // steps; 0 keeps only the final one
  std::filesystem::path snapshot_dir;     // NonFiniteLoss diagnostics; empty: checkpoint_dir
  std::function<void(const StepRecord&)> on_step;
  // Called after the critic phase ("critic") and the generator update ("generator").
  std::function<void(const char* phase, const TrainState&)> on_phase;
};

inline constexpr const char* kLatestCheckpoint = "latest.ckpt";

class Trainer {
 public:
  // Samples must all carry a print. Their list order defines sample indices.
  Trainer(const TurboConfig& cfg, const std::vector<Sample>& samples, TrainOptions options = {});
  Trainer(TrainState state, const std::vector<Sample>& samples, TrainOptions options = {});

  // Continues from checkpoint_dir/latest.ckpt; the loss CSV is cut back to the
  // checkpoint's step so the continued log matches an uninterrupted run.
  static Trainer resume(const std::vector<Sample>& samples, TrainOptions options);

  StepRecord step();
  void run(std::int64_t steps);
  void save_checkpoint() const;

  const TrainState& state() const noexcept { return state_; }
  TrainState& state() noexcept { return state_; }
  const std::vector<StepRecord>& history() const noexcept { return history_; }

 private:
  TensorBatch next_batch();
  void critic_phase(const TensorBatch& first_batch, const PathOutputs& first_outputs, StepRecord& record);
  void fail_non_finite(const std::string& where, const std::map<LossTerm, double>& values) const;
  void open_log(bool truncate_to_state);
  void write_log(const StepRecord& record);

  TrainState state_;
  TrainOptions options_;
  torch::Tensor templates_;
  torch::Tensor prints_;
  BatchStream stream_;
  std::vector<StepRecord> history_;
  std::ofstream log_;
};

// Runs `steps` generator steps from a fresh state.
TrainState train(const TurboConfig& cfg, const std::vector<Sample>& samples, std::int64_t steps,
                 TrainOptions options = {});

}  // namespace turbo
