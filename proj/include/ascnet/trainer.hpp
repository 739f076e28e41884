#ifndef ASCNET_TRAINER_HPP
#define ASCNET_TRAINER_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ascnet/model.hpp"
#include "ascnet/report.hpp"
#include "ascnet/segment.hpp"

namespace ascnet::train {

using Params = model::Parameters<double>;

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  int batch_size = 32;
  int max_epochs = 50;
  int early_stop_patience = 10;
  std::uint64_t seed = 0;
  bool shuffle = true;
  double grad_clip_norm = 5.0;  // global L2 clip; <= 0 disables

  void validate() const {
    if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1))
      raise(errc::invalid_config, "adam betas must lie in (0, 1)");
    if (batch_size < 1) raise(errc::invalid_config, "batch_size must be >= 1");
    if (max_epochs < 0) raise(errc::invalid_config, "max_epochs must be >= 0");
    if (early_stop_patience < 1)
      raise(errc::invalid_config, "early_stop_patience must be >= 1");
    if (!(learning_rate > 0) || !(eps_adam > 0))
      raise(errc::invalid_config, "learning_rate and eps_adam must be > 0");
  }

  static TrainConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// First/second moment buffers, one pair per parameter tensor in visit
/// order, plus the shared step counter.
struct AdamState {
  std::vector<Eigen::ArrayXd> m, v;
  std::int64_t t = 0;
};

/// One Adam update: m and v are the running moments of this tensor, t the
/// 1-based global step used for bias correction.
void adam_step(Eigen::Ref<Eigen::ArrayXd> theta,
               const Eigen::Ref<const Eigen::ArrayXd>& grad,
               Eigen::ArrayXd& m, Eigen::ArrayXd& v, std::int64_t t,
               const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

/// Complete training state: enough to resume bit-exactly, plus the
/// best-validation parameter snapshot for evaluation.
struct Checkpoint {
  std::uint32_t version = 1;
  model::ModelConfig config;
  Params params;       // last-epoch state (resume point)
  Params best_params;  // lowest-validation-loss snapshot
  AdamState adam;
  int epoch = 0;  // epochs completed so far
  double best_val_loss = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int epochs_since_improvement = 0;
  std::vector<EpochStats> history;
  std::string shuffle_rng_state;
  std::uint64_t train_seed = 0;
};

/// Mini-batch Adam with seed-controlled shuffling, per-epoch train/val
/// losses, best-val snapshotting and early stopping. Fully deterministic
/// for fixed seeds; raises Divergence (with the step index) if the loss
/// leaves the finite range.
Checkpoint train(const sig::SegmentSet& train_set,
                 const sig::SegmentSet& val_set,
                 const model::ModelConfig& model_cfg, const TrainConfig& cfg);

/// Continues a checkpoint up to cfg.max_epochs total epochs. Training
/// k + m epochs equals training k, saving, loading and training to k + m.
Checkpoint resume(Checkpoint start, const sig::SegmentSet& train_set,
                  const sig::SegmentSet& val_set, const TrainConfig& cfg);

enum class EvalStub {
  none,   // run the network (best parameters)
  clean,  // denoised := clean, the oracle stub
  noisy,  // denoised := noisy, the identity stub
};

/// Eval-mode pass over a segment set; one report row per (record, noise
/// kind, input SNR) holding per-segment metric means (rmse is recomputed
/// as sqrt of the row mse). Never mutates parameters or running stats.
sig::MetricsReport evaluate(Checkpoint& ckpt, const sig::SegmentSet& test_set,
                            EvalStub stub = EvalStub::none);

// Checkpoint file: "ASCCKPT1", u32 version, u64 JSON header length, the
// header (config, tensor directory, scalars, histories), every tensor as
// little-endian f64 in directory order, then a CRC32 of that payload.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ascnet::train

#endif  // ASCNET_TRAINER_HPP
