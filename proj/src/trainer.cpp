#include "ascnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ascnet/metrics.hpp"
#include "ascnet/util.hpp"

namespace ascnet::train {

using ag::Tensor;
using json = nlohmann::json;

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  if (j.contains("learning_rate"))
    c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("beta1")) c.beta1 = j.at("beta1").get<double>();
  if (j.contains("beta2")) c.beta2 = j.at("beta2").get<double>();
  if (j.contains("eps_adam")) c.eps_adam = j.at("eps_adam").get<double>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<int>();
  if (j.contains("early_stop_patience"))
    c.early_stop_patience = j.at("early_stop_patience").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("shuffle")) c.shuffle = j.at("shuffle").get<bool>();
  if (j.contains("grad_clip_norm"))
    c.grad_clip_norm = j.at("grad_clip_norm").get<double>();
  c.validate();
  return c;
}

json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"beta1", beta1},
          {"beta2", beta2},
          {"eps_adam", eps_adam},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"early_stop_patience", early_stop_patience},
          {"seed", seed},
          {"shuffle", shuffle},
          {"grad_clip_norm", grad_clip_norm}};
}

void adam_step(Eigen::Ref<Eigen::ArrayXd> theta,
               const Eigen::Ref<const Eigen::ArrayXd>& grad,
               Eigen::ArrayXd& m, Eigen::ArrayXd& v, std::int64_t t,
               const TrainConfig& cfg) {
  if (theta.size() != grad.size() || theta.size() != m.size() ||
      theta.size() != v.size())
    raise(errc::shape_mismatch, "adam_step buffer sizes differ");
  if (t < 1) raise(errc::invalid_argument, "adam step index must be >= 1");
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.square();
  const double mc = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double vc = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  theta -= cfg.learning_rate * (m / mc) / ((v / vc).sqrt() + cfg.eps_adam);
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, const char* purpose) {
  return util::hash_combine(seed, util::hash_str(purpose));
}

/// Packs segments[index[first..first+count)] into [count, 1, L] tensors.
std::pair<Tensor<double>, Tensor<double>> pack_batch(
    const sig::SegmentSet& set, const std::vector<std::size_t>& order,
    std::size_t first, std::size_t count) {
  const Eigen::Index L = set.L;
  ag::VecX<double> noisy(static_cast<Eigen::Index>(count) * L);
  ag::VecX<double> clean(static_cast<Eigen::Index>(count) * L);
  for (std::size_t k = 0; k < count; ++k) {
    const sig::Segment& s = set.segments[order[first + k]];
    noisy.segment(static_cast<Eigen::Index>(k) * L, L) = s.noisy;
    clean.segment(static_cast<Eigen::Index>(k) * L, L) = s.clean;
  }
  const auto shape = ag::Shape::bcn(static_cast<Eigen::Index>(count), 1, L);
  return {Tensor<double>::from_data(shape, std::move(noisy)),
          Tensor<double>::from_data(shape, std::move(clean))};
}

double dataset_loss_eval(Checkpoint& ckpt, const sig::SegmentSet& set,
                         int batch_size) {
  ag::NoGrad guard;
  std::vector<std::size_t> order(set.segments.size());
  std::iota(order.begin(), order.end(), 0);
  double total_sq = 0.0;
  for (std::size_t first = 0; first < order.size();
       first += static_cast<std::size_t>(batch_size)) {
    const std::size_t count =
        std::min<std::size_t>(static_cast<std::size_t>(batch_size),
                              order.size() - first);
    auto [noisy, clean] = pack_batch(set, order, first, count);
    auto out = model::forward(noisy, ckpt.params, ckpt.config, ag::Mode::eval);
    total_sq += (out.value() - clean.value()).square().sum();
  }
  return total_sq /
         static_cast<double>(set.segments.size() * static_cast<std::size_t>(set.L));
}

void check_sets(const sig::SegmentSet& train_set,
                const sig::SegmentSet& val_set,
                const model::ModelConfig& cfg) {
  if (train_set.segments.empty() || val_set.segments.empty())
    raise(errc::empty_dataset, "train and validation sets must be non-empty");
  if (train_set.L != cfg.segment_length || val_set.L != cfg.segment_length)
    raise(errc::config_mismatch,
          "segment length " + std::to_string(train_set.L) +
              " does not match model segment_length " +
              std::to_string(cfg.segment_length));
}

Checkpoint run_epochs(Checkpoint ckpt, const sig::SegmentSet& train_set,
                      const sig::SegmentSet& val_set, const TrainConfig& cfg) {
  util::Rng shuffle_rng(derive_seed(cfg.seed, "ascnet-shuffle"));
  if (!ckpt.shuffle_rng_state.empty())
    shuffle_rng.restore_state(ckpt.shuffle_rng_state);

  std::vector<Eigen::ArrayXd*> grads;  // filled per step, in visit order
  const Eigen::Index L = train_set.L;

  for (int epoch = ckpt.epoch + 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order(train_set.segments.size());
    std::iota(order.begin(), order.end(), 0);
    if (cfg.shuffle) shuffle_rng.shuffle(order);

    double epoch_sq = 0.0;
    for (std::size_t first = 0; first < order.size();
         first += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count =
          std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size),
                                order.size() - first);
      auto [noisy, clean] = pack_batch(train_set, order, first, count);
      auto out =
          model::forward(noisy, ckpt.params, ckpt.config, ag::Mode::train);
      auto batch_loss = model::loss(out, clean);
      const double loss_value = batch_loss.item();
      if (!std::isfinite(loss_value))
        raise(errc::divergence, "training loss became non-finite at step " +
                                    std::to_string(ckpt.adam.t + 1));
      epoch_sq += loss_value * static_cast<double>(count * static_cast<std::size_t>(L));

      ag::backward(batch_loss);

      grads.clear();
      double sq_norm = 0.0;
      std::size_t idx = 0;
      ckpt.params.visit([&](const std::string&, Tensor<double>& p) {
        Eigen::ArrayXd& g = p.node()->ensure_grad();
        sq_norm += g.square().sum();
        grads.push_back(&g);
        ++idx;
      });
      if (cfg.grad_clip_norm > 0) {
        const double norm = std::sqrt(sq_norm);
        if (norm > cfg.grad_clip_norm) {
          const double s = cfg.grad_clip_norm / norm;
          for (auto* g : grads) *g *= s;
        }
      }

      ckpt.adam.t += 1;
      idx = 0;
      ckpt.params.visit([&](const std::string&, Tensor<double>& p) {
        adam_step(p.value(), *grads[idx], ckpt.adam.m[idx], ckpt.adam.v[idx],
                  ckpt.adam.t, cfg);
        ++idx;
      });
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss =
        epoch_sq / static_cast<double>(train_set.segments.size() *
                                       static_cast<std::size_t>(L));
    stats.val_loss = dataset_loss_eval(ckpt, val_set, cfg.batch_size);
    if (!std::isfinite(stats.val_loss))
      raise(errc::divergence, "validation loss became non-finite at step " +
                                  std::to_string(ckpt.adam.t));
    ckpt.history.push_back(stats);
    ckpt.epoch = epoch;

    if (stats.val_loss < ckpt.best_val_loss) {
      ckpt.best_val_loss = stats.val_loss;
      ckpt.best_epoch = epoch;
      ckpt.best_params = ckpt.params.clone();
      ckpt.epochs_since_improvement = 0;
    } else {
      ckpt.epochs_since_improvement += 1;
      if (ckpt.epochs_since_improvement >= cfg.early_stop_patience) {
        ckpt.shuffle_rng_state = shuffle_rng.save_state();
        return ckpt;
      }
    }
  }
  ckpt.shuffle_rng_state = shuffle_rng.save_state();
  return ckpt;
}

}  // namespace

Checkpoint train(const sig::SegmentSet& train_set,
                 const sig::SegmentSet& val_set,
                 const model::ModelConfig& model_cfg, const TrainConfig& cfg) {
  cfg.validate();
  model_cfg.validate();
  check_sets(train_set, val_set, model_cfg);

  Checkpoint ckpt;
  ckpt.config = model_cfg;
  ckpt.train_seed = cfg.seed;
  ckpt.params =
      model::init_params<double>(model_cfg, derive_seed(cfg.seed, "ascnet-init"));
  ckpt.best_params = ckpt.params.clone();
  ckpt.params.visit([&](const std::string&, Tensor<double>& p) {
    ckpt.adam.m.push_back(Eigen::ArrayXd::Zero(p.size()));
    ckpt.adam.v.push_back(Eigen::ArrayXd::Zero(p.size()));
  });
  return run_epochs(std::move(ckpt), train_set, val_set, cfg);
}

Checkpoint resume(Checkpoint start, const sig::SegmentSet& train_set,
                  const sig::SegmentSet& val_set, const TrainConfig& cfg) {
  cfg.validate();
  check_sets(train_set, val_set, start.config);
  if (cfg.seed != start.train_seed)
    raise(errc::config_mismatch,
          "resume seed differs from the checkpoint's training seed");
  return run_epochs(std::move(start), train_set, val_set, cfg);
}

sig::MetricsReport evaluate(Checkpoint& ckpt, const sig::SegmentSet& test_set,
                            EvalStub stub) {
  if (test_set.segments.empty())
    raise(errc::empty_dataset, "evaluate on an empty segment set");
  if (stub == EvalStub::none && test_set.L != ckpt.config.segment_length)
    raise(errc::config_mismatch,
          "segment length " + std::to_string(test_set.L) +
              " does not match checkpoint segment_length " +
              std::to_string(ckpt.config.segment_length));

  const int batch_size = 32;

  struct Acc {
    double snr_out = 0, snr_imp = 0, mse = 0, prd = 0;
    std::size_t n = 0;
  };
  std::map<std::tuple<std::string, std::string, double>, Acc> groups;

  ag::NoGrad guard;
  std::vector<std::size_t> order(test_set.segments.size());
  std::iota(order.begin(), order.end(), 0);
  const Eigen::Index L = test_set.L;
  for (std::size_t first = 0; first < order.size();
       first += static_cast<std::size_t>(batch_size)) {
    const std::size_t count =
        std::min<std::size_t>(static_cast<std::size_t>(batch_size),
                              order.size() - first);
    auto [noisy, clean] = pack_batch(test_set, order, first, count);
    ag::VecX<double> denoised;
    switch (stub) {
      case EvalStub::none:
        denoised = model::forward(noisy, ckpt.best_params, ckpt.config,
                                  ag::Mode::eval)
                       .value();
        break;
      case EvalStub::clean: denoised = clean.value(); break;
      case EvalStub::noisy: denoised = noisy.value(); break;
    }
    for (std::size_t k = 0; k < count; ++k) {
      const sig::Segment& s = test_set.segments[order[first + k]];
      const Eigen::ArrayXd est =
          denoised.segment(static_cast<Eigen::Index>(k) * L, L);
      Acc& acc = groups[{s.record_id, s.noise.kind_label(),
                         s.noise.target_snr_db}];
      acc.snr_out += sig::snr_out(s.clean, est);
      acc.snr_imp += sig::snr_improvement(s.clean, s.noisy, est);
      acc.mse += sig::mse(s.clean, est);
      acc.prd += sig::prd(s.clean, est);
      acc.n += 1;
    }
  }

  sig::MetricsReport report;
  for (const auto& [key, acc] : groups) {
    sig::MetricRow row;
    row.record_id = std::get<0>(key);
    row.noise_kind = std::get<1>(key);
    row.input_snr_db = std::get<2>(key);
    const auto n = static_cast<double>(acc.n);
    row.snr_out_db = acc.snr_out / n;
    row.snr_imp_db = acc.snr_imp / n;
    row.mse = acc.mse / n;
    row.rmse = std::sqrt(row.mse);
    row.prd_percent = acc.prd / n;
    report.rows.push_back(std::move(row));
  }
  report.finalize();
  return report;
}

}  // namespace ascnet::train
