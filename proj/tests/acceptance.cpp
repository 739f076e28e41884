// Acceptance suite: one line per criterion, nonzero exit if any fails.
// Real MIT-BIH records are used when ASCNET_MITBIH_DIR (default data/mitdb)
// holds at least three .hea files; otherwise the training criterion runs on
// synthetic surrogates of summed sinusoids plus ectopic-like spikes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ascnet/autograd_ops.hpp"
#include "ascnet/metrics.hpp"
#include "ascnet/model.hpp"
#include "ascnet/segment.hpp"
#include "ascnet/stft.hpp"
#include "ascnet/tensor.hpp"
#include "ascnet/trainer.hpp"
#include "ascnet/util.hpp"
#include "ascnet/wfdb.hpp"
#include "gradcheck.hpp"
#include "synthetic.hpp"
#include "wfdb_fixture.hpp"

using namespace ascnet;
using ag::Shape;
using Td = ag::Tensor<double>;
using testing::max_grad_error;
using testing::random_tensor;
using testing::weighted_sum;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// --- 1. gradient fidelity ---------------------------------------------------

std::string check_gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  util::Rng rng(1001);
  double worst_op = 0.0;
  auto track = [&](const char* name, double err) {
    require(err < 1e-4, std::string(name) + " gradient error " +
                            util::fmt_g(err) + " >= 1e-4");
    worst_op = std::max(worst_op, err);
  };

  {
    auto x = random_tensor<double>(Shape::bcn(2, 3, 16), rng);
    auto w = random_tensor<double>(Shape::bcn(4, 3, 5), rng);
    auto b = random_tensor<double>(Shape::vec(4), rng);
    for (Eigen::Index stride : {1, 2}) {
      auto r = random_tensor<double>(
          Shape::bcn(2, 4, (16 + stride - 1) / stride), rng, false);
      track("conv1d", max_grad_error<double>(
                          [&] {
                            return weighted_sum(ag::conv1d(x, w, b, stride), r);
                          },
                          {x, w, b}, 1e-5));
    }
  }
  {
    auto x = random_tensor<double>(Shape::bcn(2, 4, 8), rng);
    auto w = random_tensor<double>(Shape::bcn(4, 3, 5), rng);
    auto b = random_tensor<double>(Shape::vec(3), rng);
    for (Eigen::Index stride : {1, 2}) {
      auto r = random_tensor<double>(Shape::bcn(2, 3, 8 * stride), rng, false);
      track("transposed_conv1d",
            max_grad_error<double>(
                [&] {
                  return weighted_sum(ag::transposed_conv1d(x, w, b, stride),
                                      r);
                },
                {x, w, b}, 1e-5));
    }
  }
  {
    auto x = random_tensor<double>(Shape::bcn(4, 2, 8), rng);
    auto gamma = random_tensor<double>(Shape::vec(2), rng);
    auto beta = random_tensor<double>(Shape::vec(2), rng);
    auto r = random_tensor<double>(Shape::bcn(4, 2, 8), rng, false);
    for (ag::Mode mode : {ag::Mode::train, ag::Mode::eval}) {
      track("batch_norm", max_grad_error<double>(
                              [&, mode] {
                                auto st = ag::BatchNormState<double>::init(2);
                                st.running_mean.setConstant(0.1);
                                st.running_var.setConstant(1.3);
                                return weighted_sum(
                                    ag::batch_norm(x, gamma, beta, st, mode),
                                    r);
                              },
                              {x, gamma, beta}, 1e-6));
    }
  }
  {
    auto x = random_tensor<double>(Shape::bcn(3, 4, 6), rng);
    for (ag::PoolKind kind : {ag::PoolKind::avg, ag::PoolKind::max}) {
      auto rs = random_tensor<double>(Shape::bcn(3, 4, 1), rng, false);
      track("pool_spatial",
            max_grad_error<double>(
                [&, kind] { return weighted_sum(ag::pool_spatial(x, kind), rs); },
                {x}, 1e-6));
      auto rc = random_tensor<double>(Shape::bcn(3, 1, 6), rng, false);
      track("pool_channel",
            max_grad_error<double>(
                [&, kind] { return weighted_sum(ag::pool_channel(x, kind), rc); },
                {x}, 1e-6));
    }
  }
  {
    auto x = random_tensor<double>(Shape::mat(3, 5), rng);
    auto w = random_tensor<double>(Shape::mat(4, 5), rng);
    auto b = random_tensor<double>(Shape::vec(4), rng);
    auto r = random_tensor<double>(Shape::mat(3, 4), rng, false);
    track("fully_connected",
          max_grad_error<double>(
              [&] { return weighted_sum(ag::fully_connected(x, w, b), r); },
              {x, w, b}, 1e-5));
  }
  {
    const Shape s = Shape::bcn(2, 3, 4);
    auto a = random_tensor<double>(s, rng);
    auto b = random_tensor<double>(s, rng);
    auto r = random_tensor<double>(s, rng, false);
    track("add", max_grad_error<double>(
                     [&] { return weighted_sum(ag::add(a, b), r); }, {a, b},
                     1e-6));
    track("multiply", max_grad_error<double>(
                          [&] { return weighted_sum(ag::multiply(a, b), r); },
                          {a, b}, 1e-6));
    track("scale", max_grad_error<double>(
                       [&] { return weighted_sum(ag::scale(a, 1.7), r); }, {a},
                       1e-6));
    track("sigmoid", max_grad_error<double>(
                         [&] { return weighted_sum(ag::sigmoid(a), r); }, {a},
                         1e-6));
    track("positive_part",
          max_grad_error<double>(
              [&] { return weighted_sum(ag::positive_part(a), r); }, {a},
              1e-6));
    track("negative_part",
          max_grad_error<double>(
              [&] { return weighted_sum(ag::negative_part(a), r); }, {a},
              1e-6));
    auto r2 = random_tensor<double>(Shape::bcn(2, 6, 4), rng, false);
    track("concat", max_grad_error<double>(
                        [&] { return weighted_sum(ag::concat_axis1(a, b), r2); },
                        {a, b}, 1e-6));
    auto gc = random_tensor<double>(Shape::bcn(2, 3, 1), rng);
    track("mul_channel_gate",
          max_grad_error<double>(
              [&] { return weighted_sum(ag::mul_channel_gate(a, gc), r); },
              {a, gc}, 1e-6));
    auto gs = random_tensor<double>(Shape::bcn(2, 1, 4), rng);
    track("mul_spatial_gate",
          max_grad_error<double>(
              [&] { return weighted_sum(ag::mul_spatial_gate(a, gs), r); },
              {a, gs}, 1e-6));
    track("mse_loss",
          max_grad_error<double>([&] { return ag::mse_loss(a, b); }, {a, b},
                                 1e-6));
  }

  // end to end on the micro network
  model::ModelConfig micro;
  micro.n_blocks = 2;
  micro.channels = {4, 4};
  micro.kernels = {16, 16};
  micro.segment_length = 32;
  auto params = model::init_params<double>(micro, 11);
  auto noisy = random_tensor<double>(Shape::bcn(2, 1, 32), rng);
  auto clean = random_tensor<double>(Shape::bcn(2, 1, 32), rng, false);
  std::vector<Td> wrt{noisy};
  params.visit([&](const std::string&, Td& t) { wrt.push_back(t); });
  const double e2e = max_grad_error<double>(
      [&] {
        return model::loss(
            model::forward<double>(noisy, params, micro, ag::Mode::train),
            clean);
      },
      wrt, 1e-5);
  require(e2e < 1e-3,
          "end-to-end gradient error " + util::fmt_g(e2e) + " >= 1e-3");

  const double secs = seconds_since(t0);
  require(secs < 120.0, "runtime " + util::fmt_g(secs) + "s >= 2 min");
  return "max op err " + util::fmt_g(worst_op, 3) + ", e2e err " +
         util::fmt_g(e2e, 3) + ", " + util::fmt_g(secs, 3) + "s";
}

// --- 2. parser fidelity ------------------------------------------------ ---

std::string check_parser_fidelity() {
  auto one = wfdb::decode_format212({0xE8, 0x03, 0x00}, 2, 1);
  require(one(0, 0) == 1000 && one(0, 1) == 0,
          "triple [0xE8,0x03,0x00] did not decode to [1000, 0]");
  auto neg = wfdb::decode_format212({0xFF, 0x0F, 0x00}, 2, 1);
  require(neg(0, 0) == -1 && neg(0, 1) == 0,
          "triple [0xFF,0x0F,0x00] did not decode to [-1, 0]");

  util::Rng rng(1002);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n_signals = 1 + static_cast<int>(rng.below(2));
    const auto n_samples = static_cast<Eigen::Index>(1 + rng.below(32));
    Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> raw(n_signals,
                                                                    n_samples);
    for (Eigen::Index i = 0; i < raw.size(); ++i)
      raw.data()[i] = static_cast<std::int32_t>(rng.below(4096)) - 2048;
    auto bytes = testing::encode_format212(raw);
    auto back = wfdb::decode_format212(bytes, n_samples, n_signals);
    require(back == raw,
            "round-trip mismatch at trial " + std::to_string(trial));
  }
  return "2 hand triples + 10000 random round-trips exact";
}

// --- 3. noise calibration ----------------------------------------------- --

std::string check_noise_calibration() {
  std::vector<wfdb::SignalRecord> records;
  for (int i = 0; i < 4; ++i)
    records.push_back(testing::synth_ecg_record("cal" + std::to_string(i),
                                                4096, 500 + i));
  auto bw = std::make_shared<wfdb::SignalRecord>(
      testing::synth_noise_record("bw", 1 << 15, 91, 0.999));
  auto em = std::make_shared<wfdb::SignalRecord>(
      testing::synth_noise_record("em", 1 << 15, 92, 0.99));
  auto ma = std::make_shared<wfdb::SignalRecord>(
      testing::synth_noise_record("ma", 1 << 15, 93, 0.9));

  std::size_t checked = 0;
  double worst = 0.0;
  for (double target : {0.0, 1.25, 5.0, 15.0}) {
    std::vector<sig::NoiseSpec> specs;
    specs.push_back(sig::make_awgn_spec(target));
    specs.push_back(sig::make_record_spec(sig::NoiseKind::bw, bw, target));
    specs.push_back(sig::make_record_spec(sig::NoiseKind::em, em, target));
    specs.push_back(sig::make_record_spec(sig::NoiseKind::ma, ma, target));
    auto ds =
        sig::build_dataset(records, specs, 1024, 512, {0.5, 0.25, 0.25}, 7);
    for (const sig::SegmentSet* set : {&ds.train, &ds.val, &ds.test})
      for (const auto& seg : set->segments) {
        const double measured = sig::snr_out(seg.clean, seg.noisy);
        worst = std::max(worst, std::abs(measured - target));
        require(std::abs(measured - target) <= 1e-6,
                "segment " + seg.record_id + "@" +
                    std::to_string(seg.offset) + " (" +
                    seg.noise.kind_label() + ") off target by " +
                    util::fmt_g(measured - target));
        ++checked;
      }
  }
  return std::to_string(checked) + " segments, worst |error| " +
         util::fmt_g(worst, 3) + " dB";
}

// --- 4. stft round trip -------------------------------------------------- -

std::string check_stft() {
  util::Rng rng(1003);
  const auto window = tfr::hann_window<double>(256);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 257 + static_cast<Eigen::Index>(rng.below(2048));
    tfr::VecX<double> x(n);
    for (Eigen::Index i = 0; i < n; ++i) x[i] = rng.normal();
    auto spec = tfr::stft<double>(x, window, 128);
    auto back = tfr::istft(spec);
    const double err = std::sqrt((back - x).square().sum()) /
                       std::sqrt(x.square().sum());
    worst = std::max(worst, err);
    require(err < 1e-6, "round-trip relative L2 " + util::fmt_g(err));

    if (trial == 0) {
      tfr::MaskMat<double> ones =
          tfr::MaskMat<double>::Ones(spec.n_frames(), spec.n_bins());
      auto same = tfr::apply_mask(spec, ones);
      for (Eigen::Index k = 0; k < spec.n_frames(); ++k)
        for (Eigen::Index b = 0; b < spec.n_bins(); ++b)
          require(std::abs(same.frames(k, b)) == std::abs(spec.frames(k, b)),
                  "unit mask changed a magnitude");
    }
  }
  return "100 signals, worst relative L2 " + util::fmt_g(worst, 3);
}

// --- 5. architecture identities ---------------------------------------- ---

std::string check_architecture_identities() {
  util::Rng rng(1004);

  // improved ReLU overrides
  auto x = random_tensor<double>(Shape::bcn(2, 3, 16), rng);
  model::FcParams<double> fc;
  fc.w = random_tensor<double>(Shape::mat(3, 6), rng);
  fc.b = random_tensor<double>(Shape::vec(3), rng);
  auto relu0 = model::improved_relu<double>(x, fc, 0.0);
  require((relu0.value() == x.value().max(0.0)).all(),
          "alpha=0 did not reduce to relu");
  auto ident = model::improved_relu<double>(x, fc, 1.0);
  require((ident.value() == x.value()).all(),
          "alpha=1 did not reduce to the identity");

  // channel averaging hand case [[1,3],[3,5]] -> [2,4]
  ag::VecX<double> vals(4);
  vals << 1, 3, 3, 5;
  auto a = Td::from_data(Shape::bcn(1, 2, 2), vals);
  auto avg = ag::pool_channel(a, ag::PoolKind::avg);
  require(avg.value()[0] == 2.0 && avg.value()[1] == 4.0,
          "channel average gave [" + util::fmt_g(avg.value()[0]) + "," +
              util::fmt_g(avg.value()[1]) + "]");

  // zeroed attention parameters scale by exactly 0.25
  model::AttentionParams<double> attn;
  attn.fc1.w = Td::zeros(Shape::mat(1, 3), true);
  attn.fc1.b = Td::zeros(Shape::vec(1), true);
  attn.fc2.w = Td::zeros(Shape::mat(3, 1), true);
  attn.fc2.b = Td::zeros(Shape::vec(3), true);
  attn.spatial.w = Td::zeros(Shape::bcn(1, 2, 7), true);
  attn.spatial.b = Td::zeros(Shape::vec(1), true);
  auto gated = model::attention_block<double>(x, attn);
  require((gated.value() == 0.25 * x.value()).all(),
          "zeroed attention did not scale by exactly 0.25");

  // default-config forward preserves [B,1,1024]
  model::ModelConfig cfg;
  auto params = model::init_params<double>(cfg, 19);
  for (Eigen::Index batch : {1, 4}) {
    auto input = random_tensor<double>(Shape::bcn(batch, 1, 1024), rng, false);
    ag::NoGrad guard;
    auto out = model::forward<double>(input, params, cfg, ag::Mode::eval);
    require(out.shape() == input.shape(),
            "forward changed shape for B=" + std::to_string(batch));
  }
  return "relu/identity overrides, Eq.10 hand case, 0.25 attention, shapes";
}

// --- 6. toy training efficacy -------------------------------------------- -

std::vector<wfdb::SignalRecord> training_records() {
  const char* env = std::getenv("ASCNET_MITBIH_DIR");
  const std::string dir = env ? env : "data/mitdb";
  std::vector<wfdb::SignalRecord> records;
  if (std::filesystem::is_directory(dir)) {
    std::vector<std::string> headers;
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.path().extension() == ".hea") headers.push_back(e.path().string());
    std::sort(headers.begin(), headers.end());
    for (const auto& h : headers) {
      records.push_back(wfdb::load_record(h, 0));
      if (records.size() == 5) break;
    }
  }
  if (records.size() >= 3) {
    std::printf("  (using %zu MIT-BIH records from %s)\n", records.size(),
                dir.c_str());
    return records;
  }
  records.clear();
  for (int i = 0; i < 5; ++i)
    records.push_back(testing::synth_ecg_record("synth" + std::to_string(i),
                                                60000, 900 + i));
  return records;
}

std::string check_toy_training() {
  const auto t0 = std::chrono::steady_clock::now();
  auto records = training_records();

  model::ModelConfig mcfg;  // the default topology
  auto ds = sig::build_dataset(records, {sig::make_awgn_spec(5.0)}, 1024, 512,
                               {0.6, 0.2, 0.2}, 13);

  train::TrainConfig tcfg;
  tcfg.max_epochs = 15;
  tcfg.batch_size = 32;
  tcfg.learning_rate = 1e-3;
  tcfg.seed = 29;
  auto ckpt = train::train(ds.train, ds.val, mcfg, tcfg);
  auto report = train::evaluate(ckpt, ds.test);

  double mean_imp = 0.0, mean_out = 0.0;
  for (const auto& row : report.rows) {
    mean_imp += row.snr_imp_db;
    mean_out += row.snr_out_db;
  }
  mean_imp /= static_cast<double>(report.rows.size());
  mean_out /= static_cast<double>(report.rows.size());

  const double secs = seconds_since(t0);
  require(mean_imp >= 3.0, "mean snr improvement " + util::fmt_g(mean_imp, 4) +
                               " dB < +3 dB");
  require(mean_out >= 8.0,
          "mean output snr " + util::fmt_g(mean_out, 4) + " dB < 8 dB");
  require(secs < 1800.0, "runtime " + util::fmt_g(secs, 4) + "s >= 30 min");
  return "mean snr_imp " + util::fmt_g(mean_imp, 4) + " dB, mean snr_out " +
         util::fmt_g(mean_out, 4) + " dB, " + util::fmt_g(secs, 4) + "s";
}

// --- 7. determinism & resume ----------------------------------------------

std::string check_determinism_and_resume() {
  std::vector<wfdb::SignalRecord> records;
  for (int i = 0; i < 4; ++i)
    records.push_back(testing::synth_ecg_record("det" + std::to_string(i), 280,
                                                700 + i));
  auto ds = sig::build_dataset(records, {sig::make_awgn_spec(5.0)}, 32, 16,
                               {0.5, 0.25, 0.25}, 3);
  model::ModelConfig micro;
  micro.n_blocks = 2;
  micro.channels = {4, 4};
  micro.kernels = {16, 16};
  micro.segment_length = 32;

  train::TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.max_epochs = 4;
  cfg.early_stop_patience = 100;
  cfg.seed = 41;

  auto a = train::train(ds.train, ds.val, micro, cfg);
  auto b = train::train(ds.train, ds.val, micro, cfg);
  require(a.history.size() == b.history.size(), "history lengths differ");
  for (std::size_t i = 0; i < a.history.size(); ++i)
    require(a.history[i].train_loss == b.history[i].train_loss &&
                a.history[i].val_loss == b.history[i].val_loss,
            "loss history differs at epoch " + std::to_string(i + 1));

  auto half_cfg = cfg;
  half_cfg.max_epochs = 2;
  auto half = train::train(ds.train, ds.val, micro, half_cfg);
  const auto dir = std::filesystem::temp_directory_path() / "ascnet_accept";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "half.ascckpt").string();
  train::save_checkpoint(half, path);
  auto loaded = train::load_checkpoint(path);

  // checkpoint round trip is bit-exact
  bool same = true;
  std::vector<const Eigen::ArrayXd*> va, vb;
  half.params.visit(
      [&](const std::string&, Td& t) { va.push_back(&t.value()); });
  loaded.params.visit(
      [&](const std::string&, Td& t) { vb.push_back(&t.value()); });
  for (std::size_t i = 0; i < va.size(); ++i)
    if (!((*va[i]) == (*vb[i])).all()) same = false;
  require(same, "checkpoint round trip changed parameter bits");

  auto resumed = train::resume(std::move(loaded), ds.train, ds.val, cfg);
  require(resumed.history.size() == a.history.size(),
          "resumed history length differs");
  for (std::size_t i = 0; i < a.history.size(); ++i)
    require(resumed.history[i].train_loss == a.history[i].train_loss &&
                resumed.history[i].val_loss == a.history[i].val_loss,
            "train(2)+resume(2) != train(4) at epoch " + std::to_string(i + 1));

  std::vector<const Eigen::ArrayXd*> vr, vf;
  resumed.params.visit(
      [&](const std::string&, Td& t) { vr.push_back(&t.value()); });
  a.params.visit([&](const std::string&, Td& t) { vf.push_back(&t.value()); });
  for (std::size_t i = 0; i < vr.size(); ++i)
    require(((*vr[i]) == (*vf[i])).all(),
            "resumed parameters differ from uninterrupted training");
  return "bit-identical histories, resume equivalence, round-trip exact";
}

// --- 8. metrics cross-checks ------------------------------------------- ---

std::string check_metrics() {
  Eigen::ArrayXd f3(3), u3(3);
  f3 << 1, 2, 3;
  u3 << 0, 2, 3;
  require(std::abs(sig::mse(f3, u3) - 1.0 / 3.0) < 1e-15, "mse hand case");
  require(std::abs(sig::rmse(f3, u3) - std::sqrt(1.0 / 3.0)) < 1e-15,
          "rmse hand case");
  Eigen::ArrayXd f(2), u(2);
  f << 3, 4;
  u << 8, 4;
  require(std::abs(sig::prd(f, u) - 100.0) < 1e-12, "prd hand case");
  require(std::abs(sig::snr_out(f, u)) < 1e-12, "snr 0 dB hand case");
  u << 3.5, 4;
  require(std::abs(sig::snr_out(f, u) - 20.0) < 1e-12, "snr 20 dB hand case");

  std::vector<wfdb::SignalRecord> records;
  for (int i = 0; i < 4; ++i)
    records.push_back(testing::synth_ecg_record("met" + std::to_string(i), 280,
                                                800 + i));
  auto ds = sig::build_dataset(records, {sig::make_awgn_spec(5.0)}, 32, 16,
                               {0.5, 0.25, 0.25}, 3);
  model::ModelConfig micro;
  micro.n_blocks = 2;
  micro.channels = {4, 4};
  micro.kernels = {16, 16};
  micro.segment_length = 32;
  train::TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.max_epochs = 1;
  cfg.seed = 41;
  auto ckpt = train::train(ds.train, ds.val, micro, cfg);

  auto clean_rep = train::evaluate(ckpt, ds.test, train::EvalStub::clean);
  for (const auto& row : clean_rep.rows)
    require(row.mse == 0.0 && row.rmse == 0.0 && row.prd_percent == 0.0,
            "clean stub left a nonzero error column");
  auto noisy_rep = train::evaluate(ckpt, ds.test, train::EvalStub::noisy);
  for (const auto& row : noisy_rep.rows)
    require(row.snr_imp_db == 0.0, "noisy stub left a nonzero snr_imp");

  for (const auto& agg : noisy_rep.aggregates) {
    double sum_out = 0, sum_mse = 0;
    std::size_t n = 0;
    for (const auto& row : noisy_rep.rows)
      if (row.noise_kind == agg.noise_kind &&
          row.input_snr_db == agg.input_snr_db) {
        sum_out += row.snr_out_db;
        sum_mse += row.mse;
        ++n;
      }
    require(n == agg.n_rows, "aggregate row count mismatch");
    require(std::abs(agg.snr_out_db - sum_out / static_cast<double>(n)) <=
                1e-12,
            "aggregate snr mean mismatch");
    require(std::abs(agg.mse - sum_mse / static_cast<double>(n)) <= 1e-12,
            "aggregate mse mean mismatch");
  }
  return "hand cases, stub columns, aggregates match recomputed means";
}

struct Criterion {
  const char* name;
  std::function<std::string()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"gradient fidelity", check_gradient_fidelity},
      {"parser fidelity", check_parser_fidelity},
      {"noise calibration", check_noise_calibration},
      {"stft round trip", check_stft},
      {"architecture identities", check_architecture_identities},
      {"toy training efficacy", check_toy_training},
      {"determinism & resume", check_determinism_and_resume},
      {"metrics cross-checks", check_metrics},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
      detail = c.run();
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
      ++failures;
    }
    std::printf("[%s] %-25s %s (%.1fs)\n", ok ? "PASS" : "FAIL", c.name,
                detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  if (failures > 0)
    std::printf("%d of %zu acceptance criteria FAILED\n", failures,
                criteria.size());
  else
    std::printf("all %zu acceptance criteria passed\n", criteria.size());
  return failures == 0 ? 0 : 1;
}
