#ifndef ASCNET_MODEL_HPP
#define ASCNET_MODEL_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ascnet/autograd_ops.hpp"
#include "ascnet/tensor.hpp"
#include "ascnet/util.hpp"

namespace ascnet::model {

/// Topology of the denoiser. The first two encoder kernels and the
/// reconstruction kernel are fixed at 16 taps; everything else is free.
struct ModelConfig {
  int n_blocks = 4;
  std::vector<Eigen::Index> channels = {16, 32, 64, 64};
  std::vector<Eigen::Index> kernels = {16, 16, 8, 8};
  Eigen::Index stride = 2;
  Eigen::Index skip_kernel = 3;
  Eigen::Index attn_reduction = 4;
  Eigen::Index spatial_attn_kernel = 7;
  Eigen::Index segment_length = 1024;
  Eigen::Index final_kernel = 16;
  bool use_attention = true;
  bool bn_before_activation = true;

  void validate() const {
    auto bad = [](const std::string& msg) {
      raise(errc::invalid_config, msg);
    };
    if (n_blocks < 2) bad("need at least 2 blocks");
    if (channels.size() != static_cast<std::size_t>(n_blocks))
      bad("channels list must have one entry per block");
    if (kernels.size() != static_cast<std::size_t>(n_blocks))
      bad("kernels list must have one entry per block");
    if (kernels[0] != 16 || kernels[1] != 16)
      bad("the first two kernels are fixed at 16");
    if (final_kernel != 16) bad("the reconstruction kernel is fixed at 16");
    if (stride < 1 || skip_kernel < 1 || spatial_attn_kernel < 1)
      bad("kernel and stride fields must be >= 1");
    if (attn_reduction < 1) bad("attn_reduction must be >= 1");
    Eigen::Index down = 1;
    for (int i = 0; i < n_blocks; ++i) {
      if (channels[static_cast<std::size_t>(i)] < attn_reduction)
        bad("every channel width must be >= attn_reduction");
      if (kernels[static_cast<std::size_t>(i)] < 1) bad("kernels must be >= 1");
      down *= stride;
    }
    if (segment_length < 1 || segment_length % down != 0)
      bad("segment_length must be divisible by stride^n_blocks");
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    if (j.contains("n_blocks")) c.n_blocks = j.at("n_blocks").get<int>();
    if (j.contains("channels"))
      c.channels = j.at("channels").get<std::vector<Eigen::Index>>();
    if (j.contains("kernels"))
      c.kernels = j.at("kernels").get<std::vector<Eigen::Index>>();
    if (j.contains("stride")) c.stride = j.at("stride").get<Eigen::Index>();
    if (j.contains("skip_kernel"))
      c.skip_kernel = j.at("skip_kernel").get<Eigen::Index>();
    if (j.contains("attn_reduction"))
      c.attn_reduction = j.at("attn_reduction").get<Eigen::Index>();
    if (j.contains("spatial_attn_kernel"))
      c.spatial_attn_kernel = j.at("spatial_attn_kernel").get<Eigen::Index>();
    if (j.contains("segment_length"))
      c.segment_length = j.at("segment_length").get<Eigen::Index>();
    if (j.contains("final_kernel"))
      c.final_kernel = j.at("final_kernel").get<Eigen::Index>();
    if (j.contains("use_attention"))
      c.use_attention = j.at("use_attention").get<bool>();
    if (j.contains("bn_before_activation"))
      c.bn_before_activation = j.at("bn_before_activation").get<bool>();
    c.validate();
    return c;
  }

  nlohmann::json to_json() const {
    return {{"n_blocks", n_blocks},
            {"channels", channels},
            {"kernels", kernels},
            {"stride", stride},
            {"skip_kernel", skip_kernel},
            {"attn_reduction", attn_reduction},
            {"spatial_attn_kernel", spatial_attn_kernel},
            {"segment_length", segment_length},
            {"final_kernel", final_kernel},
            {"use_attention", use_attention},
            {"bn_before_activation", bn_before_activation}};
  }

  // Channel widths around decoder stage j (0-based, mirroring the encoder).
  Eigen::Index decoder_in(int j) const {
    return j == 0 ? channels[static_cast<std::size_t>(n_blocks - 1)]
                  : decoder_out(j - 1);
  }
  Eigen::Index decoder_out(int j) const {
    return j < n_blocks - 1 ? channels[static_cast<std::size_t>(n_blocks - 2 - j)]
                            : channels[0];
  }
  Eigen::Index decoder_kernel(int j) const {
    return kernels[static_cast<std::size_t>(n_blocks - 1 - j)];
  }
};

template <typename Scalar>
struct ConvParams {
  ag::Tensor<Scalar> w, b;
};
template <typename Scalar>
struct FcParams {
  ag::Tensor<Scalar> w, b;
};
template <typename Scalar>
struct BnParams {
  ag::Tensor<Scalar> gamma, beta;
  ag::BatchNormState<Scalar> state;
};
template <typename Scalar>
struct AttentionParams {
  FcParams<Scalar> fc1, fc2;  // shared by the avg and max branches
  ConvParams<Scalar> spatial;
};
template <typename Scalar>
struct EncoderBlock {
  ConvParams<Scalar> conv;
  BnParams<Scalar> bn;
  FcParams<Scalar> irelu;
};
template <typename Scalar>
struct DecoderBlock {
  ConvParams<Scalar> tconv;
  BnParams<Scalar> bn;
  FcParams<Scalar> irelu;
  ConvParams<Scalar> skip;
  AttentionParams<Scalar> attn;
};

template <typename Scalar>
struct Parameters {
  std::vector<EncoderBlock<Scalar>> encoder;
  std::vector<DecoderBlock<Scalar>> decoder;
  ConvParams<Scalar> final_conv;

  /// Visits every trainable tensor in a fixed order with a stable name.
  template <typename Fn>
  void visit(Fn&& f) {
    for (std::size_t i = 0; i < encoder.size(); ++i) {
      const std::string p = "enc" + std::to_string(i) + ".";
      f(p + "conv.w", encoder[i].conv.w);
      f(p + "conv.b", encoder[i].conv.b);
      f(p + "bn.gamma", encoder[i].bn.gamma);
      f(p + "bn.beta", encoder[i].bn.beta);
      f(p + "irelu.w", encoder[i].irelu.w);
      f(p + "irelu.b", encoder[i].irelu.b);
    }
    for (std::size_t i = 0; i < decoder.size(); ++i) {
      const std::string p = "dec" + std::to_string(i) + ".";
      f(p + "tconv.w", decoder[i].tconv.w);
      f(p + "tconv.b", decoder[i].tconv.b);
      f(p + "bn.gamma", decoder[i].bn.gamma);
      f(p + "bn.beta", decoder[i].bn.beta);
      f(p + "irelu.w", decoder[i].irelu.w);
      f(p + "irelu.b", decoder[i].irelu.b);
      f(p + "skip.w", decoder[i].skip.w);
      f(p + "skip.b", decoder[i].skip.b);
      f(p + "attn.fc1.w", decoder[i].attn.fc1.w);
      f(p + "attn.fc1.b", decoder[i].attn.fc1.b);
      f(p + "attn.fc2.w", decoder[i].attn.fc2.w);
      f(p + "attn.fc2.b", decoder[i].attn.fc2.b);
      f(p + "attn.spatial.w", decoder[i].attn.spatial.w);
      f(p + "attn.spatial.b", decoder[i].attn.spatial.b);
    }
    f("final.w", final_conv.w);
    f("final.b", final_conv.b);
  }

  /// Visits the batch-norm running statistics (buffers, not trained).
  template <typename Fn>
  void visit_buffers(Fn&& f) {
    for (std::size_t i = 0; i < encoder.size(); ++i) {
      const std::string p = "enc" + std::to_string(i) + ".bn.";
      f(p + "running_mean", encoder[i].bn.state.running_mean);
      f(p + "running_var", encoder[i].bn.state.running_var);
    }
    for (std::size_t i = 0; i < decoder.size(); ++i) {
      const std::string p = "dec" + std::to_string(i) + ".bn.";
      f(p + "running_mean", decoder[i].bn.state.running_mean);
      f(p + "running_var", decoder[i].bn.state.running_var);
    }
  }

  Parameters clone() const {
    Parameters out = *this;  // copies buffer structs, aliases tensors
    auto deep = [](ag::Tensor<Scalar>& t) {
      t = ag::Tensor<Scalar>::from_data(t.shape(), ag::VecX<Scalar>(t.value()),
                                        t.requires_grad());
    };
    out.visit([&](const std::string&, ag::Tensor<Scalar>& t) { deep(t); });
    return out;
  }
};

namespace detail {

template <typename Scalar>
ag::Tensor<Scalar> uniform_tensor(const ag::Shape& s, Eigen::Index fan_in,
                                  Eigen::Index fan_out, util::Rng& rng) {
  const double bound =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  ag::VecX<Scalar> v(s.size());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  return ag::Tensor<Scalar>::from_data(s, std::move(v), true);
}

template <typename Scalar>
ConvParams<Scalar> init_conv(Eigen::Index out_ch, Eigen::Index in_ch,
                             Eigen::Index k, util::Rng& rng) {
  ConvParams<Scalar> p;
  p.w = uniform_tensor<Scalar>(ag::Shape::bcn(out_ch, in_ch, k), in_ch * k,
                               out_ch * k, rng);
  p.b = ag::Tensor<Scalar>::zeros(ag::Shape::vec(out_ch), true);
  return p;
}

// Transposed conv weights are [in_ch, out_ch, k].
template <typename Scalar>
ConvParams<Scalar> init_tconv(Eigen::Index in_ch, Eigen::Index out_ch,
                              Eigen::Index k, util::Rng& rng) {
  ConvParams<Scalar> p;
  p.w = uniform_tensor<Scalar>(ag::Shape::bcn(in_ch, out_ch, k), in_ch * k,
                               out_ch * k, rng);
  p.b = ag::Tensor<Scalar>::zeros(ag::Shape::vec(out_ch), true);
  return p;
}

template <typename Scalar>
FcParams<Scalar> init_fc(Eigen::Index out_f, Eigen::Index in_f,
                         util::Rng& rng) {
  FcParams<Scalar> p;
  p.w = uniform_tensor<Scalar>(ag::Shape::mat(out_f, in_f), in_f, out_f, rng);
  p.b = ag::Tensor<Scalar>::zeros(ag::Shape::vec(out_f), true);
  return p;
}

template <typename Scalar>
BnParams<Scalar> init_bn(Eigen::Index channels) {
  BnParams<Scalar> p;
  p.gamma = ag::Tensor<Scalar>::constant(ag::Shape::vec(channels), Scalar(1),
                                         true);
  p.beta = ag::Tensor<Scalar>::zeros(ag::Shape::vec(channels), true);
  p.state = ag::BatchNormState<Scalar>::init(channels);
  return p;
}

}  // namespace detail

/// Glorot-uniform weights, zero biases, unit batch-norm; deterministic
/// per seed.
template <typename Scalar>
Parameters<Scalar> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  util::Rng rng(util::hash_combine(seed, util::hash_str("ascnet-init")));
  Parameters<Scalar> p;
  Eigen::Index in_ch = 1;
  for (int i = 0; i < cfg.n_blocks; ++i) {
    const Eigen::Index out_ch = cfg.channels[static_cast<std::size_t>(i)];
    const Eigen::Index k = cfg.kernels[static_cast<std::size_t>(i)];
    EncoderBlock<Scalar> blk;
    blk.conv = detail::init_conv<Scalar>(out_ch, in_ch, k, rng);
    blk.bn = detail::init_bn<Scalar>(out_ch);
    blk.irelu = detail::init_fc<Scalar>(out_ch, 2 * out_ch, rng);
    p.encoder.push_back(std::move(blk));
    in_ch = out_ch;
  }
  for (int j = 0; j < cfg.n_blocks; ++j) {
    const Eigen::Index cin = cfg.decoder_in(j);
    const Eigen::Index cout = cfg.decoder_out(j);
    const Eigen::Index k = cfg.decoder_kernel(j);
    DecoderBlock<Scalar> blk;
    blk.tconv = detail::init_tconv<Scalar>(cin, cout, k, rng);
    blk.bn = detail::init_bn<Scalar>(cout);
    blk.irelu = detail::init_fc<Scalar>(cout, 2 * cout, rng);
    blk.skip = detail::init_conv<Scalar>(cout, 1, cfg.skip_kernel, rng);
    const Eigen::Index hidden =
        std::max<Eigen::Index>(1, cout / cfg.attn_reduction);
    blk.attn.fc1 = detail::init_fc<Scalar>(hidden, cout, rng);
    blk.attn.fc2 = detail::init_fc<Scalar>(cout, hidden, rng);
    blk.attn.spatial =
        detail::init_conv<Scalar>(1, 2, cfg.spatial_attn_kernel, rng);
    p.decoder.push_back(std::move(blk));
  }
  p.final_conv =
      detail::init_conv<Scalar>(1, cfg.channels[0], cfg.final_kernel, rng);
  return p;
}

/// Raises ConfigMismatch when the parameter shapes do not belong to cfg.
template <typename Scalar>
void check_config_match(const Parameters<Scalar>& params,
                        const ModelConfig& cfg) {
  auto fail = [](const std::string& what) {
    raise(errc::config_mismatch, what);
  };
  auto want = [&fail](const ag::Tensor<Scalar>& t, const ag::Shape& s,
                      const char* name) {
    if (!t.defined() || !(t.shape() == s))
      fail(std::string(name) + " has shape " +
           (t.defined() ? t.shape().str() : "<empty>") + ", config needs " +
           s.str());
  };
  if (params.encoder.size() != static_cast<std::size_t>(cfg.n_blocks) ||
      params.decoder.size() != static_cast<std::size_t>(cfg.n_blocks))
    fail("parameter block count != n_blocks");
  Eigen::Index in_ch = 1;
  for (int i = 0; i < cfg.n_blocks; ++i) {
    const auto& e = params.encoder[static_cast<std::size_t>(i)];
    const Eigen::Index out_ch = cfg.channels[static_cast<std::size_t>(i)];
    const Eigen::Index k = cfg.kernels[static_cast<std::size_t>(i)];
    want(e.conv.w, ag::Shape::bcn(out_ch, in_ch, k), "encoder conv.w");
    want(e.conv.b, ag::Shape::vec(out_ch), "encoder conv.b");
    want(e.bn.gamma, ag::Shape::vec(out_ch), "encoder bn.gamma");
    want(e.bn.beta, ag::Shape::vec(out_ch), "encoder bn.beta");
    want(e.irelu.w, ag::Shape::mat(out_ch, 2 * out_ch), "encoder irelu.w");
    want(e.irelu.b, ag::Shape::vec(out_ch), "encoder irelu.b");
    if (e.bn.state.running_mean.size() != out_ch ||
        e.bn.state.running_var.size() != out_ch)
      fail("encoder bn running stats size");
    in_ch = out_ch;
  }
  for (int j = 0; j < cfg.n_blocks; ++j) {
    const auto& d = params.decoder[static_cast<std::size_t>(j)];
    const Eigen::Index cin = cfg.decoder_in(j);
    const Eigen::Index cout = cfg.decoder_out(j);
    const Eigen::Index k = cfg.decoder_kernel(j);
    want(d.tconv.w, ag::Shape::bcn(cin, cout, k), "decoder tconv.w");
    want(d.tconv.b, ag::Shape::vec(cout), "decoder tconv.b");
    want(d.bn.gamma, ag::Shape::vec(cout), "decoder bn.gamma");
    want(d.bn.beta, ag::Shape::vec(cout), "decoder bn.beta");
    want(d.irelu.w, ag::Shape::mat(cout, 2 * cout), "decoder irelu.w");
    want(d.irelu.b, ag::Shape::vec(cout), "decoder irelu.b");
    want(d.skip.w, ag::Shape::bcn(cout, 1, cfg.skip_kernel), "skip.w");
    want(d.skip.b, ag::Shape::vec(cout), "skip.b");
    const Eigen::Index hidden =
        std::max<Eigen::Index>(1, cout / cfg.attn_reduction);
    want(d.attn.fc1.w, ag::Shape::mat(hidden, cout), "attn.fc1.w");
    want(d.attn.fc1.b, ag::Shape::vec(hidden), "attn.fc1.b");
    want(d.attn.fc2.w, ag::Shape::mat(cout, hidden), "attn.fc2.w");
    want(d.attn.fc2.b, ag::Shape::vec(cout), "attn.fc2.b");
    want(d.attn.spatial.w, ag::Shape::bcn(1, 2, cfg.spatial_attn_kernel),
         "attn.spatial.w");
    want(d.attn.spatial.b, ag::Shape::vec(1), "attn.spatial.b");
    if (d.bn.state.running_mean.size() != cout ||
        d.bn.state.running_var.size() != cout)
      fail("decoder bn running stats size");
  }
  want(params.final_conv.w, ag::Shape::bcn(1, cfg.channels[0], cfg.final_kernel),
       "final.w");
  want(params.final_conv.b, ag::Shape::vec(1), "final.b");
}

/// Load-time validation: shapes against cfg plus finiteness of every value.
template <typename Scalar>
void validate_params(Parameters<Scalar>& params, const ModelConfig& cfg) {
  check_config_match(params, cfg);
  params.visit([](const std::string& n, ag::Tensor<Scalar>& t) {
    if (!t.value().isFinite().all())
      raise(errc::invalid_config, "parameter " + n + " has non-finite values");
  });
  params.visit_buffers([](const std::string& n, ag::VecX<Scalar>& b) {
    if (!b.isFinite().all())
      raise(errc::invalid_config, "buffer " + n + " has non-finite values");
  });
}

/// Test hooks for the gating factors, used to pin the architecture
/// identities; empty in normal operation.
template <typename Scalar>
struct Overrides {
  std::optional<Scalar> irelu_alpha;
  std::optional<Scalar> channel_gate;
  std::optional<Scalar> spatial_gate;
};

/// y = max(x,0) + alpha * min(x,0) with a per-channel learned slope:
/// the positive and negative parts are average-pooled over the spatial
/// axis, concatenated to a 2C vector, and mapped through the FC layer and
/// a sigmoid to produce alpha in (0,1) per (batch, channel).
template <typename Scalar>
ag::Tensor<Scalar> improved_relu(const ag::Tensor<Scalar>& x,
                                 const FcParams<Scalar>& fc,
                                 std::optional<Scalar> alpha_override = {}) {
  if (x.shape().rank != 3)
    raise(errc::shape_mismatch, "improved_relu input must be rank 3");
  const Eigen::Index B = x.shape().d[0], C = x.shape().d[1];
  auto [pos, neg] = ag::split_posneg(x);
  if (alpha_override) return ag::add(pos, ag::scale(neg, *alpha_override));
  if (fc.w.shape().d[0] != C || fc.w.shape().d[1] != 2 * C)
    raise(errc::shape_mismatch, "improved_relu FC must map 2C -> C");
  auto p = ag::reshape(ag::pool_spatial(pos, ag::PoolKind::avg),
                       ag::Shape::mat(B, C));
  auto q = ag::reshape(ag::pool_spatial(neg, ag::PoolKind::avg),
                       ag::Shape::mat(B, C));
  auto alpha =
      ag::sigmoid(ag::fully_connected(ag::concat_axis1(p, q), fc.w, fc.b));
  return ag::add(pos, ag::mul_channel_gate(neg, alpha));
}

/// Channel-averaged skip path: the encoder activation collapses to one
/// channel, a small convolution re-expands it to the decoder width, and
/// the caller merges it by addition at matching resolution.
template <typename Scalar>
ag::Tensor<Scalar> skip_connect(const ag::Tensor<Scalar>& enc_out,
                                const ConvParams<Scalar>& conv,
                                Eigen::Index decoder_length) {
  if (enc_out.shape().rank != 3)
    raise(errc::shape_mismatch, "skip_connect input must be rank 3");
  if (enc_out.shape().d[2] != decoder_length)
    raise(errc::resolution_mismatch,
          "encoder activation has length " +
              std::to_string(enc_out.shape().d[2]) + ", decoder stage needs " +
              std::to_string(decoder_length));
  auto avg = ag::pool_channel(enc_out, ag::PoolKind::avg);
  return ag::conv1d(avg, conv.w, conv.b, 1);
}

/// sigmoid(FCN(avgpool(x)) + FCN(maxpool(x))) with the FC pair shared
/// between branches; returns per-channel weights [B, C, 1].
template <typename Scalar>
ag::Tensor<Scalar> channel_attention(const ag::Tensor<Scalar>& x,
                                     const FcParams<Scalar>& fc1,
                                     const FcParams<Scalar>& fc2) {
  const Eigen::Index B = x.shape().d[0], C = x.shape().d[1];
  auto branch = [&](ag::PoolKind kind) {
    auto pooled = ag::reshape(ag::pool_spatial(x, kind), ag::Shape::mat(B, C));
    return ag::fully_connected(
        ag::relu(ag::fully_connected(pooled, fc1.w, fc1.b)), fc2.w, fc2.b);
  };
  auto alpha =
      ag::sigmoid(ag::add(branch(ag::PoolKind::avg), branch(ag::PoolKind::max)));
  return ag::reshape(alpha, ag::Shape::bcn(B, C, 1));
}

/// sigmoid(conv(concat(channel-avg, channel-max))); weights [B, 1, N].
template <typename Scalar>
ag::Tensor<Scalar> spatial_attention(const ag::Tensor<Scalar>& x,
                                     const ConvParams<Scalar>& conv) {
  auto cat = ag::concat_axis1(ag::pool_channel(x, ag::PoolKind::avg),
                              ag::pool_channel(x, ag::PoolKind::max));
  return ag::sigmoid(ag::conv1d(cat, conv.w, conv.b, 1));
}

/// mu = alpha_c (x) x, y = alpha_s (x) mu; the spatial weights are computed
/// from the channel-refined features.
template <typename Scalar>
ag::Tensor<Scalar> attention_block(const ag::Tensor<Scalar>& x,
                                   const AttentionParams<Scalar>& attn,
                                   const Overrides<Scalar>& ov = {}) {
  const Eigen::Index B = x.shape().d[0], C = x.shape().d[1],
                     N = x.shape().d[2];
  ag::Tensor<Scalar> alpha_c =
      ov.channel_gate
          ? ag::Tensor<Scalar>::constant(ag::Shape::bcn(B, C, 1),
                                         *ov.channel_gate)
          : channel_attention(x, attn.fc1, attn.fc2);
  auto mu = ag::mul_channel_gate(x, alpha_c);
  ag::Tensor<Scalar> alpha_s =
      ov.spatial_gate
          ? ag::Tensor<Scalar>::constant(ag::Shape::bcn(B, 1, N),
                                         *ov.spatial_gate)
          : spatial_attention(mu, attn.spatial);
  return ag::mul_spatial_gate(mu, alpha_s);
}

/// Full denoising pass: strided conv encoder with cached activations, then
/// a mirrored transposed-conv decoder where each stage adds the
/// channel-averaged skip of the same-resolution encoder activation and
/// applies the attention block, finished by a linear reconstruction
/// convolution back to one channel.
template <typename Scalar>
ag::Tensor<Scalar> forward(const ag::Tensor<Scalar>& noisy,
                           Parameters<Scalar>& params, const ModelConfig& cfg,
                           ag::Mode mode, const Overrides<Scalar>& ov = {}) {
  if (noisy.shape().rank != 3 || noisy.shape().d[1] != 1)
    raise(errc::shape_mismatch,
          "forward expects [B, 1, L], got " + noisy.shape().str());
  if (noisy.shape().d[2] != cfg.segment_length)
    raise(errc::shape_mismatch,
          "input length " + std::to_string(noisy.shape().d[2]) +
              " != configured segment_length " +
              std::to_string(cfg.segment_length));
  check_config_match(params, cfg);

  std::vector<ag::Tensor<Scalar>> acts;  // acts[0] is the input itself
  acts.push_back(noisy);
  ag::Tensor<Scalar> h = noisy;
  for (int i = 0; i < cfg.n_blocks; ++i) {
    EncoderBlock<Scalar>& blk = params.encoder[static_cast<std::size_t>(i)];
    h = ag::conv1d(h, blk.conv.w, blk.conv.b, cfg.stride);
    if (cfg.bn_before_activation) {
      h = ag::batch_norm(h, blk.bn.gamma, blk.bn.beta, blk.bn.state, mode);
      h = improved_relu(h, blk.irelu, ov.irelu_alpha);
    } else {
      h = improved_relu(h, blk.irelu, ov.irelu_alpha);
      h = ag::batch_norm(h, blk.bn.gamma, blk.bn.beta, blk.bn.state, mode);
    }
    acts.push_back(h);
  }

  for (int j = 0; j < cfg.n_blocks; ++j) {
    DecoderBlock<Scalar>& blk = params.decoder[static_cast<std::size_t>(j)];
    h = ag::transposed_conv1d(h, blk.tconv.w, blk.tconv.b, cfg.stride);
    if (cfg.bn_before_activation) {
      h = ag::batch_norm(h, blk.bn.gamma, blk.bn.beta, blk.bn.state, mode);
      h = improved_relu(h, blk.irelu, ov.irelu_alpha);
    } else {
      h = improved_relu(h, blk.irelu, ov.irelu_alpha);
      h = ag::batch_norm(h, blk.bn.gamma, blk.bn.beta, blk.bn.state, mode);
    }
    const auto& src = acts[static_cast<std::size_t>(cfg.n_blocks - 1 - j)];
    h = ag::add(h, skip_connect(src, blk.skip, h.shape().d[2]));
    if (cfg.use_attention) h = attention_block(h, blk.attn, ov);
  }

  return ag::conv1d(h, params.final_conv.w, params.final_conv.b, 1);
}

/// Reconstruction objective: mean over batch and samples of squared error.
template <typename Scalar>
ag::Tensor<Scalar> loss(const ag::Tensor<Scalar>& denoised,
                        const ag::Tensor<Scalar>& clean) {
  return ag::mse_loss(denoised, clean);
}

}  // namespace ascnet::model

#endif  // ASCNET_MODEL_HPP
