#ifndef ASCNET_AUTOGRAD_OPS_HPP
#define ASCNET_AUTOGRAD_OPS_HPP

#include <algorithm>
#include <cmath>
#include <utility>

#include "ascnet/tensor.hpp"

// Differentiable primitives over ag::Tensor. Conventions pinned here for
// reproducibility:
//   * "same" zero padding splits pad as floor(total/2) left, remainder right;
//   * subgradients at 0 for the relu family follow the positive branch;
//   * max pools route their gradient to the first (lowest-index) maximum.

namespace ascnet::ag {

enum class PoolKind { avg, max };
enum class Mode { train, eval };

template <typename Scalar>
using MatRM =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

template <typename Scalar>
bool tracked(const Tensor<Scalar>& t) {
  return t.requires_grad() || t.node()->op != nullptr;
}

inline void expect(bool ok, const char* op, const std::string& msg) {
  if (!ok) raise(errc::shape_mismatch, std::string(op) + ": " + msg);
}

/// Padded strided patch matrix: P(c*K + k, i) = x[c, i*stride + k - pl],
/// zero outside [0, N).
template <typename Scalar>
void im2col(const Scalar* x, Eigen::Index C, Eigen::Index N, Eigen::Index K,
            Eigen::Index stride, Eigen::Index pl, Eigen::Index No,
            MatRM<Scalar>& P) {
  P.resize(C * K, No);
  for (Eigen::Index c = 0; c < C; ++c)
    for (Eigen::Index k = 0; k < K; ++k)
      for (Eigen::Index i = 0; i < No; ++i) {
        const Eigen::Index src = i * stride + k - pl;
        P(c * K + k, i) =
            (src >= 0 && src < N) ? x[c * N + src] : Scalar(0);
      }
}

/// Scatter-add adjoint of im2col.
template <typename Scalar>
void col2im_add(const MatRM<Scalar>& P, Eigen::Index C, Eigen::Index N,
                Eigen::Index K, Eigen::Index stride, Eigen::Index pl,
                Eigen::Index No, Scalar* x) {
  for (Eigen::Index c = 0; c < C; ++c)
    for (Eigen::Index k = 0; k < K; ++k)
      for (Eigen::Index i = 0; i < No; ++i) {
        const Eigen::Index dst = i * stride + k - pl;
        if (dst >= 0 && dst < N) x[c * N + dst] += P(c * K + k, i);
      }
}

}  // namespace detail

// --- convolution ------------------------------------------------------------

/// Strided cross-correlation with same-zero padding.
/// x: [B, C_in, N], w: [C_out, C_in, K], b: [C_out] ->
/// [B, C_out, ceil(N / stride)].
template <typename Scalar>
Tensor<Scalar> conv1d(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                      const Tensor<Scalar>& b, Eigen::Index stride) {
  using detail::expect;
  expect(x.shape().rank == 3, "conv1d", "input must be rank 3, got " +
                                            x.shape().str());
  expect(w.shape().rank == 3, "conv1d", "weight must be rank 3");
  expect(b.shape().rank == 1, "conv1d", "bias must be rank 1");
  expect(stride >= 1, "conv1d", "stride must be >= 1");
  const Eigen::Index B = x.shape().d[0], Ci = x.shape().d[1],
                     N = x.shape().d[2];
  const Eigen::Index Co = w.shape().d[0], K = w.shape().d[2];
  expect(w.shape().d[1] == Ci, "conv1d",
         "weight expects " + std::to_string(w.shape().d[1]) +
             " input channels, input has " + std::to_string(Ci));
  expect(b.shape().d[0] == Co, "conv1d", "bias length != output channels");
  expect(K >= 1, "conv1d", "kernel must be >= 1");

  const Eigen::Index No = (N + stride - 1) / stride;
  const Eigen::Index total_pad =
      std::max<Eigen::Index>(0, (No - 1) * stride + K - N);
  const Eigen::Index pl = total_pad / 2;

  VecX<Scalar> out(B * Co * No);
  Eigen::Map<const MatRM<Scalar>> wm(w.value().data(), Co, Ci * K);
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> bv(
      b.value().data(), Co);
  MatRM<Scalar> patches;
  for (Eigen::Index bi = 0; bi < B; ++bi) {
    detail::im2col(x.value().data() + bi * Ci * N, Ci, N, K, stride, pl, No,
                   patches);
    Eigen::Map<MatRM<Scalar>> ym(out.data() + bi * Co * No, Co, No);
    ym.noalias() = wm * patches;
    ym.colwise() += bv;
  }

  auto xn = x.node();
  auto wn = w.node();
  auto bn = b.node();
  const bool need_x = detail::tracked(x), need_w = detail::tracked(w),
             need_b = detail::tracked(b);
  return make_op<Scalar>(
      "conv1d", Shape::bcn(B, Co, No), std::move(out), {x, w, b},
      [=](Node<Scalar>& o) {
        MatRM<Scalar> patches2;
        Eigen::Map<const MatRM<Scalar>> wmap(wn->value.data(), Co, Ci * K);
        for (Eigen::Index bi = 0; bi < B; ++bi) {
          Eigen::Map<const MatRM<Scalar>> gy(o.grad.data() + bi * Co * No, Co,
                                             No);
          if (need_b) {
            Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> gb(
                bn->ensure_grad().data(), Co);
            gb.noalias() += gy.rowwise().sum();
          }
          if (need_w || need_x)
            detail::im2col(xn->value.data() + bi * Ci * N, Ci, N, K, stride,
                           pl, No, patches2);
          if (need_w) {
            Eigen::Map<MatRM<Scalar>> gw(wn->ensure_grad().data(), Co,
                                         Ci * K);
            gw.noalias() += gy * patches2.transpose();
          }
          if (need_x) {
            MatRM<Scalar> gcols = wmap.transpose() * gy;
            detail::col2im_add(gcols, Ci, N, K, stride, pl, No,
                               xn->ensure_grad().data() + bi * Ci * N);
          }
        }
      });
}

/// Exact adjoint of conv1d's linear map. The weight layout matches the
/// conv it transposes: w[C_in, C_out, K] where C_in is this op's input
/// channel count. x: [B, C_in, M] -> [B, C_out, M * stride].
template <typename Scalar>
Tensor<Scalar> transposed_conv1d(const Tensor<Scalar>& x,
                                 const Tensor<Scalar>& w,
                                 const Tensor<Scalar>& b,
                                 Eigen::Index stride) {
  using detail::expect;
  expect(x.shape().rank == 3, "transposed_conv1d", "input must be rank 3");
  expect(w.shape().rank == 3, "transposed_conv1d", "weight must be rank 3");
  expect(b.shape().rank == 1, "transposed_conv1d", "bias must be rank 1");
  expect(stride >= 1, "transposed_conv1d", "stride must be >= 1");
  const Eigen::Index B = x.shape().d[0], Ci = x.shape().d[1],
                     M = x.shape().d[2];
  const Eigen::Index Co = w.shape().d[1], K = w.shape().d[2];
  expect(w.shape().d[0] == Ci, "transposed_conv1d",
         "weight expects " + std::to_string(w.shape().d[0]) +
             " input channels, input has " + std::to_string(Ci));
  expect(b.shape().d[0] == Co, "transposed_conv1d",
         "bias length != output channels");

  const Eigen::Index L = M * stride;
  const Eigen::Index pl = std::max<Eigen::Index>(0, K - stride) / 2;

  VecX<Scalar> out = VecX<Scalar>::Zero(B * Co * L);
  Eigen::Map<const MatRM<Scalar>> wm(w.value().data(), Ci, Co * K);
  for (Eigen::Index bi = 0; bi < B; ++bi) {
    Eigen::Map<const MatRM<Scalar>> um(x.value().data() + bi * Ci * M, Ci, M);
    MatRM<Scalar> t = wm.transpose() * um;  // [Co*K x M]
    detail::col2im_add(t, Co, L, K, stride, pl, M,
                       out.data() + bi * Co * L);
    for (Eigen::Index co = 0; co < Co; ++co)
      Eigen::Map<VecX<Scalar>>(out.data() + (bi * Co + co) * L, L) +=
          b.value()[co];
  }

  auto xn = x.node();
  auto wn = w.node();
  auto bn = b.node();
  const bool need_x = detail::tracked(x), need_w = detail::tracked(w),
             need_b = detail::tracked(b);
  return make_op<Scalar>(
      "transposed_conv1d", Shape::bcn(B, Co, L), std::move(out), {x, w, b},
      [=](Node<Scalar>& o) {
        MatRM<Scalar> pg;
        Eigen::Map<const MatRM<Scalar>> wmap(wn->value.data(), Ci, Co * K);
        for (Eigen::Index bi = 0; bi < B; ++bi) {
          Eigen::Map<const MatRM<Scalar>> gy(o.grad.data() + bi * Co * L, Co,
                                             L);
          if (need_b) {
            Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> gb(
                bn->ensure_grad().data(), Co);
            gb.noalias() += gy.rowwise().sum();
          }
          if (need_x || need_w)
            detail::im2col(o.grad.data() + bi * Co * L, Co, L, K, stride, pl,
                           M, pg);
          if (need_x) {
            Eigen::Map<MatRM<Scalar>> gu(xn->ensure_grad().data() + bi * Ci * M,
                                         Ci, M);
            gu.noalias() += wmap * pg;
          }
          if (need_w) {
            Eigen::Map<const MatRM<Scalar>> um(xn->value.data() + bi * Ci * M,
                                               Ci, M);
            Eigen::Map<MatRM<Scalar>> gw(wn->ensure_grad().data(), Ci,
                                         Co * K);
            gw.noalias() += um * pg.transpose();
          }
        }
      });
}

// --- batch normalization ----------------------------------------------------

template <typename Scalar>
struct BatchNormState {
  VecX<Scalar> running_mean;
  VecX<Scalar> running_var;

  static BatchNormState init(Eigen::Index channels) {
    return {VecX<Scalar>::Zero(channels), VecX<Scalar>::Ones(channels)};
  }
};

/// Train mode normalizes with batch statistics over (B, N) per channel and
/// updates the running stats as r <- momentum * r + (1 - momentum) * batch;
/// eval mode applies the running stats as constants. Variance is the
/// biased (1/m) form throughout.
template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta,
                          BatchNormState<Scalar>& state, Mode mode,
                          Scalar momentum = Scalar(0.9),
                          Scalar eps = Scalar(1e-5)) {
  using detail::expect;
  expect(x.shape().rank == 3, "batch_norm", "input must be rank 3");
  const Eigen::Index B = x.shape().d[0], C = x.shape().d[1],
                     N = x.shape().d[2];
  expect(gamma.shape() == Shape::vec(C) && beta.shape() == Shape::vec(C),
         "batch_norm", "gamma/beta must be rank-1 of length C");
  expect(state.running_mean.size() == C && state.running_var.size() == C,
         "batch_norm", "running stats must have length C");
  const Eigen::Index m = B * N;
  if (mode == Mode::train && m < 2)
    raise(errc::degenerate_batch,
          "batch statistics need B*N >= 2, got " + std::to_string(m));

  VecX<Scalar> mean(C), inv_std(C);
  if (mode == Mode::train) {
    VecX<Scalar> var(C);
    for (Eigen::Index c = 0; c < C; ++c) {
      Scalar sum = 0, sq = 0;
      for (Eigen::Index bi = 0; bi < B; ++bi) {
        const Scalar* p = x.value().data() + (bi * C + c) * N;
        for (Eigen::Index n = 0; n < N; ++n) {
          sum += p[n];
          sq += p[n] * p[n];
        }
      }
      mean[c] = sum / static_cast<Scalar>(m);
      var[c] = sq / static_cast<Scalar>(m) - mean[c] * mean[c];
      var[c] = std::max(var[c], Scalar(0));  // guard fp cancellation
      inv_std[c] = Scalar(1) / std::sqrt(var[c] + eps);
    }
    state.running_mean = momentum * state.running_mean +
                         (Scalar(1) - momentum) * mean;
    state.running_var =
        momentum * state.running_var + (Scalar(1) - momentum) * var;
  } else {
    mean = state.running_mean;
    inv_std = (state.running_var + eps).sqrt().inverse();
  }

  VecX<Scalar> out(x.size());
  for (Eigen::Index bi = 0; bi < B; ++bi)
    for (Eigen::Index c = 0; c < C; ++c) {
      const Scalar* px = x.value().data() + (bi * C + c) * N;
      Scalar* po = out.data() + (bi * C + c) * N;
      const Scalar g = gamma.value()[c], be = beta.value()[c];
      for (Eigen::Index n = 0; n < N; ++n)
        po[n] = g * (px[n] - mean[c]) * inv_std[c] + be;
    }

  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  const bool need_x = detail::tracked(x), need_g = detail::tracked(gamma),
             need_b = detail::tracked(beta);
  const bool train = mode == Mode::train;
  return make_op<Scalar>(
      "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
      [=](Node<Scalar>& o) {
        VecX<Scalar>* gx = need_x ? &xn->ensure_grad() : nullptr;
        VecX<Scalar>* gg = need_g ? &gn->ensure_grad() : nullptr;
        VecX<Scalar>* gb = need_b ? &bn->ensure_grad() : nullptr;
        for (Eigen::Index c = 0; c < C; ++c) {
          Scalar sum_dy = 0, sum_dy_xhat = 0;
          for (Eigen::Index bi = 0; bi < B; ++bi) {
            const Scalar* px = xn->value.data() + (bi * C + c) * N;
            const Scalar* pg = o.grad.data() + (bi * C + c) * N;
            for (Eigen::Index n = 0; n < N; ++n) {
              sum_dy += pg[n];
              sum_dy_xhat += pg[n] * (px[n] - mean[c]) * inv_std[c];
            }
          }
          if (gb) (*gb)[c] += sum_dy;
          if (gg) (*gg)[c] += sum_dy_xhat;
          if (gx) {
            const Scalar g = gn->value[c];
            const Scalar mean_dy = sum_dy / static_cast<Scalar>(m);
            const Scalar mean_dy_xhat = sum_dy_xhat / static_cast<Scalar>(m);
            for (Eigen::Index bi = 0; bi < B; ++bi) {
              const Scalar* px = xn->value.data() + (bi * C + c) * N;
              const Scalar* pg = o.grad.data() + (bi * C + c) * N;
              Scalar* pgx = gx->data() + (bi * C + c) * N;
              for (Eigen::Index n = 0; n < N; ++n) {
                const Scalar xhat = (px[n] - mean[c]) * inv_std[c];
                if (train)
                  pgx[n] += g * inv_std[c] *
                            (pg[n] - mean_dy - xhat * mean_dy_xhat);
                else
                  pgx[n] += g * inv_std[c] * pg[n];
              }
            }
          }
        }
      });
}

// --- pooling ----------------------------------------------------------------

/// Full-extent reduction over the spatial axis: [B, C, N] -> [B, C, 1].
template <typename Scalar>
Tensor<Scalar> pool_spatial(const Tensor<Scalar>& x, PoolKind kind) {
  detail::expect(x.shape().rank == 3, "pool_spatial", "input must be rank 3");
  const Eigen::Index B = x.shape().d[0], C = x.shape().d[1],
                     N = x.shape().d[2];
  VecX<Scalar> out(B * C);
  std::vector<Eigen::Index> argmax(kind == PoolKind::max ? B * C : 0);
  for (Eigen::Index bc = 0; bc < B * C; ++bc) {
    const Scalar* p = x.value().data() + bc * N;
    if (kind == PoolKind::avg) {
      Scalar s = 0;
      for (Eigen::Index n = 0; n < N; ++n) s += p[n];
      out[bc] = s / static_cast<Scalar>(N);
    } else {
      Eigen::Index best = 0;
      for (Eigen::Index n = 1; n < N; ++n)
        if (p[n] > p[best]) best = n;  // first maximum wins ties
      argmax[static_cast<std::size_t>(bc)] = best;
      out[bc] = p[best];
    }
  }
  auto xn = x.node();
  return make_op<Scalar>(
      "pool_spatial", Shape::bcn(B, C, 1), std::move(out), {x},
      [=, argmax = std::move(argmax)](Node<Scalar>& o) {
        VecX<Scalar>& gx = xn->ensure_grad();
        for (Eigen::Index bc = 0; bc < B * C; ++bc) {
          if (kind == PoolKind::avg) {
            const Scalar share = o.grad[bc] / static_cast<Scalar>(N);
            for (Eigen::Index n = 0; n < N; ++n) gx[bc * N + n] += share;
          } else {
            gx[bc * N + argmax[static_cast<std::size_t>(bc)]] += o.grad[bc];
          }
        }
      });
}

/// Cross-channel reduction per position: [B, C, N] -> [B, 1, N].
template <typename Scalar>
Tensor<Scalar> pool_channel(const Tensor<Scalar>& x, PoolKind kind) {
  detail::expect(x.shape().rank == 3, "pool_channel", "input must be rank 3");
  const Eigen::Index B = x.shape().d[0], C = x.shape().d[1],
                     N = x.shape().d[2];
  VecX<Scalar> out(B * N);
  std::vector<Eigen::Index> argmax(kind == PoolKind::max ? B * N : 0);
  for (Eigen::Index bi = 0; bi < B; ++bi)
    for (Eigen::Index n = 0; n < N; ++n) {
      const Scalar* base = x.value().data() + bi * C * N + n;
      if (kind == PoolKind::avg) {
        Scalar s = 0;
        for (Eigen::Index c = 0; c < C; ++c) s += base[c * N];
        out[bi * N + n] = s / static_cast<Scalar>(C);
      } else {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < C; ++c)
          if (base[c * N] > base[best * N]) best = c;  // lowest channel wins
        argmax[static_cast<std::size_t>(bi * N + n)] = best;
        out[bi * N + n] = base[best * N];
      }
    }
  auto xn = x.node();
  return make_op<Scalar>(
      "pool_channel", Shape::bcn(B, 1, N), std::move(out), {x},
      [=, argmax = std::move(argmax)](Node<Scalar>& o) {
        VecX<Scalar>& gx = xn->ensure_grad();
        for (Eigen::Index bi = 0; bi < B; ++bi)
          for (Eigen::Index n = 0; n < N; ++n) {
            const Scalar g = o.grad[bi * N + n];
            if (kind == PoolKind::avg) {
              const Scalar share = g / static_cast<Scalar>(C);
              for (Eigen::Index c = 0; c < C; ++c)
                gx[(bi * C + c) * N + n] += share;
            } else {
              gx[(bi * C + argmax[static_cast<std::size_t>(bi * N + n)]) * N +
                 n] += g;
            }
          }
      });
}

// --- fully connected --------------------------------------------------------

/// x: [B, F_in], w: [F_out, F_in], b: [F_out] -> [B, F_out].
template <typename Scalar>
Tensor<Scalar> fully_connected(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                               const Tensor<Scalar>& b) {
  using detail::expect;
  expect(x.shape().rank == 2, "fully_connected", "input must be rank 2");
  expect(w.shape().rank == 2, "fully_connected", "weight must be rank 2");
  const Eigen::Index B = x.shape().d[0], Fi = x.shape().d[1];
  const Eigen::Index Fo = w.shape().d[0];
  expect(w.shape().d[1] == Fi, "fully_connected",
         "weight expects " + std::to_string(w.shape().d[1]) +
             " features, input has " + std::to_string(Fi));
  expect(b.shape() == Shape::vec(Fo), "fully_connected",
         "bias length != output features");

  VecX<Scalar> out(B * Fo);
  {
    Eigen::Map<const MatRM<Scalar>> xm(x.value().data(), B, Fi);
    Eigen::Map<const MatRM<Scalar>> wm(w.value().data(), Fo, Fi);
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> bv(
        b.value().data(), Fo);
    Eigen::Map<MatRM<Scalar>> ym(out.data(), B, Fo);
    ym.noalias() = xm * wm.transpose();
    ym.rowwise() += bv.transpose();
  }
  auto xn = x.node();
  auto wn = w.node();
  auto bn = b.node();
  const bool need_x = detail::tracked(x), need_w = detail::tracked(w),
             need_b = detail::tracked(b);
  return make_op<Scalar>(
      "fully_connected", Shape::mat(B, Fo), std::move(out), {x, w, b},
      [=](Node<Scalar>& o) {
        Eigen::Map<const MatRM<Scalar>> gy(o.grad.data(), B, Fo);
        Eigen::Map<const MatRM<Scalar>> xm(xn->value.data(), B, Fi);
        Eigen::Map<const MatRM<Scalar>> wm(wn->value.data(), Fo, Fi);
        if (need_x) {
          Eigen::Map<MatRM<Scalar>> gx(xn->ensure_grad().data(), B, Fi);
          gx.noalias() += gy * wm;
        }
        if (need_w) {
          Eigen::Map<MatRM<Scalar>> gw(wn->ensure_grad().data(), Fo, Fi);
          gw.noalias() += gy.transpose() * xm;
        }
        if (need_b) {
          Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> gb(
              bn->ensure_grad().data(), Fo);
          gb.noalias() += gy.colwise().sum().transpose();
        }
      });
}

// --- elementwise ------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::expect(a.shape() == b.shape(), "add",
                 a.shape().str() + " vs " + b.shape().str());
  auto an = a.node();
  auto bn = b.node();
  const bool need_a = detail::tracked(a), need_b = detail::tracked(b);
  return make_op<Scalar>("add", a.shape(), a.value() + b.value(), {a, b},
                         [=](Node<Scalar>& o) {
                           if (need_a) an->ensure_grad() += o.grad;
                           if (need_b) bn->ensure_grad() += o.grad;
                         });
}

template <typename Scalar>
Tensor<Scalar> multiply(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::expect(a.shape() == b.shape(), "multiply",
                 a.shape().str() + " vs " + b.shape().str());
  auto an = a.node();
  auto bn = b.node();
  const bool need_a = detail::tracked(a), need_b = detail::tracked(b);
  return make_op<Scalar>("multiply", a.shape(), a.value() * b.value(), {a, b},
                         [=](Node<Scalar>& o) {
                           if (need_a) an->ensure_grad() += o.grad * bn->value;
                           if (need_b) bn->ensure_grad() += o.grad * an->value;
                         });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar c) {
  auto xn = x.node();
  return make_op<Scalar>(
      "scale", x.shape(), x.value() * c, {x},
      [=](Node<Scalar>& o) { xn->ensure_grad() += o.grad * c; });
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  VecX<Scalar> y = (Scalar(1) / (Scalar(1) + (-x.value()).exp()));
  auto xn = x.node();
  return make_op<Scalar>("sigmoid", x.shape(), std::move(y), {x},
                         [=](Node<Scalar>& o) {
                           xn->ensure_grad() +=
                               o.grad * o.value * (Scalar(1) - o.value);
                         });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  auto xn = x.node();
  return make_op<Scalar>(
      "relu", x.shape(), x.value().max(Scalar(0)), {x},
      [=](Node<Scalar>& o) {
        xn->ensure_grad() +=
            o.grad * (xn->value >= Scalar(0)).template cast<Scalar>();
      });
}

/// max(x, 0); the subgradient at 0 belongs to this branch.
template <typename Scalar>
Tensor<Scalar> positive_part(const Tensor<Scalar>& x) {
  auto xn = x.node();
  return make_op<Scalar>(
      "positive_part", x.shape(), x.value().max(Scalar(0)), {x},
      [=](Node<Scalar>& o) {
        xn->ensure_grad() +=
            o.grad * (xn->value >= Scalar(0)).template cast<Scalar>();
      });
}

/// min(x, 0); zero subgradient at 0 so the two parts sum to the identity.
template <typename Scalar>
Tensor<Scalar> negative_part(const Tensor<Scalar>& x) {
  auto xn = x.node();
  return make_op<Scalar>(
      "negative_part", x.shape(), x.value().min(Scalar(0)), {x},
      [=](Node<Scalar>& o) {
        xn->ensure_grad() +=
            o.grad * (xn->value < Scalar(0)).template cast<Scalar>();
      });
}

/// (max(x, 0), min(x, 0)); the parts reconstruct x by addition.
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> split_posneg(
    const Tensor<Scalar>& x) {
  return {positive_part(x), negative_part(x)};
}

/// Concatenation along axis 1 (channels for rank 3, features for rank 2).
template <typename Scalar>
Tensor<Scalar> concat_axis1(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  using detail::expect;
  expect(a.shape().rank == b.shape().rank, "concat_axis1", "rank mismatch");
  expect(a.shape().rank >= 2, "concat_axis1", "needs rank 2 or 3");
  expect(a.shape().d[0] == b.shape().d[0], "concat_axis1", "batch mismatch");
  expect(a.shape().rank == 2 || a.shape().d[2] == b.shape().d[2],
         "concat_axis1", "length mismatch");
  const Eigen::Index B = a.shape().d[0];
  const Eigen::Index chunk_a = a.size() / B, chunk_b = b.size() / B;
  Shape out_shape = a.shape();
  out_shape.d[1] += b.shape().d[1];

  VecX<Scalar> out(a.size() + b.size());
  for (Eigen::Index bi = 0; bi < B; ++bi) {
    out.segment(bi * (chunk_a + chunk_b), chunk_a) =
        a.value().segment(bi * chunk_a, chunk_a);
    out.segment(bi * (chunk_a + chunk_b) + chunk_a, chunk_b) =
        b.value().segment(bi * chunk_b, chunk_b);
  }
  auto an = a.node();
  auto bn = b.node();
  const bool need_a = detail::tracked(a), need_b = detail::tracked(b);
  return make_op<Scalar>(
      "concat_axis1", out_shape, std::move(out), {a, b},
      [=](Node<Scalar>& o) {
        for (Eigen::Index bi = 0; bi < B; ++bi) {
          if (need_a)
            an->ensure_grad().segment(bi * chunk_a, chunk_a) +=
                o.grad.segment(bi * (chunk_a + chunk_b), chunk_a);
          if (need_b)
            bn->ensure_grad().segment(bi * chunk_b, chunk_b) +=
                o.grad.segment(bi * (chunk_a + chunk_b) + chunk_a, chunk_b);
        }
      });
}

/// Same data, new extents; gradients flow straight through.
template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, const Shape& s) {
  detail::expect(s.size() == x.size(), "reshape",
                 x.shape().str() + " -> " + s.str());
  auto xn = x.node();
  return make_op<Scalar>(
      "reshape", s, VecX<Scalar>(x.value()), {x},
      [=](Node<Scalar>& o) { xn->ensure_grad() += o.grad; });
}

/// Per-channel gate: y[b,c,n] = x[b,c,n] * g[b,c]; g is [B,C] or [B,C,1].
template <typename Scalar>
Tensor<Scalar> mul_channel_gate(const Tensor<Scalar>& x,
                                const Tensor<Scalar>& g) {
  using detail::expect;
  expect(x.shape().rank == 3, "mul_channel_gate", "input must be rank 3");
  const Eigen::Index B = x.shape().d[0], C = x.shape().d[1],
                     N = x.shape().d[2];
  const bool ok = (g.shape().rank == 2 && g.shape().d[0] == B &&
                   g.shape().d[1] == C) ||
                  (g.shape() == Shape::bcn(B, C, 1));
  expect(ok, "mul_channel_gate",
         "gate " + g.shape().str() + " does not match " + x.shape().str());

  VecX<Scalar> out(x.size());
  for (Eigen::Index bc = 0; bc < B * C; ++bc)
    out.segment(bc * N, N) = x.value().segment(bc * N, N) * g.value()[bc];
  auto xn = x.node();
  auto gn = g.node();
  const bool need_x = detail::tracked(x), need_g = detail::tracked(g);
  return make_op<Scalar>(
      "mul_channel_gate", x.shape(), std::move(out), {x, g},
      [=](Node<Scalar>& o) {
        for (Eigen::Index bc = 0; bc < B * C; ++bc) {
          if (need_x)
            xn->ensure_grad().segment(bc * N, N) +=
                o.grad.segment(bc * N, N) * gn->value[bc];
          if (need_g)
            gn->ensure_grad()[bc] +=
                (o.grad.segment(bc * N, N) * xn->value.segment(bc * N, N))
                    .sum();
        }
      });
}

/// Per-position gate: y[b,c,n] = x[b,c,n] * g[b,0,n]; g is [B,1,N].
template <typename Scalar>
Tensor<Scalar> mul_spatial_gate(const Tensor<Scalar>& x,
                                const Tensor<Scalar>& g) {
  using detail::expect;
  expect(x.shape().rank == 3, "mul_spatial_gate", "input must be rank 3");
  const Eigen::Index B = x.shape().d[0], C = x.shape().d[1],
                     N = x.shape().d[2];
  expect(g.shape() == Shape::bcn(B, 1, N), "mul_spatial_gate",
         "gate " + g.shape().str() + " does not match " + x.shape().str());

  VecX<Scalar> out(x.size());
  for (Eigen::Index bi = 0; bi < B; ++bi)
    for (Eigen::Index c = 0; c < C; ++c)
      out.segment((bi * C + c) * N, N) =
          x.value().segment((bi * C + c) * N, N) *
          g.value().segment(bi * N, N);
  auto xn = x.node();
  auto gn = g.node();
  const bool need_x = detail::tracked(x), need_g = detail::tracked(g);
  return make_op<Scalar>(
      "mul_spatial_gate", x.shape(), std::move(out), {x, g},
      [=](Node<Scalar>& o) {
        for (Eigen::Index bi = 0; bi < B; ++bi)
          for (Eigen::Index c = 0; c < C; ++c) {
            if (need_x)
              xn->ensure_grad().segment((bi * C + c) * N, N) +=
                  o.grad.segment((bi * C + c) * N, N) *
                  gn->value.segment(bi * N, N);
            if (need_g)
              gn->ensure_grad().segment(bi * N, N) +=
                  o.grad.segment((bi * C + c) * N, N) *
                  xn->value.segment((bi * C + c) * N, N);
          }
      });
}

// --- reductions and losses --------------------------------------------------

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  auto xn = x.node();
  VecX<Scalar> v(1);
  v[0] = x.value().sum();
  return make_op<Scalar>(
      "sum", Shape::scalar(), std::move(v), {x},
      [=](Node<Scalar>& o) { xn->ensure_grad() += o.grad[0]; });
}

/// Mean over every element of the squared difference.
template <typename Scalar>
Tensor<Scalar> mse_loss(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::expect(a.shape() == b.shape(), "mse_loss",
                 a.shape().str() + " vs " + b.shape().str());
  const auto m = static_cast<Scalar>(a.size());
  VecX<Scalar> v(1);
  v[0] = (a.value() - b.value()).square().mean();
  auto an = a.node();
  auto bn = b.node();
  const bool need_a = detail::tracked(a), need_b = detail::tracked(b);
  return make_op<Scalar>(
      "mse_loss", Shape::scalar(), std::move(v), {a, b},
      [=](Node<Scalar>& o) {
        const VecX<Scalar> d =
            (an->value - bn->value) * (Scalar(2) / m) * o.grad[0];
        if (need_a) an->ensure_grad() += d;
        if (need_b) bn->ensure_grad() -= d;
      });
}

}  // namespace ascnet::ag

#endif  // ASCNET_AUTOGRAD_OPS_HPP
