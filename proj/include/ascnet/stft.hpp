#ifndef ASCNET_STFT_HPP
#define ASCNET_STFT_HPP

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <sstream>
#include <vector>

#include "ascnet/error.hpp"
#include "ascnet/util.hpp"

namespace ascnet::tfr {

template <typename Scalar>
using VecX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using ComplexFrames = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic,
                                    Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using MaskMat =
    Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Periodic Hann window; satisfies constant overlap-add at hop = W/2.
template <typename Scalar>
VecX<Scalar> hann_window(Eigen::Index w) {
  VecX<Scalar> out(w);
  for (Eigen::Index n = 0; n < w; ++n)
    out[n] = Scalar(0.5) *
             (Scalar(1) - std::cos(Scalar(2) * Scalar(M_PI) *
                                   static_cast<Scalar>(n) /
                                   static_cast<Scalar>(w)));
  return out;
}

template <typename Scalar>
VecX<Scalar> rect_window(Eigen::Index w) {
  return VecX<Scalar>::Ones(w);
}

namespace detail {

inline bool is_pow2(Eigen::Index n) { return n > 0 && (n & (n - 1)) == 0; }

template <typename Scalar>
void dft_direct(std::vector<std::complex<Scalar>>& a, bool inverse) {
  const std::size_t n = a.size();
  std::vector<std::complex<Scalar>> out(n);
  const Scalar sign = inverse ? Scalar(1) : Scalar(-1);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<Scalar> acc(0, 0);
    for (std::size_t t = 0; t < n; ++t) {
      const Scalar ang = sign * Scalar(2) * Scalar(M_PI) *
                         static_cast<Scalar>(k * t % n) /
                         static_cast<Scalar>(n);
      acc += a[t] * std::complex<Scalar>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  a.swap(out);
}

template <typename Scalar>
void fft_radix2(std::vector<std::complex<Scalar>>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const Scalar ang = (inverse ? Scalar(2) : Scalar(-2)) * Scalar(M_PI) /
                       static_cast<Scalar>(len);
    const std::complex<Scalar> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<Scalar> w(1, 0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<Scalar> u = a[i + k];
        const std::complex<Scalar> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

/// In-place DFT; radix-2 for power-of-two sizes, direct otherwise. The
/// inverse includes the 1/N normalization.
template <typename Scalar>
void dft(std::vector<std::complex<Scalar>>& a, bool inverse) {
  if (a.empty()) return;
  if (is_pow2(static_cast<Eigen::Index>(a.size())))
    fft_radix2(a, inverse);
  else
    dft_direct(a, inverse);
  if (inverse)
    for (auto& v : a) v /= static_cast<Scalar>(a.size());
}

}  // namespace detail

/// Raises BadWindow unless sum_j w[n + j*hop] is the same positive constant
/// for every n in [0, hop) (relative spread <= 1e-8).
template <typename Scalar>
void check_cola(const VecX<Scalar>& window, Eigen::Index hop) {
  const Eigen::Index w = window.size();
  if (w < 1 || hop < 1 || hop > w)
    raise(errc::bad_window, "need 1 <= hop <= window length");
  Scalar lo = std::numeric_limits<Scalar>::max();
  Scalar hi = std::numeric_limits<Scalar>::lowest();
  for (Eigen::Index n = 0; n < hop; ++n) {
    Scalar s = 0;
    for (Eigen::Index j = n; j < w; j += hop) s += window[j];
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  if (lo <= Scalar(0) || (hi - lo) > Scalar(1e-8) * std::max(hi, Scalar(1)))
    raise(errc::bad_window,
          "window does not satisfy constant overlap-add at hop " +
              std::to_string(hop));
}

template <typename Scalar>
struct Spectrogram {
  ComplexFrames<Scalar> frames;  // [n_frames x n_bins], n_bins = W/2 + 1
  VecX<Scalar> window;
  Eigen::Index hop = 0;
  Eigen::Index original_length = 0;

  Eigen::Index n_frames() const { return frames.rows(); }
  Eigen::Index n_bins() const { return frames.cols(); }
};

/// Windowed half-spectrum frames of x. The signal is zero-padded by
/// W - hop on both ends (plus tail fill to a whole number of hops) so the
/// inverse can reconstruct every original sample.
template <typename Scalar>
Spectrogram<Scalar> stft(const VecX<Scalar>& x, const VecX<Scalar>& window,
                         Eigen::Index hop) {
  if (x.size() == 0) raise(errc::empty_input, "stft of an empty signal");
  check_cola(window, hop);
  const Eigen::Index w = window.size();
  const Eigen::Index pad = w - hop;
  const Eigen::Index covered = x.size() + 2 * pad;
  const Eigen::Index n_frames =
      covered <= w ? 1 : (covered - w + hop - 1) / hop + 1;
  const Eigen::Index padded_len = (n_frames - 1) * hop + w;

  VecX<Scalar> padded = VecX<Scalar>::Zero(padded_len);
  padded.segment(pad, x.size()) = x;

  Spectrogram<Scalar> spec;
  spec.window = window;
  spec.hop = hop;
  spec.original_length = x.size();
  spec.frames.resize(n_frames, w / 2 + 1);

  std::vector<std::complex<Scalar>> buf(static_cast<std::size_t>(w));
  for (Eigen::Index k = 0; k < n_frames; ++k) {
    for (Eigen::Index n = 0; n < w; ++n)
      buf[static_cast<std::size_t>(n)] = window[n] * padded[k * hop + n];
    detail::dft(buf, false);
    for (Eigen::Index b = 0; b <= w / 2; ++b)
      spec.frames(k, b) = buf[static_cast<std::size_t>(b)];
  }
  return spec;
}

/// Weighted overlap-add inverse; each frame is inverted, weighted by the
/// analysis window again, accumulated, and normalized by the summed
/// squared window before the original sample range is cut out.
template <typename Scalar>
VecX<Scalar> istft(const Spectrogram<Scalar>& spec) {
  check_cola(spec.window, spec.hop);
  const Eigen::Index w = spec.window.size();
  if (spec.n_bins() != w / 2 + 1)
    raise(errc::shape_mismatch, "spectrogram bin count does not match window");
  const Eigen::Index pad = w - spec.hop;
  const Eigen::Index padded_len = (spec.n_frames() - 1) * spec.hop + w;
  if (pad + spec.original_length > padded_len)
    raise(errc::shape_mismatch, "spectrogram too short for original length");

  VecX<Scalar> num = VecX<Scalar>::Zero(padded_len);
  VecX<Scalar> den = VecX<Scalar>::Zero(padded_len);
  std::vector<std::complex<Scalar>> buf(static_cast<std::size_t>(w));
  for (Eigen::Index k = 0; k < spec.n_frames(); ++k) {
    for (Eigen::Index b = 0; b <= w / 2; ++b)
      buf[static_cast<std::size_t>(b)] = spec.frames(k, b);
    for (Eigen::Index b = w / 2 + 1; b < w; ++b)
      buf[static_cast<std::size_t>(b)] = std::conj(spec.frames(k, w - b));
    detail::dft(buf, true);
    for (Eigen::Index n = 0; n < w; ++n) {
      num[k * spec.hop + n] +=
          spec.window[n] * buf[static_cast<std::size_t>(n)].real();
      den[k * spec.hop + n] += spec.window[n] * spec.window[n];
    }
  }
  VecX<Scalar> out(spec.original_length);
  for (Eigen::Index i = 0; i < spec.original_length; ++i) {
    if (den[pad + i] <= Scalar(0))
      raise(errc::bad_window, "window leaves samples uncovered");
    out[i] = num[pad + i] / den[pad + i];
  }
  return out;
}

/// Real nonnegative gain per (frame, bin); scales magnitudes, keeps phase.
template <typename Scalar>
Spectrogram<Scalar> apply_mask(const Spectrogram<Scalar>& spec,
                               const MaskMat<Scalar>& mask) {
  if (mask.rows() != spec.n_frames() || mask.cols() != spec.n_bins())
    raise(errc::shape_mismatch,
          "mask is " + std::to_string(mask.rows()) + "x" +
              std::to_string(mask.cols()) + ", spectrogram is " +
              std::to_string(spec.n_frames()) + "x" +
              std::to_string(spec.n_bins()));
  if (!mask.isFinite().all() || (mask < Scalar(0)).any())
    raise(errc::invalid_argument, "mask values must be finite and >= 0");
  Spectrogram<Scalar> out = spec;
  for (Eigen::Index k = 0; k < spec.n_frames(); ++k)
    for (Eigen::Index b = 0; b < spec.n_bins(); ++b)
      out.frames(k, b) = spec.frames(k, b) * mask(k, b);
  return out;
}

/// frame,bin,re,im rows for plotting.
template <typename Scalar>
std::string dump_csv(const Spectrogram<Scalar>& spec) {
  std::ostringstream os;
  os << "frame,bin,re,im\n";
  for (Eigen::Index k = 0; k < spec.n_frames(); ++k)
    for (Eigen::Index b = 0; b < spec.n_bins(); ++b)
      os << k << "," << b << ","
         << util::fmt_g(static_cast<double>(spec.frames(k, b).real())) << ","
         << util::fmt_g(static_cast<double>(spec.frames(k, b).imag())) << "\n";
  return os.str();
}

}  // namespace ascnet::tfr

#endif  // ASCNET_STFT_HPP
