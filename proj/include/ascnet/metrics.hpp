#ifndef ASCNET_METRICS_HPP
#define ASCNET_METRICS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "ascnet/error.hpp"

namespace ascnet::sig {

namespace detail {
template <typename DA, typename DB>
void check_same_length(const Eigen::ArrayBase<DA>& a,
                       const Eigen::ArrayBase<DB>& b) {
  if (a.size() != b.size())
    raise(errc::length_mismatch, std::to_string(a.size()) + " vs " +
                                     std::to_string(b.size()) + " samples");
}
}  // namespace detail

/// Mean squared error (1/N) * sum((f - u)^2).
template <typename DA, typename DB>
typename DA::Scalar mse(const Eigen::ArrayBase<DA>& f,
                        const Eigen::ArrayBase<DB>& u) {
  detail::check_same_length(f, u);
  return (f.derived() - u.derived()).square().mean();
}

template <typename DA, typename DB>
typename DA::Scalar rmse(const Eigen::ArrayBase<DA>& f,
                         const Eigen::ArrayBase<DB>& u) {
  return std::sqrt(mse(f, u));
}

/// Output SNR in dB: 10*log10(sum f^2 / sum (f-u)^2). A zero residual
/// yields +infinity.
template <typename DA, typename DB>
typename DA::Scalar snr_out(const Eigen::ArrayBase<DA>& f,
                            const Eigen::ArrayBase<DB>& u) {
  using Scalar = typename DA::Scalar;
  detail::check_same_length(f, u);
  const Scalar signal = f.derived().square().sum();
  if (signal == Scalar(0))
    raise(errc::zero_power_clean, "snr_out of a zero-power reference");
  const Scalar residual = (f.derived() - u.derived()).square().sum();
  if (residual == Scalar(0)) return std::numeric_limits<Scalar>::infinity();
  return Scalar(10) * std::log10(signal / residual);
}

/// Percent root-mean-square difference, 100*sqrt(sum e^2 / sum f^2)
/// (non-mean-subtracted form).
template <typename DA, typename DB>
typename DA::Scalar prd(const Eigen::ArrayBase<DA>& f,
                        const Eigen::ArrayBase<DB>& u) {
  using Scalar = typename DA::Scalar;
  detail::check_same_length(f, u);
  const Scalar signal = f.derived().square().sum();
  if (signal == Scalar(0))
    raise(errc::zero_power_clean, "prd of a zero-power reference");
  return Scalar(100) *
         std::sqrt((f.derived() - u.derived()).square().sum() / signal);
}

/// snr_out(clean, estimate) - snr_out(clean, noisy). Exactly 0 when the
/// estimate is the noisy input itself; when both terms are infinite (no
/// noise and a perfect estimate) the improvement is defined as 0.
template <typename DA, typename DB, typename DC>
typename DA::Scalar snr_improvement(const Eigen::ArrayBase<DA>& clean,
                                    const Eigen::ArrayBase<DB>& noisy,
                                    const Eigen::ArrayBase<DC>& estimate) {
  using Scalar = typename DA::Scalar;
  const Scalar out = snr_out(clean, estimate);
  const Scalar in = snr_out(clean, noisy);
  if (std::isinf(out) && std::isinf(in)) return Scalar(0);
  return out - in;
}

}  // namespace ascnet::sig

#endif  // ASCNET_METRICS_HPP
