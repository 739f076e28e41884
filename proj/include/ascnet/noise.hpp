#ifndef ASCNET_NOISE_HPP
#define ASCNET_NOISE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ascnet/wfdb.hpp"

namespace ascnet::sig {

enum class NoiseKind { awgn, bw, em, ma };

const char* to_string(NoiseKind k);
NoiseKind noise_kind_from(const std::string& label);

struct NoiseComponent {
  NoiseKind kind = NoiseKind::awgn;
  // Waveform source for bw/em/ma; unused for awgn.
  std::shared_ptr<const wfdb::SignalRecord> source;
};

/// A calibrated corruption: one component, or a mixture whose components
/// are summed before the single scaling to the target SNR.
struct NoiseSpec {
  std::vector<NoiseComponent> components;
  double target_snr_db = 0.0;
  std::uint64_t seed = 0;

  /// "awgn", "em", "em+bw+ma", ... in component order.
  std::string kind_label() const;

  /// Stable hash of kinds and target SNR (not the seed), used when deriving
  /// per-segment seeds.
  std::uint64_t digest() const;

  /// Checks component kinds are distinct, mixtures have >= 2 of them, and
  /// every record-backed component is at least segment_length long.
  void validate(Eigen::Index segment_length) const;
};

NoiseSpec make_awgn_spec(double snr_db);
NoiseSpec make_record_spec(NoiseKind kind,
                           std::shared_ptr<const wfdb::SignalRecord> source,
                           double snr_db);

/// i.i.d. standard normal draws; mt19937_64 bits fed through Box-Muller,
/// so the sequence is identical on every platform for a given (L, seed).
Eigen::ArrayXd gen_awgn(Eigen::Index L, std::uint64_t seed);

/// Adds spec's noise to `clean` scaled so that the measured SNR equals
/// target_snr_db. Record-backed components contribute a seed-chosen
/// contiguous crop; mixtures are summed before the one scaling step.
Eigen::ArrayXd mix_noise(const Eigen::Ref<const Eigen::ArrayXd>& clean,
                         const NoiseSpec& spec);

}  // namespace ascnet::sig

#endif  // ASCNET_NOISE_HPP
