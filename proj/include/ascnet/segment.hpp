#ifndef ASCNET_SEGMENT_HPP
#define ASCNET_SEGMENT_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ascnet/noise.hpp"
#include "ascnet/wfdb.hpp"

namespace ascnet::sig {

/// One training example: a normalized clean window, its noisy counterpart
/// (noise mixed in the normalized domain), and what it took to build it.
struct Segment {
  Eigen::ArrayXd clean;
  Eigen::ArrayXd noisy;
  double norm_mean = 0.0;
  double norm_scale = 1.0;
  std::string record_id;
  std::int64_t offset = 0;
  NoiseSpec noise;
};

enum class Split { train, val, test };
const char* to_string(Split s);

struct SegmentSet {
  std::vector<Segment> segments;
  Split split = Split::train;
  Eigen::Index L = 0;
};

struct DatasetSplits {
  SegmentSet train, val, test;
};

struct SplitFractions {
  double train = 0.8, val = 0.1, test = 0.1;
};

/// Fixed-length windows at offsets 0, stride, 2*stride, ...; any incomplete
/// tail is dropped.
std::vector<Eigen::ArrayXd> segment(const wfdb::SignalRecord& signal,
                                    Eigen::Index L, Eigen::Index stride);

struct Normalized {
  Eigen::ArrayXd values;
  double mean = 0.0;
  double scale = 1.0;
};

/// Standardizes to zero mean, unit deviation; the scale is clamped to
/// eps = 1e-8 so constant windows stay finite.
Normalized normalize(const Eigen::Ref<const Eigen::ArrayXd>& x);
Eigen::ArrayXd denormalize(const Eigen::Ref<const Eigen::ArrayXd>& y,
                           double mean, double scale);

/// Record-wise split (train/val/test record ids are disjoint), then every
/// window of every record is normalized and corrupted once per spec. The
/// per-segment noise seed is hash(seed, record_id, offset, spec), so the
/// result is a pure function of the arguments.
DatasetSplits build_dataset(
    const std::vector<wfdb::SignalRecord>& records,
    const std::vector<NoiseSpec>& specs, Eigen::Index L, Eigen::Index stride,
    const SplitFractions& fractions, std::uint64_t seed);

// --- flat binary + sidecar manifest ------------------------------------
//
// <base>.ascseg:  "ASCSEG1\0", u32 split, u32 L, u32 count, then per
// segment f32 mean, f32 scale, f32 clean[L], f32 noisy[L], little-endian.
// <base>.manifest.json: record ids, offsets, specs and seeds.

void save_segment_set(const SegmentSet& set, const std::string& path);
SegmentSet load_segment_set(const std::string& path);

// --- whole-record stitching ---------------------------------------------

/// Bartlett-style weights for 50% overlap-add: w[i] + w[i + L/2] == 1 for
/// even L, every weight positive.
Eigen::ArrayXd triangular_weights(Eigen::Index L);

/// Weighted overlap-average of (offset, values) pieces onto a signal of
/// total_len samples. Every sample must be covered by at least one piece.
Eigen::ArrayXd stitch_segments(
    const std::vector<std::pair<std::int64_t, Eigen::ArrayXd>>& pieces,
    std::int64_t total_len);

}  // namespace ascnet::sig

#endif  // ASCNET_SEGMENT_HPP
