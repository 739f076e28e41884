#ifndef ASCNET_WFDB_HPP
#define ASCNET_WFDB_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace ascnet::wfdb {

/// Per-signal entry of a WFDB header.
struct SignalSpec {
  std::string file_name;
  int format_code = 0;
  double gain = 200.0;  // ADC units per millivolt
  int baseline = 0;     // ADC units
  std::string units_label;
  std::string description;
};

struct RecordHeader {
  std::string record_name;
  int n_signals = 0;
  double sampling_rate = 0.0;  // samples/second
  std::int64_t n_samples = 0;  // 0 when the header leaves it unspecified
  std::vector<SignalSpec> signals;
};

/// One channel of a record in physical units.
struct SignalRecord {
  RecordHeader header;
  int channel_index = 0;
  Eigen::ArrayXd samples_mv;
  std::string source_path;

  const std::string& record_id() const { return header.record_name; }
};

/// Parses the full text of a .hea file. Comment lines ('#') are skipped;
/// the record line and one line per signal are read positionally:
///
///   name n_signals [fs [n_samples ...]]
///   file format gain[(baseline)][/units] [adc_res [adc_zero [... desc]]]
///
/// The baseline comes from the parenthesised value when present, else from
/// the ADC-zero field, else 0. A missing or zero gain falls back to the
/// WFDB default of 200 ADC units/mV so that gain is always nonzero.
RecordHeader parse_header(const std::string& text);

/// Unpacks format-212 bytes: each 3-byte group holds two 12-bit
/// two's-complement samples,
///   sample_A = ((b1 & 0x0F) << 8) | b0
///   sample_B = ((b1 & 0xF0) << 4) | b2,
/// interleaved across signals in acquisition order. When the total sample
/// count is odd the trailing pad sample is read and discarded. The result
/// is [n_signals x n_samples] with every value in [-2048, 2047].
Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> decode_format212(
    const std::vector<std::uint8_t>& bytes, std::int64_t n_samples,
    int n_signals);

/// (raw - baseline) / gain, elementwise, in millivolts.
Eigen::ArrayXd to_physical(
    const Eigen::Ref<const Eigen::Array<std::int32_t, Eigen::Dynamic, 1>>& raw,
    double gain, int baseline);

/// Loads one channel of a record: parse_header, then decode the .dat file
/// the channel lives in (decoding all signals stored in that file so the
/// interleave comes out right), then convert to millivolts.
SignalRecord load_record(const std::string& header_path, int channel);

}  // namespace ascnet::wfdb

#endif  // ASCNET_WFDB_HPP
