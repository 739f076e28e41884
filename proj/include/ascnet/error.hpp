#ifndef ASCNET_ERROR_HPP
#define ASCNET_ERROR_HPP

#include <stdexcept>
#include <string>

namespace ascnet {

/// Failure categories raised by the toolkit. The CLI maps a subset of these
/// onto process exit codes; tests match on the code, not the message text.
enum class errc {
  malformed_header,
  unsupported_format,
  truncated_file,
  zero_gain,
  channel_out_of_range,
  signal_too_short,
  length_mismatch,
  zero_power_clean,
  zero_power_noise,
  insufficient_records,
  bad_window,
  empty_input,
  shape_mismatch,
  resolution_mismatch,
  degenerate_batch,
  non_scalar_loss,
  tape_consumed,
  config_mismatch,
  invalid_config,
  empty_dataset,
  divergence,
  version_mismatch,
  corrupt_file,
  schema_mismatch,
  invalid_argument,
  io_error,
};

inline const char* to_string(errc c) {
  switch (c) {
    case errc::malformed_header: return "MalformedHeader";
    case errc::unsupported_format: return "UnsupportedFormat";
    case errc::truncated_file: return "TruncatedFile";
    case errc::zero_gain: return "ZeroGain";
    case errc::channel_out_of_range: return "ChannelOutOfRange";
    case errc::signal_too_short: return "SignalTooShort";
    case errc::length_mismatch: return "LengthMismatch";
    case errc::zero_power_clean: return "ZeroPowerClean";
    case errc::zero_power_noise: return "ZeroPowerNoise";
    case errc::insufficient_records: return "InsufficientRecords";
    case errc::bad_window: return "BadWindow";
    case errc::empty_input: return "EmptyInput";
    case errc::shape_mismatch: return "ShapeMismatch";
    case errc::resolution_mismatch: return "ResolutionMismatch";
    case errc::degenerate_batch: return "DegenerateBatch";
    case errc::non_scalar_loss: return "NonScalarLoss";
    case errc::tape_consumed: return "TapeConsumed";
    case errc::config_mismatch: return "ConfigMismatch";
    case errc::invalid_config: return "InvalidConfig";
    case errc::empty_dataset: return "EmptyDataset";
    case errc::divergence: return "Divergence";
    case errc::version_mismatch: return "VersionMismatch";
    case errc::corrupt_file: return "CorruptFile";
    case errc::schema_mismatch: return "SchemaMismatch";
    case errc::invalid_argument: return "InvalidArgument";
    case errc::io_error: return "IoError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace ascnet

#endif  // ASCNET_ERROR_HPP
