#include "ascnet/wfdb.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "ascnet/error.hpp"
#include "ascnet/util.hpp"

namespace ascnet::wfdb {
namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

long parse_int(const std::string& tok, int line_no, const char* what) {
  long v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p == tok.data())
    raise(errc::malformed_header,
          std::string("line ") + std::to_string(line_no) + ": non-numeric " +
              what + " '" + tok + "'");
  return v;
}

double parse_real(const std::string& tok, int line_no, const char* what) {
  char* end = nullptr;
  double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str())
    raise(errc::malformed_header,
          std::string("line ") + std::to_string(line_no) + ": non-numeric " +
              what + " '" + tok + "'");
  return v;
}

// "212", "212x4", "212:2", "212+8" all carry format code 212.
int parse_format(const std::string& tok, int line_no) {
  std::size_t i = 0;
  while (i < tok.size() && (std::isdigit((unsigned char)tok[i]) ||
                            (i == 0 && tok[i] == '-')))
    ++i;
  if (i == 0)
    raise(errc::malformed_header,
          "line " + std::to_string(line_no) + ": bad format field '" + tok +
              "'");
  return static_cast<int>(parse_int(tok.substr(0, i), line_no, "format"));
}

std::int32_t twos_complement_12bit(std::uint32_t v) {
  return (v & 0x800u) ? static_cast<std::int32_t>(v) - 4096
                      : static_cast<std::int32_t>(v);
}

}  // namespace

RecordHeader parse_header(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;

  // First non-comment, non-blank line is the record line.
  std::vector<std::string> rec;
  int rec_line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    rec = split_ws(line);
    rec_line_no = line_no;
    break;
  }
  if (rec.empty()) raise(errc::malformed_header, "missing record line");
  if (rec.size() < 2)
    raise(errc::malformed_header, "line " + std::to_string(rec_line_no) +
                                      ": record line needs name and "
                                      "signal count");

  RecordHeader h;
  // Multi-segment suffixes ("name/n") are out of scope; keep the base name.
  h.record_name = rec[0].substr(0, rec[0].find('/'));
  h.n_signals = static_cast<int>(parse_int(rec[1], rec_line_no, "n_signals"));
  if (h.n_signals < 1)
    raise(errc::malformed_header, "n_signals must be >= 1");
  if (rec.size() >= 3) {
    // The rate field may carry a counter frequency: "360/360(0)".
    std::string fs = rec[2].substr(0, rec[2].find('/'));
    h.sampling_rate = parse_real(fs, rec_line_no, "sampling_rate");
  } else {
    h.sampling_rate = 250.0;  // WFDB default when the field is absent
  }
  if (h.sampling_rate <= 0)
    raise(errc::malformed_header, "sampling_rate must be > 0");
  if (rec.size() >= 4)
    h.n_samples = parse_int(rec[3], rec_line_no, "n_samples");
  if (h.n_samples < 0)
    raise(errc::malformed_header, "n_samples must be >= 0");

  for (int s = 0; s < h.n_signals; ++s) {
    do {
      if (!std::getline(is, line))
        raise(errc::malformed_header,
              "expected " + std::to_string(h.n_signals) +
                  " signal lines, found " + std::to_string(s));
      ++line_no;
    } while (line.empty() || line[0] == '#');

    std::vector<std::string> f = split_ws(line);
    if (f.size() < 2)
      raise(errc::malformed_header,
            "line " + std::to_string(line_no) +
                ": signal line needs file name and format");
    SignalSpec sig;
    sig.file_name = f[0];
    sig.format_code = parse_format(f[1], line_no);

    bool have_paren_baseline = false;
    if (f.size() >= 3) {
      // gain field: gain[(baseline)][/units]
      std::string g = f[2];
      auto slash = g.find('/');
      if (slash != std::string::npos) {
        sig.units_label = g.substr(slash + 1);
        g = g.substr(0, slash);
      }
      auto open = g.find('(');
      if (open != std::string::npos) {
        auto close = g.find(')', open);
        if (close == std::string::npos)
          raise(errc::malformed_header,
                "line " + std::to_string(line_no) + ": unclosed baseline");
        sig.baseline = static_cast<int>(
            parse_int(g.substr(open + 1, close - open - 1), line_no,
                      "baseline"));
        have_paren_baseline = true;
        g = g.substr(0, open);
      }
      double gain = parse_real(g, line_no, "gain");
      sig.gain = (gain == 0.0) ? 200.0 : gain;  // 0 means uncalibrated
    }
    // Positional fields: [3] adc resolution, [4] adc zero, [5] initial
    // value, [6] checksum, [7] block size, rest description.
    if (!have_paren_baseline && f.size() >= 5)
      sig.baseline =
          static_cast<int>(parse_int(f[4], line_no, "adc_zero"));
    if (f.size() >= 9) {
      std::string desc = f[8];
      for (std::size_t i = 9; i < f.size(); ++i) desc += " " + f[i];
      sig.description = desc;
    }
    h.signals.push_back(std::move(sig));
  }
  return h;
}

Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> decode_format212(
    const std::vector<std::uint8_t>& bytes, std::int64_t n_samples,
    int n_signals) {
  if (n_signals != 1 && n_signals != 2)
    raise(errc::invalid_argument,
          "decode_format212 supports 1 or 2 signals, got " +
              std::to_string(n_signals));
  if (n_samples < 0) raise(errc::invalid_argument, "negative sample count");

  const std::int64_t total = n_samples * n_signals;
  const std::int64_t pairs = (total + 1) / 2;  // odd totals carry a pad sample
  const std::int64_t needed = pairs * 3;
  if (static_cast<std::int64_t>(bytes.size()) < needed)
    raise(errc::truncated_file,
          "need " + std::to_string(needed) + " bytes for " +
              std::to_string(total) + " samples, have " +
              std::to_string(bytes.size()));

  Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> out(n_signals,
                                                                  n_samples);
  std::int64_t t = 0;  // interleaved stream position
  for (std::int64_t p = 0; p < pairs; ++p) {
    const std::uint32_t b0 = bytes[p * 3 + 0];
    const std::uint32_t b1 = bytes[p * 3 + 1];
    const std::uint32_t b2 = bytes[p * 3 + 2];
    const std::int32_t a = twos_complement_12bit(((b1 & 0x0Fu) << 8) | b0);
    const std::int32_t b = twos_complement_12bit(((b1 & 0xF0u) << 4) | b2);
    if (t < total) out(t % n_signals, t / n_signals) = a;
    ++t;
    if (t < total) out(t % n_signals, t / n_signals) = b;
    ++t;
  }
  return out;
}

Eigen::ArrayXd to_physical(
    const Eigen::Ref<const Eigen::Array<std::int32_t, Eigen::Dynamic, 1>>& raw,
    double gain, int baseline) {
  if (gain == 0.0) raise(errc::zero_gain, "gain must be nonzero");
  return (raw.cast<double>() - static_cast<double>(baseline)) / gain;
}

SignalRecord load_record(const std::string& header_path, int channel) {
  namespace fs = std::filesystem;
  RecordHeader h;
  try {
    h = parse_header(util::read_file(header_path));
  } catch (Error& e) {
    if (e.code() == errc::malformed_header)
      raise(errc::malformed_header, header_path + ": " + e.what());
    throw;
  }
  if (channel < 0 || channel >= h.n_signals)
    raise(errc::channel_out_of_range,
          "channel " + std::to_string(channel) + " of record " +
              h.record_name + " with " + std::to_string(h.n_signals) +
              " signals");

  const SignalSpec& want = h.signals[channel];
  if (want.format_code != 212)
    raise(errc::unsupported_format,
          "only format 212 is supported, signal " + std::to_string(channel) +
              " of " + h.record_name + " uses format " +
              std::to_string(want.format_code));

  // Signals sharing one .dat file interleave with each other only.
  std::vector<int> group;
  int index_in_group = -1;
  for (int s = 0; s < h.n_signals; ++s) {
    if (h.signals[s].file_name != want.file_name) continue;
    if (h.signals[s].format_code != 212)
      raise(errc::unsupported_format,
            "signal file " + want.file_name + " mixes formats");
    if (s == channel) index_in_group = static_cast<int>(group.size());
    group.push_back(s);
  }

  fs::path dat = fs::path(header_path).parent_path() / want.file_name;
  std::vector<std::uint8_t> bytes = util::read_file_bytes(dat.string());

  std::int64_t n_samples = h.n_samples;
  if (n_samples == 0) {
    // Header left the length unspecified; infer it from the file size.
    n_samples = (static_cast<std::int64_t>(bytes.size()) / 3) * 2 /
                static_cast<std::int64_t>(group.size());
    h.n_samples = n_samples;
  }

  auto raw = decode_format212(bytes, n_samples, static_cast<int>(group.size()));

  SignalRecord rec;
  rec.channel_index = channel;
  rec.source_path = dat.string();
  rec.samples_mv = to_physical(raw.row(index_in_group).transpose().array(),
                               want.gain, want.baseline);
  rec.header = std::move(h);
  return rec;
}

}  // namespace ascnet::wfdb
