#include "ascnet/segment.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "ascnet/error.hpp"
#include "ascnet/metrics.hpp"
#include "ascnet/util.hpp"

static_assert(std::endian::native == std::endian::little,
              "segment files are little-endian; big-endian hosts need swaps");

namespace ascnet::sig {

using json = nlohmann::json;

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::vector<Eigen::ArrayXd> segment(const wfdb::SignalRecord& signal,
                                    Eigen::Index L, Eigen::Index stride) {
  if (L < 1 || stride < 1)
    raise(errc::invalid_argument, "segment needs L >= 1 and stride >= 1");
  const Eigen::Index n = signal.samples_mv.size();
  if (n < L)
    raise(errc::signal_too_short,
          "record " + signal.record_id() + " has " + std::to_string(n) +
              " samples, segment length is " + std::to_string(L));
  const Eigen::Index count = (n - L) / stride + 1;
  std::vector<Eigen::ArrayXd> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i)
    out.push_back(signal.samples_mv.segment(i * stride, L));
  return out;
}

Normalized normalize(const Eigen::Ref<const Eigen::ArrayXd>& x) {
  constexpr double eps = 1e-8;
  Normalized out;
  out.mean = x.mean();
  out.scale = std::max(std::sqrt((x - out.mean).square().mean()), eps);
  out.values = (x - out.mean) / out.scale;
  return out;
}

Eigen::ArrayXd denormalize(const Eigen::Ref<const Eigen::ArrayXd>& y,
                           double mean, double scale) {
  return y * scale + mean;
}

namespace {

Segment make_segment(const wfdb::SignalRecord& rec, Eigen::Index offset,
                     Eigen::Index L, const NoiseSpec& spec,
                     std::uint64_t dataset_seed) {
  Segment s;
  s.record_id = rec.record_id();
  s.offset = offset;
  Normalized norm = normalize(rec.samples_mv.segment(offset, L));
  s.norm_mean = norm.mean;
  s.norm_scale = norm.scale;
  s.noise = spec;
  std::uint64_t h = dataset_seed;
  h = util::hash_combine(h, util::hash_str(s.record_id));
  h = util::hash_combine(h, static_cast<std::uint64_t>(offset));
  h = util::hash_combine(h, spec.digest());
  s.noise.seed = h;
  s.noisy = mix_noise(norm.values, s.noise);
  s.clean = std::move(norm.values);
  return s;
}

void fill_split(SegmentSet& set, Split split, Eigen::Index L,
                const std::vector<const wfdb::SignalRecord*>& records,
                const std::vector<NoiseSpec>& specs, Eigen::Index stride,
                std::uint64_t seed) {
  set.split = split;
  set.L = L;
  for (const auto* rec : records) {
    const Eigen::Index n = rec->samples_mv.size();
    const Eigen::Index count = (n - L) / stride + 1;
    for (Eigen::Index i = 0; i < count; ++i)
      for (const NoiseSpec& spec : specs)
        set.segments.push_back(make_segment(*rec, i * stride, L, spec, seed));
  }
}

}  // namespace

DatasetSplits build_dataset(const std::vector<wfdb::SignalRecord>& records,
                            const std::vector<NoiseSpec>& specs,
                            Eigen::Index L, Eigen::Index stride,
                            const SplitFractions& fractions,
                            std::uint64_t seed) {
  if (records.size() < 3)
    raise(errc::insufficient_records,
          "record-wise splitting needs >= 3 records, got " +
              std::to_string(records.size()));
  if (specs.empty()) raise(errc::invalid_argument, "no noise specs");
  if (!(fractions.train > 0 && fractions.val > 0 && fractions.test > 0))
    raise(errc::invalid_argument, "split fractions must be positive");
  if (std::abs(fractions.train + fractions.val + fractions.test - 1.0) > 1e-6)
    raise(errc::invalid_argument, "split fractions must sum to 1");
  for (const NoiseSpec& s : specs) s.validate(L);
  {
    std::set<std::string> ids;
    for (const auto& r : records)
      if (!ids.insert(r.record_id()).second)
        raise(errc::invalid_argument,
              "duplicate record id '" + r.record_id() + "'");
    for (const auto& r : records)
      if (r.samples_mv.size() < L)
        raise(errc::signal_too_short,
              "record " + r.record_id() + " is shorter than one segment");
  }

  const auto n = static_cast<Eigen::Index>(records.size());
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  util::Rng shuffle_rng(util::hash_combine(seed, util::hash_str("split")));
  shuffle_rng.shuffle(order);

  auto n_train = static_cast<Eigen::Index>(
      std::floor(static_cast<double>(n) * fractions.train));
  auto n_val = static_cast<Eigen::Index>(
      std::floor(static_cast<double>(n) * fractions.val));
  n_train = std::clamp<Eigen::Index>(n_train, 1, n - 2);
  n_val = std::clamp<Eigen::Index>(n_val, 1, n - 1 - n_train);

  std::vector<const wfdb::SignalRecord*> train_recs, val_recs, test_recs;
  for (Eigen::Index i = 0; i < n; ++i) {
    const wfdb::SignalRecord* r = &records[order[static_cast<std::size_t>(i)]];
    if (i < n_train)
      train_recs.push_back(r);
    else if (i < n_train + n_val)
      val_recs.push_back(r);
    else
      test_recs.push_back(r);
  }

  DatasetSplits out;
  fill_split(out.train, Split::train, L, train_recs, specs, stride, seed);
  fill_split(out.val, Split::val, L, val_recs, specs, stride, seed);
  fill_split(out.test, Split::test, L, test_recs, specs, stride, seed);
  return out;
}

// --- serialization --------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'A', 'S', 'C', 'S', 'E', 'G', '1', '\0'};

void put_u32(std::string& buf, std::uint32_t v) {
  buf.append(reinterpret_cast<const char*>(&v), 4);
}
void put_f32(std::string& buf, float v) {
  buf.append(reinterpret_cast<const char*>(&v), 4);
}

std::string manifest_path(const std::string& path) {
  auto dot = path.rfind('.');
  auto slash = path.rfind('/');
  std::string base = (dot == std::string::npos ||
                      (slash != std::string::npos && dot < slash))
                         ? path
                         : path.substr(0, dot);
  return base + ".manifest.json";
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& path)
      : buf_(buf), path_(path) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, buf_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  float f32() {
    need(4);
    float v;
    std::memcpy(&v, buf_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  void bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size())
      raise(errc::corrupt_file, path_ + " is truncated");
  }

 private:
  const std::string& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_segment_set(const SegmentSet& set, const std::string& path) {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put_u32(buf, static_cast<std::uint32_t>(set.split));
  put_u32(buf, static_cast<std::uint32_t>(set.L));
  put_u32(buf, static_cast<std::uint32_t>(set.segments.size()));
  for (const Segment& s : set.segments) {
    if (s.clean.size() != set.L || s.noisy.size() != set.L)
      raise(errc::length_mismatch, "segment length differs from set L");
    put_f32(buf, static_cast<float>(s.norm_mean));
    put_f32(buf, static_cast<float>(s.norm_scale));
    for (Eigen::Index i = 0; i < set.L; ++i)
      put_f32(buf, static_cast<float>(s.clean[i]));
    for (Eigen::Index i = 0; i < set.L; ++i)
      put_f32(buf, static_cast<float>(s.noisy[i]));
  }
  util::write_file_atomic(path, buf);

  json manifest;
  manifest["format"] = "ASCSEG1";
  manifest["split"] = to_string(set.split);
  manifest["L"] = static_cast<std::int64_t>(set.L);
  manifest["count"] = set.segments.size();
  json segs = json::array();
  for (const Segment& s : set.segments) {
    json kinds = json::array();
    for (const auto& c : s.noise.components) kinds.push_back(to_string(c.kind));
    segs.push_back({{"record_id", s.record_id},
                    {"offset", s.offset},
                    {"seed", s.noise.seed},
                    {"noise", {{"kinds", kinds},
                               {"snr_db", s.noise.target_snr_db}}}});
  }
  manifest["segments"] = std::move(segs);
  util::write_file_atomic(manifest_path(path), manifest.dump(2) + "\n");
}

SegmentSet load_segment_set(const std::string& path) {
  const std::string buf = util::read_file(path);
  Reader r(buf, path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    raise(errc::corrupt_file, path + ": bad magic");
  SegmentSet set;
  const std::uint32_t split = r.u32();
  if (split > 2) raise(errc::corrupt_file, path + ": bad split id");
  set.split = static_cast<Split>(split);
  set.L = static_cast<Eigen::Index>(r.u32());
  const std::uint32_t count = r.u32();

  json manifest;
  try {
    manifest = json::parse(util::read_file(manifest_path(path)));
  } catch (const json::parse_error& e) {
    raise(errc::corrupt_file, manifest_path(path) + ": " + e.what());
  }
  if (!manifest.contains("segments") ||
      manifest["segments"].size() != count)
    raise(errc::corrupt_file,
          manifest_path(path) + " disagrees with binary segment count");

  set.segments.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Segment& s = set.segments[i];
    s.norm_mean = r.f32();
    s.norm_scale = r.f32();
    s.clean.resize(set.L);
    for (Eigen::Index k = 0; k < set.L; ++k) s.clean[k] = r.f32();
    s.noisy.resize(set.L);
    for (Eigen::Index k = 0; k < set.L; ++k) s.noisy[k] = r.f32();

    const json& m = manifest["segments"][i];
    s.record_id = m.at("record_id").get<std::string>();
    s.offset = m.at("offset").get<std::int64_t>();
    s.noise.seed = m.at("seed").get<std::uint64_t>();
    s.noise.target_snr_db = m.at("noise").at("snr_db").get<double>();
    for (const auto& k : m.at("noise").at("kinds"))
      s.noise.components.push_back(
          {noise_kind_from(k.get<std::string>()), nullptr});
  }
  return set;
}

// --- stitching -------------------------------------------------------------

Eigen::ArrayXd triangular_weights(Eigen::Index L) {
  if (L < 2 || L % 2 != 0)
    raise(errc::invalid_argument, "triangular_weights needs even L >= 2");
  const double h = static_cast<double>(L) / 2.0;
  Eigen::ArrayXd w(L);
  for (Eigen::Index i = 0; i < L / 2; ++i)
    w[i] = (static_cast<double>(i) + 0.5) / h;
  for (Eigen::Index i = L / 2; i < L; ++i)
    w[i] = (static_cast<double>(L - i) - 0.5) / h;
  return w;
}

Eigen::ArrayXd stitch_segments(
    const std::vector<std::pair<std::int64_t, Eigen::ArrayXd>>& pieces,
    std::int64_t total_len) {
  if (total_len < 0) raise(errc::invalid_argument, "negative length");
  Eigen::ArrayXd num = Eigen::ArrayXd::Zero(total_len);
  Eigen::ArrayXd den = Eigen::ArrayXd::Zero(total_len);
  for (const auto& [offset, values] : pieces) {
    const Eigen::Index L = values.size();
    Eigen::ArrayXd w = triangular_weights(L);
    for (Eigen::Index i = 0; i < L; ++i) {
      const std::int64_t p = offset + i;
      if (p < 0 || p >= total_len)
        raise(errc::invalid_argument, "piece extends past the signal");
      num[p] += w[i] * values[i];
      den[p] += w[i];
    }
  }
  for (std::int64_t p = 0; p < total_len; ++p)
    if (den[p] == 0.0)
      raise(errc::invalid_argument,
            "sample " + std::to_string(p) + " not covered by any piece");
  return num / den;
}

}  // namespace ascnet::sig
