#include "ascnet/noise.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ascnet/error.hpp"
#include "ascnet/util.hpp"

namespace ascnet::sig {

const char* to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::awgn: return "awgn";
    case NoiseKind::bw: return "bw";
    case NoiseKind::em: return "em";
    case NoiseKind::ma: return "ma";
  }
  return "?";
}

NoiseKind noise_kind_from(const std::string& label) {
  if (label == "awgn") return NoiseKind::awgn;
  if (label == "bw") return NoiseKind::bw;
  if (label == "em") return NoiseKind::em;
  if (label == "ma") return NoiseKind::ma;
  raise(errc::invalid_argument, "unknown noise kind '" + label + "'");
}

std::string NoiseSpec::kind_label() const {
  std::string out;
  for (std::size_t i = 0; i < components.size(); ++i) {
    if (i) out += "+";
    out += to_string(components[i].kind);
  }
  return out;
}

std::uint64_t NoiseSpec::digest() const {
  std::uint64_t h = util::hash_str("noise-spec");
  for (const auto& c : components)
    h = util::hash_combine(h, static_cast<std::uint64_t>(c.kind));
  return util::hash_combine(h, util::hash_f64(target_snr_db));
}

void NoiseSpec::validate(Eigen::Index segment_length) const {
  if (components.empty())
    raise(errc::invalid_argument, "noise spec with no components");
  std::set<NoiseKind> kinds;
  for (const auto& c : components) {
    if (!kinds.insert(c.kind).second)
      raise(errc::invalid_argument,
            "mixture repeats noise kind '" + std::string(to_string(c.kind)) +
                "'");
    if (c.kind == NoiseKind::awgn) continue;
    if (!c.source)
      raise(errc::invalid_argument,
            std::string("noise kind '") + to_string(c.kind) +
                "' needs a source record");
    if (c.source->samples_mv.size() < segment_length)
      raise(errc::invalid_argument,
            std::string("noise record for '") + to_string(c.kind) +
                "' is shorter than one segment");
  }
}

NoiseSpec make_awgn_spec(double snr_db) {
  NoiseSpec s;
  s.components.push_back({NoiseKind::awgn, nullptr});
  s.target_snr_db = snr_db;
  return s;
}

NoiseSpec make_record_spec(NoiseKind kind,
                           std::shared_ptr<const wfdb::SignalRecord> source,
                           double snr_db) {
  NoiseSpec s;
  s.components.push_back({kind, std::move(source)});
  s.target_snr_db = snr_db;
  return s;
}

Eigen::ArrayXd gen_awgn(Eigen::Index L, std::uint64_t seed) {
  if (L < 1) raise(errc::invalid_argument, "gen_awgn needs L >= 1");
  util::Rng rng(seed);
  Eigen::ArrayXd out(L);
  for (Eigen::Index i = 0; i < L; ++i) out[i] = rng.normal();
  return out;
}

Eigen::ArrayXd mix_noise(const Eigen::Ref<const Eigen::ArrayXd>& clean,
                         const NoiseSpec& spec) {
  const Eigen::Index L = clean.size();
  spec.validate(L);
  const double clean_power = clean.square().mean();
  if (clean_power == 0.0)
    raise(errc::zero_power_clean, "cannot calibrate noise against silence");

  Eigen::ArrayXd noise = Eigen::ArrayXd::Zero(L);
  for (std::size_t i = 0; i < spec.components.size(); ++i) {
    const auto& c = spec.components[i];
    const std::uint64_t comp_seed = util::hash_combine(spec.seed, i);
    if (c.kind == NoiseKind::awgn) {
      noise += gen_awgn(L, comp_seed);
    } else {
      const Eigen::ArrayXd& src = c.source->samples_mv;
      util::Rng rng(comp_seed);
      const auto offset = static_cast<Eigen::Index>(
          rng.below(static_cast<std::uint64_t>(src.size() - L + 1)));
      noise += src.segment(offset, L);
    }
  }

  const double noise_power = noise.square().mean();
  if (noise_power == 0.0)
    raise(errc::zero_power_noise, "noise crop has zero power");

  const double scale = std::sqrt(
      clean_power / (noise_power * std::pow(10.0, spec.target_snr_db / 10.0)));
  return clean + noise * scale;
}

}  // namespace ascnet::sig
