#include <cstring>

#include "ascnet/trainer.hpp"
#include "ascnet/util.hpp"

namespace ascnet::train {

using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'A', 'S', 'C', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

struct Entry {
  std::string name;
  const Eigen::ArrayXd* data;
};

/// Tensor directory in the order it is written: current parameters, BN
/// buffers, Adam moments, then the best-validation parameter snapshot.
std::vector<Entry> directory(Checkpoint& ckpt) {
  std::vector<Entry> out;
  ckpt.params.visit([&](const std::string& n, ag::Tensor<double>& t) {
    out.push_back({"param/" + n, &t.value()});
  });
  ckpt.params.visit_buffers([&](const std::string& n, Eigen::ArrayXd& b) {
    out.push_back({"buffer/" + n, &b});
  });
  std::size_t i = 0;
  ckpt.params.visit([&](const std::string& n, ag::Tensor<double>&) {
    out.push_back({"adam_m/" + n, &ckpt.adam.m[i]});
    out.push_back({"adam_v/" + n, &ckpt.adam.v[i]});
    ++i;
  });
  ckpt.best_params.visit([&](const std::string& n, ag::Tensor<double>& t) {
    out.push_back({"best/" + n, &t.value()});
  });
  ckpt.best_params.visit_buffers([&](const std::string& n,
                                     Eigen::ArrayXd& b) {
    out.push_back({"best_buffer/" + n, &b});
  });
  return out;
}

json scalar_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double scalar_from(const json& j, double fallback_infinity) {
  if (j.is_null()) return fallback_infinity;
  return j.get<double>();
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  // The directory api wants mutable access for visit(); serialization
  // itself never changes the checkpoint.
  auto& mut = const_cast<Checkpoint&>(ckpt);
  const std::vector<Entry> entries = directory(mut);

  json header;
  header["model_config"] = ckpt.config.to_json();
  header["epoch"] = ckpt.epoch;
  header["adam_t"] = ckpt.adam.t;
  header["best_val_loss"] = scalar_or_null(ckpt.best_val_loss);
  header["best_epoch"] = ckpt.best_epoch;
  header["epochs_since_improvement"] = ckpt.epochs_since_improvement;
  header["train_seed"] = ckpt.train_seed;
  header["shuffle_rng_state"] = ckpt.shuffle_rng_state;
  json hist = json::array();
  for (const EpochStats& e : ckpt.history)
    hist.push_back({{"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"val_loss", e.val_loss}});
  header["history"] = std::move(hist);
  json dir = json::array();
  for (const Entry& e : entries)
    dir.push_back({{"name", e.name}, {"size", e.data->size()}});
  header["tensors"] = std::move(dir);

  const std::string header_str = header.dump();
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  std::uint32_t version = kVersion;
  buf.append(reinterpret_cast<const char*>(&version), 4);
  std::uint64_t hlen = header_str.size();
  buf.append(reinterpret_cast<const char*>(&hlen), 8);
  buf += header_str;

  const std::size_t payload_start = buf.size();
  for (const Entry& e : entries)
    buf.append(reinterpret_cast<const char*>(e.data->data()),
               static_cast<std::size_t>(e.data->size()) * sizeof(double));
  const std::uint32_t crc = util::crc32(buf.data() + payload_start,
                                        buf.size() - payload_start);
  buf.append(reinterpret_cast<const char*>(&crc), 4);

  util::write_file_atomic(path, buf);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string buf = util::read_file(path);
  auto need = [&](std::size_t pos, std::size_t n) {
    if (pos + n > buf.size())
      raise(errc::corrupt_file, path + " is truncated");
  };
  need(0, sizeof(kMagic) + 4 + 8);
  if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    raise(errc::corrupt_file, path + ": bad magic");
  std::uint32_t version;
  std::memcpy(&version, buf.data() + 8, 4);
  if (version != kVersion)
    raise(errc::version_mismatch,
          path + ": checkpoint version " + std::to_string(version) +
              ", expected " + std::to_string(kVersion));
  std::uint64_t hlen;
  std::memcpy(&hlen, buf.data() + 12, 8);
  need(20, hlen);

  json header;
  try {
    header = json::parse(buf.substr(20, hlen));
  } catch (const json::parse_error& e) {
    raise(errc::corrupt_file, path + ": bad header: " + e.what());
  }

  Checkpoint ckpt;
  ckpt.version = version;
  ckpt.config = model::ModelConfig::from_json(header.at("model_config"));
  ckpt.epoch = header.at("epoch").get<int>();
  ckpt.adam.t = header.at("adam_t").get<std::int64_t>();
  ckpt.best_val_loss =
      scalar_from(header.at("best_val_loss"),
                  std::numeric_limits<double>::infinity());
  ckpt.best_epoch = header.at("best_epoch").get<int>();
  ckpt.epochs_since_improvement =
      header.at("epochs_since_improvement").get<int>();
  ckpt.train_seed = header.at("train_seed").get<std::uint64_t>();
  ckpt.shuffle_rng_state = header.at("shuffle_rng_state").get<std::string>();
  for (const json& e : header.at("history")) {
    EpochStats s;
    s.epoch = e.at("epoch").get<int>();
    s.train_loss = e.at("train_loss").get<double>();
    s.val_loss = e.at("val_loss").get<double>();
    ckpt.history.push_back(s);
  }

  ckpt.params = model::init_params<double>(ckpt.config, 0);
  ckpt.best_params = ckpt.params.clone();
  ckpt.params.visit([&](const std::string&, ag::Tensor<double>& t) {
    ckpt.adam.m.push_back(Eigen::ArrayXd::Zero(t.size()));
    ckpt.adam.v.push_back(Eigen::ArrayXd::Zero(t.size()));
  });

  // Bind destinations in the same order the directory is written.
  std::vector<Entry> entries = directory(ckpt);
  const json& dir = header.at("tensors");
  if (dir.size() != entries.size())
    raise(errc::corrupt_file,
          path + ": tensor directory lists " + std::to_string(dir.size()) +
              " tensors, the model needs " + std::to_string(entries.size()));

  std::size_t payload_len = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const json& d = dir[i];
    if (d.at("name").get<std::string>() != entries[i].name ||
        d.at("size").get<Eigen::Index>() != entries[i].data->size())
      raise(errc::corrupt_file,
            path + ": tensor directory entry '" +
                d.at("name").get<std::string>() + "' does not match '" +
                entries[i].name + "'");
    payload_len +=
        static_cast<std::size_t>(entries[i].data->size()) * sizeof(double);
  }

  const std::size_t payload_start = 20 + hlen;
  need(payload_start, payload_len + 4);
  std::uint32_t want_crc;
  std::memcpy(&want_crc, buf.data() + payload_start + payload_len, 4);
  const std::uint32_t got_crc =
      util::crc32(buf.data() + payload_start, payload_len);
  if (want_crc != got_crc)
    raise(errc::corrupt_file, path + ": payload checksum mismatch");

  std::size_t pos = payload_start;
  for (Entry& e : entries) {
    std::memcpy(const_cast<Eigen::ArrayXd*>(e.data)->data(), buf.data() + pos,
                static_cast<std::size_t>(e.data->size()) * sizeof(double));
    pos += static_cast<std::size_t>(e.data->size()) * sizeof(double);
  }

  model::validate_params(ckpt.params, ckpt.config);
  model::validate_params(ckpt.best_params, ckpt.config);
  return ckpt;
}

}  // namespace ascnet::train
