#include "ascnet/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <filesystem>
#include <future>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ascnet/error.hpp"
#include "ascnet/report.hpp"
#include "ascnet/segment.hpp"
#include "ascnet/trainer.hpp"
#include "ascnet/util.hpp"
#include "ascnet/version.hpp"
#include "ascnet/wfdb.hpp"

namespace ascnet::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code_for(errc code) {
  switch (code) {
    case errc::divergence:
      return 4;
    case errc::config_mismatch:
      return 5;
    case errc::schema_mismatch:
      return 6;
    case errc::channel_out_of_range:
    case errc::invalid_argument:
      return 2;
    case errc::malformed_header:
    case errc::unsupported_format:
    case errc::truncated_file:
    case errc::corrupt_file:
    case errc::version_mismatch:
    case errc::io_error:
    case errc::signal_too_short:
    case errc::invalid_config:
    case errc::empty_dataset:
    case errc::insufficient_records:
      return 3;
    default:
      return 1;
  }
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Run provenance: command, resolved settings, seeds and input hashes.
/// One manifest per output directory (or a sidecar for file outputs).
class Manifest {
 public:
  Manifest(std::string command, json config)
      : command_(std::move(command)), config_(std::move(config)) {}

  void add_input(const std::string& path) {
    const auto bytes = util::read_file_bytes(path);
    char hex[16];
    std::snprintf(hex, sizeof(hex), "%08x",
                  util::crc32(bytes.data(), bytes.size()));
    inputs_[path] = hex;
  }

  void add_seed(const std::string& name, std::uint64_t seed) {
    seeds_[name] = seed;
  }

  void write(const std::string& path) const {
    json m;
    m["command"] = command_;
    m["tool_version"] = kToolVersion;
    m["timestamp"] = timestamp_utc();
    m["config"] = config_;
    m["seeds"] = seeds_;
    m["inputs"] = inputs_;
    util::write_file_atomic(path, m.dump(2) + "\n");
  }

 private:
  std::string command_;
  json config_;
  std::map<std::string, std::uint64_t> seeds_;
  std::map<std::string, std::string> inputs_;
};

std::vector<std::string> list_headers(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".hea")
      out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
      raise(errc::invalid_argument, "bad number '" + tok + "' in list");
    out.push_back(v);
  }
  if (out.empty()) raise(errc::invalid_argument, "empty list");
  return out;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep)) out.push_back(tok);
  return out;
}

json load_json_file(const std::string& path) {
  const std::string text = util::read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // e.byte gives the offset; report the line for the diagnostic.
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min(e.byte, text.size()); ++i)
      if (text[i] == '\n') ++line;
    raise(errc::invalid_config,
          path + ":" + std::to_string(line) + ": " + e.what());
  }
}

std::string snr_tag(double snr) { return util::fmt_g(snr, 6) + "dB"; }

// --- prepare ---------------------------------------------------------------

struct PrepareArgs {
  std::string records_dir;
  std::string noise_dir;
  std::string noise_kinds = "awgn";
  std::string snr_list = "5";
  Eigen::Index L = 1024;
  Eigen::Index stride = 512;
  std::string split = "0.8,0.1,0.1";
  std::uint64_t seed = 1;
  std::string out_dir;
};

int cmd_prepare(const PrepareArgs& a) {
  const std::vector<std::string> headers = list_headers(a.records_dir);
  if (headers.size() < 3)
    raise(errc::insufficient_records,
          "found " + std::to_string(headers.size()) + " .hea files in " +
              a.records_dir + ", need at least 3");

  std::vector<wfdb::SignalRecord> records;
  for (const std::string& h : headers)
    records.push_back(wfdb::load_record(h, 0));

  const std::vector<double> fr = parse_double_list(a.split);
  if (fr.size() != 3)
    raise(errc::invalid_argument, "--split needs three fractions");
  const sig::SplitFractions fractions{fr[0], fr[1], fr[2]};
  const std::vector<double> snrs = parse_double_list(a.snr_list);
  const std::vector<std::string> kind_tokens = split_on(a.noise_kinds, ',');

  // Load each referenced noise record once.
  std::map<sig::NoiseKind, std::shared_ptr<const wfdb::SignalRecord>> sources;
  std::vector<std::string> noise_inputs;
  for (const std::string& token : kind_tokens)
    for (const std::string& part : split_on(token, '+')) {
      const sig::NoiseKind kind = sig::noise_kind_from(part);
      if (kind == sig::NoiseKind::awgn || sources.count(kind)) continue;
      const fs::path hea = fs::path(a.noise_dir) / (part + ".hea");
      if (!fs::exists(hea))
        raise(errc::io_error, "noise record '" + part +
                                  "' not found: " + hea.string());
      sources[kind] = std::make_shared<wfdb::SignalRecord>(
          wfdb::load_record(hea.string(), 0));
      noise_inputs.push_back(hea.string());
    }

  struct Family {
    std::string token;
    double snr;
  };
  std::vector<Family> families;
  for (const std::string& token : kind_tokens)
    for (double snr : snrs) families.push_back({token, snr});

  auto build_family = [&](const Family& f) {
    sig::NoiseSpec spec;
    spec.target_snr_db = f.snr;
    for (const std::string& part : split_on(f.token, '+')) {
      const sig::NoiseKind kind = sig::noise_kind_from(part);
      spec.components.push_back(
          {kind, kind == sig::NoiseKind::awgn ? nullptr : sources.at(kind)});
    }
    const sig::DatasetSplits splits =
        sig::build_dataset(records, {spec}, a.L, a.stride, fractions, a.seed);

    const fs::path dir =
        fs::path(a.out_dir) / (f.token + "_" + snr_tag(f.snr));
    fs::create_directories(dir);
    sig::save_segment_set(splits.train, (dir / "train.ascseg").string());
    sig::save_segment_set(splits.val, (dir / "val.ascseg").string());
    sig::save_segment_set(splits.test, (dir / "test.ascseg").string());

    Manifest manifest("prepare", json{{"records_dir", a.records_dir},
                                      {"noise_dir", a.noise_dir},
                                      {"noise", f.token},
                                      {"snr_db", f.snr},
                                      {"L", a.L},
                                      {"stride", a.stride},
                                      {"split", a.split}});
    manifest.add_seed("dataset", a.seed);
    for (const std::string& h : headers) manifest.add_input(h);
    for (const std::string& n : noise_inputs) manifest.add_input(n);
    manifest.write((dir / "manifest.json").string());
  };

  // Families are independent; fan out up to the worker cap.
  const unsigned workers = util::worker_count();
  for (std::size_t base = 0; base < families.size(); base += workers) {
    std::vector<std::future<void>> running;
    const std::size_t stop = std::min(families.size(), base + workers);
    for (std::size_t i = base; i < stop; ++i)
      running.push_back(
          std::async(std::launch::async, build_family, families[i]));
    for (auto& fut : running) fut.get();
  }
  return 0;
}

// --- train -------------------------------------------------------------

struct TrainArgs {
  std::string data_dir;
  std::string model_config_path;
  std::string train_config_path;
  std::string resume_path;
  std::string out_dir;
  // flag overrides; negative means "not set"
  double lr = -1;
  int epochs = -1;
  int batch_size = -1;
  std::int64_t seed = -1;
};

std::string history_csv(const std::vector<train::EpochStats>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss\n";
  for (const auto& e : history)
    os << e.epoch << "," << util::fmt_g(e.train_loss, 17) << ","
       << util::fmt_g(e.val_loss, 17) << "\n";
  return os.str();
}

int cmd_train(const TrainArgs& a) {
  model::ModelConfig mcfg;
  if (!a.model_config_path.empty())
    mcfg = model::ModelConfig::from_json(load_json_file(a.model_config_path));
  train::TrainConfig tcfg;
  if (!a.train_config_path.empty())
    tcfg = train::TrainConfig::from_json(load_json_file(a.train_config_path));
  if (a.lr > 0) tcfg.learning_rate = a.lr;
  if (a.epochs >= 0) tcfg.max_epochs = a.epochs;
  if (a.batch_size > 0) tcfg.batch_size = a.batch_size;
  if (a.seed >= 0) tcfg.seed = static_cast<std::uint64_t>(a.seed);
  tcfg.validate();

  const std::string train_path =
      (fs::path(a.data_dir) / "train.ascseg").string();
  const std::string val_path = (fs::path(a.data_dir) / "val.ascseg").string();
  const sig::SegmentSet train_set = sig::load_segment_set(train_path);
  const sig::SegmentSet val_set = sig::load_segment_set(val_path);

  train::Checkpoint ckpt;
  if (a.resume_path.empty()) {
    ckpt = train::train(train_set, val_set, mcfg, tcfg);
  } else {
    train::Checkpoint start = train::load_checkpoint(a.resume_path);
    tcfg.seed = start.train_seed;
    ckpt = train::resume(std::move(start), train_set, val_set, tcfg);
  }

  fs::create_directories(a.out_dir);
  train::save_checkpoint(ckpt,
                         (fs::path(a.out_dir) / "checkpoint.ascckpt").string());
  util::write_file_atomic((fs::path(a.out_dir) / "history.csv").string(),
                          history_csv(ckpt.history));

  Manifest manifest("train", json{{"data_dir", a.data_dir},
                                  {"model_config", mcfg.to_json()},
                                  {"train_config", tcfg.to_json()},
                                  {"resume", a.resume_path}});
  manifest.add_seed("train", tcfg.seed);
  manifest.add_input(train_path);
  manifest.add_input(val_path);
  if (!a.model_config_path.empty()) manifest.add_input(a.model_config_path);
  if (!a.train_config_path.empty()) manifest.add_input(a.train_config_path);
  if (!a.resume_path.empty()) manifest.add_input(a.resume_path);
  manifest.write((fs::path(a.out_dir) / "manifest.json").string());
  return 0;
}

// --- eval --------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint_path;
  std::string data_dir;
  std::string out_dir;
  std::string stub;  // "", "clean", "noisy"
};

/// Per noise kind, one table with records as rows and the input SNR
/// levels as columns (output SNR in dB), finished by a mean row.
std::map<std::string, std::string> pivot_tables(
    const sig::MetricsReport& report) {
  std::map<std::string, std::set<double>> levels;
  std::map<std::string, std::set<std::string>> recs;
  std::map<std::tuple<std::string, double, std::string>, double> cell;
  for (const auto& r : report.rows) {
    levels[r.noise_kind].insert(r.input_snr_db);
    recs[r.noise_kind].insert(r.record_id);
    cell[{r.noise_kind, r.input_snr_db, r.record_id}] = r.snr_out_db;
  }
  std::map<std::string, std::string> tables;
  for (const auto& [kind, lvls] : levels) {
    std::ostringstream os;
    os << "record_id";
    for (double lvl : lvls) os << ",snr_out@" << snr_tag(lvl);
    os << "\n";
    for (const auto& rec : recs[kind]) {
      os << rec;
      for (double lvl : lvls) {
        os << ",";
        auto it = cell.find({kind, lvl, rec});
        if (it != cell.end()) os << util::fmt_g(it->second);
      }
      os << "\n";
    }
    os << "mean";
    for (double lvl : lvls) {
      double sum = 0;
      std::size_t n = 0;
      for (const auto& rec : recs[kind]) {
        auto it = cell.find({kind, lvl, rec});
        if (it != cell.end()) {
          sum += it->second;
          ++n;
        }
      }
      os << "," << (n ? util::fmt_g(sum / static_cast<double>(n)) : "");
    }
    os << "\n";
    tables[kind] = os.str();
  }
  return tables;
}

int cmd_eval(const EvalArgs& a) {
  train::Checkpoint ckpt = train::load_checkpoint(a.checkpoint_path);
  const std::string test_path =
      (fs::path(a.data_dir) / "test.ascseg").string();
  const sig::SegmentSet test_set = sig::load_segment_set(test_path);

  train::EvalStub stub = train::EvalStub::none;
  if (a.stub == "clean") stub = train::EvalStub::clean;
  else if (a.stub == "noisy") stub = train::EvalStub::noisy;
  else if (!a.stub.empty())
    raise(errc::invalid_argument, "--stub must be 'clean' or 'noisy'");

  const sig::MetricsReport report = train::evaluate(ckpt, test_set, stub);

  fs::create_directories(a.out_dir);
  util::write_file_atomic((fs::path(a.out_dir) / "metrics.csv").string(),
                          report.rows_csv());
  util::write_file_atomic((fs::path(a.out_dir) / "aggregates.csv").string(),
                          report.aggregates_csv());
  for (const auto& [kind, csv] : pivot_tables(report))
    util::write_file_atomic(
        (fs::path(a.out_dir) / ("table_" + kind + ".csv")).string(), csv);

  Manifest manifest("eval", json{{"checkpoint", a.checkpoint_path},
                                 {"data_dir", a.data_dir},
                                 {"stub", a.stub}});
  manifest.add_input(a.checkpoint_path);
  manifest.add_input(test_path);
  manifest.write((fs::path(a.out_dir) / "manifest.json").string());
  return 0;
}

// --- denoise -----------------------------------------------------------

struct DenoiseArgs {
  std::string checkpoint_path;
  std::string record_path;
  int channel = 0;
  std::string out_file;
};

Eigen::ArrayXd denoise_samples(train::Checkpoint& ckpt,
                               const Eigen::ArrayXd& x) {
  const Eigen::Index L = ckpt.config.segment_length;
  const Eigen::Index n = x.size();
  if (n < L)
    raise(errc::signal_too_short,
          "record has " + std::to_string(n) + " samples, segments need " +
              std::to_string(L));
  const Eigen::Index hop = L / 2;
  std::vector<Eigen::Index> offsets;
  for (Eigen::Index o = 0; o + L <= n; o += hop) offsets.push_back(o);
  if (offsets.back() + L < n) offsets.push_back(n - L);

  ag::NoGrad guard;
  std::vector<std::pair<std::int64_t, Eigen::ArrayXd>> pieces;
  const std::size_t batch = 32;
  std::vector<sig::Normalized> norms(offsets.size());
  for (std::size_t first = 0; first < offsets.size(); first += batch) {
    const std::size_t count = std::min(batch, offsets.size() - first);
    ag::VecX<double> in(static_cast<Eigen::Index>(count) * L);
    for (std::size_t k = 0; k < count; ++k) {
      norms[first + k] = sig::normalize(x.segment(offsets[first + k], L));
      in.segment(static_cast<Eigen::Index>(k) * L, L) =
          norms[first + k].values;
    }
    auto out = model::forward(
        ag::Tensor<double>::from_data(
            ag::Shape::bcn(static_cast<Eigen::Index>(count), 1, L),
            std::move(in)),
        ckpt.best_params, ckpt.config, ag::Mode::eval);
    for (std::size_t k = 0; k < count; ++k)
      pieces.emplace_back(
          offsets[first + k],
          sig::denormalize(
              out.value().segment(static_cast<Eigen::Index>(k) * L, L),
              norms[first + k].mean, norms[first + k].scale));
  }
  return sig::stitch_segments(pieces, n);
}

int cmd_denoise(const DenoiseArgs& a) {
  train::Checkpoint ckpt = train::load_checkpoint(a.checkpoint_path);
  const wfdb::SignalRecord rec = wfdb::load_record(a.record_path, a.channel);
  const Eigen::ArrayXd denoised = denoise_samples(ckpt, rec.samples_mv);

  std::ostringstream os;
  os << "sample_index,input_mv,denoised_mv\n";
  for (Eigen::Index i = 0; i < rec.samples_mv.size(); ++i)
    os << i << "," << util::fmt_g(rec.samples_mv[i]) << ","
       << util::fmt_g(denoised[i]) << "\n";
  util::write_file_atomic(a.out_file, os.str());

  Manifest manifest("denoise", json{{"checkpoint", a.checkpoint_path},
                                    {"record", a.record_path},
                                    {"channel", a.channel}});
  manifest.add_input(a.checkpoint_path);
  manifest.add_input(a.record_path);
  manifest.add_input(rec.source_path);
  fs::path sidecar(a.out_file);
  sidecar.replace_extension(".manifest.json");
  manifest.write(sidecar.string());
  return 0;
}

// --- report ------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> eval_dirs;
  std::vector<std::string> labels;
  std::string out_file;
};

int cmd_report(const ReportArgs& a) {
  if (a.eval_dirs.empty())
    raise(errc::invalid_argument, "need at least one eval directory");
  if (!a.labels.empty() && a.labels.size() != a.eval_dirs.size())
    raise(errc::invalid_argument,
          "--label count must match the eval directory count");

  struct Keyed {
    std::string method;
    sig::MetricRow row;
  };
  std::vector<Keyed> merged;
  std::set<std::tuple<std::string, std::string, double, std::string>> seen;
  std::vector<std::string> inputs;
  for (std::size_t i = 0; i < a.eval_dirs.size(); ++i) {
    const std::string label = a.labels.empty()
                                  ? fs::path(a.eval_dirs[i]).filename().string()
                                  : a.labels[i];
    const std::string path =
        (fs::path(a.eval_dirs[i]) / "metrics.csv").string();
    inputs.push_back(path);
    for (sig::MetricRow& row :
         sig::parse_metrics_csv(util::read_file(path), path)) {
      if (!seen.insert({label, row.noise_kind, row.input_snr_db,
                        row.record_id})
               .second)
        continue;  // exact key already merged
      merged.push_back({label, std::move(row)});
    }
  }
  std::sort(merged.begin(), merged.end(), [](const Keyed& a_, const Keyed& b_) {
    return std::tie(a_.method, a_.row.noise_kind, a_.row.input_snr_db,
                    a_.row.record_id) <
           std::tie(b_.method, b_.row.noise_kind, b_.row.input_snr_db,
                    b_.row.record_id);
  });

  std::ostringstream os;
  os << "method," << sig::kMetricsCsvHeader << "\n";
  for (const Keyed& k : merged) {
    const sig::MetricRow& r = k.row;
    os << k.method << "," << r.record_id << "," << r.noise_kind << ","
       << util::fmt_g(r.input_snr_db) << "," << util::fmt_g(r.snr_out_db)
       << "," << util::fmt_g(r.snr_imp_db) << "," << util::fmt_g(r.mse) << ","
       << util::fmt_g(r.rmse) << "," << util::fmt_g(r.prd_percent) << "\n";
  }
  util::write_file_atomic(a.out_file, os.str());

  Manifest manifest("report", json{{"eval_dirs", a.eval_dirs}});
  for (const std::string& p : inputs) manifest.add_input(p);
  fs::path sidecar(a.out_file);
  sidecar.replace_extension(".manifest.json");
  manifest.write(sidecar.string());
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"ECG denoising toolkit"};
  app.require_subcommand(1);

  PrepareArgs pa;
  auto* prepare = app.add_subcommand(
      "prepare", "Build noisy/clean segment sets from WFDB records");
  prepare->add_option("--records", pa.records_dir, "Directory of .hea/.dat records")
      ->required()
      ->check(CLI::ExistingDirectory);
  prepare->add_option("--noise-dir", pa.noise_dir,
                      "Directory holding bw/em/ma noise records");
  prepare->add_option("--noise", pa.noise_kinds,
                      "Comma list of kinds: awgn,bw,em,ma or mixes like em+bw");
  prepare->add_option("--snr", pa.snr_list, "Comma list of target SNRs in dB");
  prepare->add_option("--L", pa.L, "Segment length in samples");
  prepare->add_option("--stride", pa.stride, "Segment stride in samples");
  prepare->add_option("--split", pa.split, "train,val,test fractions");
  prepare->add_option("--seed", pa.seed, "Dataset seed");
  prepare->add_option("--out", pa.out_dir, "Output directory")->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train the denoiser on a prepared set");
  tr->add_option("--data", ta.data_dir, "Directory with train/val.ascseg")
      ->required()
      ->check(CLI::ExistingDirectory);
  tr->add_option("--model-config", ta.model_config_path, "Model config JSON")
      ->check(CLI::ExistingFile);
  tr->add_option("--train-config", ta.train_config_path, "Train config JSON")
      ->check(CLI::ExistingFile);
  tr->add_option("--resume", ta.resume_path, "Checkpoint to continue from")
      ->check(CLI::ExistingFile);
  tr->add_option("--out", ta.out_dir, "Output directory")->required();
  tr->add_option("--lr", ta.lr, "Override learning rate");
  tr->add_option("--epochs", ta.epochs, "Override max epochs");
  tr->add_option("--batch-size", ta.batch_size, "Override batch size");
  tr->add_option("--seed", ta.seed, "Override training seed");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a test set");
  ev->add_option("--checkpoint", ea.checkpoint_path, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--data", ea.data_dir, "Directory with test.ascseg")
      ->required()
      ->check(CLI::ExistingDirectory);
  ev->add_option("--out", ea.out_dir, "Output directory")->required();
  ev->add_option("--stub", ea.stub,
                 "Bypass the network: 'clean' (oracle) or 'noisy' (identity)");

  DenoiseArgs da;
  auto* dn = app.add_subcommand("denoise", "Denoise a whole WFDB record");
  dn->add_option("--checkpoint", da.checkpoint_path, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  dn->add_option("--record", da.record_path, "Record .hea path")
      ->required()
      ->check(CLI::ExistingFile);
  dn->add_option("--channel", da.channel, "Channel index");
  dn->add_option("--out", da.out_file, "Output CSV path")->required();

  ReportArgs ra;
  auto* rp = app.add_subcommand("report", "Merge eval outputs into one CSV");
  rp->add_option("--eval", ra.eval_dirs, "Eval output directories")
      ->required()
      ->check(CLI::ExistingDirectory);
  rp->add_option("--label", ra.labels, "Method labels (default: dir names)");
  rp->add_option("--out", ra.out_file, "Output CSV path")->required();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (*prepare) return cmd_prepare(pa);
    if (*tr) return cmd_train(ta);
    if (*ev) return cmd_eval(ea);
    if (*dn) return cmd_denoise(da);
    if (*rp) return cmd_report(ra);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace ascnet::cli
