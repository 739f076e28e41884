#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include <nlohmann/json.hpp>

#include "ascnet/cli.hpp"
#include "ascnet/report.hpp"
#include "ascnet/segment.hpp"
#include "ascnet/util.hpp"
#include "ascnet/version.hpp"
#include "synthetic.hpp"
#include "wfdb_fixture.hpp"

using namespace ascnet;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// One shared pipeline fixture: records, noise, prepared data, a trained
// checkpoint. Built once because training, although small, dominates.
struct Pipeline {
  fs::path root;
  fs::path records_dir, noise_dir, data_root, run_dir, eval_dir;
  std::string family;  // prepared (kind, snr) directory name

  Pipeline() {
    root = fs::temp_directory_path() / "ascnet_cli_fixture";
    fs::remove_all(root);
    records_dir = root / "records";
    noise_dir = root / "noise";
    data_root = root / "data";
    run_dir = root / "run";
    eval_dir = root / "eval";

    for (int i = 0; i < 5; ++i) {
      auto rec = testing::synth_ecg_record("rec" + std::to_string(i), 400,
                                           300 + i);
      testing::write_record_mv(records_dir, rec.record_id(), rec.samples_mv);
    }
    auto em = testing::synth_noise_record("em", 4096, 17, 0.9);
    testing::write_record_mv(noise_dir, "em", em.samples_mv);

    json model_cfg = {{"n_blocks", 2},
                      {"channels", {4, 4}},
                      {"kernels", {16, 16}},
                      {"segment_length", 64}};
    util::write_file_atomic((root / "model.json").string(),
                            model_cfg.dump(2));
    json train_cfg = {{"max_epochs", 3},
                      {"batch_size", 8},
                      {"seed", 5},
                      {"early_stop_patience", 50}};
    util::write_file_atomic((root / "train.json").string(),
                            train_cfg.dump(2));

    REQUIRE(cli::run({"prepare", "--records", records_dir.string(),
                      "--noise-dir", noise_dir.string(), "--noise", "awgn,em",
                      "--snr", "5", "--L", "64", "--stride", "32", "--seed",
                      "3", "--out", data_root.string()}) == 0);
    family = "awgn_5dB";
    REQUIRE(cli::run({"train", "--data", (data_root / family).string(),
                      "--model-config", (root / "model.json").string(),
                      "--train-config", (root / "train.json").string(),
                      "--out", run_dir.string()}) == 0);
    REQUIRE(cli::run({"eval", "--checkpoint",
                      (run_dir / "checkpoint.ascckpt").string(), "--data",
                      (data_root / family).string(), "--out",
                      eval_dir.string()}) == 0);
  }
};

Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

json manifest_without_timestamp(const fs::path& path) {
  json m = json::parse(util::read_file(path.string()));
  m.erase("timestamp");
  return m;
}

}  // namespace

TEST_CASE("prepare writes one family per (kind, snr) with manifests") {
  auto& p = pipeline();
  for (const std::string fam : {"awgn_5dB", "em_5dB"}) {
    CHECK(fs::exists(p.data_root / fam / "train.ascseg"));
    CHECK(fs::exists(p.data_root / fam / "val.ascseg"));
    CHECK(fs::exists(p.data_root / fam / "test.ascseg"));
    CHECK(fs::exists(p.data_root / fam / "manifest.json"));
    auto set = sig::load_segment_set((p.data_root / fam / "train.ascseg").string());
    CHECK(set.L == 64);
    CHECK(!set.segments.empty());
  }
  // record-wise disjointness across splits survives the file round trip
  auto train =
      sig::load_segment_set((p.data_root / "awgn_5dB" / "train.ascseg").string());
  auto test =
      sig::load_segment_set((p.data_root / "awgn_5dB" / "test.ascseg").string());
  std::set<std::string> train_ids, test_ids;
  for (const auto& s : train.segments) train_ids.insert(s.record_id);
  for (const auto& s : test.segments) test_ids.insert(s.record_id);
  for (const auto& id : train_ids) CHECK(test_ids.count(id) == 0);
}

TEST_CASE("prepare is idempotent modulo the manifest timestamp") {
  auto& p = pipeline();
  auto out2 = p.root / "data_again";
  REQUIRE(cli::run({"prepare", "--records", p.records_dir.string(),
                    "--noise-dir", p.noise_dir.string(), "--noise", "awgn,em",
                    "--snr", "5", "--L", "64", "--stride", "32", "--seed", "3",
                    "--out", out2.string()}) == 0);
  for (const std::string fam : {"awgn_5dB", "em_5dB"}) {
    CHECK(util::read_file((p.data_root / fam / "train.ascseg").string()) ==
          util::read_file((out2 / fam / "train.ascseg").string()));
    CHECK(manifest_without_timestamp(p.data_root / fam / "manifest.json") ==
          manifest_without_timestamp(out2 / fam / "manifest.json"));
  }
}

TEST_CASE("prepare exit codes: missing noise record and bad args") {
  auto& p = pipeline();
  CHECK(cli::run({"prepare", "--records", p.records_dir.string(),
                  "--noise-dir", p.noise_dir.string(), "--noise", "ma",
                  "--snr", "5", "--out", (p.root / "x").string()}) == 3);
  CHECK(cli::run({"prepare", "--records", "/nonexistent_dir_xyz", "--out",
                  (p.root / "x").string()}) == 2);
  CHECK(cli::run({"prepare", "--records", p.records_dir.string(), "--noise",
                  "awgn", "--snr", "not_a_number", "--out",
                  (p.root / "x").string()}) == 2);
  CHECK(cli::run({"bogus_command"}) == 2);
}

TEST_CASE("train writes checkpoint, history and manifest deterministically") {
  auto& p = pipeline();
  CHECK(fs::exists(p.run_dir / "checkpoint.ascckpt"));
  CHECK(fs::exists(p.run_dir / "manifest.json"));
  const std::string hist =
      util::read_file((p.run_dir / "history.csv").string());
  CHECK(hist.rfind("epoch,train_loss,val_loss\n", 0) == 0);

  // rerun with the same inputs: identical loss history
  auto run2 = p.root / "run2";
  REQUIRE(cli::run({"train", "--data", (p.data_root / p.family).string(),
                    "--model-config", (p.root / "model.json").string(),
                    "--train-config", (p.root / "train.json").string(),
                    "--out", run2.string()}) == 0);
  CHECK(util::read_file((run2 / "history.csv").string()) == hist);
  CHECK(util::read_file((run2 / "checkpoint.ascckpt").string()) ==
        util::read_file((p.run_dir / "checkpoint.ascckpt").string()));

  CHECK(cli::run({"train", "--data", "/nonexistent_dir_xyz", "--out",
                  (p.root / "x").string()}) == 2);
}

TEST_CASE("eval emits metrics, aggregates and pivot tables") {
  auto& p = pipeline();
  const std::string metrics =
      util::read_file((p.eval_dir / "metrics.csv").string());
  auto rows = sig::parse_metrics_csv(metrics, "metrics.csv");
  REQUIRE(!rows.empty());
  for (const auto& r : rows) {
    CHECK(r.noise_kind == "awgn");
    CHECK(r.input_snr_db == 5.0);
  }
  CHECK(fs::exists(p.eval_dir / "table_awgn.csv"));

  // aggregate means match a recomputation from the row csv
  const std::string agg_csv =
      util::read_file((p.eval_dir / "aggregates.csv").string());
  double sum = 0;
  for (const auto& r : rows) sum += r.snr_out_db;
  const std::string expect =
      util::fmt_g(sum / static_cast<double>(rows.size()));
  CHECK(agg_csv.find(expect) != std::string::npos);
}

TEST_CASE("eval stubs force the trivial metric columns") {
  auto& p = pipeline();
  auto clean_dir = p.root / "eval_clean";
  REQUIRE(cli::run({"eval", "--checkpoint",
                    (p.run_dir / "checkpoint.ascckpt").string(), "--data",
                    (p.data_root / p.family).string(), "--out",
                    clean_dir.string(), "--stub", "clean"}) == 0);
  for (const auto& r : sig::parse_metrics_csv(
           util::read_file((clean_dir / "metrics.csv").string()),
           "clean stub")) {
    CHECK(r.mse == 0.0);
    CHECK(r.rmse == 0.0);
    CHECK(r.prd_percent == 0.0);
  }

  auto noisy_dir = p.root / "eval_noisy";
  REQUIRE(cli::run({"eval", "--checkpoint",
                    (p.run_dir / "checkpoint.ascckpt").string(), "--data",
                    (p.data_root / p.family).string(), "--out",
                    noisy_dir.string(), "--stub", "noisy"}) == 0);
  for (const auto& r : sig::parse_metrics_csv(
           util::read_file((noisy_dir / "metrics.csv").string()),
           "noisy stub"))
    CHECK(r.snr_imp_db == 0.0);
}

TEST_CASE("eval exit code 5 on segment-length mismatch") {
  auto& p = pipeline();
  // a dataset with L=32 against the L=64 checkpoint
  auto other = p.root / "data32";
  REQUIRE(cli::run({"prepare", "--records", p.records_dir.string(), "--noise",
                    "awgn", "--snr", "5", "--L", "32", "--stride", "32",
                    "--seed", "3", "--out", other.string()}) == 0);
  CHECK(cli::run({"eval", "--checkpoint",
                  (p.run_dir / "checkpoint.ascckpt").string(), "--data",
                  (other / "awgn_5dB").string(), "--out",
                  (p.root / "x").string()}) == 5);
}

TEST_CASE("denoise emits one row per sample and stitches cleanly") {
  auto& p = pipeline();
  const auto out_csv = p.root / "denoised.csv";
  REQUIRE(cli::run({"denoise", "--checkpoint",
                    (p.run_dir / "checkpoint.ascckpt").string(), "--record",
                    (p.records_dir / "rec0.hea").string(), "--channel", "0",
                    "--out", out_csv.string()}) == 0);
  const std::string csv = util::read_file(out_csv.string());
  std::size_t lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  CHECK(lines == 400 + 1);  // header + one row per sample
  CHECK(csv.rfind("sample_index,input_mv,denoised_mv\n", 0) == 0);
  CHECK(fs::exists(p.root / "denoised.manifest.json"));

  CHECK(cli::run({"denoise", "--checkpoint",
                  (p.run_dir / "checkpoint.ascckpt").string(), "--record",
                  (p.records_dir / "rec0.hea").string(), "--channel", "7",
                  "--out", (p.root / "x.csv").string()}) == 2);
}

TEST_CASE("report merges eval directories without duplicates") {
  auto& p = pipeline();
  auto second_eval = p.root / "eval_noisy";  // produced by the stub test
  if (!fs::exists(second_eval / "metrics.csv")) {
    REQUIRE(cli::run({"eval", "--checkpoint",
                      (p.run_dir / "checkpoint.ascckpt").string(), "--data",
                      (p.data_root / p.family).string(), "--out",
                      second_eval.string(), "--stub", "noisy"}) == 0);
  }

  const auto out_csv = p.root / "comparison.csv";
  REQUIRE(cli::run({"report", "--eval", p.eval_dir.string(), "--eval",
                    second_eval.string(), "--out", out_csv.string()}) == 0);
  const std::string merged = util::read_file(out_csv.string());
  CHECK(merged.rfind("method,", 0) == 0);

  // same dir twice: rows keyed identically collapse to one copy
  const auto dup_csv = p.root / "dup.csv";
  REQUIRE(cli::run({"report", "--eval", p.eval_dir.string(), "--eval",
                    p.eval_dir.string(), "--out", dup_csv.string()}) == 0);
  const auto single_csv = p.root / "single.csv";
  REQUIRE(cli::run({"report", "--eval", p.eval_dir.string(), "--out",
                    single_csv.string()}) == 0);
  // identical row payload; only the method label column stays
  auto strip_header = [](const std::string& s) {
    return s.substr(s.find('\n') + 1);
  };
  CHECK(strip_header(util::read_file(dup_csv.string())) ==
        strip_header(util::read_file(single_csv.string())));

  // column order is stable across runs
  const auto again_csv = p.root / "comparison2.csv";
  REQUIRE(cli::run({"report", "--eval", p.eval_dir.string(), "--eval",
                    second_eval.string(), "--out", again_csv.string()}) == 0);
  CHECK(util::read_file(again_csv.string()) == merged);

  // schema mismatch -> 6; empty eval list -> 2
  auto bad_dir = p.root / "bad_eval";
  fs::create_directories(bad_dir);
  util::write_file_atomic((bad_dir / "metrics.csv").string(), "wrong,header\n");
  CHECK(cli::run({"report", "--eval", bad_dir.string(), "--out",
                  (p.root / "x.csv").string()}) == 6);
  CHECK(cli::run({"report", "--out", (p.root / "x.csv").string()}) == 2);
}

TEST_CASE("manifests record command, seeds and input hashes") {
  auto& p = pipeline();
  json m = json::parse(
      util::read_file((p.data_root / p.family / "manifest.json").string()));
  CHECK(m.at("command") == "prepare");
  CHECK(m.at("seeds").at("dataset") == 3);
  CHECK(m.at("inputs").size() >= 5);
  CHECK(m.contains("timestamp"));
  CHECK(m.at("tool_version") == kToolVersion);

  json t = json::parse(util::read_file((p.run_dir / "manifest.json").string()));
  CHECK(t.at("command") == "train");
  CHECK(t.at("config").at("train_config").at("seed") == 5);
}
