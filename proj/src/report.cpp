#include "ascnet/report.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <sstream>

#include "ascnet/error.hpp"
#include "ascnet/util.hpp"

namespace ascnet::sig {

const char* const kMetricsCsvHeader =
    "record_id,noise_kind,input_snr_db,snr_out_db,snr_imp_db,mse,rmse,"
    "prd_percent";

void MetricsReport::finalize() {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const MetricRow& a, const MetricRow& b) {
                     if (a.noise_kind != b.noise_kind)
                       return a.noise_kind < b.noise_kind;
                     if (a.input_snr_db != b.input_snr_db)
                       return a.input_snr_db < b.input_snr_db;
                     return a.record_id < b.record_id;
                   });
  aggregates.clear();
  std::map<std::pair<std::string, double>, AggregateRow> groups;
  for (const MetricRow& r : rows) {
    AggregateRow& g = groups[{r.noise_kind, r.input_snr_db}];
    g.noise_kind = r.noise_kind;
    g.input_snr_db = r.input_snr_db;
    g.snr_out_db += r.snr_out_db;
    g.snr_imp_db += r.snr_imp_db;
    g.mse += r.mse;
    g.rmse += r.rmse;
    g.prd_percent += r.prd_percent;
    g.n_rows += 1;
  }
  for (auto& [key, g] : groups) {
    const auto n = static_cast<double>(g.n_rows);
    g.snr_out_db /= n;
    g.snr_imp_db /= n;
    g.mse /= n;
    g.rmse /= n;
    g.prd_percent /= n;
    aggregates.push_back(g);
  }
}

std::string MetricsReport::rows_csv() const {
  std::ostringstream os;
  os << kMetricsCsvHeader << "\n";
  for (const MetricRow& r : rows) {
    os << r.record_id << "," << r.noise_kind << ","
       << util::fmt_g(r.input_snr_db) << "," << util::fmt_g(r.snr_out_db)
       << "," << util::fmt_g(r.snr_imp_db) << "," << util::fmt_g(r.mse) << ","
       << util::fmt_g(r.rmse) << "," << util::fmt_g(r.prd_percent) << "\n";
  }
  return os.str();
}

std::string MetricsReport::aggregates_csv() const {
  std::ostringstream os;
  os << "noise_kind,input_snr_db,snr_out_db,snr_imp_db,mse,rmse,prd_percent,"
        "n_rows\n";
  for (const AggregateRow& g : aggregates) {
    os << g.noise_kind << "," << util::fmt_g(g.input_snr_db) << ","
       << util::fmt_g(g.snr_out_db) << "," << util::fmt_g(g.snr_imp_db) << ","
       << util::fmt_g(g.mse) << "," << util::fmt_g(g.rmse) << ","
       << util::fmt_g(g.prd_percent) << "," << g.n_rows << "\n";
  }
  return os.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& origin) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str())
    raise(errc::schema_mismatch, origin + ": bad number '" + s + "'");
  return v;
}

}  // namespace

std::vector<MetricRow> parse_metrics_csv(const std::string& text,
                                         const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line))
    raise(errc::schema_mismatch, origin + ": empty metrics csv");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsCsvHeader)
    raise(errc::schema_mismatch, origin + ": unexpected header '" + line + "'");
  std::vector<MetricRow> rows;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != 8)
      raise(errc::schema_mismatch,
            origin + ": expected 8 columns, got " + std::to_string(f.size()));
    MetricRow r;
    r.record_id = f[0];
    r.noise_kind = f[1];
    r.input_snr_db = parse_double(f[2], origin);
    r.snr_out_db = parse_double(f[3], origin);
    r.snr_imp_db = parse_double(f[4], origin);
    r.mse = parse_double(f[5], origin);
    r.rmse = parse_double(f[6], origin);
    r.prd_percent = parse_double(f[7], origin);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace ascnet::sig
