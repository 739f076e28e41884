#ifndef ASCNET_REPORT_HPP
#define ASCNET_REPORT_HPP

#include <string>
#include <vector>

namespace ascnet::sig {

struct MetricRow {
  std::string record_id;
  std::string noise_kind;
  double input_snr_db = 0.0;
  double snr_out_db = 0.0;
  double snr_imp_db = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  double prd_percent = 0.0;
};

/// Arithmetic mean of the member rows of one (noise_kind, input_snr_db)
/// group, column by column.
struct AggregateRow {
  std::string noise_kind;
  double input_snr_db = 0.0;
  double snr_out_db = 0.0;
  double snr_imp_db = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  double prd_percent = 0.0;
  std::size_t n_rows = 0;
};

struct MetricsReport {
  std::vector<MetricRow> rows;
  std::vector<AggregateRow> aggregates;

  /// Sorts rows by (noise_kind, input_snr_db, record_id) and rebuilds the
  /// aggregates as plain means of the member rows.
  void finalize();

  std::string rows_csv() const;
  std::string aggregates_csv() const;
};

extern const char* const kMetricsCsvHeader;

/// Parses a CSV produced by rows_csv(); the header must match exactly.
std::vector<MetricRow> parse_metrics_csv(const std::string& text,
                                         const std::string& origin);

}  // namespace ascnet::sig

#endif  // ASCNET_REPORT_HPP
