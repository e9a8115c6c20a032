#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vitc/vtp.hpp"

namespace vitc {

// 100 * (1 - compressed / base). Throws NonPositiveCount.
double compression_percent(double base_params, double compressed_params);

// 100 * ((100 - compressed_acc) / (100 - base_acc) - 1). Throws
// DegenerateBase when base_acc is 100.
double relative_error_increase(double base_acc, double compressed_acc);

// 4-byte parameters in MiB.
double model_size_mib(std::size_t params);

struct ReportRow {
  std::string label;
  double accuracy = 0.0;
  double err_increase = 0.0;
  std::size_t params = 0;
  double mib = 0.0;
  double compression = 0.0;
  // The base row prints its increase and compression columns empty.
  bool is_base = false;
};

class CompressionReport {
 public:
  void set_base(std::string label, double accuracy, std::size_t params);
  // Requires set_base first.
  void add(std::string label, double accuracy, std::size_t params);

  const std::vector<ReportRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

  // Aligned table: accuracy to two decimals, increase to one decimal,
  // compression as an integer, size in whole MiB.
  std::string to_text() const;
  // label,accuracy,err_increase,params,mib,compression
  std::string to_csv() const;

 private:
  std::vector<ReportRow> rows_;
};

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;

  double bin_width() const { return (hi - lo) / static_cast<double>(counts.size()); }
  std::size_t total() const;
};

// Equal-width bins over [lo, hi]; the top edge falls in the last bin.
Histogram histogram(const std::vector<float>& values, std::size_t bins, double lo, double hi);

struct MaskStatistics {
  std::vector<float> attention;  // attn_in and attn_out entries
  std::vector<float> ffn;
  Histogram attention_hist;
  Histogram ffn_hist;
  double attention_mean = 0.0;
  double ffn_mean = 0.0;
  double attention_above_08 = 0.0;  // fraction of attention entries > 0.8
};

// Both groups share one range spanning the min and max of every mask value
// (widened by 0.5 each side when all values coincide). Throws EmptyMasks.
MaskStatistics mask_statistics(const MaskSet& masks, std::size_t bins);

// Writes attention_hist.csv and ffn_hist.csv (bin_lo,bin_hi,count),
// attention_values.csv and ffn_values.csv, and summary.csv into `dir`.
MaskStatistics export_mask_histogram(const MaskSet& masks, std::size_t bins, const std::filesystem::path& dir);

}  // namespace vitc
