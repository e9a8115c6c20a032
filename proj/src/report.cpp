#include "vitc/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "vitc/error.hpp"

namespace vitc {

namespace fs = std::filesystem;

double compression_percent(double base_params, double compressed_params) {
  if (!(base_params > 0.0) || !(compressed_params > 0.0)) {
    throw Error(ErrorCode::NonPositiveCount, "parameter counts must be positive");
  }
  return 100.0 * (1.0 - compressed_params / base_params);
}

double relative_error_increase(double base_acc, double compressed_acc) {
  if (base_acc >= 100.0) throw Error(ErrorCode::DegenerateBase, "base accuracy of 100% has no error to compare");
  return 100.0 * ((100.0 - compressed_acc) / (100.0 - base_acc) - 1.0);
}

double model_size_mib(std::size_t params) { return static_cast<double>(params) * 4.0 / (1024.0 * 1024.0); }

void CompressionReport::set_base(std::string label, double accuracy, std::size_t params) {
  ReportRow row{std::move(label), accuracy, 0.0, params, model_size_mib(params), 0.0, true};
  if (!rows_.empty() && rows_.front().is_base) {
    rows_.front() = std::move(row);
  } else {
    rows_.insert(rows_.begin(), std::move(row));
  }
}

void CompressionReport::add(std::string label, double accuracy, std::size_t params) {
  if (rows_.empty() || !rows_.front().is_base) throw Error(ErrorCode::InvalidConfig, "report has no base row");
  const ReportRow& base = rows_.front();
  ReportRow row{std::move(label),
                accuracy,
                relative_error_increase(base.accuracy, accuracy),
                params,
                model_size_mib(params),
                compression_percent(static_cast<double>(base.params), static_cast<double>(params)),
                false};
  rows_.push_back(std::move(row));
}

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Rounds half away from zero and avoids printing "-0".
std::string fmt_rounded(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  double r = std::round(v * scale) / scale;
  if (r == 0.0) r = 0.0;
  return fmt(decimals == 0 ? "%.0f" : "%.1f", r);
}

}  // namespace

std::string CompressionReport::to_text() const {
  const std::vector<std::string> header = {"model", "accuracy", "err_increase", "params", "size", "compression"};
  std::vector<std::vector<std::string>> cells;
  for (const ReportRow& r : rows_) {
    cells.push_back({r.label, fmt("%.2f%%", r.accuracy), r.is_base ? "-" : fmt_rounded(r.err_increase, 1) + "%",
                     std::to_string(r.params), fmt("%.0f MiB", std::round(r.mib)),
                     r.is_base ? "-" : fmt_rounded(r.compression, 0) + "%"});
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == 0) {
        out << row[c] << std::string(width[c] - row[c].size(), ' ');
      } else {
        out << "  " << std::string(width[c] - row[c].size(), ' ') << row[c];
      }
    }
    out << '\n';
  };
  emit(header);
  for (const auto& row : cells) emit(row);
  return out.str();
}

std::string CompressionReport::to_csv() const {
  std::ostringstream out;
  out << "label,accuracy,err_increase,params,mib,compression\n";
  for (const ReportRow& r : rows_) {
    out << r.label << ',' << fmt("%.4f", r.accuracy) << ',' << (r.is_base ? "" : fmt("%.4f", r.err_increase)) << ','
        << r.params << ',' << fmt("%.4f", r.mib) << ',' << (r.is_base ? "" : fmt("%.4f", r.compression)) << '\n';
  }
  return out.str();
}

std::size_t Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

Histogram histogram(const std::vector<float>& values, std::size_t bins, double lo, double hi) {
  if (bins == 0) throw Error(ErrorCode::InvalidConfig, "histogram needs at least one bin");
  if (!(hi > lo)) throw Error(ErrorCode::InvalidConfig, "histogram range is empty");
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
  const double width = h.bin_width();
  for (float v : values) {
    auto b = static_cast<std::ptrdiff_t>(std::floor((static_cast<double>(v) - lo) / width));
    b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

MaskStatistics mask_statistics(const MaskSet& masks, std::size_t bins) {
  MaskStatistics s;
  for (const MaskRef& m : masks.masks) {
    auto& dst = m.is_attention() ? s.attention : s.ffn;
    dst.insert(dst.end(), m.values.values().begin(), m.values.values().end());
  }
  if (s.attention.empty() && s.ffn.empty()) throw Error(ErrorCode::EmptyMasks, "no mask values to summarize");

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto* group : {&s.attention, &s.ffn}) {
    for (float v : *group) {
      lo = std::min(lo, static_cast<double>(v));
      hi = std::max(hi, static_cast<double>(v));
    }
  }
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  s.attention_hist = histogram(s.attention, bins, lo, hi);
  s.ffn_hist = histogram(s.ffn, bins, lo, hi);

  auto mean = [](const std::vector<float>& v) {
    if (v.empty()) return 0.0;
    double acc = 0.0;
    for (float x : v) acc += x;
    return acc / static_cast<double>(v.size());
  };
  s.attention_mean = mean(s.attention);
  s.ffn_mean = mean(s.ffn);
  if (!s.attention.empty()) {
    const auto above = std::count_if(s.attention.begin(), s.attention.end(), [](float v) { return v > 0.8f; });
    s.attention_above_08 = static_cast<double>(above) / static_cast<double>(s.attention.size());
  }
  return s;
}

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f << text;
}

std::string histogram_csv(const Histogram& h) {
  std::ostringstream out;
  out << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    const double lo = h.lo + h.bin_width() * static_cast<double>(b);
    const double hi = b + 1 == h.counts.size() ? h.hi : lo + h.bin_width();
    out << fmt("%.6f", lo) << ',' << fmt("%.6f", hi) << ',' << h.counts[b] << '\n';
  }
  return out.str();
}

std::string values_csv(const std::vector<float>& values) {
  std::ostringstream out;
  out << "value\n";
  for (float v : values) out << fmt("%.9g", v) << '\n';
  return out.str();
}

}  // namespace

MaskStatistics export_mask_histogram(const MaskSet& masks, std::size_t bins, const fs::path& dir) {
  MaskStatistics s = mask_statistics(masks, bins);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "attention_hist.csv", histogram_csv(s.attention_hist));
  write_file(dir / "ffn_hist.csv", histogram_csv(s.ffn_hist));
  write_file(dir / "attention_values.csv", values_csv(s.attention));
  write_file(dir / "ffn_values.csv", values_csv(s.ffn));
  std::ostringstream summary;
  summary << "group,count,mean,frac_above_0.8\n";
  const auto above_ffn = std::count_if(s.ffn.begin(), s.ffn.end(), [](float v) { return v > 0.8f; });
  summary << "attention," << s.attention.size() << ',' << fmt("%.6f", s.attention_mean) << ','
          << fmt("%.6f", s.attention_above_08) << '\n';
  summary << "ffn," << s.ffn.size() << ',' << fmt("%.6f", s.ffn_mean) << ','
          << fmt("%.6f", s.ffn.empty() ? 0.0 : static_cast<double>(above_ffn) / static_cast<double>(s.ffn.size()))
          << '\n';
  write_file(dir / "summary.csv", summary.str());
  return s;
}

}  // namespace vitc
