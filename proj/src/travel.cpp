#include "lpcdet/travel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace lpcdet {

double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("sorted_quantile: empty input");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::optional<Quartiles> quartiles(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  return Quartiles{sorted_quantile(values, 0.25), sorted_quantile(values, 0.5),
                   sorted_quantile(values, 0.75)};
}

TravelStats travel_length_stats(std::span<const DetectionRecord> records, double bin_width) {
  if (!(bin_width > 0.0)) throw std::invalid_argument("travel_length_stats: bin width must be > 0");
  TravelStats stats;
  stats.bin_width = bin_width;

  std::map<long, std::vector<double>> fq_errors, lq_errors;
  std::vector<double> fq, lq;
  for (const auto& r : records) {
    if (r.location_error < 0.0) continue;
    const long fb = static_cast<long>(std::floor(r.fq_length / bin_width));
    const long lb = static_cast<long>(std::floor(r.lq_length / bin_width));
    fq_errors[fb].push_back(r.location_error);
    lq_errors[lb].push_back(r.location_error);
    fq.push_back(r.fq_length);
    lq.push_back(r.lq_length);
  }
  stats.records = static_cast<int>(fq.size());
  if (fq.empty()) return stats;

  std::map<long, TravelBin> bins;
  auto bin_at = [&](long b) -> TravelBin& {
    TravelBin& bin = bins[b];
    bin.lo = static_cast<double>(b) * bin_width;
    bin.hi = bin.lo + bin_width;
    return bin;
  };
  for (auto& [b, errs] : fq_errors) {
    TravelBin& bin = bin_at(b);
    bin.fq_count = static_cast<int>(errs.size());
    bin.fq_error = quartiles(errs);
  }
  for (auto& [b, errs] : lq_errors) {
    TravelBin& bin = bin_at(b);
    bin.lq_count = static_cast<int>(errs.size());
    bin.lq_error = quartiles(errs);
  }
  for (auto& [b, bin] : bins) stats.bins.push_back(bin);

  stats.median_fq = quartiles(fq)->median;
  stats.median_lq = quartiles(lq)->median;
  const auto first = std::count_if(lq.begin(), lq.end(), [&](double v) { return v < bin_width; });
  stats.lq_first_bin_fraction = static_cast<double>(first) / static_cast<double>(lq.size());
  return stats;
}

}  // namespace lpcdet
