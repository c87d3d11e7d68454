#pragma once

#include "lpcdet/metrics.hpp"

#include <optional>
#include <span>
#include <vector>

namespace lpcdet {

struct Quartiles {
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
};

/// Linear-interpolation quantile of already sorted values (q in [0, 1]).
double sorted_quantile(std::span<const double> sorted, double q);
/// Quartiles of unsorted values; nullopt if empty.
std::optional<Quartiles> quartiles(std::vector<double> values);

struct TravelBin {
  double lo = 0.0;
  double hi = 0.0;
  /// Location error quartiles of records whose FQ length falls in the bin.
  std::optional<Quartiles> fq_error;
  /// Same, keyed by LQ length.
  std::optional<Quartiles> lq_error;
  int fq_count = 0;
  int lq_count = 0;  // LQ travel-length histogram
};

struct TravelStats {
  double bin_width = 4.0;
  /// Only bins holding at least one record (by FQ or LQ length), ascending.
  std::vector<TravelBin> bins;
  int records = 0;
  double median_fq = 0.0;
  double median_lq = 0.0;
  /// Fraction of LQ lengths in [0, bin_width).
  double lq_first_bin_fraction = 0.0;
};

/// Uses true positives (records with a location error). Bin b covers
/// [b * width, (b + 1) * width).
TravelStats travel_length_stats(std::span<const DetectionRecord> records, double bin_width = 4.0);

}  // namespace lpcdet
