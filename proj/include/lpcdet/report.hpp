#pragma once

#include "lpcdet/detector.hpp"
#include "lpcdet/metrics.hpp"
#include "lpcdet/training.hpp"
#include "lpcdet/travel.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace lpcdet {

using MethodMetrics = std::pair<std::string, MetricsReport>;

/// `method, AP, ATE, ASE, AOE`
std::string format_metrics_csv(const std::vector<MethodMetrics>& rows);
/// `bin_lo, bin_hi, median, q25, q75, hist_count_LQ`; error columns are
/// keyed by FQ length and left empty when the bin has no FQ records.
std::string format_travel_csv(const TravelStats& stats);
/// `epoch, lr, loss_total, loss_reg, loss_cls, stage`
std::string format_train_log(const std::vector<EpochLog>& log);

std::string metrics_svg(const std::vector<MethodMetrics>& rows);
/// Median error with quartile whiskers per bin (FQ and LQ keyed) over the LQ histogram.
std::string travel_svg(const TravelStats& stats);

/// Cross-attention of one query in one layer, averaged over heads.
struct AttentionDump {
  int layer = 0;
  int query = 0;
  int height = 0;
  int width = 0;
  ad::Matrix weights;  // height x width
  Point3 anchor;       // anchor the layer input was encoded with
  Box box;             // this layer's estimate
};

/// Needs a forward pass run with record_attention.
std::vector<AttentionDump> attention_dumps(const ForwardResult& result, int query);
/// Lines: `LAYER k`, `QUERY q`, `GRID h w`, `ANCHOR x y z`,
/// `BOX x y z w l h yaw`, then one `CELL row col weight` per cell.
std::string format_attention(const AttentionDump& dump);
std::string attention_svg(const AttentionDump& dump, const GridConfig& grid);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace lpcdet
