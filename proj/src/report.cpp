#include "lpcdet/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lpcdet {

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

class Svg {
 public:
  Svg(double w, double h) : w_(w), h_(h) {
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
         << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n"
         << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill) {
    out_ << "<rect x=\"" << fmt(x, "%.2f") << "\" y=\"" << fmt(y, "%.2f") << "\" width=\""
         << fmt(std::max(w, 0.0), "%.2f") << "\" height=\"" << fmt(std::max(h, 0.0), "%.2f")
         << "\" fill=\"" << fill << "\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1) {
    out_ << "<line x1=\"" << fmt(x1, "%.2f") << "\" y1=\"" << fmt(y1, "%.2f") << "\" x2=\""
         << fmt(x2, "%.2f") << "\" y2=\"" << fmt(y2, "%.2f") << "\" stroke=\"" << stroke
         << "\" stroke-width=\"" << width << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    out_ << "<circle cx=\"" << fmt(x, "%.2f") << "\" cy=\"" << fmt(y, "%.2f") << "\" r=\"" << r
         << "\" fill=\"" << fill << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 12, const char* anchor = "middle") {
    out_ << "<text x=\"" << fmt(x, "%.2f") << "\" y=\"" << fmt(y, "%.2f") << "\" font-size=\"" << size
         << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << s << "</text>\n";
  }
  std::string str() { return out_.str() + "</svg>\n"; }
  double width() const { return w_; }
  double height() const { return h_; }

 private:
  double w_, h_;
  std::ostringstream out_;
};

}  // namespace

std::string format_metrics_csv(const std::vector<MethodMetrics>& rows) {
  std::ostringstream out;
  out << "method, AP, ATE, ASE, AOE\n";
  for (const auto& [name, m] : rows) {
    out << name << ", " << fmt(m.ap) << ", " << fmt(m.ate) << ", " << fmt(m.ase) << ", " << fmt(m.aoe)
        << '\n';
  }
  return out.str();
}

std::string format_travel_csv(const TravelStats& stats) {
  std::ostringstream out;
  out << "bin_lo, bin_hi, median, q25, q75, hist_count_LQ\n";
  for (const auto& b : stats.bins) {
    out << fmt(b.lo, "%g") << ", " << fmt(b.hi, "%g") << ", ";
    if (b.fq_error) {
      out << fmt(b.fq_error->median) << ", " << fmt(b.fq_error->q25) << ", " << fmt(b.fq_error->q75);
    } else {
      out << ", , ";
    }
    out << ", " << b.lq_count << '\n';
  }
  return out.str();
}

std::string format_train_log(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out << "epoch, lr, loss_total, loss_reg, loss_cls, stage\n";
  for (const auto& e : log) {
    out << e.epoch << ", " << fmt(e.lr, "%g") << ", " << fmt(e.loss_total) << ", " << fmt(e.loss_reg)
        << ", " << fmt(e.loss_cls) << ", " << e.stage << '\n';
  }
  return out.str();
}

std::string metrics_svg(const std::vector<MethodMetrics>& rows) {
  Svg svg(120.0 + 110.0 * static_cast<double>(rows.size()), 320);
  const double x0 = 60, y0 = 270, plot_h = 220;
  svg.line(x0, y0, svg.width() - 20, y0, "black");
  svg.line(x0, y0, x0, y0 - plot_h, "black");
  for (int t = 0; t <= 4; ++t) {
    const double y = y0 - plot_h * t / 4.0;
    svg.line(x0 - 4, y, x0, y, "black");
    svg.text(x0 - 8, y + 4, fmt(t / 4.0, "%.2f"), 10, "end");
  }
  svg.text(20, y0 - plot_h / 2, "AP", 12);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double x = x0 + 20 + 110.0 * static_cast<double>(i);
    const double h = plot_h * std::clamp(rows[i].second.ap, 0.0, 1.0);
    svg.rect(x, y0 - h, 70, h, "#4a78b5");
    svg.text(x + 35, y0 - h - 6, fmt(rows[i].second.ap, "%.3f"), 11);
    svg.text(x + 35, y0 + 18, rows[i].first, 11);
  }
  return svg.str();
}

std::string travel_svg(const TravelStats& stats) {
  Svg svg(640, 400);
  const double x0 = 70, y0 = 340, plot_w = 530, plot_h = 280;
  double max_len = stats.bin_width;
  double max_err = 0.1;
  int max_count = 1;
  for (const auto& b : stats.bins) {
    max_len = std::max(max_len, b.hi);
    max_count = std::max(max_count, b.lq_count);
    if (b.fq_error) max_err = std::max(max_err, b.fq_error->q75);
    if (b.lq_error) max_err = std::max(max_err, b.lq_error->q75);
  }
  auto sx = [&](double v) { return x0 + plot_w * v / max_len; };
  auto sy = [&](double v) { return y0 - plot_h * v / max_err; };
  for (const auto& b : stats.bins) {
    const double h = plot_h * b.lq_count / static_cast<double>(max_count);
    svg.rect(sx(b.lo) + 1, y0 - h, sx(b.hi) - sx(b.lo) - 2, h, "#dde6f2");
  }
  auto series = [&](bool first, const std::string& color, double shift) {
    for (const auto& b : stats.bins) {
      const auto& q = first ? b.fq_error : b.lq_error;
      if (!q) continue;
      const double x = sx(0.5 * (b.lo + b.hi)) + shift;
      svg.line(x, sy(q->q25), x, sy(q->q75), color, 2);
      svg.circle(x, sy(q->median), 4, color);
    }
  };
  series(true, "#c0392b", -6);
  series(false, "#2471a3", 6);
  svg.line(x0, y0, x0 + plot_w, y0, "black");
  svg.line(x0, y0, x0, y0 - plot_h, "black");
  for (double v = 0; v <= max_len + 1e-9; v += stats.bin_width) {
    svg.line(sx(v), y0, sx(v), y0 + 4, "black");
    svg.text(sx(v), y0 + 18, fmt(v, "%g"), 10);
  }
  for (int t = 0; t <= 4; ++t) {
    const double v = max_err * t / 4.0;
    svg.line(x0 - 4, sy(v), x0, sy(v), "black");
    svg.text(x0 - 8, sy(v) + 4, fmt(v, "%.2f"), 10, "end");
  }
  svg.text(x0 + plot_w / 2, y0 + 40, "travel length (m)", 12);
  svg.text(x0 + plot_w / 2, 30, "location error (m): FQ red, LQ blue; bars: LQ histogram", 12);
  return svg.str();
}

std::vector<AttentionDump> attention_dumps(const ForwardResult& result, int query) {
  const DecoderOutput& out = result.decoder;
  if (query < 0 || query >= out.initial.box.rows()) throw std::out_of_range("query index out of range");
  std::vector<AttentionDump> dumps;
  for (std::size_t k = 0; k < out.layers.size(); ++k) {
    const LayerOutput& layer = out.layers[k];
    if (layer.attention.cross_weights.empty()) {
      throw std::invalid_argument("attention was not recorded for this forward pass");
    }
    AttentionDump d;
    d.layer = static_cast<int>(k);
    d.query = query;
    d.height = result.tokens.height;
    d.width = result.tokens.width;
    d.weights = ad::Matrix::Zero(d.height, d.width);
    for (const auto& w : layer.attention.cross_weights) {
      for (int r = 0; r < d.height; ++r) {
        for (int c = 0; c < d.width; ++c) d.weights(r, c) += w(query, r * d.width + c);
      }
    }
    d.weights /= static_cast<double>(layer.attention.cross_weights.size());
    const auto& anchors = out.anchor_history[static_cast<std::size_t>(
        std::count_if(out.layers.begin(), out.layers.begin() + static_cast<long>(k) + 1,
                      [](const LayerOutput& l) { return l.refined; }))];
    d.anchor = {anchors(query, 0), anchors(query, 1), anchors(query, 2)};
    d.box = layer.estimate.params(query).absolute(layer.estimate.anchor(query));
    dumps.push_back(std::move(d));
  }
  return dumps;
}

std::string format_attention(const AttentionDump& d) {
  std::ostringstream out;
  out << "LAYER " << d.layer << "\nQUERY " << d.query << "\nGRID " << d.height << ' ' << d.width << '\n';
  out << "ANCHOR " << fmt(d.anchor.x) << ' ' << fmt(d.anchor.y) << ' ' << fmt(d.anchor.z) << '\n';
  out << "BOX " << fmt(d.box.center.x) << ' ' << fmt(d.box.center.y) << ' ' << fmt(d.box.center.z) << ' '
      << fmt(d.box.width) << ' ' << fmt(d.box.length) << ' ' << fmt(d.box.height) << ' ' << fmt(d.box.yaw)
      << '\n';
  for (int r = 0; r < d.height; ++r) {
    for (int c = 0; c < d.width; ++c) out << "CELL " << r << ' ' << c << ' ' << fmt(d.weights(r, c), "%.8g") << '\n';
  }
  return out.str();
}

std::string attention_svg(const AttentionDump& d, const GridConfig& grid) {
  const double px = std::max(4.0, 512.0 / std::max(d.height, d.width));
  Svg svg(px * d.width + 20, px * d.height + 40);
  const double peak = std::max(d.weights.maxCoeff(), 1e-12);
  // row 0 at the bottom so +y points up
  auto to_x = [&](double x) { return 10 + px * (x - grid.extent.x_min) / grid.cell_size; };
  auto to_y = [&](double y) { return 30 + px * d.height - px * (y - grid.extent.y_min) / grid.cell_size; };
  for (int r = 0; r < d.height; ++r) {
    for (int c = 0; c < d.width; ++c) {
      const int level = static_cast<int>(std::lround(255.0 * (1.0 - d.weights(r, c) / peak)));
      char color[16];
      std::snprintf(color, sizeof color, "#%02x%02xff", level, level);
      svg.rect(10 + px * c, 30 + px * (d.height - 1 - r), px, px, color);
    }
  }
  const auto corners = bev_corners(d.box);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& a = corners[i];
    const auto& b = corners[(i + 1) % 4];
    svg.line(to_x(a.x), to_y(a.y), to_x(b.x), to_y(b.y), "#c0392b", 2);
  }
  svg.circle(to_x(d.anchor.x), to_y(d.anchor.y), 4, "#27ae60");
  svg.text(10 + px * d.width / 2, 20, "layer " + std::to_string(d.layer) + ", query " + std::to_string(d.query), 12);
  return svg.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace lpcdet
