#include "voxdec/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "voxdec/error.hpp"

namespace voxdec {
namespace {

constexpr std::array<const char*, 10> kPalette{"#bdbdbd", "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                               "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22"};
constexpr double kWidth = 960.0;

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) { return format_number(std::round(v * 100.0) / 100.0); }

const char* color(std::size_t k) { return kPalette[k % kPalette.size()]; }

std::string text(double x, double y, const std::string& s, const char* anchor = "start", int size = 12) {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + std::to_string(size) +
         "\" text-anchor=\"" + anchor + "\">" + esc(s) + "</text>\n";
}

std::string rect(const char* cls, double x, double y, double w, double h, const std::string& fill) {
  return "<rect class=\"" + std::string(cls) + "\" x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) +
         "\" height=\"" + num(h) + "\" fill=\"" + fill + "\"/>\n";
}

struct Parsed {
  std::vector<std::string> classes;
  std::vector<double> recall;
  std::vector<std::vector<double>> confusion;
  std::vector<int> truth, pred;
  double accuracy = 0.0;
};

Parsed parse(const Json& m) {
  try {
    if (!m.is_object() || m.value("schema", "") != kMetricsSchema) throw DataError("not a metrics document");
    Parsed p;
    p.classes = m.at("classes").get<std::vector<std::string>>();
    p.recall = m.at("recall").get<std::vector<double>>();
    p.confusion = m.at("confusion").get<std::vector<std::vector<double>>>();
    p.truth = m.at("truth").get<std::vector<int>>();
    p.pred = m.at("pred").get<std::vector<int>>();
    p.accuracy = m.at("accuracy").get<double>();
    const auto k = p.classes.size();
    if (k == 0 || p.recall.size() != k || p.confusion.size() != k) throw DataError("class arrays disagree in length");
    for (const auto& row : p.confusion)
      if (row.size() != k) throw DataError("confusion matrix is not K x K");
    if (p.truth.size() != p.pred.size()) throw DataError("truth and pred sequences differ in length");
    for (std::size_t i = 0; i < p.truth.size(); ++i)
      if (p.truth[i] < 0 || p.pred[i] < 0 || static_cast<std::size_t>(p.truth[i]) >= k ||
          static_cast<std::size_t>(p.pred[i]) >= k)
        throw DataError("label sequence entry out of range");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metrics: ") + e.what());
  } catch (const DataError& e) {
    throw DataError(std::string("malformed metrics: ") + e.what());
  }
}

std::string bar_chart(const Parsed& p, double top) {
  std::string s = text(20, top, "Per-state accuracy (recall)", "start", 14);
  const double x0 = 60, h = 160, y0 = top + 20 + h;
  const double slot = (kWidth / 2 - 80) / static_cast<double>(p.classes.size());
  s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0 + slot * p.classes.size()) + "\" y2=\"" +
       num(y0) + "\" stroke=\"#000\"/>\n";
  for (std::size_t k = 0; k < p.classes.size(); ++k) {
    const double v = std::clamp(p.recall[k], 0.0, 1.0);
    const double x = x0 + slot * static_cast<double>(k) + slot * 0.15;
    s += rect("bar", x, y0 - v * h, slot * 0.7, v * h, color(k));
    s += text(x + slot * 0.35, y0 - v * h - 4, num(v), "middle", 10);
    s += text(x + slot * 0.35, y0 + 14, p.classes[k], "middle", 10);
  }
  return s;
}

std::string heatmap(const Parsed& p, double top) {
  const auto k = p.classes.size();
  const double x0 = kWidth / 2 + 80, size = 180, cell = size / static_cast<double>(k);
  std::string s = text(kWidth / 2 + 20, top, "Confusion matrix (rows: truth, row-normalized)", "start", 14);
  for (std::size_t r = 0; r < k; ++r) {
    double total = 0.0;
    for (double v : p.confusion[r]) total += v;
    for (std::size_t c = 0; c < k; ++c) {
      const double frac = total > 0.0 ? p.confusion[r][c] / total : 0.0;
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - frac)));
      char fill[8];
      std::snprintf(fill, sizeof fill, "#%02x%02xff", shade, shade);
      s += rect("cell", x0 + cell * c, top + 20 + cell * r, cell, cell, fill);
    }
    s += text(x0 - 4, top + 20 + cell * (r + 0.6), p.classes[r], "end", 9);
  }
  return s;
}

std::string strips(const Parsed& p, double top) {
  std::string s = text(20, top, "Decoded vs. true state per frame (accuracy " + num(p.accuracy) + ")", "start", 14);
  const double x0 = 60, w = kWidth - 100;
  const auto n = p.truth.size();
  if (n == 0) return s;
  const double fw = w / static_cast<double>(n);
  auto strip = [&](const std::vector<int>& labels, double y, const char* cls, const char* title) {
    s += text(x0 - 4, y + 14, title, "end", 10);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j < n && labels[j] == labels[i]) ++j;
      s += rect(cls, x0 + fw * static_cast<double>(i), y, fw * static_cast<double>(j - i), 20,
                color(static_cast<std::size_t>(labels[i])));
      i = j;
    }
  };
  strip(p.truth, top + 12, "strip-truth", "truth");
  strip(p.pred, top + 38, "strip-pred", "decoded");
  for (std::size_t k = 0; k < p.classes.size(); ++k) {
    const double x = x0 + 110.0 * static_cast<double>(k);
    s += rect("legend", x, top + 66, 10, 10, color(k));
    s += text(x + 14, top + 75, p.classes[k], "start", 10);
  }
  return s;
}

std::string polyline(const std::vector<double>& xs, const std::vector<double>& ys, double x0, double y0, double w,
                     double h, const char* stroke) {
  if (xs.empty()) return {};
  const auto [xmin, xmax] = std::minmax_element(xs.begin(), xs.end());
  const auto [ymin, ymax] = std::minmax_element(ys.begin(), ys.end());
  const double xr = *xmax > *xmin ? *xmax - *xmin : 1.0;
  const double yr = *ymax > *ymin ? *ymax - *ymin : 1.0;
  std::string pts;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) pts += ' ';
    pts += num(x0 + w * (xs[i] - *xmin) / xr) + ',' + num(y0 + h - h * (ys[i] - *ymin) / yr);
  }
  return "<polyline fill=\"none\" stroke=\"" + std::string(stroke) + "\" stroke-width=\"1.2\" points=\"" + pts +
         "\"/>\n";
}

std::string overlays(const std::vector<SeriesTable>& series, double top) {
  std::string s;
  const double x0 = 60, w = kWidth - 100, h = 90;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& t = series[i];
    const double y = top + static_cast<double>(i) * (h + 36);
    s += text(20, y, t.name + " (blue: decoded, red: ideal, yellow: stimulus)", "start", 12);
    s += polyline(t.frame, t.stimulus, x0, y + 8, w, h, "#e6c200");
    s += polyline(t.frame, t.ideal, x0, y + 8, w, h, "#d62728");
    s += polyline(t.frame, t.value, x0, y + 8, w, h, "#1f77b4");
  }
  return s;
}

}  // namespace

std::string render_report(const Json& metrics, const std::vector<SeriesTable>& series) {
  const Parsed p = parse(metrics);
  const double charts_top = 50, strips_top = 300, series_top = 410;
  const double height = series_top + static_cast<double>(series.size()) * 126 + 20;
  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(height) +
         "\" viewBox=\"0 0 " + num(kWidth) + ' ' + num(height) + "\" font-family=\"sans-serif\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(height) + "\" fill=\"#ffffff\"/>\n";
  svg += text(20, 28, "Volume-wise task-state decoding report", "start", 18);
  svg += bar_chart(p, charts_top);
  svg += heatmap(p, charts_top);
  svg += strips(p, strips_top);
  svg += overlays(series, series_top);
  svg += "</svg>\n";
  return svg;
}

}  // namespace voxdec
