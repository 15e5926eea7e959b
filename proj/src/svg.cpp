#include <charprobe/svg.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <vector>

namespace charprobe {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string open_svg(int width, int height, const std::string& kind) {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
         "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) +
         " " + std::to_string(height) + "\" font-family=\"sans-serif\" data-format=\"charprobe-" +
         kind + "\" data-format-version=\"" + std::to_string(kSvgFormatVersion) + "\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string text(double x, double y, const std::string& s, int size, const char* anchor = "start",
                 const std::string& extra = "") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + std::to_string(size) +
         "\" text-anchor=\"" + anchor + "\"" + extra + ">" + xml_escape(s) + "</text>\n";
}

std::string line(double x1, double y1, double x2, double y2, const char* stroke, double width) {
  return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" +
         num(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) + "\"/>\n";
}

// Diverging blue-white-red.
std::string heat_color(double v) {
  const double t = std::clamp(v, -1.0, 1.0);
  auto mix = [](double from, double to, double a) {
    return static_cast<int>(std::lround(from + (to - from) * a));
  };
  int r, g, b;
  if (t < 0) {
    r = mix(255, 33, -t);
    g = mix(255, 102, -t);
    b = mix(255, 172, -t);
  } else {
    r = mix(255, 178, t);
    g = mix(255, 24, t);
    b = mix(255, 43, t);
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

std::string xml_escape(std::string_view s) {
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

std::string pdi_bar_chart(const PdiSummary& summary, const std::string& title) {
  const int n = static_cast<int>(summary.ranked.size());
  const double left = 60, right = 20, top = 40, bottom = 50;
  const double plot_w = std::max(400.0, 6.0 * n);
  const double plot_h = 240;
  const int width = static_cast<int>(left + plot_w + right);
  const int height = static_cast<int>(top + plot_h + bottom);
  double ymax = 0.0;
  for (const UnitScore& u : summary.ranked) ymax = std::max(ymax, u.pdi);
  if (ymax <= 0.0) ymax = 1.0;
  const double bar_w = n > 0 ? plot_w / n : plot_w;
  auto y_of = [&](double v) { return top + plot_h * (1.0 - v / ymax); };

  std::string out = open_svg(width, height, "pdi-bars");
  out += text(left, 24, title, 14);
  out += line(left, top, left, top + plot_h, "#333333", 1);
  out += line(left, top + plot_h, left + plot_w, top + plot_h, "#333333", 1);
  for (int k = 0; k <= 4; ++k) {
    const double v = ymax * k / 4.0;
    out += line(left - 4, y_of(v), left, y_of(v), "#333333", 1);
    out += text(left - 6, y_of(v) + 4, num(v), 10, "end");
  }
  out += text(14, top + plot_h / 2, "PDI (nats)", 11, "middle",
              " transform=\"rotate(-90 14 " + num(top + plot_h / 2) + ")\"");
  out += text(left + plot_w / 2, top + plot_h + 36, "units, ordered by PDI", 11, "middle");

  out += "<g data-role=\"bars\">\n";
  for (int k = 0; k < n; ++k) {
    const UnitScore& u = summary.ranked[k];
    const bool fwd = u.direction == Direction::forward;
    const double y = y_of(u.pdi);
    out += "<rect x=\"" + num(left + k * bar_w) + "\" y=\"" + num(y) + "\" width=\"" +
           num(std::max(bar_w - 1.0, 0.5)) + "\" height=\"" + num(top + plot_h - y) +
           "\" fill=\"" + (fwd ? kForwardColor : kBackwardColor) + "\" data-unit=\"" +
           std::to_string(u.unit) + "\" data-direction=\"" + direction_name(u.direction) +
           "\"><title>unit " + std::to_string(u.unit) + " (" + direction_name(u.direction) +
           "): " + num(u.pdi) + "</title></rect>\n";
  }
  out += "</g>\n";
  const double mx = left + summary.median_index * bar_w;
  out += "<line data-role=\"median\" x1=\"" + num(mx) + "\" y1=\"" + num(top) + "\" x2=\"" +
         num(mx) + "\" y2=\"" + num(top + plot_h) + "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";

  const double lx = left + plot_w - 170;
  out += "<rect x=\"" + num(lx) + "\" y=\"" + num(top + 4) + "\" width=\"10\" height=\"10\" fill=\"" +
         kForwardColor + "\"/>\n";
  out += text(lx + 14, top + 13, "forward", 10);
  out += "<rect x=\"" + num(lx + 70) + "\" y=\"" + num(top + 4) +
         "\" width=\"10\" height=\"10\" fill=\"" + kBackwardColor + "\"/>\n";
  out += text(lx + 84, top + 13, "backward", 10);
  out += text(lx, top + 30,
              "mass " + num(summary.mass) + ", head fwd " + num(summary.head_forwardness), 10);
  out += "</svg>\n";
  return out;
}

std::string activation_strip(const ActivationTrace& trace, std::span<const int> units,
                             const std::string& title) {
  std::vector<int> rows(units.begin(), units.end());
  if (rows.empty()) {
    rows.resize(trace.units());
    std::iota(rows.begin(), rows.end(), 0);
  }
  for (int u : rows) check_unit(trace.values, u);

  const double cell = 28, left = 110, top = 44;
  const int cols = trace.length();
  const int width = static_cast<int>(left + cell * cols + 190);
  const int height = static_cast<int>(top + cell * static_cast<double>(rows.size()) + 20);
  std::string out = open_svg(width, height, "activation-strip");
  out += text(10, 24, title, 14);
  for (int c = 0; c < cols; ++c) {
    out += text(left + cell * c + cell / 2, top - 6, utf8_encode(trace.word[c]), 13, "middle");
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int u = rows[r];
    const double y = top + cell * static_cast<double>(r);
    out += text(10, y + cell / 2 + 4,
                "unit " + std::to_string(u) + " (" +
                    (trace.directions[u] == Direction::forward ? "f" : "b") + ")",
                11);
    for (int c = 0; c < cols; ++c) {
      const double v = trace.values(u, c);
      out += "<rect x=\"" + num(left + cell * c) + "\" y=\"" + num(y) + "\" width=\"" + num(cell) +
             "\" height=\"" + num(cell) + "\" fill=\"" + heat_color(v) +
             "\" stroke=\"#cccccc\"><title>" + num(v) + "</title></rect>\n";
    }
    out += text(left + cell * cols + 8, y + cell / 2 + 4,
                "avg|.| " + num(base_avg_abs(trace.values, u)) + "  mad " +
                    num(base_mad(trace.values, u)),
                11);
  }
  out += "</svg>\n";
  return out;
}

}  // namespace charprobe
