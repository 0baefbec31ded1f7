#include "moelens/render.hpp"

#include "moelens/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace moelens {

namespace {

Rgb lerp(Rgb a, Rgb b, double t) {
  auto ch = [t](std::uint8_t x, std::uint8_t y) {
    return static_cast<std::uint8_t>(std::lround(x + (static_cast<double>(y) - x) * t));
  };
  return {ch(a.r, b.r), ch(a.g, b.g), ch(a.b, b.b)};
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  if (s.find_first_not_of("-0.") == std::string::npos) s.erase(0, s[0] == '-' ? 1 : 0);
  return s;
}

std::pair<double, double> resolve_range(const HeatmapSpec& spec) {
  if (spec.scale == ColorScale::diverging) {
    const double m = spec.lo && spec.hi ? std::max(std::abs(*spec.lo), std::abs(*spec.hi))
                                        : spec.grid.cwiseAbs().maxCoeff();
    return {-m, m};
  }
  const double lo = spec.lo.value_or(std::min(0.0, spec.grid.minCoeff()));
  const double hi = spec.hi.value_or(spec.grid.maxCoeff());
  return {lo, hi};
}

}  // namespace

Rgb scale_color(double value, ColorScale scale, double lo, double hi) {
  if (scale == ColorScale::sequential) {
    const double t = hi > lo ? std::clamp((value - lo) / (hi - lo), 0.0, 1.0) : 0.0;
    return lerp(kSequentialLow, kSequentialHigh, t);
  }
  const double m = std::max(std::abs(lo), std::abs(hi));
  if (value == 0.0 || m == 0.0) return kDivergingNeutral;
  const double t = std::min(std::abs(value) / m, 1.0);
  return lerp(kDivergingNeutral, value > 0 ? kDivergingPositive : kDivergingNegative, t);
}

std::string to_hex(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

std::string heatmap_svg(const HeatmapSpec& spec) {
  const Eigen::Index rows = spec.grid.rows(), cols = spec.grid.cols();
  if (rows == 0 || cols == 0) throw DataError("heatmap: empty grid");
  if (!spec.grid.allFinite()) throw DataError("heatmap: grid contains non-finite values");
  if (spec.cell_width < 1 || spec.cell_height < 1) throw DataError("heatmap: cell size must be >= 1");
  const auto [lo, hi] = resolve_range(spec);

  const int left = spec.row_labels.empty() ? 56 : 72, top = 40, legend_w = 16, legend_gap = 24;
  const int plot_w = static_cast<int>(cols) * spec.cell_width, plot_h = static_cast<int>(rows) * spec.cell_height;
  const int bottom = spec.col_labels.empty() ? 40 : 56;
  const int width = left + plot_w + legend_gap + legend_w + 72, height = top + plot_h + bottom;

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << " " << height << "\" font-family=\"sans-serif\">\n";
  os << "<rect class=\"background\" x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
     << "\" fill=\"#ffffff\"/>\n";
  if (!spec.title.empty())
    os << "<text class=\"title\" x=\"" << left + plot_w / 2 << "\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">"
       << escape(spec.title) << "</text>\n";

  os << "<g class=\"cells\" shape-rendering=\"crispEdges\">\n";
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double v = spec.grid(r, c);
      os << "<rect class=\"cell\" x=\"" << left + c * spec.cell_width << "\" y=\"" << top + r * spec.cell_height
         << "\" width=\"" << spec.cell_width << "\" height=\"" << spec.cell_height << "\" fill=\""
         << to_hex(scale_color(v, spec.scale, lo, hi)) << "\"/>\n";
    }
  }
  os << "</g>\n";

  if (spec.annotate) {
    os << "<g class=\"values\" font-size=\"11\" text-anchor=\"middle\">\n";
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        os << "<text x=\"" << left + c * spec.cell_width + spec.cell_width / 2 << "\" y=\""
           << top + r * spec.cell_height + spec.cell_height / 2 + 4 << "\">" << fixed(spec.grid(r, c), 3)
           << "</text>\n";
      }
    }
    os << "</g>\n";
  }

  // Axes.
  os << "<g class=\"axes\" font-size=\"10\">\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
     << top + plot_h << "\" stroke=\"#000000\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
     << "\" stroke=\"#000000\"/>\n";
  if (!spec.row_labels.empty()) {
    for (Eigen::Index r = 0; r < rows && r < static_cast<Eigen::Index>(spec.row_labels.size()); ++r)
      os << "<text x=\"" << left - 4 << "\" y=\"" << top + r * spec.cell_height + spec.cell_height / 2 + 4
         << "\" text-anchor=\"end\">" << escape(spec.row_labels[r]) << "</text>\n";
  } else {
    const Eigen::Index step = std::max<Eigen::Index>(1, (rows + 7) / 8);
    for (Eigen::Index r = 0; r < rows; r += step)
      os << "<text x=\"" << left - 4 << "\" y=\"" << top + r * spec.cell_height + spec.cell_height / 2 + 4
         << "\" text-anchor=\"end\">" << r << "</text>\n";
  }
  if (!spec.col_labels.empty()) {
    for (Eigen::Index c = 0; c < cols && c < static_cast<Eigen::Index>(spec.col_labels.size()); ++c)
      os << "<text x=\"" << left + c * spec.cell_width + spec.cell_width / 2 << "\" y=\"" << top + plot_h + 14
         << "\" text-anchor=\"middle\">" << escape(spec.col_labels[c]) << "</text>\n";
  } else {
    const Eigen::Index step = std::max<Eigen::Index>(1, (cols + 7) / 8);
    for (Eigen::Index c = 0; c < cols; c += step)
      os << "<text x=\"" << left + c * spec.cell_width << "\" y=\"" << top + plot_h + 14
         << "\" text-anchor=\"start\">" << c << "</text>\n";
  }
  os << "<text class=\"x-label\" x=\"" << left + plot_w / 2 << "\" y=\"" << height - 8
     << "\" text-anchor=\"middle\">" << escape(spec.x_label) << "</text>\n";
  os << "<text class=\"y-label\" x=\"14\" y=\"" << top + plot_h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
     << top + plot_h / 2 << ")\">" << escape(spec.y_label) << "</text>\n";
  os << "</g>\n";

  // Legend: 32 stops from hi (top) to lo (bottom).
  const int lx = left + plot_w + legend_gap, steps = 32;
  const double stop_h = static_cast<double>(plot_h) / steps;
  os << "<g class=\"legend\" font-size=\"10\">\n";
  for (int s = 0; s < steps; ++s) {
    const double v = hi - (hi - lo) * (s + 0.5) / steps;
    os << "<rect class=\"legend-stop\" x=\"" << lx << "\" y=\"" << fixed(top + s * stop_h, 2) << "\" width=\""
       << legend_w << "\" height=\"" << fixed(stop_h, 2) << "\" fill=\"" << to_hex(scale_color(v, spec.scale, lo, hi))
       << "\"/>\n";
  }
  os << "<text x=\"" << lx + legend_w + 4 << "\" y=\"" << top + 8 << "\">" << fixed(hi, 3) << "</text>\n";
  os << "<text x=\"" << lx + legend_w + 4 << "\" y=\"" << top + plot_h << "\">" << fixed(lo, 3) << "</text>\n";
  os << "</g>\n";
  os << "</svg>\n";
  return os.str();
}

void render_heatmap(const HeatmapSpec& spec, const std::filesystem::path& out) { write_text_file(out, heatmap_svg(spec)); }

std::vector<std::filesystem::path> render_similarity(const SimilarityReport& report,
                                                     const std::filesystem::path& out_dir) {
  const auto n = static_cast<Eigen::Index>(report.language_tags.size());
  if (n < 1 || report.euclidean.rows() != n || report.kl.rows() != n || report.pearson.rows() != n)
    throw DataError("render_similarity: report grids do not match its language list");
  struct Panel {
    const char* file;
    const char* title;
    const MatrixD* grid;
    ColorScale scale;
    std::optional<double> lo, hi;
  };
  const Panel panels[] = {
      {"euclidean.svg", "Euclidean distance", &report.euclidean, ColorScale::sequential, 0.0, std::nullopt},
      {"kl.svg", "KL divergence (row || column), summed over layers", &report.kl, ColorScale::sequential, 0.0,
       std::nullopt},
      {"pearson.svg", "Pearson correlation, mean over layers", &report.pearson, ColorScale::diverging, -1.0, 1.0},
  };
  std::vector<std::filesystem::path> written;
  for (const auto& p : panels) {
    HeatmapSpec spec;
    spec.grid = *p.grid;
    spec.scale = p.scale;
    spec.lo = p.lo;
    spec.hi = p.hi;
    spec.title = p.title;
    spec.x_label = "language";
    spec.y_label = "language";
    spec.cell_width = 56;
    spec.cell_height = 56;
    spec.annotate = true;
    spec.row_labels = report.language_tags;
    spec.col_labels = report.language_tags;
    const auto path = out_dir / p.file;
    render_heatmap(spec, path);
    written.push_back(path);
  }
  return written;
}

HeatmapSpec frequency_heatmap(const FrequencyMatrix& freq) {
  HeatmapSpec spec;
  spec.grid = freq.frequencies();
  spec.lo = 0.0;
  spec.hi = std::max(spec.grid.maxCoeff(), 1e-12);
  spec.title = "Expert activation frequency: " + freq.model_id + " / " + freq.language_tag;
  return spec;
}

HeatmapSpec diff_heatmap(const DiffMatrix& diff) {
  HeatmapSpec spec;
  spec.grid = diff.values;
  spec.scale = ColorScale::diverging;
  spec.title = "Frequency change: " + diff.tuned_model + " - " + diff.base_model + " / " + diff.language_tag;
  return spec;
}

HeatmapSpec shared_heatmap(const SharedExpertMap& map) {
  HeatmapSpec spec;
  spec.grid = map.counts.cast<double>();
  spec.lo = 0.0;
  spec.hi = std::max(1, map.n_languages);
  spec.title = "Languages with frequency >= " + format_real(map.tau);
  return spec;
}

}  // namespace moelens
