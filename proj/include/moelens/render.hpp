#pragma once

#include "moelens/analysis.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace moelens {

enum class ColorScale {
  sequential,  // white (low) -> dark red (high)
  diverging,   // blue (negative) -> white (0) -> red (positive)
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kSequentialLow{255, 255, 255};
inline constexpr Rgb kSequentialHigh{103, 0, 13};
inline constexpr Rgb kDivergingNegative{33, 102, 172};
inline constexpr Rgb kDivergingNeutral{255, 255, 255};
inline constexpr Rgb kDivergingPositive{178, 24, 43};

/// Sequential: linear over [lo, hi] (values clamped; lo == hi maps to the
/// low color). Diverging: |v| / max(|lo|, |hi|) toward red or blue, so 0 is
/// exactly the neutral color and v, -v sit at mirrored stops.
Rgb scale_color(double value, ColorScale scale, double lo, double hi);
std::string to_hex(Rgb c);

struct HeatmapSpec {
  MatrixD grid;
  ColorScale scale = ColorScale::sequential;
  std::optional<double> lo, hi;  // default: sequential [min(0, min), max]; diverging symmetric max |v|
  std::string title;
  std::string x_label = "expert";
  std::string y_label = "layer";
  int cell_width = 4;
  int cell_height = 12;
  bool annotate = false;  // print values inside cells
  std::vector<std::string> row_labels, col_labels;
};

/// SVG text with one <rect class="cell"> per grid entry, row-major, plus
/// title, axis labels and a legend bar.
std::string heatmap_svg(const HeatmapSpec& spec);
void render_heatmap(const HeatmapSpec& spec, const std::filesystem::path& out);

/// Writes euclidean.svg, kl.svg and pearson.svg into `out_dir`, values
/// printed in each cell. Returns the written paths.
std::vector<std::filesystem::path> render_similarity(const SimilarityReport& report,
                                                     const std::filesystem::path& out_dir);

HeatmapSpec frequency_heatmap(const FrequencyMatrix& freq);
HeatmapSpec diff_heatmap(const DiffMatrix& diff);
HeatmapSpec shared_heatmap(const SharedExpertMap& map);

}  // namespace moelens
