#include "moelens/grid_io.hpp"

#include "moelens/io.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace moelens {

const std::string& GridFile::field(const std::string& key) const {
  for (const auto& [k, v] : fields) {
    if (k == key) return v;
  }
  throw DataError("grid header is missing field '" + key + "'");
}

bool GridFile::has_field(const std::string& key) const {
  for (const auto& f : fields) {
    if (f.first == key) return true;
  }
  return false;
}

std::string format_grid(const GridFile& grid, bool integer_cells) {
  std::string out = "MOEFREQ v1 layers=" + std::to_string(grid.cells.rows()) +
                    " experts=" + std::to_string(grid.cells.cols());
  for (const auto& [k, v] : grid.fields) {
    if (k.empty() || v.empty() || k.find_first_of(" \t\n=") != std::string::npos ||
        v.find_first_of(" \t\n") != std::string::npos)
      throw DataError("grid header field '" + k + "=" + v + "' must be non-empty and free of whitespace");
    out += " " + k + "=" + v;
  }
  out += "\n";
  for (Eigen::Index r = 0; r < grid.cells.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.cells.cols(); ++c) {
      if (c) out += ",";
      const double v = grid.cells(r, c);
      if (!std::isfinite(v)) throw DataError("grid cell is not finite");
      out += integer_cells ? std::to_string(static_cast<long long>(std::llround(v))) : format_real(v);
    }
    out += "\n";
  }
  return out;
}

GridFile parse_grid(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw DataError("grid: empty file");
  std::istringstream hs(header);
  std::string magic, version;
  hs >> magic >> version;
  if (magic != "MOEFREQ" || version != "v1") throw DataError("grid: bad header magic (expected 'MOEFREQ v1')");

  GridFile grid;
  long long rows = -1, cols = -1;
  std::string token;
  while (hs >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos || eq == 0) throw DataError("grid: malformed header field '" + token + "'");
    std::string key = token.substr(0, eq), value = token.substr(eq + 1);
    try {
      if (key == "layers") {
        rows = std::stoll(value);
        continue;
      }
      if (key == "experts") {
        cols = std::stoll(value);
        continue;
      }
    } catch (const std::exception&) {
      throw DataError("grid: bad dimension '" + token + "'");
    }
    grid.fields.emplace_back(std::move(key), std::move(value));
  }
  if (rows < 1 || cols < 1) throw DataError("grid: header must declare layers and experts >= 1");

  grid.cells.resize(rows, cols);
  std::string line;
  for (long long r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) throw DataError("grid: expected " + std::to_string(rows) + " rows, got " +
                                                 std::to_string(r));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    long long c = 0;
    size_t start = 0;
    while (true) {
      const size_t end = line.find(',', start);
      const std::string cell = line.substr(start, end == std::string::npos ? std::string::npos : end - start);
      if (c >= cols) throw DataError("grid: row " + std::to_string(r) + " has too many cells");
      double v = 0;
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || p != cell.data() + cell.size() || !std::isfinite(v))
        throw DataError("grid: row " + std::to_string(r) + " cell " + std::to_string(c) + " is not a number: '" +
                        cell + "'");
      grid.cells(r, c++) = v;
      if (end == std::string::npos) break;
      start = end + 1;
    }
    if (c != cols) throw DataError("grid: row " + std::to_string(r) + " has " + std::to_string(c) +
                                   " cells, expected " + std::to_string(cols));
  }
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) throw DataError("grid: trailing data after rows");
  }
  return grid;
}

}  // namespace moelens
