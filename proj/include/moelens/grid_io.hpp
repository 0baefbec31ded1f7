#pragma once

// Text grid format shared by frequency matrices, shared-expert maps and
// diff matrices:
//
//   MOEFREQ v1 layers=<n> experts=<E> key=value ...
//   n lines of E comma-separated cells
//
// Values may not contain whitespace.

#include "moelens/types.hpp"

#include <string>
#include <utility>
#include <vector>

namespace moelens {

struct GridFile {
  std::vector<std::pair<std::string, std::string>> fields;  // after layers/experts, in order
  MatrixD cells;

  /// Value of `key`; throws DataError if absent.
  const std::string& field(const std::string& key) const;
  bool has_field(const std::string& key) const;
};

/// Integer cells are written without a fractional part; real cells use the
/// shortest round-trip decimal form.
std::string format_grid(const GridFile& grid, bool integer_cells);
GridFile parse_grid(const std::string& text);

}  // namespace moelens
