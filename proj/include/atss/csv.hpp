#pragma once

#include "atss/matrix.hpp"

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace atss::csv {

/// Shortest-ish lossless text for a double (17 significant digits, %g style).
std::string format_double(double v);

/// Appends a header line followed by one comma-separated line per row.
void append_block(std::string& out, std::string_view header, const Matrix& m);

/// Splits text made of append_block output back into named matrices.
/// A header line is any line whose first character is not part of a number.
std::vector<std::pair<std::string, Matrix>> parse_blocks(std::string_view text);

}  // namespace atss::csv
