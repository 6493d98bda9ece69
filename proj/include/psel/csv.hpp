#pragma once

#include <string>
#include <vector>

#include "psel/model.hpp"

namespace psel {

/// Shortest decimal that parses back to the same double. NaN prints "nan".
std::string format_double(double value);

using CsvRow = std::vector<std::string>;

/// Comma-separated, '\n' line endings, header first.
std::string render_csv(const CsvRow& header, const std::vector<CsvRow>& rows);

void write_text_file(const std::string& path, const std::string& contents);

/// One column per population with header pop_1..pop_M. Throws InvalidArgument
/// on malformed input.
ObservationSet parse_observations_csv(const std::string& text);
ObservationSet read_observations_csv(const std::string& path);

}  // namespace psel
