#pragma once

#include <string>
#include <string_view>

#include "abtm/memory.hpp"

namespace abtm {

/// One-line JSON object, keys ascending. Numbers use the shortest text that
/// reads back to the same double.
std::string sample_to_json(const Sample& sample);

/// Parses a JSON object of numbers. Throws SyntaxError on malformed text and
/// Error(InvalidArgument) on non-numeric values. Booleans are not numbers.
Sample sample_from_json(std::string_view text);

}  // namespace abtm
