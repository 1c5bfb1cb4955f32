#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace risk::csv {

// Splits one comma-separated record. Double-quoted fields may contain commas
// and "" escapes; embedded newlines are not supported.
std::vector<std::string> split(std::string_view line);

// Reads the next non-empty line, stripping a trailing '\r'. Returns false at EOF.
bool next_line(std::istream& in, std::string& line);

// Shortest representation that parses back to the identical double.
std::string format(double v);

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

std::string quote_if_needed(std::string_view s);

}  // namespace risk::csv
