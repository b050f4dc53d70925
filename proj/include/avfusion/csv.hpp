#pragma once

#include <string>
#include <vector>

namespace avf {

// Quotes a field when it contains a comma, quote or newline; embedded quotes
// are doubled.
std::string csv_escape(const std::string& field);

// Shortest text that round-trips the double exactly ("%.17g" fallback).
std::string fmt_double(double v);

// Writes rows as CRLF-free CSV, one '\n' per row; all quoting via csv_escape.
void write_csv(const std::string& path, const std::vector<std::vector<std::string>>& rows);

}  // namespace avf
