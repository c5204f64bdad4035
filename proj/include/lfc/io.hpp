#pragma once

#include <string>
#include <string_view>

namespace lfc {

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::string& path, std::string_view content);

std::string read_file(const std::string& path);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);

}  // namespace lfc
