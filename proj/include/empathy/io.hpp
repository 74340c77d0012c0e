#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace empathy {

/// Writes `content` to a sibling temp file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// Current UTC time, ISO-8601 with second precision.
std::string utc_timestamp();

}  // namespace empathy
