// File output helpers.
#pragma once

#include <filesystem>
#include <string_view>

namespace loadshift {

/// Writes to a sibling temporary file and renames it over `path`, so readers never see
/// a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace loadshift
