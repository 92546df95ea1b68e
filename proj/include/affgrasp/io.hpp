#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace affgrasp {

std::string read_file(const std::filesystem::path& path);

/// Writes to "<path>.tmp" and renames over path, so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace affgrasp
