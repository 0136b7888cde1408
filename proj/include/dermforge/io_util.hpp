#pragma once

#include <string>

namespace dermforge {

// Writes via a sibling temp file and renames into place, so readers never see
// a partially written artifact.
void atomic_write_file(const std::string& path, const std::string& contents);
void atomic_write_file(const std::string& path, const void* data, size_t size);

std::string read_file(const std::string& path);

}  // namespace dermforge
