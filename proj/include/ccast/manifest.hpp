#pragma once

#include <string>

namespace ccast {

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

/// Write manifest.txt under dir: one `digest  relative-path` line per file,
/// sorted by path; manifest.txt itself is excluded.
void write_manifest(const std::string& dir);

}  // namespace ccast
