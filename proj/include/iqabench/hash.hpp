#pragma once

#include <string>
#include <string_view>

namespace iqa {

// Hex-encoded SHA-256 of a byte string.
std::string sha256_hex(std::string_view data);

// Hex-encoded SHA-256 of a file's contents. Throws iqa::Error if the file
// cannot be read.
std::string sha256_file_hex(const std::string& path);

}  // namespace iqa
