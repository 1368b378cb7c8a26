#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace lungcrowd {

/// Lower-case hex SHA-256.
std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

/// Hash of a directory tree: relative paths and file contents, in sorted order.
std::string sha256_tree(const std::filesystem::path& root);

}  // namespace lungcrowd
