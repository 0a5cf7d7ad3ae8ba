#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace resmotion::util {

// 64-bit FNV-1a; stable across platforms, used for config hashes.
std::uint64_t fnv1a64(std::string_view bytes);

// Git blob object id: sha1("blob <size>\0" + content), lowercase hex.
std::string git_blob_hash(std::string_view content);
std::string git_blob_hash_file(const std::filesystem::path& path);

// Git blob hash of the raw little-endian bytes of a double array.
std::string hash_doubles(std::span<const double> values);

std::string hex64(std::uint64_t value);

}  // namespace resmotion::util
