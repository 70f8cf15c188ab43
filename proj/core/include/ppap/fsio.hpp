#pragma once

#include <string>

namespace ppap {

// whole-file read; throws std::runtime_error when unreadable
std::string read_file(const std::string& path);

// temp-file + rename so partial writes never masquerade as complete output
void write_file_atomic(const std::string& path, const std::string& bytes);

// standard CRC-32 (reflected, poly 0xEDB88320)
std::uint32_t crc32(const unsigned char* data, std::size_t len);

} // namespace ppap
