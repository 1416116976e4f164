#pragma once

#include <cstdint>
#include <string>

namespace fade {

// shortest text that reloads to the same double (%.17g)
std::string format_g17(double v);

std::string read_text_file(const std::string& path);  // CheckpointError{io} on failure

// write to <path>.tmp then rename, so readers never observe partial files
void write_text_file_atomic(const std::string& path, const std::string& content);

std::uint64_t fnv1a64(const std::string& bytes);
std::string to_hex64(std::uint64_t v);

}  // namespace fade
