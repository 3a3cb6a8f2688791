// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace fad {

/// Writes via a temp file in the same directory plus rename, so readers only
/// ever observe complete artifacts.
void atomic_write_file(const std::filesystem::path& path, const std::string& bytes);

std::string read_file(const std::filesystem::path& path);

/// FNV-1a 64-bit content hash used for artifact fingerprints in run.json.
uint64_t fnv1a64_bytes(const void* data, size_t n);
std::string hex64(uint64_t v);

}  // namespace fad
