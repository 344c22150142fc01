#pragma once

#include "regopt/estimators.hpp"
#include "regopt/moments.hpp"

#include <filesystem>

namespace regopt::io {

// Dataset container: magic "RGOPTDS1", little-endian header
// {n u32, m u32, N u64, seed u64, eta f64, generator id 24 bytes}, then the X
// payload (N×n f64 row-major) followed by Y (N×m). See docs/formats.md.
void write_dataset(const std::filesystem::path& path, const PairedDataset& dataset);
PairedDataset read_dataset(const std::filesystem::path& path);

/// Affine map container: magic "RGOPTAM1", {n u64, m u64}, W row-major, b.
void write_affine_map(const std::filesystem::path& path, const AffineMap& map);
AffineMap read_affine_map(const std::filesystem::path& path);

}  // namespace regopt::io
