#pragma once

#include <cstdint>
#include <filesystem>

namespace sgen {

// Writes a synthetic digit dataset in the exact IDX container layout
// (images magic 0x803, labels magic 0x801, 28x28 byte pixels). Glyphs are a
// scaled 5x7 digit font with random offsets and pixel noise, so classes are
// learnable by the generative models but the files remain a drop-in stand-in
// when the real MNIST files are not on disk.
void write_synthetic_idx(const std::filesystem::path& dir, int train_count, int test_count,
                         std::uint64_t seed);

} // namespace sgen
