#include "sgen/synth.hpp"

#include <array>
#include <vector>

#include "sgen/dataset.hpp"
#include "sgen/io.hpp"
#include "sgen/rng.hpp"

namespace sgen {

namespace {

// 5x7 digit font, one row per entry, 5 low bits used
// hand-tuned so every pair of glyphs differs in at least 12 cells, keeping
// classes separated once pixel noise is added
constexpr std::array<std::array<std::uint8_t, 7>, 10> kFont = {{
    {0b01110, 0b10001, 0b10010, 0b10101, 0b11101, 0b10001, 0b01010}, // 0
    {0b00100, 0b01100, 0b00101, 0b00100, 0b00110, 0b00101, 0b01110}, // 1
    {0b01111, 0b10001, 0b00001, 0b00010, 0b00000, 0b01000, 0b11111}, // 2
    {0b10101, 0b00010, 0b00100, 0b00110, 0b00001, 0b10001, 0b01110}, // 3
    {0b00010, 0b00110, 0b11010, 0b10010, 0b11111, 0b00011, 0b00000}, // 4
    {0b11111, 0b10000, 0b11111, 0b00001, 0b00001, 0b10101, 0b01010}, // 5
    {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b00011, 0b01100}, // 6
    {0b11110, 0b00001, 0b01010, 0b00100, 0b01000, 0b00000, 0b01000}, // 7
    {0b11110, 0b10101, 0b11001, 0b01110, 0b10001, 0b10001, 0b01110}, // 8
    {0b01100, 0b10011, 0b10001, 0b01111, 0b01001, 0b00010, 0b01100}, // 9
}};

constexpr int kScale = 4; // glyph renders 20x28, full frame height

void render(std::uint8_t* img, int label, Rng& rng) {
    // centered glyph (20x28 in a 28x28 frame) with +-1 pixel horizontal
    // jitter; in-class variation comes from the jitter plus pixel flips and
    // per-pixel intensity draws, as with scanner noise
    int dx = 2 + static_cast<int>(rng.below(5));
    int dy = 0;
    for (int y = 0; y < kImageSide; ++y) {
        for (int x = 0; x < kImageSide; ++x) {
            bool fg = false;
            int gy = (y - dy) / kScale, gx = (x - dx) / kScale;
            if (y >= dy && x >= dx && gy < 7 && gx < 5)
                fg = (kFont[label][gy] >> (4 - gx)) & 1u;
            if (rng.uniform() < 0.03) fg = !fg; // salt-and-pepper
            img[y * kImageSide + x] =
                fg ? static_cast<std::uint8_t>(160 + rng.below(96))
                   : static_cast<std::uint8_t>(rng.below(100));
        }
    }
}

void be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void write_split(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, int count, Rng& rng) {
    std::vector<std::uint8_t> images;
    images.reserve(16 + static_cast<std::size_t>(count) * kImageDim);
    be32(images, 0x00000803u);
    be32(images, static_cast<std::uint32_t>(count));
    be32(images, kImageSide);
    be32(images, kImageSide);
    std::vector<std::uint8_t> labels;
    be32(labels, 0x00000801u);
    be32(labels, static_cast<std::uint32_t>(count));

    std::uint8_t img[kImageDim];
    for (int i = 0; i < count; ++i) {
        int label = static_cast<int>(rng.below(10));
        render(img, label, rng);
        images.insert(images.end(), img, img + kImageDim);
        labels.push_back(static_cast<std::uint8_t>(label));
    }
    write_file(images_path, images);
    write_file(labels_path, labels);
}

} // namespace

void write_synthetic_idx(const std::filesystem::path& dir, int train_count, int test_count,
                         std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    Rng train_rng(split_seed(seed, 0));
    Rng test_rng(split_seed(seed, 1));
    write_split(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", train_count,
                train_rng);
    write_split(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", test_count,
                test_rng);
}

} // namespace sgen
