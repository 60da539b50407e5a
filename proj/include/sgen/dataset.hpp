#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "sgen/errors.hpp"

namespace sgen {

inline constexpr int kImageSide = 28;
inline constexpr int kImageDim = kImageSide * kImageSide; // 784
inline constexpr int kNumClasses = 10;

// Gray images, one column per image, pixels in [0,1], row-major flattened.
struct RawImageSet {
    Eigen::MatrixXd pixels; // kImageDim x count
    int count() const { return static_cast<int>(pixels.cols()); }
};

// Binarized images (entries exactly 0 or 1), optionally labeled.
struct BinaryDataset {
    Eigen::MatrixXd images; // kImageDim x count
    std::vector<int> labels; // empty when unlabeled
    int count() const { return static_cast<int>(images.cols()); }
    bool has_labels() const { return !labels.empty(); }
    BinaryDataset subset(const std::vector<int>& indices, bool keep_labels) const;
};

struct ScenarioSplit {
    BinaryDataset labeled;   // with labels
    BinaryDataset unlabeled; // without labels
    std::uint64_t seed = 0;
    int total = 0;
    std::vector<int> labeled_indices;   // into the original training pool
    std::vector<int> unlabeled_indices; // disjoint from labeled_indices
};

// IDX container parsing (MNIST layout: big-endian magic + dims, byte payload)
RawImageSet parse_idx_images(const std::vector<std::uint8_t>& bytes);
std::vector<int> parse_idx_labels(const std::vector<std::uint8_t>& bytes);

// pixel > 0.5 -> 1, else 0
BinaryDataset binarize(const RawImageSet& raw);

// Draw `total` distinct indices from `train` under `seed`, then a stratified
// labeled subset of labeled_count/10 per class. Resamples the pool up to 100
// times if a class is underrepresented.
ScenarioSplit make_scenario(const BinaryDataset& train, int total, int labeled_count,
                            std::uint64_t seed);

// JSON manifest so a split can be reconstructed bit-exactly.
void save_scenario_manifest(const ScenarioSplit& split, const std::filesystem::path& path);
ScenarioSplit load_scenario_from_manifest(const BinaryDataset& train,
                                          const std::filesystem::path& path);

// Internal binarized dataset store ("SGEN-BDS": bit-packed images + labels).
void save_dataset(const BinaryDataset& ds, const std::filesystem::path& path);
BinaryDataset load_dataset(const std::filesystem::path& path);

} // namespace sgen
