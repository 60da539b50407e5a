#include <doctest.h>

#include <filesystem>
#include <set>

#include "sgen/dataset.hpp"
#include "sgen/io.hpp"
#include "sgen/synth.hpp"

using namespace sgen;

namespace {

void be32_push(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(static_cast<std::uint8_t>(x >> 24));
    v.push_back(static_cast<std::uint8_t>(x >> 16));
    v.push_back(static_cast<std::uint8_t>(x >> 8));
    v.push_back(static_cast<std::uint8_t>(x));
}

std::vector<std::uint8_t> idx_images(int count, std::uint8_t fill = 0) {
    std::vector<std::uint8_t> bytes;
    be32_push(bytes, 0x803);
    be32_push(bytes, static_cast<std::uint32_t>(count));
    be32_push(bytes, 28);
    be32_push(bytes, 28);
    bytes.insert(bytes.end(), static_cast<std::size_t>(count) * kImageDim, fill);
    return bytes;
}

std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels) {
    std::vector<std::uint8_t> bytes;
    be32_push(bytes, 0x801);
    be32_push(bytes, static_cast<std::uint32_t>(labels.size()));
    bytes.insert(bytes.end(), labels.begin(), labels.end());
    return bytes;
}

} // namespace

TEST_CASE("parse_idx_images maps bytes to [0,1] in file order") {
    auto bytes = idx_images(2);
    bytes[16] = 255; // first pixel of image 0
    bytes[16 + kImageDim] = 51; // first pixel of image 1
    RawImageSet set = parse_idx_images(bytes);
    CHECK(set.count() == 2);
    CHECK(set.pixels(0, 0) == doctest::Approx(1.0));
    CHECK(set.pixels(0, 1) == doctest::Approx(0.2));
    CHECK(set.pixels(1, 0) == 0.0);
}

TEST_CASE("parse_idx_images: empty file is valid") {
    RawImageSet set = parse_idx_images(idx_images(0));
    CHECK(set.count() == 0);
}

TEST_CASE("parse_idx_images error paths") {
    auto bad_magic = idx_images(1);
    bad_magic[3] = 0x01;
    CHECK_THROWS_AS(parse_idx_images(bad_magic), BadMagic);

    auto truncated = idx_images(2);
    truncated.pop_back();
    CHECK_THROWS_AS(parse_idx_images(truncated), TruncatedPayload);

    auto extra = idx_images(2);
    extra.push_back(0);
    CHECK_THROWS_AS(parse_idx_images(extra), TruncatedPayload);

    std::vector<std::uint8_t> wrong_shape;
    be32_push(wrong_shape, 0x803);
    be32_push(wrong_shape, 1);
    be32_push(wrong_shape, 14);
    be32_push(wrong_shape, 28);
    wrong_shape.insert(wrong_shape.end(), 14 * 28, 0);
    CHECK_THROWS_AS(parse_idx_images(wrong_shape), UnsupportedShape);
}

TEST_CASE("parse_idx_labels") {
    auto labels = parse_idx_labels(idx_labels({0, 9, 3}));
    CHECK(labels == std::vector<int>{0, 9, 3});

    CHECK(parse_idx_labels(idx_labels({})).empty());

    CHECK_THROWS_AS(parse_idx_labels(idx_labels({0x0B})), LabelOutOfRange);

    auto bad = idx_labels({1});
    bad[3] = 0x03;
    CHECK_THROWS_AS(parse_idx_labels(bad), BadMagic);
}

TEST_CASE("binarize uses a strict 0.5 threshold") {
    RawImageSet raw;
    raw.pixels = Eigen::MatrixXd::Zero(kImageDim, 1);
    raw.pixels(0, 0) = 0.6;
    raw.pixels(1, 0) = 0.5; // exactly 0.5 stays 0
    raw.pixels(2, 0) = 0.500001;
    BinaryDataset ds = binarize(raw);
    CHECK(ds.images(0, 0) == 1.0);
    CHECK(ds.images(1, 0) == 0.0);
    CHECK(ds.images(2, 0) == 1.0);
    CHECK(ds.images.col(0).sum() == 2.0);
}

TEST_CASE("binarize is idempotent") {
    RawImageSet raw;
    raw.pixels = Eigen::MatrixXd::Random(kImageDim, 5).cwiseAbs();
    raw.pixels = raw.pixels.cwiseMin(1.0);
    BinaryDataset once = binarize(raw);
    RawImageSet again;
    again.pixels = once.images;
    BinaryDataset twice = binarize(again);
    CHECK(once.images == twice.images);
}

namespace {
BinaryDataset toy_pool(int count) {
    BinaryDataset ds;
    ds.images = Eigen::MatrixXd::Zero(kImageDim, count);
    ds.labels.resize(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        ds.labels[static_cast<std::size_t>(i)] = i % 10;
        ds.images(i % kImageDim, i) = 1.0; // give samples distinct content
    }
    return ds;
}
} // namespace

TEST_CASE("make_scenario: stratified labeled subset, disjoint indices") {
    BinaryDataset pool = toy_pool(1000);
    ScenarioSplit split = make_scenario(pool, 100, 10, 123);
    CHECK(split.labeled.count() == 10);
    CHECK(split.unlabeled.count() == 90);
    // one sample per class
    std::set<int> classes(split.labeled.labels.begin(), split.labeled.labels.end());
    CHECK(classes.size() == 10);
    // disjoint index sets covering `total`
    std::set<int> all(split.labeled_indices.begin(), split.labeled_indices.end());
    all.insert(split.unlabeled_indices.begin(), split.unlabeled_indices.end());
    CHECK(all.size() == 100);
}

TEST_CASE("make_scenario: boundary total == labeled_count") {
    BinaryDataset pool = toy_pool(10); // one sample per class
    ScenarioSplit split = make_scenario(pool, 10, 10, 5);
    CHECK(split.labeled.count() == 10);
    CHECK(split.unlabeled.count() == 0);
}

TEST_CASE("make_scenario: deterministic per seed") {
    BinaryDataset pool = toy_pool(500);
    ScenarioSplit a = make_scenario(pool, 100, 10, 77);
    ScenarioSplit b = make_scenario(pool, 100, 10, 77);
    CHECK(a.labeled_indices == b.labeled_indices);
    CHECK(a.unlabeled_indices == b.unlabeled_indices);
    ScenarioSplit c = make_scenario(pool, 100, 10, 78);
    CHECK(a.labeled_indices != c.labeled_indices);
}

TEST_CASE("make_scenario rejects bad counts") {
    BinaryDataset pool = toy_pool(100);
    CHECK_THROWS_AS(make_scenario(pool, 5, 10, 1), InvalidCounts);
    CHECK_THROWS_AS(make_scenario(pool, 50, 15, 1), InvalidCounts);
    CHECK_THROWS_AS(make_scenario(pool, 1000, 10, 1), InvalidCounts);
}

TEST_CASE("make_scenario fails after bounded retries when a class is missing") {
    BinaryDataset pool = toy_pool(100);
    for (auto& l : pool.labels) l = l % 9; // class 9 never occurs
    CHECK_THROWS_AS(make_scenario(pool, 50, 10, 1), InsufficientClassSamples);
}

TEST_CASE("scenario manifest round-trips the split exactly") {
    BinaryDataset pool = toy_pool(300);
    ScenarioSplit split = make_scenario(pool, 60, 10, 9);
    auto path = std::filesystem::temp_directory_path() / "sgen_test_manifest.json";
    save_scenario_manifest(split, path);
    ScenarioSplit loaded = load_scenario_from_manifest(pool, path);
    CHECK(loaded.labeled_indices == split.labeled_indices);
    CHECK(loaded.unlabeled_indices == split.unlabeled_indices);
    CHECK(loaded.labeled.images == split.labeled.images);
    std::filesystem::remove(path);
}

TEST_CASE("dataset store round-trips images and labels") {
    BinaryDataset ds = toy_pool(17);
    auto path = std::filesystem::temp_directory_path() / "sgen_test_store.bds";
    save_dataset(ds, path);
    BinaryDataset loaded = load_dataset(path);
    CHECK(loaded.images == ds.images);
    CHECK(loaded.labels == ds.labels);
    std::filesystem::remove(path);
}

TEST_CASE("synthetic IDX files parse with the declared counts") {
    auto dir = std::filesystem::temp_directory_path() / "sgen_test_synth";
    write_synthetic_idx(dir, 200, 50, 11);
    RawImageSet train = parse_idx_images(read_file(dir / "train-images-idx3-ubyte"));
    auto labels = parse_idx_labels(read_file(dir / "train-labels-idx1-ubyte"));
    CHECK(train.count() == 200);
    CHECK(labels.size() == 200);
    RawImageSet test = parse_idx_images(read_file(dir / "t10k-images-idx3-ubyte"));
    CHECK(test.count() == 50);
    // binarized images are non-trivial
    BinaryDataset ds = binarize(train);
    CHECK(ds.images.col(0).sum() > 0.0);
    CHECK(ds.images.col(0).sum() < kImageDim);
    std::filesystem::remove_all(dir);
}
