#include "sgen/dataset.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "sgen/io.hpp"
#include "sgen/rng.hpp"

namespace sgen {

namespace {

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off) {
    if (off + 4 > b.size()) throw TruncatedPayload("IDX header truncated");
    return (static_cast<std::uint32_t>(b[off]) << 24) |
           (static_cast<std::uint32_t>(b[off + 1]) << 16) |
           (static_cast<std::uint32_t>(b[off + 2]) << 8) |
           static_cast<std::uint32_t>(b[off + 3]);
}

} // namespace

RawImageSet parse_idx_images(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || be32(bytes, 0) != 0x00000803u)
        throw BadMagic("IDX image magic must be 0x00000803");
    std::uint32_t count = be32(bytes, 4);
    std::uint32_t rows = be32(bytes, 8);
    std::uint32_t cols = be32(bytes, 12);
    if (rows != kImageSide || cols != kImageSide)
        throw UnsupportedShape("expected 28x28 images, got " + std::to_string(rows) + "x" +
                               std::to_string(cols));
    std::size_t expected = 16 + static_cast<std::size_t>(count) * rows * cols;
    if (bytes.size() != expected)
        throw TruncatedPayload("IDX image payload length mismatch: have " +
                               std::to_string(bytes.size()) + ", want " +
                               std::to_string(expected));
    RawImageSet set;
    set.pixels.resize(kImageDim, count);
    const std::uint8_t* p = bytes.data() + 16;
    for (std::uint32_t i = 0; i < count; ++i)
        for (int j = 0; j < kImageDim; ++j)
            set.pixels(j, i) = static_cast<double>(*p++) / 255.0;
    return set;
}

std::vector<int> parse_idx_labels(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || be32(bytes, 0) != 0x00000801u)
        throw BadMagic("IDX label magic must be 0x00000801");
    std::uint32_t count = be32(bytes, 4);
    if (bytes.size() != 8 + static_cast<std::size_t>(count))
        throw TruncatedPayload("IDX label payload length mismatch");
    std::vector<int> labels(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint8_t v = bytes[8 + i];
        if (v > 9) throw LabelOutOfRange("label byte " + std::to_string(int(v)) + " at " +
                                         std::to_string(i));
        labels[i] = v;
    }
    return labels;
}

BinaryDataset binarize(const RawImageSet& raw) {
    BinaryDataset ds;
    ds.images = (raw.pixels.array() > 0.5).cast<double>();
    return ds;
}

BinaryDataset BinaryDataset::subset(const std::vector<int>& indices, bool keep_labels) const {
    BinaryDataset out;
    out.images.resize(images.rows(), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i)
        out.images.col(static_cast<Eigen::Index>(i)) = images.col(indices[i]);
    if (keep_labels) {
        if (!has_labels()) throw InvalidCounts("subset with labels from an unlabeled dataset");
        out.labels.reserve(indices.size());
        for (int idx : indices) out.labels.push_back(labels[idx]);
    }
    return out;
}

ScenarioSplit make_scenario(const BinaryDataset& train, int total, int labeled_count,
                            std::uint64_t seed) {
    if (labeled_count <= 0 || total <= 0 || labeled_count > total || labeled_count % 10 != 0)
        throw InvalidCounts("need 0 < labeled_count <= total, labeled_count divisible by 10");
    if (total > train.count()) throw InvalidCounts("total exceeds training pool size");
    if (!train.has_labels()) throw InvalidCounts("training pool must be labeled");

    const int per_class = labeled_count / kNumClasses;
    constexpr int kMaxRetries = 100;

    for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
        Rng rng(split_seed(seed, static_cast<std::uint64_t>(attempt)));
        // sample `total` distinct indices: partial Fisher-Yates over the pool
        std::vector<int> pool(train.count());
        for (int i = 0; i < train.count(); ++i) pool[i] = i;
        for (int i = 0; i < total; ++i) {
            int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(pool.size() - i)));
            std::swap(pool[i], pool[j]);
        }
        std::vector<int> selected(pool.begin(), pool.begin() + total);

        std::vector<std::vector<int>> by_class(kNumClasses);
        for (int idx : selected) by_class[train.labels[idx]].push_back(idx);
        bool feasible = true;
        for (const auto& c : by_class)
            if (static_cast<int>(c.size()) < per_class) feasible = false;
        if (!feasible) {
            if (attempt == kMaxRetries)
                throw InsufficientClassSamples(
                    "could not stratify the labeled subset after 100 resamples");
            continue;
        }

        ScenarioSplit split;
        split.seed = seed;
        split.total = total;
        for (int c = 0; c < kNumClasses; ++c) {
            // uniform choice among the class members of the selected pool
            auto& members = by_class[c];
            for (int k = 0; k < per_class; ++k) {
                int j = k + static_cast<int>(
                                rng.below(static_cast<std::uint64_t>(members.size() - k)));
                std::swap(members[k], members[j]);
                split.labeled_indices.push_back(members[k]);
            }
        }
        std::sort(split.labeled_indices.begin(), split.labeled_indices.end());
        std::vector<int> sorted_sel = selected;
        std::sort(sorted_sel.begin(), sorted_sel.end());
        std::set_difference(sorted_sel.begin(), sorted_sel.end(), split.labeled_indices.begin(),
                            split.labeled_indices.end(),
                            std::back_inserter(split.unlabeled_indices));
        split.labeled = train.subset(split.labeled_indices, true);
        split.unlabeled = train.subset(split.unlabeled_indices, false);
        return split;
    }
    throw InsufficientClassSamples("unreachable");
}

void save_scenario_manifest(const ScenarioSplit& split, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format"] = "sgen-scenario-manifest";
    j["version"] = 1;
    j["seed"] = split.seed;
    j["total"] = split.total;
    j["labeled_count"] = split.labeled_indices.size();
    j["labeled_indices"] = split.labeled_indices;
    j["unlabeled_indices"] = split.unlabeled_indices;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

ScenarioSplit load_scenario_from_manifest(const BinaryDataset& train,
                                          const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    if (j.value("format", "") != "sgen-scenario-manifest")
        throw FormatError("not a scenario manifest: " + path.string());
    ScenarioSplit split;
    split.seed = j.at("seed").get<std::uint64_t>();
    split.total = j.at("total").get<int>();
    split.labeled_indices = j.at("labeled_indices").get<std::vector<int>>();
    split.unlabeled_indices = j.at("unlabeled_indices").get<std::vector<int>>();
    split.labeled = train.subset(split.labeled_indices, true);
    split.unlabeled = train.subset(split.unlabeled_indices, false);
    return split;
}

void save_dataset(const BinaryDataset& ds, const std::filesystem::path& path) {
    ByteWriter w;
    w.magic("SGEN-BDS");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(ds.count()));
    w.u32(static_cast<std::uint32_t>(ds.images.rows()));
    w.u8(ds.has_labels() ? 1 : 0);
    const int dim = static_cast<int>(ds.images.rows());
    const int packed = (dim + 7) / 8;
    for (int i = 0; i < ds.count(); ++i) {
        for (int byte = 0; byte < packed; ++byte) {
            std::uint8_t v = 0;
            for (int bit = 0; bit < 8; ++bit) {
                int j = byte * 8 + bit;
                if (j < dim && ds.images(j, i) != 0.0) v |= static_cast<std::uint8_t>(1u << bit);
            }
            w.u8(v);
        }
    }
    if (ds.has_labels())
        for (int l : ds.labels) w.u8(static_cast<std::uint8_t>(l));
    write_file(path, w.data());
}

BinaryDataset load_dataset(const std::filesystem::path& path) {
    auto bytes = read_file(path);
    ByteReader r(bytes);
    r.expect_magic("SGEN-BDS", "SGEN-BDS");
    std::uint32_t version = r.u32();
    if (version != 1) throw FormatError("unsupported SGEN-BDS version");
    std::uint32_t count = r.u32();
    std::uint32_t dim = r.u32();
    bool labeled = r.u8() != 0;
    BinaryDataset ds;
    ds.images.resize(dim, count);
    const std::uint32_t packed = (dim + 7) / 8;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint8_t* p = r.raw(packed);
        for (std::uint32_t j = 0; j < dim; ++j)
            ds.images(j, i) = (p[j / 8] >> (j % 8)) & 1u ? 1.0 : 0.0;
    }
    if (labeled) {
        ds.labels.resize(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            std::uint8_t v = r.u8();
            if (v > 9) throw LabelOutOfRange("stored label out of range");
            ds.labels[i] = v;
        }
    }
    return ds;
}

} // namespace sgen
