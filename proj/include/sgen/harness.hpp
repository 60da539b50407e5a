#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sgen/dataset.hpp"
#include "sgen/mlp.hpp"
#include "sgen/rbm.hpp"
#include "sgen/vae.hpp"

namespace sgen {

inline constexpr const char* kCodeVersion = "sgen 1.0.0";

enum class GeneratorKind { BRbm, GRbm, Vae };

std::string to_string(GeneratorKind kind);
GeneratorKind generator_kind_from_string(const std::string& s);

struct ExperimentConfig {
    // scenario
    int total = 100;
    int labeled_count = 10;
    // augmentation
    GeneratorKind generator = GeneratorKind::BRbm;
    int chain_length = 500;
    bool self_filter = true; // paper's y/n switch
    int chains_per_seed = 1;
    // classifier
    MlpArch classifier = MlpArch::FC1;
    TrainSchedule classifier_sched;
    FilterConfig filter;
    // generators
    int rbm_hidden = 500;
    double rbm_learning_rate = 0.05;
    int rbm_cd_steps = 1;
    int rbm_batch_size = 20;
    int brbm_epochs = 5;
    int grbm_epochs = 200;
    VaeTrainConfig vae;
    // harness
    int replications = 3;
    std::uint64_t master_seed = 1;
};

// CI-sized preset: small RBM, short classifier schedule, short chains
void apply_quick_profile(ExperimentConfig& cfg);

std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_hash(const ExperimentConfig& cfg);

struct ExperimentResult {
    ExperimentConfig config;
    std::string hash;
    std::string code_version;
    std::vector<double> errors;          // augmented run, one per replication
    std::vector<double> baseline_errors; // identical split and classifier init
    double mean = 0.0, stddev = 0.0;
    double baseline_mean = 0.0, baseline_stddev = 0.0;
    std::vector<std::vector<EpochKeepStat>> keep_stats; // per replication
};

// End-to-end scenario: split, generator training on all `total` samples,
// one chain per labeled seed, augmented + baseline classifier runs.
// When out_dir is set every artifact (manifests, models, chains, result) is
// persisted there.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const BinaryDataset& train,
                                const BinaryDataset& test,
                                const std::filesystem::path* out_dir = nullptr,
                                std::ostream* log = nullptr);

void save_result(const ExperimentResult& result, const std::filesystem::path& path);
ExperimentResult load_result(const std::filesystem::path& path);

enum class TableFormat { Csv, Markdown };

// Tables-shaped summary: one row per classifier architecture, a Baseline
// column plus one column per generator x chain length x filter mode.
std::string emit_table(const std::vector<ExperimentResult>& results, TableFormat format);

} // namespace sgen
