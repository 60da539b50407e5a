#pragma once

#include <vector>

#include <Eigen/Dense>

#include "sgen/sampler.hpp"

namespace sgen {

struct MlpClassifier;

// Paper scheme "n" keeps every generated sample; "y" keeps only those the
// in-training classifier currently assigns the propagated label.
enum class FilterMode { All, SelfFiltered };

struct FilterConfig {
    FilterMode mode = FilterMode::All;
    int warmup_epochs = 5; // SelfFiltered keeps everything before this epoch
};

struct LabeledSamples {
    Eigen::MatrixXd images; // 784 x n
    std::vector<int> labels;
};

// Every chain sample inherits the chain's seed label, order preserved.
LabeledSamples propagate_labels(const SampleChain& chain);

// Kept mask for one chain's samples against the current classifier snapshot
// (Eval mode: no noise, no dropout, running batch-norm statistics).
std::vector<char> filter_by_classifier(const Eigen::MatrixXd& samples, int label,
                                       const MlpClassifier& clf, int epoch,
                                       const FilterConfig& filter);

} // namespace sgen
