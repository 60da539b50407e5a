#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "sgen/dataset.hpp"
#include "sgen/labeler.hpp"
#include "sgen/rng.hpp"
#include "sgen/sampler.hpp"

namespace sgen {

enum class MlpArch : std::uint8_t { FC1 = 1, FC2 = 2, Custom = 3 };

// One dense layer; hidden layers carry batch norm (on pre-activations) and
// inverted dropout, the output layer is a plain affine map.
struct MlpLayer {
    Eigen::MatrixXd weights; // out x in
    Eigen::VectorXd bias;
    bool batch_norm = false;
    double dropout_rate = 0.0;
    Eigen::VectorXd gamma, beta, running_mean, running_var; // sized when batch_norm
};

struct MlpClassifier {
    MlpArch arch = MlpArch::Custom;
    std::vector<MlpLayer> layers;
    int input_dim() const { return static_cast<int>(layers.front().weights.cols()); }
    int output_dim() const { return static_cast<int>(layers.back().weights.rows()); }
    bool finite() const;
};

enum class RunMode { Train, Eval };

struct TrainSchedule {
    int epochs = 200;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double input_noise_sigma = 0.3;
    double dropout_rate = 0.5;
    std::uint64_t seed = 0;
    int batch_cap = 1024;    // oversized generated sets split across updates
    int seeds_per_group = 0; // 0 = auto (1 at the 10-labeled scenario, else 10)
};

inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.9;

MlpClassifier make_classifier(MlpArch arch, std::uint64_t seed, double dropout_rate = 0.5);
MlpClassifier make_custom_mlp(const std::vector<int>& widths, std::uint64_t seed,
                              double dropout_rate = 0.5);

// Frozen stochastic draws for one training batch, so gradients can be
// checked against finite differences of the same loss.
struct TrainDraws {
    Eigen::MatrixXd input_noise;             // input_dim x batch, standard normal
    std::vector<Eigen::MatrixXd> dropout_masks; // {0,1} per hidden layer
};
TrainDraws sample_draws(const MlpClassifier& clf, Eigen::Index batch, Rng& rng);

// Unnormalized class scores (10 x batch). Train mode adds input noise, uses
// batch statistics and updates running stats; Eval mode is deterministic.
Eigen::MatrixXd forward(MlpClassifier& clf, const Eigen::MatrixXd& x_batch, RunMode mode,
                        Rng* rng, double input_noise_sigma);
Eigen::MatrixXd forward_eval(const MlpClassifier& clf, const Eigen::MatrixXd& x_batch);

std::vector<int> predict(const MlpClassifier& clf, const Eigen::MatrixXd& x_batch);

struct MlpGrads {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> bias, gamma, beta;
};

// Mean softmax cross-entropy plus gradients; Train-mode path with the given
// frozen draws. Updates running batch-norm statistics.
double loss_and_grad(MlpClassifier& clf, const Eigen::MatrixXd& x_batch,
                     const std::vector<int>& labels, const TrainDraws& draws,
                     double input_noise_sigma, MlpGrads* grads);

struct EpochKeepStat {
    int epoch = 0;
    int kept = 0;
    int total = 0;
};

// Trains on the labeled set plus the currently-kept generated samples; one
// parameter update per (seed group + its generated samples) batch.
MlpClassifier train_classifier(const BinaryDataset& labeled,
                               const std::vector<SampleChain>& chains,
                               const FilterConfig& filter, const TrainSchedule& sched,
                               MlpArch arch,
                               std::vector<EpochKeepStat>* keep_log = nullptr);

// error percentage over a labeled test set
double evaluate(const MlpClassifier& clf, const BinaryDataset& test);

// "SGEN-MLP" portable binary format
void save_mlp(const MlpClassifier& clf, const std::filesystem::path& path);
MlpClassifier load_mlp(const std::filesystem::path& path);

} // namespace sgen
