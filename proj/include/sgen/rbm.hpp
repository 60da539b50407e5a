#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "sgen/dataset.hpp"
#include "sgen/rng.hpp"

namespace sgen {

// Binary-binary RBM. W is hidden x visible.
struct RbmModel {
    Eigen::MatrixXd weights;
    Eigen::VectorXd visible_bias;
    Eigen::VectorXd hidden_bias;

    int hidden() const { return static_cast<int>(weights.rows()); }
    int visible() const { return static_cast<int>(weights.cols()); }
    bool finite() const;
};

enum class RbmRegime { Bad, Good };

struct RbmTrainConfig {
    RbmRegime regime = RbmRegime::Good;
    int hidden_units = 500;
    int epochs = 200; // overridden per regime by default_rbm_config
    double learning_rate = 0.05;
    int cd_steps = 1;
    int batch_size = 20;
    double momentum = 0.0;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
};

// The regimes differ only in how long training runs: the under-converged
// model keeps a short epoch budget, the converged one a long budget.
RbmTrainConfig default_rbm_config(RbmRegime regime, std::uint64_t seed);

// sigma(W x + c), one column of probabilities per input column
Eigen::MatrixXd hidden_given_visible(const RbmModel& model, const Eigen::MatrixXd& x);
// sigma(W^T h + b)
Eigen::MatrixXd visible_given_hidden(const RbmModel& model, const Eigen::MatrixXd& h);

// F(x) = -b.x - sum_j softplus(W_j x + c_j)
double free_energy(const RbmModel& model, const Eigen::VectorXd& x);

// One CD-k parameter update over a batch (columns are samples).
RbmModel cd_update(RbmModel model, const Eigen::MatrixXd& batch, int k, double lr, Rng& rng);

RbmModel init_rbm(int hidden, int visible, std::uint64_t seed);
RbmModel train_rbm(const BinaryDataset& data, const RbmTrainConfig& cfg,
                   std::vector<double>* recon_log = nullptr);

// mean-field reconstruction cross-entropy, a training diagnostic
double reconstruction_cross_entropy(const RbmModel& model, const Eigen::MatrixXd& x);

// "SGEN-RBM" portable binary format
void save_rbm(const RbmModel& model, const std::filesystem::path& path);
RbmModel load_rbm(const std::filesystem::path& path);

// numerically stable helpers shared across modules
double stable_sigmoid(double z);
double softplus(double z);

} // namespace sgen
