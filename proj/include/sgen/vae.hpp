#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sgen/dataset.hpp"
#include "sgen/rng.hpp"

namespace sgen {

// Fully-connected VAE: tanh hidden layers, factorized Gaussian posterior,
// Bernoulli decoder.
struct VaeModel {
    Eigen::MatrixXd enc_w; // hidden x visible
    Eigen::VectorXd enc_b;
    Eigen::MatrixXd mu_w; // latent x hidden
    Eigen::VectorXd mu_b;
    Eigen::MatrixXd logvar_w; // latent x hidden
    Eigen::VectorXd logvar_b;
    Eigen::MatrixXd dec_w; // hidden x latent
    Eigen::VectorXd dec_b;
    Eigen::MatrixXd out_w; // visible x hidden
    Eigen::VectorXd out_b;

    int visible() const { return static_cast<int>(enc_w.cols()); }
    int hidden() const { return static_cast<int>(enc_w.rows()); }
    int latent() const { return static_cast<int>(mu_w.rows()); }
    bool finite() const;
};

struct ElboBreakdown {
    double elbo = 0.0;
    double llh = 0.0;
    double kl = 0.0;
};

struct VaeTrainConfig {
    int hidden_units = 512;
    int latent_dim = 20;
    int epochs = 200;
    double learning_rate = 1e-3;
    int batch_size = 20;
    std::uint64_t seed = 0;
};

inline constexpr double kLogvarClamp = 10.0;
inline constexpr double kProbClamp = 1e-7;

VaeModel make_vae(int visible, int hidden, int latent, std::uint64_t seed);

// deterministic forward pass; logvar clamped to [-10, 10]
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> encode(const VaeModel& model,
                                                   const Eigen::MatrixXd& x);
// logistic of decoder logits
Eigen::MatrixXd decode(const VaeModel& model, const Eigen::MatrixXd& z);

// closed-form KL(N(mu, diag exp(logvar)) || N(0, I)), clamped at 0
double kl_to_standard_normal(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar);

// same parameter layout as VaeModel, used for gradients
struct VaeGrads {
    Eigen::MatrixXd enc_w, mu_w, logvar_w, dec_w, out_w;
    Eigen::VectorXd enc_b, mu_b, logvar_b, dec_b, out_b;
};

// one-sample ELBO estimate over a batch; eps is a frozen latent x batch draw
ElboBreakdown elbo_with_grad(const VaeModel& model, const Eigen::MatrixXd& batch,
                             const Eigen::MatrixXd& eps, VaeGrads* grads);
ElboBreakdown elbo_batch(const VaeModel& model, const Eigen::MatrixXd& batch, Rng& rng);

VaeModel train_vae(const BinaryDataset& data, const VaeTrainConfig& cfg,
                   std::vector<ElboBreakdown>* log = nullptr);

// "SGEN-VAE" portable binary format
void save_vae(const VaeModel& model, const std::filesystem::path& path);
VaeModel load_vae(const std::filesystem::path& path);

} // namespace sgen
