#pragma once

#include <cstdint>
#include <filesystem>

#include <Eigen/Dense>

#include "sgen/rbm.hpp"
#include "sgen/rng.hpp"
#include "sgen/vae.hpp"

namespace sgen {

// Non-owning handle over either generative model; exactly one pointer is set.
struct GeneratorHandle {
    const RbmModel* rbm = nullptr;
    const VaeModel* vae = nullptr;

    static GeneratorHandle of(const RbmModel& m) { return {&m, nullptr}; }
    static GeneratorHandle of(const VaeModel& m) { return {nullptr, &m}; }
};

struct SampleChain {
    int seed_index = -1;
    int seed_label = -1;
    Eigen::MatrixXd samples; // 784 x N, entries in {0,1}
    Eigen::MatrixXd means;   // 784 x N expected pixel values; empty unless recorded
    int length() const { return static_cast<int>(samples.cols()); }
};

// One step of the kernel: sample the latent given x, then a new visible
// given the latent, all coordinates in parallel. mean_out, when non-null,
// receives the Bernoulli means of the visible draw.
Eigen::VectorXd transition(const GeneratorHandle& gen, const Eigen::VectorXd& x, Rng& rng,
                           Eigen::VectorXd* mean_out = nullptr);

// Iterate the kernel N times from x, recording every new state (the seed
// itself is not part of the chain).
SampleChain generate_chain(const GeneratorHandle& gen, const Eigen::VectorXd& x, int n,
                           Rng& rng, int seed_index = -1, int seed_label = -1,
                           bool record_means = false);

// "SGEN-CHN" format: bit-packed samples, 98 bytes each
void save_chain(const SampleChain& chain, const std::filesystem::path& path);
SampleChain load_chain(const std::filesystem::path& path);

// Tiled binary PGM (P5) of the chain, 28x28 cells, row-major, near-square grid.
void chain_grid_export(const SampleChain& chain, const std::filesystem::path& path,
                       bool use_means = false);

} // namespace sgen
