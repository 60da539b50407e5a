#include "sgen/sampler.hpp"

#include <cmath>

#include "sgen/dataset.hpp"
#include "sgen/io.hpp"

namespace sgen {

Eigen::VectorXd transition(const GeneratorHandle& gen, const Eigen::VectorXd& x, Rng& rng,
                           Eigen::VectorXd* mean_out) {
    Eigen::VectorXd visible_probs;
    if (gen.rbm) {
        Eigen::VectorXd h_probs = hidden_given_visible(*gen.rbm, x);
        Eigen::VectorXd h(h_probs.size());
        for (Eigen::Index j = 0; j < h.size(); ++j)
            h(j) = rng.bernoulli(h_probs(j)) ? 1.0 : 0.0;
        visible_probs = visible_given_hidden(*gen.rbm, h);
    } else if (gen.vae) {
        auto [mu, logvar] = encode(*gen.vae, x);
        Eigen::VectorXd z(mu.rows());
        for (Eigen::Index l = 0; l < z.size(); ++l)
            z(l) = mu(l, 0) + std::exp(0.5 * logvar(l, 0)) * rng.normal();
        visible_probs = decode(*gen.vae, z);
    } else {
        throw Error("transition: empty generator handle");
    }
    if (mean_out) *mean_out = visible_probs;
    Eigen::VectorXd next(visible_probs.size());
    for (Eigen::Index i = 0; i < next.size(); ++i)
        next(i) = rng.bernoulli(visible_probs(i)) ? 1.0 : 0.0;
    return next;
}

SampleChain generate_chain(const GeneratorHandle& gen, const Eigen::VectorXd& x, int n,
                           Rng& rng, int seed_index, int seed_label, bool record_means) {
    if (n < 0) throw InvalidCounts("generate_chain: negative length");
    SampleChain chain;
    chain.seed_index = seed_index;
    chain.seed_label = seed_label;
    chain.samples.resize(x.size(), n);
    if (record_means) chain.means.resize(x.size(), n);
    Eigen::VectorXd state = x;
    Eigen::VectorXd mean;
    for (int i = 0; i < n; ++i) {
        state = transition(gen, state, rng, record_means ? &mean : nullptr);
        chain.samples.col(i) = state;
        if (record_means) chain.means.col(i) = mean;
    }
    return chain;
}

void save_chain(const SampleChain& chain, const std::filesystem::path& path) {
    ByteWriter w;
    w.magic("SGEN-CHN");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(chain.seed_index));
    w.u8(static_cast<std::uint8_t>(chain.seed_label));
    w.u32(static_cast<std::uint32_t>(chain.length()));
    const int dim = static_cast<int>(chain.samples.rows());
    const int packed = (dim + 7) / 8;
    for (int i = 0; i < chain.length(); ++i) {
        for (int byte = 0; byte < packed; ++byte) {
            std::uint8_t v = 0;
            for (int bit = 0; bit < 8; ++bit) {
                int j = byte * 8 + bit;
                if (j < dim && chain.samples(j, i) != 0.0)
                    v |= static_cast<std::uint8_t>(1u << bit);
            }
            w.u8(v);
        }
    }
    write_file(path, w.data());
}

SampleChain load_chain(const std::filesystem::path& path) {
    auto bytes = read_file(path);
    ByteReader r(bytes);
    r.expect_magic("SGEN-CHN", "SGEN-CHN");
    if (r.u32() != 1) throw FormatError("unsupported SGEN-CHN version");
    SampleChain chain;
    chain.seed_index = static_cast<int>(r.u32());
    chain.seed_label = r.u8();
    std::uint32_t n = r.u32();
    const int dim = kImageDim;
    const int packed = (dim + 7) / 8;
    chain.samples.resize(dim, n);
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint8_t* p = r.raw(packed);
        for (int j = 0; j < dim; ++j)
            chain.samples(j, i) = (p[j / 8] >> (j % 8)) & 1u ? 1.0 : 0.0;
    }
    return chain;
}

void chain_grid_export(const SampleChain& chain, const std::filesystem::path& path,
                       bool use_means) {
    if (chain.length() == 0) throw InvalidCounts("chain_grid_export: empty chain");
    const Eigen::MatrixXd& src = use_means ? chain.means : chain.samples;
    if (use_means && src.cols() != chain.samples.cols())
        throw InvalidCounts("chain has no recorded means");
    const int n = static_cast<int>(src.cols());
    int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    int rows = (n + cols - 1) / cols;
    const int w = cols * kImageSide, h = rows * kImageSide;

    std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    std::size_t base = out.size();
    out.resize(base + static_cast<std::size_t>(w) * h, 0);
    for (int i = 0; i < n; ++i) {
        int cell_r = i / cols, cell_c = i % cols;
        for (int y = 0; y < kImageSide; ++y)
            for (int x = 0; x < kImageSide; ++x) {
                double v = src(y * kImageSide + x, i);
                out[base + static_cast<std::size_t>(cell_r * kImageSide + y) * w +
                    cell_c * kImageSide + x] =
                    static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            }
    }
    write_file(path, out);
}

} // namespace sgen
