#include <doctest.h>

#include <filesystem>

#include "oracles.hpp"
#include "sgen/io.hpp"
#include "sgen/vae.hpp"

using namespace sgen;

namespace {

VaeModel zero_vae(int visible, int hidden, int latent) {
    VaeModel m = make_vae(visible, hidden, latent, 0);
    m.enc_w.setZero();
    m.mu_w.setZero();
    m.logvar_w.setZero();
    m.dec_w.setZero();
    m.out_w.setZero();
    return m;
}

} // namespace

TEST_CASE("encode: zero parameters give zero mu and logvar; deterministic") {
    VaeModel m = zero_vae(6, 4, 2);
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(6, 3);
    auto [mu, logvar] = encode(m, x);
    CHECK(mu.isZero(0.0));
    CHECK(logvar.isZero(0.0));
    auto [mu2, logvar2] = encode(m, x);
    CHECK(mu == mu2);
    CHECK_THROWS_AS(encode(m, Eigen::MatrixXd::Ones(5, 1)), DimensionMismatch);
}

TEST_CASE("encode matches direct matrix arithmetic on a hand-set model") {
    VaeModel m = zero_vae(2, 2, 1);
    m.enc_w << 1.0, -0.5, 0.25, 0.75;
    m.enc_b << 0.1, -0.2;
    m.mu_w << 0.5, -1.0;
    m.mu_b << 0.3;
    m.logvar_w << 2.0, 0.0;
    m.logvar_b << -0.4;
    Eigen::VectorXd x(2);
    x << 1, 0;
    auto [mu, logvar] = encode(m, x);
    double h0 = std::tanh(1.0 + 0.1), h1 = std::tanh(0.25 - 0.2);
    CHECK(mu(0, 0) == doctest::Approx(0.5 * h0 - 1.0 * h1 + 0.3).epsilon(1e-14));
    CHECK(logvar(0, 0) == doctest::Approx(2.0 * h0 - 0.4).epsilon(1e-14));
}

TEST_CASE("encode clamps logvar to [-10, 10]") {
    VaeModel m = zero_vae(1, 1, 1);
    m.logvar_b << 50.0;
    auto [mu, logvar] = encode(m, Eigen::MatrixXd::Zero(1, 1));
    CHECK(logvar(0, 0) == 10.0);
}

TEST_CASE("decode: zero parameters give 0.5; extreme logits saturate finitely") {
    VaeModel m = zero_vae(4, 3, 2);
    Eigen::MatrixXd p = decode(m, Eigen::MatrixXd::Ones(2, 2));
    CHECK((p.array() == 0.5).all());

    m.out_b = Eigen::VectorXd::Constant(4, 30.0);
    m.out_b(1) = -30.0;
    p = decode(m, Eigen::MatrixXd::Zero(2, 1));
    CHECK(p(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.allFinite());
    CHECK_THROWS_AS(decode(m, Eigen::MatrixXd::Zero(3, 1)), DimensionMismatch);
}

TEST_CASE("decode matches direct arithmetic on a 2-latent toy decoder") {
    VaeModel m = zero_vae(1, 1, 2);
    m.dec_w << 1.0, -2.0;
    m.dec_b << 0.5;
    m.out_w << 1.5;
    m.out_b << -0.25;
    Eigen::VectorXd z(2);
    z << 1.0, 0.5;
    Eigen::MatrixXd p = decode(m, z);
    double h = std::tanh(1.0 - 1.0 + 0.5);
    CHECK(p(0, 0) == doctest::Approx(stable_sigmoid(1.5 * h - 0.25)).epsilon(1e-14));
}

TEST_CASE("KL analytic anchors") {
    Eigen::VectorXd mu(1), logvar(1);
    mu << 0.0;
    logvar << 0.0;
    CHECK(kl_to_standard_normal(mu, logvar) == 0.0);

    mu << 1.0;
    CHECK(kl_to_standard_normal(mu, logvar) == doctest::Approx(0.5).epsilon(1e-12));

    mu << 0.0;
    logvar << std::log(4.0);
    CHECK(kl_to_standard_normal(mu, logvar) ==
          doctest::Approx(-0.5 * (1.0 + std::log(4.0) - 4.0)).epsilon(1e-12));
}

TEST_CASE("KL closed form agrees with a Monte-Carlo estimate") {
    // E_q[log q(h) - log p(h)] with q = N(mu, s^2), p = N(0,1)
    Eigen::VectorXd mu(1), logvar(1);
    mu << 0.7;
    logvar << std::log(0.5);
    double exact = kl_to_standard_normal(mu, logvar);
    Rng rng(808);
    double s = std::exp(0.5 * logvar(0));
    double acc = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
        double h = mu(0) + s * rng.normal();
        double log_q = -0.5 * std::log(2 * M_PI) - 0.5 * logvar(0) -
                       0.5 * (h - mu(0)) * (h - mu(0)) / (s * s);
        double log_p = -0.5 * std::log(2 * M_PI) - 0.5 * h * h;
        acc += log_q - log_p;
    }
    CHECK(acc / n == doctest::Approx(exact).epsilon(1e-2));
}

TEST_CASE("kl is non-negative for random inputs; zero only at the prior") {
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        Eigen::VectorXd mu(3), logvar(3);
        for (int j = 0; j < 3; ++j) {
            mu(j) = 2.0 * rng.normal();
            logvar(j) = rng.normal();
        }
        double kl = kl_to_standard_normal(mu, logvar);
        CHECK(kl >= 0.0);
        if (mu.norm() + logvar.norm() > 1e-6) CHECK(kl > 0.0);
    }
}

TEST_CASE("elbo_batch: zero model on all-zero input gives 784 log 0.5 and zero KL") {
    VaeModel m = zero_vae(784, 8, 4);
    Rng rng(1);
    ElboBreakdown b = elbo_batch(m, Eigen::MatrixXd::Zero(784, 3), rng);
    CHECK(b.llh == doctest::Approx(784.0 * std::log(0.5)).epsilon(1e-12));
    CHECK(b.kl == 0.0);
    CHECK(b.elbo == doctest::Approx(-543.427).epsilon(1e-3));
}

TEST_CASE("elbo decomposition holds exactly and kl >= 0 on random models") {
    Rng rng(12);
    VaeModel m = make_vae(10, 6, 3, 99);
    Eigen::MatrixXd x(10, 4);
    for (int c = 0; c < 4; ++c)
        for (int r = 0; r < 10; ++r) x(r, c) = rng.bernoulli(0.4) ? 1.0 : 0.0;
    for (int i = 0; i < 20; ++i) {
        ElboBreakdown b = elbo_batch(m, x, rng);
        CHECK(b.elbo == b.llh - b.kl);
        CHECK(b.kl >= 0.0);
    }
}

TEST_CASE("ELBO gradients match central finite differences on a toy model") {
    VaeModel m = make_vae(5, 4, 2, 2718);
    Rng data_rng(3);
    Eigen::MatrixXd x(5, 3);
    for (int c = 0; c < 3; ++c)
        for (int r = 0; r < 5; ++r) x(r, c) = data_rng.bernoulli(0.5) ? 1.0 : 0.0;
    Eigen::MatrixXd eps(2, 3);
    for (int c = 0; c < 3; ++c)
        for (int r = 0; r < 2; ++r) eps(r, c) = data_rng.normal();

    VaeGrads grads;
    elbo_with_grad(m, x, eps, &grads);

    auto objective = [&]() { return elbo_with_grad(m, x, eps, nullptr).elbo; };

    auto check_matrix = [&](Eigen::MatrixXd& param, const Eigen::MatrixXd& grad) {
        for (Eigen::Index c = 0; c < param.cols(); ++c)
            for (Eigen::Index r = 0; r < param.rows(); ++r) {
                double fd = oracle::central_diff(objective, param(r, c));
                CHECK(oracle::rel_error(grad(r, c), fd) < 1e-4);
            }
    };
    auto check_vector = [&](Eigen::VectorXd& param, const Eigen::VectorXd& grad) {
        for (Eigen::Index i = 0; i < param.size(); ++i) {
            double fd = oracle::central_diff(objective, param(i));
            CHECK(oracle::rel_error(grad(i), fd) < 1e-4);
        }
    };
    check_matrix(m.enc_w, grads.enc_w);
    check_vector(m.enc_b, grads.enc_b);
    check_matrix(m.mu_w, grads.mu_w);
    check_vector(m.mu_b, grads.mu_b);
    check_matrix(m.logvar_w, grads.logvar_w);
    check_vector(m.logvar_b, grads.logvar_b);
    check_matrix(m.dec_w, grads.dec_w);
    check_vector(m.dec_b, grads.dec_b);
    check_matrix(m.out_w, grads.out_w);
    check_vector(m.out_b, grads.out_b);
}

TEST_CASE("train_vae: epochs=0 returns the init; identical seeds match bitwise") {
    BinaryDataset data;
    data.images = Eigen::MatrixXd::Zero(8, 6);
    data.images.topRows(4).setOnes();
    VaeTrainConfig cfg;
    cfg.hidden_units = 5;
    cfg.latent_dim = 2;
    cfg.epochs = 0;
    cfg.seed = 21;
    VaeModel a = train_vae(data, cfg);
    VaeModel init = make_vae(8, 5, 2, split_seed(21, 0));
    CHECK(a.enc_w == init.enc_w);
    CHECK(a.out_b == init.out_b);

    cfg.epochs = 5;
    VaeModel b = train_vae(data, cfg);
    VaeModel c = train_vae(data, cfg);
    CHECK(b.enc_w == c.enc_w);
    CHECK(b.out_w == c.out_w);
    CHECK(b.logvar_b == c.logvar_b);
}

TEST_CASE("training ELBO rises over the first 20 epochs for nearly all seeds") {
    int improved = 0;
    const int seeds = 20;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed) + 1000);
        BinaryDataset data;
        data.images.resize(16, 100);
        for (int i = 0; i < 100; ++i)
            for (int j = 0; j < 16; ++j)
                data.images(j, i) = rng.bernoulli(j < 8 ? 0.9 : 0.1) ? 1.0 : 0.0;
        VaeTrainConfig cfg;
        cfg.hidden_units = 8;
        cfg.latent_dim = 2;
        cfg.epochs = 20;
        cfg.learning_rate = 0.01;
        cfg.seed = static_cast<std::uint64_t>(seed);
        std::vector<ElboBreakdown> log;
        train_vae(data, cfg, &log);
        if (log.back().elbo > log.front().elbo) ++improved;
    }
    CHECK(improved >= 19);
}

TEST_CASE("SGEN-VAE persistence round-trips") {
    VaeModel m = make_vae(6, 4, 2, 5);
    auto path = std::filesystem::temp_directory_path() / "sgen_test_model.vae";
    save_vae(m, path);
    VaeModel loaded = load_vae(path);
    CHECK(loaded.enc_w == m.enc_w);
    CHECK(loaded.mu_w == m.mu_w);
    CHECK(loaded.logvar_b == m.logvar_b);
    CHECK(loaded.out_w == m.out_w);

    auto bytes = read_file(path);
    bytes.resize(bytes.size() - 4);
    write_file(path, bytes);
    CHECK_THROWS_AS(load_vae(path), TruncatedPayload);
    std::filesystem::remove(path);
}
