#include <doctest.h>

#include <filesystem>

#include "oracles.hpp"
#include "sgen/io.hpp"
#include "sgen/rbm.hpp"

using namespace sgen;

namespace {

RbmModel tiny_fixed_model() {
    // 2 visible, 2 hidden, W = [[1,-1],[0,2]], zero biases
    RbmModel m;
    m.weights.resize(2, 2);
    m.weights << 1, -1, 0, 2;
    m.visible_bias = Eigen::VectorXd::Zero(2);
    m.hidden_bias = Eigen::VectorXd::Zero(2);
    return m;
}

} // namespace

TEST_CASE("hidden_given_visible: zero parameters give 0.5 everywhere") {
    RbmModel m;
    m.weights = Eigen::MatrixXd::Zero(3, 4);
    m.visible_bias = Eigen::VectorXd::Zero(4);
    m.hidden_bias = Eigen::VectorXd::Zero(3);
    Eigen::MatrixXd p = hidden_given_visible(m, Eigen::MatrixXd::Ones(4, 2));
    CHECK((p.array() == 0.5).all());
}

TEST_CASE("hidden_given_visible saturates cleanly at large bias") {
    RbmModel m;
    m.weights = Eigen::MatrixXd::Zero(1, 2);
    m.visible_bias = Eigen::VectorXd::Zero(2);
    m.hidden_bias = Eigen::VectorXd::Constant(1, 30.0);
    Eigen::MatrixXd p = hidden_given_visible(m, Eigen::MatrixXd::Zero(2, 1));
    CHECK(p(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("tiny model conditionals match direct evaluation and enumeration") {
    RbmModel m = tiny_fixed_model();
    Eigen::VectorXd x(2);
    x << 1, 0;
    Eigen::MatrixXd ph = hidden_given_visible(m, x);
    CHECK(ph(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
    CHECK(ph(1, 0) == doctest::Approx(0.5).epsilon(1e-12));

    // cross-check marginals of p(h|x) against 16-state enumeration
    auto cond = oracle::hidden_conditional(m, x);
    double p_h0 = cond[1] + cond[3]; // states with h0 = 1
    double p_h1 = cond[2] + cond[3];
    CHECK(ph(0, 0) == doctest::Approx(p_h0).epsilon(1e-10));
    CHECK(ph(1, 0) == doctest::Approx(p_h1).epsilon(1e-10));
}

TEST_CASE("visible_given_hidden on the tiny model") {
    RbmModel m = tiny_fixed_model();
    Eigen::VectorXd h = Eigen::VectorXd::Ones(2);
    Eigen::MatrixXd pv = visible_given_hidden(m, h);
    // W^T h = (1, 1)
    CHECK(pv(0, 0) == doctest::Approx(stable_sigmoid(1.0)).epsilon(1e-12));
    CHECK(pv(1, 0) == doctest::Approx(stable_sigmoid(1.0)).epsilon(1e-12));

    auto cond = oracle::visible_conditional(m, h);
    double p_x0 = cond[1] + cond[3];
    CHECK(pv(0, 0) == doctest::Approx(p_x0).epsilon(1e-10));

    CHECK_THROWS_AS(visible_given_hidden(m, Eigen::MatrixXd::Zero(3, 1)), DimensionMismatch);
    CHECK_THROWS_AS(hidden_given_visible(m, Eigen::MatrixXd::Zero(5, 1)), DimensionMismatch);
}

TEST_CASE("conditional probabilities stay strictly inside (0,1)") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        RbmModel m = oracle::random_tiny_rbm(3, 3, rng, 4.0);
        auto xs = oracle::all_binary_vectors(3);
        for (const auto& x : xs) {
            Eigen::MatrixXd p = hidden_given_visible(m, x);
            CHECK((p.array() > 0.0).all());
            CHECK((p.array() < 1.0).all());
        }
    }
}

TEST_CASE("free_energy closed forms") {
    RbmModel m;
    m.weights = Eigen::MatrixXd::Zero(4, 3);
    m.visible_bias = Eigen::VectorXd::Zero(3);
    m.hidden_bias = Eigen::VectorXd::Zero(4);
    Eigen::VectorXd x(3);
    x << 1, 0, 1;
    CHECK(free_energy(m, x) == doctest::Approx(-4.0 * std::log(2.0)).epsilon(1e-12));

    // x = 0: only the hidden-bias terms survive
    RbmModel m2 = tiny_fixed_model();
    m2.hidden_bias << 0.3, -0.7;
    m2.visible_bias << 5.0, -5.0;
    double expected = -(softplus(0.3) + softplus(-0.7));
    CHECK(free_energy(m2, Eigen::VectorXd::Zero(2)) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("free_energy marginals match exhaustive enumeration on random tiny models") {
    Rng rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        RbmModel m = oracle::random_tiny_rbm(2, 2, rng);
        auto exact = oracle::visible_marginal(m);
        auto xs = oracle::all_binary_vectors(2);
        double z = 0.0;
        std::vector<double> unnorm;
        for (const auto& x : xs) {
            unnorm.push_back(std::exp(-free_energy(m, x)));
            z += unnorm.back();
        }
        for (std::size_t i = 0; i < xs.size(); ++i)
            CHECK(unnorm[i] / z == doctest::Approx(exact[i]).epsilon(1e-10));
    }
}

TEST_CASE("cd_update with lr=0 leaves the model bitwise unchanged") {
    RbmModel m = tiny_fixed_model();
    Rng rng(5);
    Eigen::MatrixXd batch(2, 2);
    batch << 1, 0, 0, 1;
    RbmModel after = cd_update(m, batch, 1, 0.0, rng);
    CHECK(after.weights == m.weights);
    CHECK(after.visible_bias == m.visible_bias);
    CHECK(after.hidden_bias == m.hidden_bias);
}

TEST_CASE("expected CD-1 update matches full enumeration of Gibbs outcomes") {
    // enumerate all (h, x~) outcomes with their exact probabilities, compute
    // the exact expected Delta W, then compare a Monte-Carlo mean of
    // cd_update over many rng draws within 3 standard errors
    RbmModel m = tiny_fixed_model();
    m.visible_bias << 0.2, -0.1;
    m.hidden_bias << -0.3, 0.4;
    Eigen::VectorXd x(2);
    x << 1, 0;
    const double lr = 1.0;

    Eigen::VectorXd ph = hidden_given_visible(m, x).col(0);
    Eigen::MatrixXd expected_dw = Eigen::MatrixXd::Zero(2, 2);
    auto hs = oracle::all_binary_vectors(2);
    auto xs = oracle::all_binary_vectors(2);
    for (const auto& h : hs) {
        double p_h = 1.0;
        for (int j = 0; j < 2; ++j) p_h *= h(j) != 0.0 ? ph(j) : 1.0 - ph(j);
        Eigen::VectorXd pv = visible_given_hidden(m, h).col(0);
        for (const auto& xt : xs) {
            double p_x = 1.0;
            for (int i = 0; i < 2; ++i) p_x *= xt(i) != 0.0 ? pv(i) : 1.0 - pv(i);
            Eigen::VectorXd ph_neg = hidden_given_visible(m, xt).col(0);
            expected_dw += p_h * p_x * lr * (ph * x.transpose() - ph_neg * xt.transpose());
        }
    }

    const int n = 100000;
    Rng rng(77);
    Eigen::MatrixXd mean_dw = Eigen::MatrixXd::Zero(2, 2);
    Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(2, 2); // running second moment
    for (int i = 0; i < n; ++i) {
        RbmModel after = cd_update(m, x, 1, lr, rng);
        Eigen::MatrixXd dw = after.weights - m.weights;
        mean_dw += dw;
        m2 += dw.cwiseProduct(dw);
    }
    mean_dw /= n;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            double var = m2(r, c) / n - mean_dw(r, c) * mean_dw(r, c);
            double sigma = std::sqrt(std::max(var, 1e-12) / n);
            CHECK(std::abs(mean_dw(r, c) - expected_dw(r, c)) < 3.0 * sigma + 1e-9);
        }
}

TEST_CASE("CD gradient points along the exact likelihood gradient on tiny models") {
    // inner product between the enumerated log-likelihood gradient and the
    // expected CD-1 direction is positive on >= 90% of random draws
    Rng rng(31337);
    int positive = 0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
        RbmModel m = oracle::random_tiny_rbm(2, 2, rng, 1.0);
        // data distribution: a single fixed pattern
        Eigen::VectorXd x(2);
        x << 1, 0;

        // exact dL/dW = E_data[p(h|x) x^T] - E_model[p(h|x) x^T]
        Eigen::VectorXd ph = hidden_given_visible(m, x).col(0);
        Eigen::MatrixXd grad = ph * x.transpose();
        auto marg = oracle::visible_marginal(m);
        auto xs = oracle::all_binary_vectors(2);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            Eigen::VectorXd phm = hidden_given_visible(m, xs[i]).col(0);
            grad -= marg[i] * phm * xs[i].transpose();
        }

        // expected CD-1 direction by the same enumeration as above
        Eigen::MatrixXd cd = Eigen::MatrixXd::Zero(2, 2);
        auto hs = oracle::all_binary_vectors(2);
        for (const auto& h : hs) {
            double p_h = 1.0;
            for (int j = 0; j < 2; ++j) p_h *= h(j) != 0.0 ? ph(j) : 1.0 - ph(j);
            Eigen::VectorXd pv = visible_given_hidden(m, h).col(0);
            for (const auto& xt : xs) {
                double p_x = 1.0;
                for (int i = 0; i < 2; ++i) p_x *= xt(i) != 0.0 ? pv(i) : 1.0 - pv(i);
                Eigen::VectorXd ph_neg = hidden_given_visible(m, xt).col(0);
                cd += p_h * p_x * (ph * x.transpose() - ph_neg * xt.transpose());
            }
        }
        if ((grad.array() * cd.array()).sum() > 0.0) ++positive;
    }
    CHECK(positive >= 90);
}

TEST_CASE("repeated CD-1 lowers reconstruction error on a single pattern") {
    int improved = 0;
    const int seeds = 20;
    for (int seed = 0; seed < seeds; ++seed) {
        BinaryDataset data;
        data.images = Eigen::MatrixXd::Zero(16, 1);
        for (int i = 0; i < 16; i += 3) data.images(i, 0) = 1.0;
        RbmTrainConfig cfg = default_rbm_config(RbmRegime::Bad, static_cast<std::uint64_t>(seed));
        cfg.hidden_units = 8;
        cfg.epochs = 50;
        std::vector<double> log;
        train_rbm(data, cfg, &log);
        if (log.back() < log.front()) ++improved;
    }
    CHECK(improved >= 19); // >= 95% of seeds
}

TEST_CASE("train_rbm: epochs=0 returns the initialization; identical seeds match bitwise") {
    BinaryDataset data;
    data.images = Eigen::MatrixXd::Zero(8, 4);
    data.images(0, 0) = 1.0;
    RbmTrainConfig cfg = default_rbm_config(RbmRegime::Good, 42);
    cfg.hidden_units = 4;
    cfg.epochs = 0;
    RbmModel a = train_rbm(data, cfg);
    RbmModel init = init_rbm(4, 8, split_seed(42, 0));
    CHECK(a.weights == init.weights);

    cfg.epochs = 7;
    RbmModel b = train_rbm(data, cfg);
    RbmModel c = train_rbm(data, cfg);
    CHECK(b.weights == c.weights);
    CHECK(b.visible_bias == c.visible_bias);
    CHECK(b.hidden_bias == c.hidden_bias);
}

TEST_CASE("Good regime reconstructs at least as well as Bad on the same data and seed") {
    Rng rng(555);
    BinaryDataset data;
    data.images.resize(16, 60);
    for (int i = 0; i < 60; ++i)
        for (int j = 0; j < 16; ++j)
            data.images(j, i) = (j % 4 == i % 4) ? 1.0 : (rng.bernoulli(0.05) ? 1.0 : 0.0);

    RbmTrainConfig bad = default_rbm_config(RbmRegime::Bad, 7);
    bad.hidden_units = 12;
    RbmTrainConfig good = default_rbm_config(RbmRegime::Good, 7);
    good.hidden_units = 12;
    CHECK(bad.epochs < good.epochs); // regime invariant

    RbmModel bad_model = train_rbm(data, bad);
    RbmModel good_model = train_rbm(data, good);
    CHECK(reconstruction_cross_entropy(good_model, data.images) <=
          reconstruction_cross_entropy(bad_model, data.images));
}

TEST_CASE("SGEN-RBM persistence round-trips and validates") {
    RbmModel m = tiny_fixed_model();
    m.visible_bias << 0.5, -1.25;
    auto path = std::filesystem::temp_directory_path() / "sgen_test_model.rbm";
    save_rbm(m, path);
    RbmModel loaded = load_rbm(path);
    CHECK(loaded.weights == m.weights);
    CHECK(loaded.visible_bias == m.visible_bias);
    CHECK(loaded.hidden_bias == m.hidden_bias);

    auto bytes = read_file(path);
    bytes[0] = 'X';
    write_file(path, bytes);
    CHECK_THROWS_AS(load_rbm(path), BadMagic);
    std::filesystem::remove(path);
}
