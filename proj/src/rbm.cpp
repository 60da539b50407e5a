#include "sgen/rbm.hpp"

#include <cmath>

#include "sgen/io.hpp"

namespace sgen {

double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double z) {
    // log(1 + e^z) without overflow
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

namespace {

void sigmoid_inplace(Eigen::MatrixXd& m) {
    m = m.unaryExpr([](double z) { return stable_sigmoid(z); });
}

// elementwise Bernoulli sampling, column-major order so draws are reproducible
Eigen::MatrixXd sample_bernoulli(const Eigen::MatrixXd& probs, Rng& rng) {
    Eigen::MatrixXd out(probs.rows(), probs.cols());
    for (Eigen::Index c = 0; c < probs.cols(); ++c)
        for (Eigen::Index r = 0; r < probs.rows(); ++r)
            out(r, c) = rng.bernoulli(probs(r, c)) ? 1.0 : 0.0;
    return out;
}

} // namespace

bool RbmModel::finite() const {
    return weights.allFinite() && visible_bias.allFinite() && hidden_bias.allFinite();
}

RbmTrainConfig default_rbm_config(RbmRegime regime, std::uint64_t seed) {
    RbmTrainConfig cfg;
    cfg.regime = regime;
    cfg.epochs = (regime == RbmRegime::Bad) ? 5 : 200;
    cfg.seed = seed;
    return cfg;
}

Eigen::MatrixXd hidden_given_visible(const RbmModel& model, const Eigen::MatrixXd& x) {
    if (x.rows() != model.visible())
        throw DimensionMismatch("visible input has " + std::to_string(x.rows()) +
                                " rows, model expects " + std::to_string(model.visible()));
    Eigen::MatrixXd act = model.weights * x;
    act.colwise() += model.hidden_bias;
    sigmoid_inplace(act);
    return act;
}

Eigen::MatrixXd visible_given_hidden(const RbmModel& model, const Eigen::MatrixXd& h) {
    if (h.rows() != model.hidden())
        throw DimensionMismatch("hidden input has " + std::to_string(h.rows()) +
                                " rows, model expects " + std::to_string(model.hidden()));
    Eigen::MatrixXd act = model.weights.transpose() * h;
    act.colwise() += model.visible_bias;
    sigmoid_inplace(act);
    return act;
}

double free_energy(const RbmModel& model, const Eigen::VectorXd& x) {
    if (x.size() != model.visible()) throw DimensionMismatch("free_energy: bad input size");
    Eigen::VectorXd act = model.weights * x + model.hidden_bias;
    double f = -model.visible_bias.dot(x);
    for (Eigen::Index j = 0; j < act.size(); ++j) f -= softplus(act(j));
    return f;
}

RbmModel cd_update(RbmModel model, const Eigen::MatrixXd& batch, int k, double lr, Rng& rng) {
    if (batch.cols() == 0) throw InvalidCounts("cd_update: empty batch");
    if (k < 1) throw InvalidCounts("cd_update: k must be >= 1");
    const double inv_b = 1.0 / static_cast<double>(batch.cols());

    Eigen::MatrixXd pos_h = hidden_given_visible(model, batch);

    Eigen::MatrixXd x_neg = batch;
    Eigen::MatrixXd h_probs = pos_h;
    for (int step = 0; step < k; ++step) {
        Eigen::MatrixXd h_samp = sample_bernoulli(h_probs, rng);
        Eigen::MatrixXd v_probs = visible_given_hidden(model, h_samp);
        x_neg = sample_bernoulli(v_probs, rng);
        h_probs = hidden_given_visible(model, x_neg);
    }
    // h_probs now holds p(h|x_tilde): the final hidden phase stays a probability

    model.weights += lr * inv_b * (pos_h * batch.transpose() - h_probs * x_neg.transpose());
    model.visible_bias += lr * inv_b * (batch.rowwise().sum() - x_neg.rowwise().sum());
    model.hidden_bias += lr * inv_b * (pos_h.rowwise().sum() - h_probs.rowwise().sum());

    if (!model.finite()) throw NonFiniteUpdate("CD update produced non-finite parameters");
    return model;
}

RbmModel init_rbm(int hidden, int visible, std::uint64_t seed) {
    Rng rng(seed);
    RbmModel model;
    model.weights.resize(hidden, visible);
    for (Eigen::Index c = 0; c < visible; ++c)
        for (Eigen::Index r = 0; r < hidden; ++r) model.weights(r, c) = 0.1 * rng.normal();
    model.visible_bias = Eigen::VectorXd::Zero(visible);
    model.hidden_bias = Eigen::VectorXd::Zero(hidden);
    return model;
}

double reconstruction_cross_entropy(const RbmModel& model, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd ph = hidden_given_visible(model, x);
    Eigen::MatrixXd pv = visible_given_hidden(model, ph);
    double total = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c)
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            double p = std::clamp(pv(r, c), 1e-7, 1.0 - 1e-7);
            total -= x(r, c) * std::log(p) + (1.0 - x(r, c)) * std::log(1.0 - p);
        }
    return total / static_cast<double>(x.cols());
}

RbmModel train_rbm(const BinaryDataset& data, const RbmTrainConfig& cfg,
                   std::vector<double>* recon_log) {
    if (data.count() == 0) throw InvalidCounts("train_rbm: empty dataset");
    RbmModel model = init_rbm(cfg.hidden_units, static_cast<int>(data.images.rows()),
                              split_seed(cfg.seed, 0));
    Rng rng(split_seed(cfg.seed, 1));
    const int batch_size = std::min(cfg.batch_size, data.count());

    Eigen::MatrixXd vel_w, vel_b, vel_c;
    const bool use_momentum = cfg.momentum != 0.0;
    if (use_momentum) {
        vel_w = Eigen::MatrixXd::Zero(model.weights.rows(), model.weights.cols());
        vel_b = Eigen::VectorXd::Zero(model.visible());
        vel_c = Eigen::VectorXd::Zero(model.hidden());
    }

    std::vector<int> order(data.count());
    for (int i = 0; i < data.count(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (int start = 0; start < data.count(); start += batch_size) {
            int n = std::min(batch_size, data.count() - start);
            Eigen::MatrixXd batch(data.images.rows(), n);
            for (int i = 0; i < n; ++i) batch.col(i) = data.images.col(order[start + i]);

            if (!use_momentum && cfg.weight_decay == 0.0) {
                model = cd_update(std::move(model), batch, cfg.cd_steps, cfg.learning_rate, rng);
            } else {
                RbmModel before = model;
                RbmModel after =
                    cd_update(std::move(model), batch, cfg.cd_steps, cfg.learning_rate, rng);
                Eigen::MatrixXd gw = after.weights - before.weights;
                Eigen::VectorXd gb = after.visible_bias - before.visible_bias;
                Eigen::VectorXd gc = after.hidden_bias - before.hidden_bias;
                gw -= cfg.learning_rate * cfg.weight_decay * before.weights;
                if (use_momentum) {
                    vel_w = cfg.momentum * vel_w + gw;
                    vel_b = cfg.momentum * vel_b + gb;
                    vel_c = cfg.momentum * vel_c + gc;
                    gw = vel_w;
                    gb = vel_b;
                    gc = vel_c;
                }
                model = std::move(before);
                model.weights += gw;
                model.visible_bias += gb;
                model.hidden_bias += gc;
                if (!model.finite())
                    throw NonFiniteUpdate("RBM training diverged at epoch " +
                                          std::to_string(epoch));
            }
        }
        if (recon_log) recon_log->push_back(reconstruction_cross_entropy(model, data.images));
    }
    return model;
}

void save_rbm(const RbmModel& model, const std::filesystem::path& path) {
    ByteWriter w;
    w.magic("SGEN-RBM");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(model.hidden()));
    w.u32(static_cast<std::uint32_t>(model.visible()));
    w.matrix(model.weights);
    w.vector(model.visible_bias);
    w.vector(model.hidden_bias);
    write_file(path, w.data());
}

RbmModel load_rbm(const std::filesystem::path& path) {
    auto bytes = read_file(path);
    ByteReader r(bytes);
    r.expect_magic("SGEN-RBM", "SGEN-RBM");
    if (r.u32() != 1) throw FormatError("unsupported SGEN-RBM version");
    std::uint32_t h = r.u32();
    std::uint32_t v = r.u32();
    RbmModel model;
    model.weights = r.matrix(h, v);
    model.visible_bias = r.vector(v);
    model.hidden_bias = r.vector(h);
    return model;
}

} // namespace sgen
