#include "sgen/vae.hpp"

#include <cmath>

#include "sgen/io.hpp"
#include "sgen/rbm.hpp" // stable_sigmoid

namespace sgen {

namespace {

Eigen::MatrixXd affine(const Eigen::MatrixXd& w, const Eigen::VectorXd& b,
                       const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out = w * x;
    out.colwise() += b;
    return out;
}

Eigen::MatrixXd init_weight(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    // N(0, 1/fan_in)
    double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) w(r, c) = scale * rng.normal();
    return w;
}

Eigen::MatrixXd draw_eps(Eigen::Index latent, Eigen::Index batch, Rng& rng) {
    Eigen::MatrixXd eps(latent, batch);
    for (Eigen::Index c = 0; c < batch; ++c)
        for (Eigen::Index r = 0; r < latent; ++r) eps(r, c) = rng.normal();
    return eps;
}

} // namespace

bool VaeModel::finite() const {
    return enc_w.allFinite() && enc_b.allFinite() && mu_w.allFinite() && mu_b.allFinite() &&
           logvar_w.allFinite() && logvar_b.allFinite() && dec_w.allFinite() &&
           dec_b.allFinite() && out_w.allFinite() && out_b.allFinite();
}

VaeModel make_vae(int visible, int hidden, int latent, std::uint64_t seed) {
    Rng rng(seed);
    VaeModel m;
    m.enc_w = init_weight(hidden, visible, rng);
    m.enc_b = Eigen::VectorXd::Zero(hidden);
    m.mu_w = init_weight(latent, hidden, rng);
    m.mu_b = Eigen::VectorXd::Zero(latent);
    m.logvar_w = init_weight(latent, hidden, rng);
    m.logvar_b = Eigen::VectorXd::Zero(latent);
    m.dec_w = init_weight(hidden, latent, rng);
    m.dec_b = Eigen::VectorXd::Zero(hidden);
    m.out_w = init_weight(visible, hidden, rng);
    m.out_b = Eigen::VectorXd::Zero(visible);
    return m;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> encode(const VaeModel& model,
                                                   const Eigen::MatrixXd& x) {
    if (x.rows() != model.visible()) throw DimensionMismatch("encode: bad input dimension");
    Eigen::MatrixXd h = affine(model.enc_w, model.enc_b, x).array().tanh();
    Eigen::MatrixXd mu = affine(model.mu_w, model.mu_b, h);
    Eigen::MatrixXd logvar = affine(model.logvar_w, model.logvar_b, h)
                                 .array()
                                 .min(kLogvarClamp)
                                 .max(-kLogvarClamp);
    return {mu, logvar};
}

Eigen::MatrixXd decode(const VaeModel& model, const Eigen::MatrixXd& z) {
    if (z.rows() != model.latent()) throw DimensionMismatch("decode: bad latent dimension");
    Eigen::MatrixXd h = affine(model.dec_w, model.dec_b, z).array().tanh();
    Eigen::MatrixXd logits = affine(model.out_w, model.out_b, h);
    return logits.unaryExpr([](double v) { return stable_sigmoid(v); });
}

double kl_to_standard_normal(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar) {
    double kl = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i)
        kl += -0.5 * (1.0 + logvar(i) - mu(i) * mu(i) - std::exp(logvar(i)));
    return kl < 0.0 ? 0.0 : kl; // clamp tiny negative rounding
}

ElboBreakdown elbo_with_grad(const VaeModel& model, const Eigen::MatrixXd& batch,
                             const Eigen::MatrixXd& eps, VaeGrads* grads) {
    if (batch.cols() == 0) throw InvalidCounts("elbo: empty batch");
    if (batch.rows() != model.visible()) throw DimensionMismatch("elbo: bad input dimension");
    const Eigen::Index B = batch.cols();
    const double inv_b = 1.0 / static_cast<double>(B);

    // forward
    Eigen::MatrixXd h1 = affine(model.enc_w, model.enc_b, batch).array().tanh();
    Eigen::MatrixXd mu = affine(model.mu_w, model.mu_b, h1);
    Eigen::MatrixXd logvar_raw = affine(model.logvar_w, model.logvar_b, h1);
    Eigen::MatrixXd logvar =
        logvar_raw.array().min(kLogvarClamp).max(-kLogvarClamp).matrix();
    Eigen::MatrixXd sigma = (0.5 * logvar.array()).exp();
    Eigen::MatrixXd z = mu + sigma.cwiseProduct(eps);
    Eigen::MatrixXd h2 = affine(model.dec_w, model.dec_b, z).array().tanh();
    Eigen::MatrixXd logits = affine(model.out_w, model.out_b, h2);
    Eigen::MatrixXd p = logits.unaryExpr([](double v) { return stable_sigmoid(v); });

    double llh = 0.0, kl = 0.0;
    Eigen::MatrixXd dlogits(p.rows(), p.cols());
    for (Eigen::Index c = 0; c < B; ++c) {
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
            double pr = p(r, c);
            double pc = std::clamp(pr, kProbClamp, 1.0 - kProbClamp);
            double x = batch(r, c);
            llh += x * std::log(pc) + (1.0 - x) * std::log(1.0 - pc);
            // the clamp has zero derivative outside its band
            dlogits(r, c) = (pr == pc) ? (x - pr) * inv_b : 0.0;
        }
        for (Eigen::Index l = 0; l < mu.rows(); ++l)
            kl += -0.5 * (1.0 + logvar(l, c) - mu(l, c) * mu(l, c) - std::exp(logvar(l, c)));
    }
    llh *= inv_b;
    kl *= inv_b;
    if (kl < 0.0) kl = 0.0;

    ElboBreakdown out{llh - kl, llh, kl};
    if (!std::isfinite(out.elbo)) throw NonFiniteLoss("ELBO is not finite");
    if (!grads) return out;

    // backward (gradient of the ELBO, ascent direction)
    grads->out_w = dlogits * h2.transpose();
    grads->out_b = dlogits.rowwise().sum();
    Eigen::MatrixXd da2 =
        (model.out_w.transpose() * dlogits).cwiseProduct((1.0 - h2.array().square()).matrix());
    grads->dec_w = da2 * z.transpose();
    grads->dec_b = da2.rowwise().sum();
    Eigen::MatrixXd dz = model.dec_w.transpose() * da2;

    Eigen::MatrixXd dmu = dz - inv_b * mu;
    Eigen::MatrixXd dlv =
        0.5 * dz.cwiseProduct(eps).cwiseProduct(sigma) -
        (0.5 * inv_b) * (logvar.array().exp() - 1.0).matrix();
    // clamp derivative
    for (Eigen::Index c = 0; c < B; ++c)
        for (Eigen::Index l = 0; l < dlv.rows(); ++l)
            if (std::abs(logvar_raw(l, c)) > kLogvarClamp) dlv(l, c) = 0.0;

    grads->mu_w = dmu * h1.transpose();
    grads->mu_b = dmu.rowwise().sum();
    grads->logvar_w = dlv * h1.transpose();
    grads->logvar_b = dlv.rowwise().sum();
    Eigen::MatrixXd da1 = (model.mu_w.transpose() * dmu + model.logvar_w.transpose() * dlv)
                              .cwiseProduct((1.0 - h1.array().square()).matrix());
    grads->enc_w = da1 * batch.transpose();
    grads->enc_b = da1.rowwise().sum();
    return out;
}

ElboBreakdown elbo_batch(const VaeModel& model, const Eigen::MatrixXd& batch, Rng& rng) {
    Eigen::MatrixXd eps = draw_eps(model.latent(), batch.cols(), rng);
    return elbo_with_grad(model, batch, eps, nullptr);
}

VaeModel train_vae(const BinaryDataset& data, const VaeTrainConfig& cfg,
                   std::vector<ElboBreakdown>* log) {
    if (data.count() == 0) throw InvalidCounts("train_vae: empty dataset");
    VaeModel model = make_vae(static_cast<int>(data.images.rows()), cfg.hidden_units,
                              cfg.latent_dim, split_seed(cfg.seed, 0));
    Rng rng(split_seed(cfg.seed, 1));
    const int batch_size = std::min(cfg.batch_size, data.count());

    std::vector<int> order(data.count());
    for (int i = 0; i < data.count(); ++i) order[i] = i;

    VaeGrads g;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double sum_llh = 0.0, sum_kl = 0.0;
        int seen = 0;
        for (int start = 0; start < data.count(); start += batch_size) {
            int n = std::min(batch_size, data.count() - start);
            Eigen::MatrixXd batch(data.images.rows(), n);
            for (int i = 0; i < n; ++i) batch.col(i) = data.images.col(order[start + i]);
            Eigen::MatrixXd eps = draw_eps(model.latent(), n, rng);
            ElboBreakdown b = elbo_with_grad(model, batch, eps, &g);
            const double lr = cfg.learning_rate;
            model.enc_w += lr * g.enc_w;
            model.enc_b += lr * g.enc_b;
            model.mu_w += lr * g.mu_w;
            model.mu_b += lr * g.mu_b;
            model.logvar_w += lr * g.logvar_w;
            model.logvar_b += lr * g.logvar_b;
            model.dec_w += lr * g.dec_w;
            model.dec_b += lr * g.dec_b;
            model.out_w += lr * g.out_w;
            model.out_b += lr * g.out_b;
            if (!model.finite())
                throw NonFiniteLoss("VAE training diverged at epoch " + std::to_string(epoch));
            sum_llh += b.llh * n;
            sum_kl += b.kl * n;
            seen += n;
        }
        if (log) {
            double llh = sum_llh / seen, kl = sum_kl / seen;
            log->push_back({llh - kl, llh, kl});
        }
    }
    return model;
}

namespace {
void write_tensor(ByteWriter& w, const Eigen::MatrixXd& m) {
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    w.matrix(m);
}
void write_tensor(ByteWriter& w, const Eigen::VectorXd& v) {
    w.u32(static_cast<std::uint32_t>(v.size()));
    w.u32(1);
    w.vector(v);
}
Eigen::MatrixXd read_tensor(ByteReader& r) {
    std::uint32_t rows = r.u32();
    std::uint32_t cols = r.u32();
    return r.matrix(rows, cols);
}
} // namespace

void save_vae(const VaeModel& model, const std::filesystem::path& path) {
    ByteWriter w;
    w.magic("SGEN-VAE");
    w.u32(1);
    w.u32(10); // tensor count
    write_tensor(w, model.enc_w);
    write_tensor(w, model.enc_b);
    write_tensor(w, model.mu_w);
    write_tensor(w, model.mu_b);
    write_tensor(w, model.logvar_w);
    write_tensor(w, model.logvar_b);
    write_tensor(w, model.dec_w);
    write_tensor(w, model.dec_b);
    write_tensor(w, model.out_w);
    write_tensor(w, model.out_b);
    write_file(path, w.data());
}

VaeModel load_vae(const std::filesystem::path& path) {
    auto bytes = read_file(path);
    ByteReader r(bytes);
    r.expect_magic("SGEN-VAE", "SGEN-VAE");
    if (r.u32() != 1) throw FormatError("unsupported SGEN-VAE version");
    if (r.u32() != 10) throw FormatError("unexpected SGEN-VAE tensor count");
    VaeModel m;
    m.enc_w = read_tensor(r);
    m.enc_b = read_tensor(r);
    m.mu_w = read_tensor(r);
    m.mu_b = read_tensor(r);
    m.logvar_w = read_tensor(r);
    m.logvar_b = read_tensor(r);
    m.dec_w = read_tensor(r);
    m.dec_b = read_tensor(r);
    m.out_w = read_tensor(r);
    m.out_b = read_tensor(r);
    if (m.mu_w.rows() != m.logvar_w.rows() || m.out_w.rows() != m.enc_w.cols())
        throw FormatError("inconsistent SGEN-VAE shapes");
    return m;
}

} // namespace sgen
