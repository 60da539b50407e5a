#include "sgen/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "sgen/io.hpp"

namespace sgen {

namespace {

std::vector<int> arch_widths(MlpArch arch) {
    switch (arch) {
    case MlpArch::FC1: return {784, 1024, 1024, 10};
    case MlpArch::FC2: return {784, 1000, 500, 250, 250, 250, 10};
    default: throw Error("make_classifier: custom arch needs explicit widths");
    }
}

struct LayerCache {
    const Eigen::MatrixXd* input = nullptr;
    Eigen::MatrixXd owned;    // first layer owns the noisy input it points to
    Eigen::MatrixXd pre;      // W*in + b
    Eigen::VectorXd ivar;     // 1/sqrt(var+eps)
    Eigen::MatrixXd xhat;     // normalized pre-activations
    Eigen::MatrixXd out;      // layer output (after relu/dropout for hidden)
};

// Train-mode forward; fills caches and updates running statistics.
Eigen::MatrixXd forward_train_impl(MlpClassifier& clf, const Eigen::MatrixXd& x,
                                   const TrainDraws& draws, double noise_sigma,
                                   std::vector<LayerCache>& caches) {
    const Eigen::Index batch = x.cols();
    if (batch < 2) throw BatchTooSmall("train-mode batch norm needs batch >= 2");
    caches.resize(clf.layers.size());

    caches[0].owned = x + noise_sigma * draws.input_noise;
    const Eigen::MatrixXd* cur = &caches[0].owned;
    const double inv_b = 1.0 / static_cast<double>(batch);

    for (std::size_t li = 0; li < clf.layers.size(); ++li) {
        MlpLayer& layer = clf.layers[li];
        LayerCache& cache = caches[li];
        cache.input = cur;
        if (cur->rows() != layer.weights.cols())
            throw DimensionMismatch("forward: layer " + std::to_string(li) + " input mismatch");
        cache.pre = layer.weights * (*cur);
        cache.pre.colwise() += layer.bias;

        if (!layer.batch_norm) { // output layer
            cache.out = cache.pre;
            cur = &cache.out;
            continue;
        }

        Eigen::VectorXd mean = cache.pre.rowwise().mean();
        Eigen::MatrixXd centered = cache.pre.colwise() - mean;
        Eigen::VectorXd var = centered.array().square().matrix().rowwise().sum() * inv_b;
        layer.running_mean = kBnMomentum * layer.running_mean + (1.0 - kBnMomentum) * mean;
        layer.running_var = kBnMomentum * layer.running_var + (1.0 - kBnMomentum) * var;
        cache.ivar = (var.array() + kBnEpsilon).rsqrt();
        cache.xhat = cache.ivar.asDiagonal() * centered;
        Eigen::MatrixXd bn = layer.gamma.asDiagonal() * cache.xhat;
        bn.colwise() += layer.beta;

        Eigen::MatrixXd act = bn.cwiseMax(0.0);
        const double keep = 1.0 - layer.dropout_rate;
        if (layer.dropout_rate > 0.0)
            cache.out = act.cwiseProduct(draws.dropout_masks[li]) / keep;
        else
            cache.out = std::move(act);
        // stash bn for the relu derivative: reuse xhat slot? keep separate
        cache.pre = std::move(bn); // pre now holds the BN output (relu input)
        cur = &cache.out;
    }
    return *cur;
}

} // namespace

bool MlpClassifier::finite() const {
    for (const auto& l : layers) {
        if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
        if (l.batch_norm &&
            (!l.gamma.allFinite() || !l.beta.allFinite() || !l.running_mean.allFinite() ||
             !l.running_var.allFinite() || (l.running_var.array() <= 0.0).any()))
            return false;
    }
    return true;
}

MlpClassifier make_custom_mlp(const std::vector<int>& widths, std::uint64_t seed,
                              double dropout_rate) {
    if (widths.size() < 2) throw InvalidCounts("mlp needs at least input and output widths");
    Rng rng(seed);
    MlpClassifier clf;
    clf.arch = MlpArch::Custom;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        MlpLayer layer;
        const int in = widths[i], out = widths[i + 1];
        const double scale = std::sqrt(2.0 / static_cast<double>(in));
        layer.weights.resize(out, in);
        for (Eigen::Index c = 0; c < in; ++c)
            for (Eigen::Index r = 0; r < out; ++r) layer.weights(r, c) = scale * rng.normal();
        layer.bias = Eigen::VectorXd::Zero(out);
        const bool hidden = i + 2 < widths.size();
        if (hidden) {
            layer.batch_norm = true;
            layer.dropout_rate = dropout_rate;
            layer.gamma = Eigen::VectorXd::Ones(out);
            layer.beta = Eigen::VectorXd::Zero(out);
            layer.running_mean = Eigen::VectorXd::Zero(out);
            layer.running_var = Eigen::VectorXd::Ones(out);
        }
        clf.layers.push_back(std::move(layer));
    }
    return clf;
}

MlpClassifier make_classifier(MlpArch arch, std::uint64_t seed, double dropout_rate) {
    MlpClassifier clf = make_custom_mlp(arch_widths(arch), seed, dropout_rate);
    clf.arch = arch;
    return clf;
}

TrainDraws sample_draws(const MlpClassifier& clf, Eigen::Index batch, Rng& rng) {
    TrainDraws draws;
    draws.input_noise.resize(clf.input_dim(), batch);
    for (Eigen::Index c = 0; c < batch; ++c)
        for (Eigen::Index r = 0; r < draws.input_noise.rows(); ++r)
            draws.input_noise(r, c) = rng.normal();
    draws.dropout_masks.resize(clf.layers.size());
    for (std::size_t li = 0; li < clf.layers.size(); ++li) {
        const MlpLayer& layer = clf.layers[li];
        if (!layer.batch_norm || layer.dropout_rate <= 0.0) continue;
        Eigen::MatrixXd mask(layer.weights.rows(), batch);
        const double keep = 1.0 - layer.dropout_rate;
        for (Eigen::Index c = 0; c < batch; ++c)
            for (Eigen::Index r = 0; r < mask.rows(); ++r)
                mask(r, c) = rng.bernoulli(keep) ? 1.0 : 0.0;
        draws.dropout_masks[li] = std::move(mask);
    }
    return draws;
}

Eigen::MatrixXd forward_eval(const MlpClassifier& clf, const Eigen::MatrixXd& x_batch) {
    if (x_batch.rows() != clf.input_dim())
        throw DimensionMismatch("forward_eval: bad input dimension");
    Eigen::MatrixXd cur = x_batch;
    for (const MlpLayer& layer : clf.layers) {
        Eigen::MatrixXd pre = layer.weights * cur;
        pre.colwise() += layer.bias;
        if (!layer.batch_norm) {
            cur = std::move(pre);
            continue;
        }
        Eigen::VectorXd ivar = (layer.running_var.array() + kBnEpsilon).rsqrt();
        Eigen::MatrixXd xhat = ivar.asDiagonal() * (pre.colwise() - layer.running_mean);
        Eigen::MatrixXd bn = layer.gamma.asDiagonal() * xhat;
        bn.colwise() += layer.beta;
        cur = bn.cwiseMax(0.0); // inverted dropout: nothing to rescale at eval
    }
    return cur;
}

Eigen::MatrixXd forward(MlpClassifier& clf, const Eigen::MatrixXd& x_batch, RunMode mode,
                        Rng* rng, double input_noise_sigma) {
    if (mode == RunMode::Eval) return forward_eval(clf, x_batch);
    if (!rng) throw Error("forward: Train mode needs an rng");
    TrainDraws draws = sample_draws(clf, x_batch.cols(), *rng);
    std::vector<LayerCache> caches;
    return forward_train_impl(clf, x_batch, draws, input_noise_sigma, caches);
}

std::vector<int> predict(const MlpClassifier& clf, const Eigen::MatrixXd& x_batch) {
    Eigen::MatrixXd scores = forward_eval(clf, x_batch);
    std::vector<int> out(scores.cols());
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
        int best = 0;
        for (Eigen::Index r = 1; r < scores.rows(); ++r)
            if (scores(r, c) > scores(best, c)) best = static_cast<int>(r);
        out[static_cast<std::size_t>(c)] = best; // ties resolve to the lowest index
    }
    return out;
}

double loss_and_grad(MlpClassifier& clf, const Eigen::MatrixXd& x_batch,
                     const std::vector<int>& labels, const TrainDraws& draws,
                     double input_noise_sigma, MlpGrads* grads) {
    if (labels.size() != static_cast<std::size_t>(x_batch.cols()))
        throw DimensionMismatch("loss_and_grad: labels/batch size mismatch");
    std::vector<LayerCache> caches;
    Eigen::MatrixXd scores = forward_train_impl(clf, x_batch, draws, input_noise_sigma, caches);

    const Eigen::Index batch = x_batch.cols();
    const double inv_b = 1.0 / static_cast<double>(batch);

    // softmax cross-entropy
    Eigen::MatrixXd probs = scores;
    double loss = 0.0;
    for (Eigen::Index c = 0; c < batch; ++c) {
        double mx = probs.col(c).maxCoeff();
        Eigen::ArrayXd e = (probs.col(c).array() - mx).exp();
        double sum = e.sum();
        probs.col(c) = (e / sum).matrix();
        int y = labels[static_cast<std::size_t>(c)];
        if (y < 0 || y >= scores.rows()) throw LabelOutOfRange("loss_and_grad: bad label");
        loss -= std::log(std::max(probs(y, c), 1e-300));
    }
    loss *= inv_b;
    if (!std::isfinite(loss)) throw NonFiniteLoss("classifier loss is not finite");
    if (!grads) return loss;

    grads->weights.resize(clf.layers.size());
    grads->bias.resize(clf.layers.size());
    grads->gamma.resize(clf.layers.size());
    grads->beta.resize(clf.layers.size());

    Eigen::MatrixXd delta = probs; // dL/dscores
    for (Eigen::Index c = 0; c < batch; ++c)
        delta(labels[static_cast<std::size_t>(c)], c) -= 1.0;
    delta *= inv_b;

    for (int li = static_cast<int>(clf.layers.size()) - 1; li >= 0; --li) {
        MlpLayer& layer = clf.layers[li];
        LayerCache& cache = caches[li];
        Eigen::MatrixXd dpre;
        if (!layer.batch_norm) {
            dpre = std::move(delta);
        } else {
            // dropout
            Eigen::MatrixXd dact = std::move(delta);
            if (layer.dropout_rate > 0.0)
                dact = dact.cwiseProduct(draws.dropout_masks[li]) / (1.0 - layer.dropout_rate);
            // relu over the BN output (stored in cache.pre)
            Eigen::MatrixXd dbn =
                dact.cwiseProduct((cache.pre.array() > 0.0).cast<double>().matrix());
            // batch-norm backward through the batch statistics
            grads->gamma[li] = dbn.cwiseProduct(cache.xhat).rowwise().sum();
            grads->beta[li] = dbn.rowwise().sum();
            Eigen::MatrixXd dxhat = layer.gamma.asDiagonal() * dbn;
            Eigen::VectorXd sum_dxhat = dxhat.rowwise().sum();
            Eigen::VectorXd sum_dxhat_xhat = dxhat.cwiseProduct(cache.xhat).rowwise().sum();
            dpre = dxhat * static_cast<double>(batch);
            dpre.colwise() -= sum_dxhat;
            dpre -= (cache.xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
            dpre = (dpre.array().colwise() * cache.ivar.array()).matrix() * inv_b;
        }
        grads->weights[li] = dpre * cache.input->transpose();
        grads->bias[li] = dpre.rowwise().sum();
        if (li > 0) delta = layer.weights.transpose() * dpre;
    }
    return loss;
}

namespace {

struct ColumnRef {
    int chain; // -1 for a labeled sample
    int col;
};

// Batches per the per-batch augmentation rule: each update covers a group of
// labeled seeds plus all currently-kept generated samples of their chains,
// split across consecutive updates when over the size cap.
std::vector<std::vector<ColumnRef>> plan_batches(int labeled_count,
                                                 const std::vector<SampleChain>& chains,
                                                 const std::vector<std::vector<char>>& masks,
                                                 const TrainSchedule& sched, Rng& rng) {
    long long total_generated = 0;
    for (const auto& c : chains) total_generated += c.length();

    std::vector<int> seed_order(static_cast<std::size_t>(labeled_count));
    for (int i = 0; i < labeled_count; ++i) seed_order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(seed_order);

    std::vector<std::vector<int>> chains_of_seed(static_cast<std::size_t>(labeled_count));
    for (std::size_t ci = 0; ci < chains.size(); ++ci)
        chains_of_seed[static_cast<std::size_t>(chains[ci].seed_index)].push_back(
            static_cast<int>(ci));

    int group = sched.seeds_per_group;
    if (group <= 0) group = (total_generated > 0 && labeled_count <= 10) ? 2 : 10;

    std::vector<std::vector<ColumnRef>> batches;
    std::vector<ColumnRef> pending; // carried seeds whose batch was too small
    for (int start = 0; start < labeled_count; start += group) {
        std::vector<ColumnRef> cols = std::move(pending);
        pending.clear();
        int end = std::min(start + group, labeled_count);
        for (int i = start; i < end; ++i) {
            int seed = seed_order[static_cast<std::size_t>(i)];
            cols.push_back({-1, seed});
            for (int ci : chains_of_seed[static_cast<std::size_t>(seed)])
                for (int s = 0; s < chains[static_cast<std::size_t>(ci)].length(); ++s)
                    if (masks[static_cast<std::size_t>(ci)][static_cast<std::size_t>(s)])
                        cols.push_back({ci, s});
        }
        if (cols.size() < 2) { // everything rejected: carry the seed forward
            pending = std::move(cols);
            continue;
        }
        for (std::size_t off = 0; off < cols.size(); off += sched.batch_cap) {
            std::size_t n = std::min<std::size_t>(sched.batch_cap, cols.size() - off);
            if (n == 1 && !batches.empty()) { // avoid a singleton tail
                batches.back().push_back(cols[off]);
            } else {
                batches.emplace_back(cols.begin() + off, cols.begin() + off + n);
            }
        }
    }
    if (!pending.empty()) {
        if (!batches.empty())
            batches.back().insert(batches.back().end(), pending.begin(), pending.end());
        else
            batches.push_back(std::move(pending)); // will trip BatchTooSmall downstream
    }
    return batches;
}

} // namespace

MlpClassifier train_classifier(const BinaryDataset& labeled,
                               const std::vector<SampleChain>& chains,
                               const FilterConfig& filter, const TrainSchedule& sched,
                               MlpArch arch, std::vector<EpochKeepStat>* keep_log) {
    if (labeled.count() == 0 || !labeled.has_labels())
        throw InvalidCounts("train_classifier: need a labeled dataset");
    for (const auto& chain : chains) {
        if (chain.seed_index < 0 || chain.seed_index >= labeled.count())
            throw InvalidCounts("train_classifier: chain seed_index outside labeled set");
        if (chain.seed_label != labeled.labels[static_cast<std::size_t>(chain.seed_index)])
            throw InvalidCounts("train_classifier: chain seed label disagrees with dataset");
    }

    MlpClassifier clf = make_classifier(arch, split_seed(sched.seed, 0), sched.dropout_rate);
    Rng rng(split_seed(sched.seed, 1));

    MlpGrads grads;
    std::vector<Eigen::MatrixXd> vel_w(clf.layers.size());
    std::vector<Eigen::VectorXd> vel_b(clf.layers.size()), vel_g(clf.layers.size()),
        vel_beta(clf.layers.size());
    for (std::size_t li = 0; li < clf.layers.size(); ++li) {
        vel_w[li] = Eigen::MatrixXd::Zero(clf.layers[li].weights.rows(),
                                          clf.layers[li].weights.cols());
        vel_b[li] = Eigen::VectorXd::Zero(clf.layers[li].bias.size());
        if (clf.layers[li].batch_norm) {
            vel_g[li] = Eigen::VectorXd::Zero(clf.layers[li].gamma.size());
            vel_beta[li] = Eigen::VectorXd::Zero(clf.layers[li].beta.size());
        }
    }

    for (int epoch = 0; epoch < sched.epochs; ++epoch) {
        // the filter is re-evaluated every epoch against the current classifier
        std::vector<std::vector<char>> masks(chains.size());
        int kept = 0, total = 0;
        for (std::size_t ci = 0; ci < chains.size(); ++ci) {
            masks[ci] = filter_by_classifier(chains[ci].samples, chains[ci].seed_label, clf,
                                             epoch, filter);
            total += chains[ci].length();
            for (char m : masks[ci]) kept += m;
        }
        if (keep_log) keep_log->push_back({epoch, kept, total});

        auto batches = plan_batches(labeled.count(), chains, masks, sched, rng);
        for (const auto& batch_cols : batches) {
            Eigen::MatrixXd x(labeled.images.rows(),
                              static_cast<Eigen::Index>(batch_cols.size()));
            std::vector<int> y(batch_cols.size());
            for (std::size_t i = 0; i < batch_cols.size(); ++i) {
                const ColumnRef& ref = batch_cols[i];
                if (ref.chain < 0) {
                    x.col(static_cast<Eigen::Index>(i)) = labeled.images.col(ref.col);
                    y[i] = labeled.labels[static_cast<std::size_t>(ref.col)];
                } else {
                    const SampleChain& chain = chains[static_cast<std::size_t>(ref.chain)];
                    x.col(static_cast<Eigen::Index>(i)) = chain.samples.col(ref.col);
                    y[i] = chain.seed_label;
                }
            }
            TrainDraws draws = sample_draws(clf, x.cols(), rng);
            loss_and_grad(clf, x, y, draws, sched.input_noise_sigma, &grads);
            for (std::size_t li = 0; li < clf.layers.size(); ++li) {
                MlpLayer& layer = clf.layers[li];
                vel_w[li] = sched.momentum * vel_w[li] - sched.learning_rate * grads.weights[li];
                vel_b[li] = sched.momentum * vel_b[li] - sched.learning_rate * grads.bias[li];
                layer.weights += vel_w[li];
                layer.bias += vel_b[li];
                if (layer.batch_norm) {
                    vel_g[li] =
                        sched.momentum * vel_g[li] - sched.learning_rate * grads.gamma[li];
                    vel_beta[li] =
                        sched.momentum * vel_beta[li] - sched.learning_rate * grads.beta[li];
                    layer.gamma += vel_g[li];
                    layer.beta += vel_beta[li];
                }
            }
            if (!clf.finite())
                throw NonFiniteLoss("classifier diverged at epoch " + std::to_string(epoch));
        }
    }
    return clf;
}

double evaluate(const MlpClassifier& clf, const BinaryDataset& test) {
    if (!test.has_labels() || test.count() == 0)
        throw InvalidCounts("evaluate: need a labeled, non-empty test set");
    const int chunk = 2000;
    int wrong = 0;
    for (int start = 0; start < test.count(); start += chunk) {
        int n = std::min(chunk, test.count() - start);
        std::vector<int> pred = predict(clf, test.images.middleCols(start, n));
        for (int i = 0; i < n; ++i)
            if (pred[static_cast<std::size_t>(i)] != test.labels[static_cast<std::size_t>(start + i)])
                ++wrong;
    }
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(test.count());
}

void save_mlp(const MlpClassifier& clf, const std::filesystem::path& path) {
    ByteWriter w;
    w.magic("SGEN-MLP");
    w.u32(1);
    w.u8(static_cast<std::uint8_t>(clf.arch));
    w.u32(static_cast<std::uint32_t>(clf.layers.size()));
    for (const MlpLayer& layer : clf.layers) {
        w.u32(static_cast<std::uint32_t>(layer.weights.rows()));
        w.u32(static_cast<std::uint32_t>(layer.weights.cols()));
        w.u8(layer.batch_norm ? 1 : 0);
        w.f64(layer.dropout_rate);
        w.matrix(layer.weights);
        w.vector(layer.bias);
        if (layer.batch_norm) {
            w.vector(layer.gamma);
            w.vector(layer.beta);
            w.vector(layer.running_mean);
            w.vector(layer.running_var);
        }
    }
    write_file(path, w.data());
}

MlpClassifier load_mlp(const std::filesystem::path& path) {
    auto bytes = read_file(path);
    ByteReader r(bytes);
    r.expect_magic("SGEN-MLP", "SGEN-MLP");
    if (r.u32() != 1) throw FormatError("unsupported SGEN-MLP version");
    MlpClassifier clf;
    clf.arch = static_cast<MlpArch>(r.u8());
    std::uint32_t n_layers = r.u32();
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        MlpLayer layer;
        std::uint32_t rows = r.u32(), cols = r.u32();
        layer.batch_norm = r.u8() != 0;
        layer.dropout_rate = r.f64();
        layer.weights = r.matrix(rows, cols);
        layer.bias = r.vector(rows);
        if (layer.batch_norm) {
            layer.gamma = r.vector(rows);
            layer.beta = r.vector(rows);
            layer.running_mean = r.vector(rows);
            layer.running_var = r.vector(rows);
        }
        clf.layers.push_back(std::move(layer));
    }
    if (clf.layers.empty()) throw FormatError("SGEN-MLP has no layers");
    return clf;
}

} // namespace sgen
