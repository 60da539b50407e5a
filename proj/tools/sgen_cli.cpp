#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sgen/harness.hpp"
#include "sgen/io.hpp"
#include "sgen/sampler.hpp"
#include "sgen/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string file_magic(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw sgen::IoError("cannot open " + path.string());
    char buf[8] = {};
    in.read(buf, 8);
    return std::string(buf, static_cast<std::size_t>(in.gcount()));
}

int cmd_ingest(const fs::path& images, const fs::path& labels, const fs::path& out,
               const fs::path& manifest) {
    sgen::RawImageSet raw = sgen::parse_idx_images(sgen::read_file(images));
    sgen::BinaryDataset ds = sgen::binarize(raw);
    if (!labels.empty()) {
        ds.labels = sgen::parse_idx_labels(sgen::read_file(labels));
        if (static_cast<int>(ds.labels.size()) != ds.count())
            throw sgen::InvalidCounts("image and label counts disagree");
    }
    sgen::save_dataset(ds, out);
    if (!manifest.empty()) {
        json j;
        j["format"] = "sgen-ingest-manifest";
        j["images"] = images.string();
        j["labels"] = labels.string();
        j["store"] = out.string();
        j["count"] = ds.count();
        j["labeled"] = ds.has_labels();
        std::ofstream mf(manifest);
        if (!mf) throw sgen::IoError("cannot write " + manifest.string());
        mf << j.dump(2) << "\n";
    }
    std::cout << "ingested count=" << ds.count() << " labeled=" << ds.has_labels()
              << " store=" << out.string() << "\n";
    return 0;
}

int cmd_train_generator(const fs::path& data_path, const std::string& kind_str,
                        const fs::path& out, std::uint64_t seed, int hidden, int epochs,
                        double lr, int cd_steps, int batch, int latent) {
    sgen::BinaryDataset data = sgen::load_dataset(data_path);
    sgen::GeneratorKind kind = sgen::generator_kind_from_string(kind_str);
    if (kind == sgen::GeneratorKind::Vae) {
        sgen::VaeTrainConfig cfg;
        cfg.seed = seed;
        if (hidden > 0) cfg.hidden_units = hidden;
        if (epochs >= 0) cfg.epochs = epochs;
        if (lr > 0) cfg.learning_rate = lr;
        if (batch > 0) cfg.batch_size = batch;
        if (latent > 0) cfg.latent_dim = latent;
        sgen::save_vae(sgen::train_vae(data, cfg), out);
    } else {
        sgen::RbmTrainConfig cfg = sgen::default_rbm_config(
            kind == sgen::GeneratorKind::BRbm ? sgen::RbmRegime::Bad : sgen::RbmRegime::Good,
            seed);
        if (hidden > 0) cfg.hidden_units = hidden;
        if (epochs >= 0) cfg.epochs = epochs;
        if (lr > 0) cfg.learning_rate = lr;
        if (cd_steps > 0) cfg.cd_steps = cd_steps;
        if (batch > 0) cfg.batch_size = batch;
        sgen::save_rbm(sgen::train_rbm(data, cfg), out);
    }
    std::cout << "trained kind=" << kind_str << " model=" << out.string() << "\n";
    return 0;
}

int cmd_generate(const fs::path& model_path, const fs::path& data_path, int seed_sample,
                 int length, const fs::path& out, std::uint64_t seed, const fs::path& grid) {
    sgen::BinaryDataset data = sgen::load_dataset(data_path);
    if (seed_sample < 0 || seed_sample >= data.count())
        throw sgen::InvalidCounts("--seed-sample outside the dataset");
    int label = data.has_labels() ? data.labels[static_cast<std::size_t>(seed_sample)] : 0;

    std::string magic = file_magic(model_path);
    sgen::RbmModel rbm;
    sgen::VaeModel vae;
    sgen::GeneratorHandle gen{nullptr, nullptr};
    if (magic == "SGEN-RBM") {
        rbm = sgen::load_rbm(model_path);
        gen = sgen::GeneratorHandle::of(rbm);
    } else if (magic == "SGEN-VAE") {
        vae = sgen::load_vae(model_path);
        gen = sgen::GeneratorHandle::of(vae);
    } else {
        throw sgen::FormatError("unrecognized model file " + model_path.string());
    }

    sgen::Rng rng(seed);
    sgen::SampleChain chain = sgen::generate_chain(
        gen, data.images.col(seed_sample), length, rng, seed_sample, label);
    sgen::save_chain(chain, out);
    if (!grid.empty()) sgen::chain_grid_export(chain, grid);
    std::cout << "generated length=" << chain.length() << " chain=" << out.string() << "\n";
    return 0;
}

int cmd_train_classifier(const fs::path& data_path, const std::string& arch_str,
                         const std::vector<std::string>& chain_paths, bool self_filter,
                         int warmup, const fs::path& out, std::uint64_t seed, int epochs,
                         double lr) {
    sgen::BinaryDataset labeled = sgen::load_dataset(data_path);
    std::vector<sgen::SampleChain> chains;
    for (const auto& p : chain_paths) chains.push_back(sgen::load_chain(p));

    sgen::FilterConfig filter;
    filter.mode = self_filter ? sgen::FilterMode::SelfFiltered : sgen::FilterMode::All;
    filter.warmup_epochs = warmup;

    sgen::TrainSchedule sched;
    sched.seed = seed;
    if (epochs >= 0) sched.epochs = epochs;
    if (lr > 0) sched.learning_rate = lr;

    sgen::MlpArch arch = arch_str == "fc2" ? sgen::MlpArch::FC2 : sgen::MlpArch::FC1;
    sgen::MlpClassifier clf = sgen::train_classifier(labeled, chains, filter, sched, arch);
    sgen::save_mlp(clf, out);
    std::cout << "trained arch=" << arch_str << " model=" << out.string() << "\n";
    return 0;
}

int cmd_evaluate(const fs::path& model_path, const fs::path& data_path) {
    sgen::MlpClassifier clf = sgen::load_mlp(model_path);
    sgen::BinaryDataset test = sgen::load_dataset(data_path);
    double error = sgen::evaluate(clf, test);
    std::printf("error_percent=%.4f count=%d\n", error, test.count());
    return 0;
}

int cmd_run_experiment(const fs::path& config_path, const fs::path& train_path,
                       const fs::path& test_path, const fs::path& out_dir,
                       std::uint64_t seed, bool quick, const std::string& generator,
                       int chain_length, int filter_flag, const std::string& classifier,
                       int replications, int total, int labeled_count) {
    sgen::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = sgen::load_config(config_path);
    if (quick) sgen::apply_quick_profile(cfg);
    // flag overrides beat the config file
    if (!generator.empty()) cfg.generator = sgen::generator_kind_from_string(generator);
    if (chain_length >= 0) cfg.chain_length = chain_length;
    if (filter_flag >= 0) cfg.self_filter = filter_flag != 0;
    if (!classifier.empty())
        cfg.classifier = classifier == "fc2" ? sgen::MlpArch::FC2 : sgen::MlpArch::FC1;
    if (replications > 0) cfg.replications = replications;
    if (total > 0) cfg.total = total;
    if (labeled_count > 0) cfg.labeled_count = labeled_count;
    cfg.master_seed = seed;

    sgen::BinaryDataset train = sgen::load_dataset(train_path);
    sgen::BinaryDataset test = sgen::load_dataset(test_path);
    sgen::ExperimentResult result =
        sgen::run_experiment(cfg, train, test, out_dir.empty() ? nullptr : &out_dir,
                             &std::cerr);
    std::printf("mean=%.4f stddev=%.4f baseline_mean=%.4f baseline_stddev=%.4f\n",
                result.mean, result.stddev, result.baseline_mean, result.baseline_stddev);
    return 0;
}

int cmd_export_grid(const fs::path& chain_path, const fs::path& out) {
    sgen::SampleChain chain = sgen::load_chain(chain_path);
    sgen::chain_grid_export(chain, out);
    std::cout << "exported grid=" << out.string() << "\n";
    return 0;
}

int cmd_synth_data(const fs::path& dir, int train_count, int test_count, std::uint64_t seed) {
    sgen::write_synthetic_idx(dir, train_count, test_count, seed);
    std::cout << "wrote synthetic idx train=" << train_count << " test=" << test_count
              << " dir=" << dir.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"scarce-data augmentation pipeline"};
    app.require_subcommand(1);

    // ingest
    fs::path in_images, in_labels, in_out, in_manifest;
    auto* ingest = app.add_subcommand("ingest", "parse IDX files into the dataset store");
    ingest->add_option("--images", in_images, "IDX image file")->required();
    ingest->add_option("--labels", in_labels, "IDX label file");
    ingest->add_option("--out", in_out, "dataset store output")->required();
    ingest->add_option("--manifest", in_manifest, "JSON ingest manifest output");

    // train-generator
    fs::path tg_data, tg_out;
    std::string tg_kind;
    std::uint64_t tg_seed = 0;
    int tg_hidden = 0, tg_epochs = -1, tg_cd = 0, tg_batch = 0, tg_latent = 0;
    double tg_lr = 0.0;
    auto* tgen = app.add_subcommand("train-generator", "train an RBM or VAE");
    tgen->add_option("--data", tg_data, "dataset store")->required();
    tgen->add_option("--kind", tg_kind, "b-rbm, g-rbm or vae")->required();
    tgen->add_option("--out", tg_out, "model output")->required();
    tgen->add_option("--seed", tg_seed, "training seed")->required();
    tgen->add_option("--hidden", tg_hidden, "hidden units");
    tgen->add_option("--epochs", tg_epochs, "training epochs");
    tgen->add_option("--learning-rate", tg_lr, "learning rate");
    tgen->add_option("--cd-steps", tg_cd, "contrastive divergence steps");
    tgen->add_option("--batch-size", tg_batch, "minibatch size");
    tgen->add_option("--latent", tg_latent, "VAE latent dimension");

    // generate
    fs::path ge_model, ge_data, ge_out, ge_grid;
    int ge_sample = 0, ge_length = 500;
    std::uint64_t ge_seed = 0;
    auto* gen = app.add_subcommand("generate", "run a sampling chain from a seed image");
    gen->add_option("--model", ge_model, "trained generator model")->required();
    gen->add_option("--data", ge_data, "dataset store holding the seed")->required();
    gen->add_option("--seed-sample", ge_sample, "seed image index")->required();
    gen->add_option("--length", ge_length, "chain length")->required();
    gen->add_option("--out", ge_out, "chain output")->required();
    gen->add_option("--seed", ge_seed, "sampling seed")->required();
    gen->add_option("--grid", ge_grid, "optional PGM grid export");

    // train-classifier
    fs::path tc_data, tc_out;
    std::string tc_arch = "fc1";
    std::vector<std::string> tc_chains;
    bool tc_filter = false;
    int tc_warmup = 5, tc_epochs = -1;
    double tc_lr = 0.0;
    std::uint64_t tc_seed = 0;
    auto* tclf = app.add_subcommand("train-classifier", "train a classifier, optionally augmented");
    tclf->add_option("--data", tc_data, "labeled dataset store")->required();
    tclf->add_option("--arch", tc_arch, "fc1 or fc2")->check(CLI::IsMember({"fc1", "fc2"}));
    tclf->add_option("--chains", tc_chains, "generated sample chains");
    tclf->add_flag("--self-filter", tc_filter, "drop samples the classifier relabels");
    tclf->add_option("--warmup-epochs", tc_warmup, "epochs before filtering starts");
    tclf->add_option("--epochs", tc_epochs, "training epochs");
    tclf->add_option("--learning-rate", tc_lr, "learning rate");
    tclf->add_option("--out", tc_out, "model output")->required();
    tclf->add_option("--seed", tc_seed, "training seed")->required();

    // evaluate
    fs::path ev_model, ev_data;
    auto* ev = app.add_subcommand("evaluate", "error percentage on a labeled dataset");
    ev->add_option("--model", ev_model, "classifier model")->required();
    ev->add_option("--data", ev_data, "labeled dataset store")->required();

    // run-experiment
    fs::path re_config, re_train, re_test, re_out;
    std::uint64_t re_seed = 0;
    bool re_quick = false;
    std::string re_generator, re_classifier;
    int re_length = -1, re_filter = -1, re_reps = 0, re_total = 0, re_labeled = 0;
    auto* re = app.add_subcommand("run-experiment", "full augmentation experiment");
    re->add_option("--config", re_config, "JSON experiment config");
    re->add_option("--train", re_train, "training dataset store")->required();
    re->add_option("--test", re_test, "test dataset store")->required();
    re->add_option("--out", re_out, "artifact output directory");
    re->add_option("--seed", re_seed, "master seed")->required();
    re->add_flag("--quick", re_quick, "CI-sized preset");
    re->add_option("--generator", re_generator, "b-rbm, g-rbm or vae");
    re->add_option("--chain-length", re_length, "samples per chain");
    re->add_option("--self-filter", re_filter, "1 = filter, 0 = keep all");
    re->add_option("--classifier", re_classifier, "fc1 or fc2");
    re->add_option("--replications", re_reps, "replication count");
    re->add_option("--total", re_total, "scenario pool size");
    re->add_option("--labeled-count", re_labeled, "labeled samples in the pool");

    // export-grid
    fs::path xg_chain, xg_out;
    auto* xg = app.add_subcommand("export-grid", "render a chain as a PGM tile grid");
    xg->add_option("--chain", xg_chain, "chain file")->required();
    xg->add_option("--out", xg_out, "PGM output")->required();

    // synth-data
    fs::path sd_dir;
    int sd_train = 60000, sd_test = 10000;
    std::uint64_t sd_seed = 0;
    auto* sd = app.add_subcommand("synth-data", "write a synthetic IDX digit dataset");
    sd->add_option("--dir", sd_dir, "output directory")->required();
    sd->add_option("--train", sd_train, "training image count");
    sd->add_option("--test", sd_test, "test image count");
    sd->add_option("--seed", sd_seed, "generation seed")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage-error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*ingest) return cmd_ingest(in_images, in_labels, in_out, in_manifest);
        if (*tgen)
            return cmd_train_generator(tg_data, tg_kind, tg_out, tg_seed, tg_hidden, tg_epochs,
                                       tg_lr, tg_cd, tg_batch, tg_latent);
        if (*gen)
            return cmd_generate(ge_model, ge_data, ge_sample, ge_length, ge_out, ge_seed,
                                ge_grid);
        if (*tclf)
            return cmd_train_classifier(tc_data, tc_arch, tc_chains, tc_filter, tc_warmup,
                                        tc_out, tc_seed, tc_epochs, tc_lr);
        if (*ev) return cmd_evaluate(ev_model, ev_data);
        if (*re)
            return cmd_run_experiment(re_config, re_train, re_test, re_out, re_seed, re_quick,
                                      re_generator, re_length, re_filter, re_classifier,
                                      re_reps, re_total, re_labeled);
        if (*xg) return cmd_export_grid(xg_chain, xg_out);
        if (*sd) return cmd_synth_data(sd_dir, sd_train, sd_test, sd_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
