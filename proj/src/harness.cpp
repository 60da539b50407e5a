#include "sgen/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "sgen/sampler.hpp"

namespace sgen {

using nlohmann::json;

std::string to_string(GeneratorKind kind) {
    switch (kind) {
    case GeneratorKind::BRbm: return "b-rbm";
    case GeneratorKind::GRbm: return "g-rbm";
    case GeneratorKind::Vae: return "vae";
    }
    return "?";
}

GeneratorKind generator_kind_from_string(const std::string& s) {
    if (s == "b-rbm" || s == "brbm") return GeneratorKind::BRbm;
    if (s == "g-rbm" || s == "grbm") return GeneratorKind::GRbm;
    if (s == "vae") return GeneratorKind::Vae;
    throw FormatError("unknown generator kind: " + s);
}

namespace {

std::string arch_name(MlpArch arch) {
    switch (arch) {
    case MlpArch::FC1: return "fc1";
    case MlpArch::FC2: return "fc2";
    default: return "custom";
    }
}

MlpArch arch_from_string(const std::string& s) {
    if (s == "fc1") return MlpArch::FC1;
    if (s == "fc2") return MlpArch::FC2;
    throw FormatError("unknown classifier architecture: " + s);
}

void log_line(std::ostream* log, const std::string& msg) {
    if (!log) return;
    auto now = std::chrono::system_clock::now();
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch());
    *log << "ts=" << secs.count() << " " << msg << "\n";
    log->flush();
}

} // namespace

void apply_quick_profile(ExperimentConfig& cfg) {
    cfg.chain_length = 100;
    // per-sample CD updates converge the small-data RBM far better than the
    // batched default; a calmer learning rate keeps the run-to-run variance low
    cfg.rbm_hidden = 500;
    cfg.rbm_learning_rate = 0.03;
    cfg.rbm_batch_size = 1;
    cfg.classifier_sched.epochs = 200;
    cfg.classifier_sched.seeds_per_group = 2;
    cfg.filter.warmup_epochs = 0;
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["total"] = cfg.total;
    j["labeled_count"] = cfg.labeled_count;
    j["generator"] = to_string(cfg.generator);
    j["chain_length"] = cfg.chain_length;
    j["self_filter"] = cfg.self_filter;
    j["chains_per_seed"] = cfg.chains_per_seed;
    j["classifier"] = arch_name(cfg.classifier);
    j["classifier_epochs"] = cfg.classifier_sched.epochs;
    j["classifier_learning_rate"] = cfg.classifier_sched.learning_rate;
    j["classifier_momentum"] = cfg.classifier_sched.momentum;
    j["input_noise_sigma"] = cfg.classifier_sched.input_noise_sigma;
    j["dropout_rate"] = cfg.classifier_sched.dropout_rate;
    j["batch_cap"] = cfg.classifier_sched.batch_cap;
    j["seeds_per_group"] = cfg.classifier_sched.seeds_per_group;
    j["filter_warmup_epochs"] = cfg.filter.warmup_epochs;
    j["rbm_hidden"] = cfg.rbm_hidden;
    j["rbm_learning_rate"] = cfg.rbm_learning_rate;
    j["rbm_cd_steps"] = cfg.rbm_cd_steps;
    j["rbm_batch_size"] = cfg.rbm_batch_size;
    j["brbm_epochs"] = cfg.brbm_epochs;
    j["grbm_epochs"] = cfg.grbm_epochs;
    j["vae_hidden"] = cfg.vae.hidden_units;
    j["vae_latent"] = cfg.vae.latent_dim;
    j["vae_epochs"] = cfg.vae.epochs;
    j["vae_learning_rate"] = cfg.vae.learning_rate;
    j["vae_batch_size"] = cfg.vae.batch_size;
    j["replications"] = cfg.replications;
    j["master_seed"] = cfg.master_seed;
    return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
    json j = json::parse(text);
    ExperimentConfig cfg;
    cfg.total = j.value("total", cfg.total);
    cfg.labeled_count = j.value("labeled_count", cfg.labeled_count);
    if (j.contains("generator")) cfg.generator = generator_kind_from_string(j["generator"]);
    cfg.chain_length = j.value("chain_length", cfg.chain_length);
    cfg.self_filter = j.value("self_filter", cfg.self_filter);
    cfg.chains_per_seed = j.value("chains_per_seed", cfg.chains_per_seed);
    if (j.contains("classifier")) cfg.classifier = arch_from_string(j["classifier"]);
    cfg.classifier_sched.epochs = j.value("classifier_epochs", cfg.classifier_sched.epochs);
    cfg.classifier_sched.learning_rate =
        j.value("classifier_learning_rate", cfg.classifier_sched.learning_rate);
    cfg.classifier_sched.momentum = j.value("classifier_momentum", cfg.classifier_sched.momentum);
    cfg.classifier_sched.input_noise_sigma =
        j.value("input_noise_sigma", cfg.classifier_sched.input_noise_sigma);
    cfg.classifier_sched.dropout_rate = j.value("dropout_rate", cfg.classifier_sched.dropout_rate);
    cfg.classifier_sched.batch_cap = j.value("batch_cap", cfg.classifier_sched.batch_cap);
    cfg.classifier_sched.seeds_per_group =
        j.value("seeds_per_group", cfg.classifier_sched.seeds_per_group);
    cfg.filter.warmup_epochs = j.value("filter_warmup_epochs", cfg.filter.warmup_epochs);
    cfg.rbm_hidden = j.value("rbm_hidden", cfg.rbm_hidden);
    cfg.rbm_learning_rate = j.value("rbm_learning_rate", cfg.rbm_learning_rate);
    cfg.rbm_cd_steps = j.value("rbm_cd_steps", cfg.rbm_cd_steps);
    cfg.rbm_batch_size = j.value("rbm_batch_size", cfg.rbm_batch_size);
    cfg.brbm_epochs = j.value("brbm_epochs", cfg.brbm_epochs);
    cfg.grbm_epochs = j.value("grbm_epochs", cfg.grbm_epochs);
    cfg.vae.hidden_units = j.value("vae_hidden", cfg.vae.hidden_units);
    cfg.vae.latent_dim = j.value("vae_latent", cfg.vae.latent_dim);
    cfg.vae.epochs = j.value("vae_epochs", cfg.vae.epochs);
    cfg.vae.learning_rate = j.value("vae_learning_rate", cfg.vae.learning_rate);
    cfg.vae.batch_size = j.value("vae_batch_size", cfg.vae.batch_size);
    cfg.replications = j.value("replications", cfg.replications);
    cfg.master_seed = j.value("master_seed", cfg.master_seed);
    if (cfg.replications < 1) throw InvalidCounts("replications must be >= 1");
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json(text);
}

std::string config_hash(const ExperimentConfig& cfg) {
    // FNV-1a over the canonical JSON form
    std::string text = config_to_json(cfg);
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

struct TrainedGenerator {
    std::optional<RbmModel> rbm;
    std::optional<VaeModel> vae;
    GeneratorHandle handle() const {
        return rbm ? GeneratorHandle::of(*rbm) : GeneratorHandle::of(*vae);
    }
};

TrainedGenerator train_generator(const ExperimentConfig& cfg, const BinaryDataset& pool,
                                 std::uint64_t seed) {
    TrainedGenerator gen;
    if (cfg.generator == GeneratorKind::Vae) {
        VaeTrainConfig vcfg = cfg.vae;
        vcfg.seed = seed;
        gen.vae = train_vae(pool, vcfg);
    } else {
        RbmTrainConfig rcfg = default_rbm_config(
            cfg.generator == GeneratorKind::BRbm ? RbmRegime::Bad : RbmRegime::Good, seed);
        rcfg.hidden_units = cfg.rbm_hidden;
        rcfg.learning_rate = cfg.rbm_learning_rate;
        rcfg.cd_steps = cfg.rbm_cd_steps;
        rcfg.batch_size = cfg.rbm_batch_size;
        rcfg.epochs = cfg.generator == GeneratorKind::BRbm ? cfg.brbm_epochs : cfg.grbm_epochs;
        gen.rbm = train_rbm(pool, rcfg);
    }
    return gen;
}

void summarize(const std::vector<double>& xs, double& mean, double& stddev) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    stddev = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const BinaryDataset& train,
                                const BinaryDataset& test,
                                const std::filesystem::path* out_dir, std::ostream* log) {
    if (cfg.replications < 1) throw InvalidCounts("replications must be >= 1");
    ExperimentResult result;
    result.config = cfg;
    result.hash = config_hash(cfg);
    result.code_version = kCodeVersion;

    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        std::ofstream(*out_dir / "config.json") << config_to_json(cfg) << "\n";
    }

    for (int r = 0; r < cfg.replications; ++r) {
        const std::uint64_t rep_seed = split_seed(cfg.master_seed, static_cast<std::uint64_t>(r));
        const std::uint64_t scenario_seed = split_seed(rep_seed, 0);
        const std::uint64_t generator_seed = split_seed(rep_seed, 1);
        const std::uint64_t chain_base_seed = split_seed(rep_seed, 2);
        const std::uint64_t classifier_seed = split_seed(rep_seed, 3);

        log_line(log, "event=scenario rep=" + std::to_string(r) +
                          " seed=" + std::to_string(scenario_seed));
        ScenarioSplit split = make_scenario(train, cfg.total, cfg.labeled_count, scenario_seed);

        // the generator sees every selected sample, labels ignored
        BinaryDataset pool;
        pool.images.resize(train.images.rows(), cfg.total);
        pool.images << split.labeled.images, split.unlabeled.images;

        TrainedGenerator gen = train_generator(cfg, pool, generator_seed);
        log_line(log, "event=generator_trained rep=" + std::to_string(r) +
                          " kind=" + to_string(cfg.generator));

        std::vector<SampleChain> chains;
        for (int i = 0; i < split.labeled.count(); ++i) {
            for (int m = 0; m < cfg.chains_per_seed; ++m) {
                Rng chain_rng(split_seed(chain_base_seed,
                                         static_cast<std::uint64_t>(i) * cfg.chains_per_seed +
                                             static_cast<std::uint64_t>(m)));
                SampleChain chain =
                    generate_chain(gen.handle(), split.labeled.images.col(i), cfg.chain_length,
                                   chain_rng, i, split.labeled.labels[static_cast<std::size_t>(i)]);
                chains.push_back(std::move(chain));
            }
        }

        TrainSchedule sched = cfg.classifier_sched;
        sched.seed = classifier_seed;
        FilterConfig filter = cfg.filter;
        filter.mode = cfg.self_filter ? FilterMode::SelfFiltered : FilterMode::All;

        std::vector<EpochKeepStat> keep;
        MlpClassifier clf =
            train_classifier(split.labeled, chains, filter, sched, cfg.classifier, &keep);
        double error = evaluate(clf, test);

        FilterConfig baseline_filter;
        MlpClassifier baseline =
            train_classifier(split.labeled, {}, baseline_filter, sched, cfg.classifier);
        double baseline_error = evaluate(baseline, test);

        log_line(log, "event=replication_done rep=" + std::to_string(r) +
                          " error=" + std::to_string(error) +
                          " baseline=" + std::to_string(baseline_error));

        result.errors.push_back(error);
        result.baseline_errors.push_back(baseline_error);
        result.keep_stats.push_back(std::move(keep));

        if (out_dir) {
            std::string tag = "rep" + std::to_string(r);
            save_scenario_manifest(split, *out_dir / (tag + "-scenario.json"));
            if (gen.rbm) save_rbm(*gen.rbm, *out_dir / (tag + "-generator.rbm"));
            if (gen.vae) save_vae(*gen.vae, *out_dir / (tag + "-generator.vae"));
            for (std::size_t ci = 0; ci < chains.size(); ++ci)
                save_chain(chains[ci],
                           *out_dir / (tag + "-chain" + std::to_string(ci) + ".chn"));
            save_mlp(clf, *out_dir / (tag + "-classifier.mlp"));
            save_mlp(baseline, *out_dir / (tag + "-baseline.mlp"));
            save_result(result, *out_dir / "result.json"); // partial results on failure
        }
    }

    summarize(result.errors, result.mean, result.stddev);
    summarize(result.baseline_errors, result.baseline_mean, result.baseline_stddev);
    if (out_dir) save_result(result, *out_dir / "result.json");
    return result;
}

void save_result(const ExperimentResult& result, const std::filesystem::path& path) {
    json j;
    j["format"] = "sgen-result";
    j["version"] = 1;
    j["config"] = json::parse(config_to_json(result.config));
    j["config_hash"] = result.hash;
    j["code_version"] = result.code_version;
    j["errors"] = result.errors;
    j["baseline_errors"] = result.baseline_errors;
    j["mean"] = result.mean;
    j["stddev"] = result.stddev;
    j["baseline_mean"] = result.baseline_mean;
    j["baseline_stddev"] = result.baseline_stddev;
    json keeps = json::array();
    for (const auto& rep : result.keep_stats) {
        json rep_j = json::array();
        for (const auto& s : rep)
            rep_j.push_back({{"epoch", s.epoch}, {"kept", s.kept}, {"total", s.total}});
        keeps.push_back(rep_j);
    }
    j["keep_stats"] = keeps;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

ExperimentResult load_result(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    in >> j;
    if (j.value("format", "") != "sgen-result") throw FormatError("not a result file");
    ExperimentResult result;
    result.config = config_from_json(j.at("config").dump());
    result.hash = j.value("config_hash", "");
    result.code_version = j.value("code_version", "");
    result.errors = j.at("errors").get<std::vector<double>>();
    result.baseline_errors = j.at("baseline_errors").get<std::vector<double>>();
    result.mean = j.at("mean").get<double>();
    result.stddev = j.at("stddev").get<double>();
    result.baseline_mean = j.at("baseline_mean").get<double>();
    result.baseline_stddev = j.at("baseline_stddev").get<double>();
    for (const auto& rep_j : j.value("keep_stats", json::array())) {
        std::vector<EpochKeepStat> rep;
        for (const auto& s : rep_j)
            rep.push_back({s.at("epoch").get<int>(), s.at("kept").get<int>(),
                           s.at("total").get<int>()});
        result.keep_stats.push_back(std::move(rep));
    }
    return result;
}

std::string emit_table(const std::vector<ExperimentResult>& results, TableFormat format) {
    if (results.empty()) throw InvalidCounts("emit_table: no results");
    for (const auto& r : results)
        if (r.config.total != results[0].config.total ||
            r.config.labeled_count != results[0].config.labeled_count)
            throw InconsistentScenario("emit_table: results span different scenarios");

    struct ColumnKey {
        int gen; // 0 b-rbm, 1 g-rbm, 2 vae
        int length;
        int filter; // 0 = y, 1 = n
        bool operator<(const ColumnKey& o) const {
            return std::tie(gen, length, filter) < std::tie(o.gen, o.length, o.filter);
        }
    };

    std::set<ColumnKey> columns;
    std::set<std::string> archs;
    std::map<std::pair<std::string, ColumnKey>, double> cells;
    std::map<std::string, double> baselines;
    for (const auto& r : results) {
        ColumnKey key{static_cast<int>(r.config.generator), r.config.chain_length,
                      r.config.self_filter ? 0 : 1};
        std::string arch = arch_name(r.config.classifier);
        columns.insert(key);
        archs.insert(arch);
        cells[{arch, key}] = r.mean;
        if (!baselines.count(arch)) baselines[arch] = r.baseline_mean;
    }

    auto column_name = [](const ColumnKey& k) {
        static const char* gens[] = {"B-RBM", "G-RBM", "VAE"};
        return std::string(gens[k.gen]) + "-" + std::to_string(k.length) + "-" +
               (k.filter == 0 ? "y" : "n");
    };
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };

    const bool md = format == TableFormat::Markdown;
    const char* sep = md ? " | " : ",";
    std::string out;
    if (md) out += "| ";
    out += "Classifier";
    out += sep;
    out += "Baseline";
    for (const auto& key : columns) {
        out += sep;
        out += column_name(key);
    }
    if (md) out += " |";
    out += "\n";
    if (md) {
        out += "|";
        for (std::size_t i = 0; i < columns.size() + 2; ++i) out += " --- |";
        out += "\n";
    }
    for (const auto& arch : archs) {
        if (md) out += "| ";
        out += arch;
        out += sep;
        out += fmt(baselines.at(arch));
        for (const auto& key : columns) {
            out += sep;
            auto it = cells.find({arch, key});
            out += it == cells.end() ? std::string("-") : fmt(it->second);
        }
        if (md) out += " |";
        out += "\n";
    }
    return out;
}

} // namespace sgen
