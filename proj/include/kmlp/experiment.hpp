#ifndef KMLP_EXPERIMENT_HPP
#define KMLP_EXPERIMENT_HPP

#include "kmlp/analysis.hpp"
#include "kmlp/data.hpp"
#include "kmlp/model_io.hpp"
#include "kmlp/network.hpp"
#include "kmlp/targets.hpp"
#include "kmlp/training.hpp"
#include "kmlp/types.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace kmlp {

/// Where a run's examples come from: exactly one of a generator, a CSV file,
/// or an IDX image/label pair.
struct DatasetConfig {
    std::string generator;  // "blobs" or "rectangles"
    Index n = 0;
    Index dim = 2;
    double separation = 6.0;
    Index side = 28;

    std::string csv;
    int label_column = -1;
    bool header = false;
    bool normalize = false;

    std::string images;
    std::string labels;

    std::array<double, 3> split_fractions{0.8, 0.2, 0.0};
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string output_dir = ".";
    DatasetConfig dataset;
    std::vector<Index> hidden_widths;
    std::vector<double> sigmas;  // one per layer, hidden + output
    double a = 0.0;
    double c = 1.0;
    TrainConfig<double> train;

    int depth() const { return int(sigmas.size()); }

    NetworkSpec<double> network_spec() const {
        NetworkSpec<double> spec;
        spec.hidden_widths = hidden_widths;
        for (double sigma : sigmas) {
            KernelSpec<double> k;
            k.sigma = sigma;
            k.a = a;
            k.c = c;
            spec.kernels.push_back(k);
        }
        return spec;
    }
};

namespace detail {

using json = nlohmann::json;

inline void require_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw std::invalid_argument("config: unknown key '" + (path.empty() ? it.key() : path + "." + it.key()) +
                                        "'");
        }
    }
}

template <typename T>
T get_or(const json& obj, const std::string& path, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw std::invalid_argument("config: bad value for '" + (path.empty() ? key : path + "." + key) +
                                    "': " + e.what());
    }
}

inline Metric parse_metric(const std::string& text) {
    if (text == "l1") return Metric::L1;
    if (text == "l2") return Metric::L2;
    if (text == "alignment") return Metric::Alignment;
    throw std::invalid_argument("config: train.metric must be one of l1, l2, alignment");
}

inline OutputLoss parse_loss(const std::string& text) {
    if (text == "hinge") return OutputLoss::Hinge;
    if (text == "cross_entropy") return OutputLoss::CrossEntropy;
    throw std::invalid_argument("config: train.output_loss must be hinge or cross_entropy");
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& root) {
    using detail::get_or;
    using detail::require_keys;

    if (!root.is_object()) {
        throw std::invalid_argument("config: top level must be an object");
    }
    require_keys(root, "", {"seed", "output_dir", "dataset", "network", "train"});

    ExperimentConfig cfg;
    cfg.seed = get_or<std::uint64_t>(root, "", "seed", 0);
    cfg.output_dir = get_or<std::string>(root, "", "output_dir", ".");

    if (!root.contains("dataset") || !root.at("dataset").is_object()) {
        throw std::invalid_argument("config: missing 'dataset' object");
    }
    const auto& ds = root.at("dataset");
    require_keys(ds, "dataset",
                 {"generator", "n", "d", "separation", "side", "csv", "label_column", "header", "normalize",
                  "images", "labels", "split"});
    cfg.dataset.generator = get_or<std::string>(ds, "dataset", "generator", "");
    cfg.dataset.n = get_or<Index>(ds, "dataset", "n", 0);
    cfg.dataset.dim = get_or<Index>(ds, "dataset", "d", 2);
    cfg.dataset.separation = get_or<double>(ds, "dataset", "separation", 6.0);
    cfg.dataset.side = get_or<Index>(ds, "dataset", "side", 28);
    cfg.dataset.csv = get_or<std::string>(ds, "dataset", "csv", "");
    cfg.dataset.label_column = get_or<int>(ds, "dataset", "label_column", -1);
    cfg.dataset.header = get_or<bool>(ds, "dataset", "header", false);
    cfg.dataset.normalize = get_or<bool>(ds, "dataset", "normalize", false);
    cfg.dataset.images = get_or<std::string>(ds, "dataset", "images", "");
    cfg.dataset.labels = get_or<std::string>(ds, "dataset", "labels", "");
    if (ds.contains("split")) {
        const auto v = get_or<std::vector<double>>(ds, "dataset", "split", {});
        if (v.size() != 3) {
            throw std::invalid_argument("config: dataset.split must list [train, validation, test] fractions");
        }
        cfg.dataset.split_fractions = {v[0], v[1], v[2]};
    }

    int sources = 0;
    sources += cfg.dataset.generator.empty() ? 0 : 1;
    sources += cfg.dataset.csv.empty() ? 0 : 1;
    sources += cfg.dataset.images.empty() ? 0 : 1;
    if (sources != 1) {
        throw std::invalid_argument("config: dataset needs exactly one of generator, csv, or images");
    }
    if (!cfg.dataset.images.empty() && cfg.dataset.labels.empty()) {
        throw std::invalid_argument("config: dataset.images requires dataset.labels");
    }
    if (!cfg.dataset.generator.empty()) {
        if (cfg.dataset.generator != "blobs" && cfg.dataset.generator != "rectangles") {
            throw std::invalid_argument("config: dataset.generator must be blobs or rectangles");
        }
        if (cfg.dataset.n < 1) {
            throw std::invalid_argument("config: dataset.n must be positive");
        }
    }

    if (!root.contains("network") || !root.at("network").is_object()) {
        throw std::invalid_argument("config: missing 'network' object");
    }
    const auto& net = root.at("network");
    require_keys(net, "network", {"hidden_widths", "sigmas", "a", "c"});
    cfg.hidden_widths = get_or<std::vector<Index>>(net, "network", "hidden_widths", {});
    cfg.sigmas = get_or<std::vector<double>>(net, "network", "sigmas", {});
    cfg.a = get_or<double>(net, "network", "a", 0.0);
    cfg.c = get_or<double>(net, "network", "c", 1.0);
    if (cfg.sigmas.size() != cfg.hidden_widths.size() + 1) {
        throw std::invalid_argument("config: network.sigmas needs one entry per layer (hidden + output)");
    }

    if (root.contains("train")) {
        const auto& tr = root.at("train");
        if (!tr.is_object()) throw std::invalid_argument("config: 'train' must be an object");
        require_keys(tr, "train",
                     {"learning_rate", "adam_beta1", "adam_beta2", "adam_eps", "epochs", "batch_size",
                      "tau_prime", "metric", "output_loss", "patience", "retention", "init",
                      "identity_ridge"});
        cfg.train.learning_rate = get_or<double>(tr, "train", "learning_rate", cfg.train.learning_rate);
        cfg.train.adam_beta1 = get_or<double>(tr, "train", "adam_beta1", cfg.train.adam_beta1);
        cfg.train.adam_beta2 = get_or<double>(tr, "train", "adam_beta2", cfg.train.adam_beta2);
        cfg.train.adam_eps = get_or<double>(tr, "train", "adam_eps", cfg.train.adam_eps);
        cfg.train.epochs = get_or<int>(tr, "train", "epochs", cfg.train.epochs);
        cfg.train.batch_size = get_or<int>(tr, "train", "batch_size", cfg.train.batch_size);
        cfg.train.tau_prime = get_or<double>(tr, "train", "tau_prime", cfg.train.tau_prime);
        cfg.train.metric = detail::parse_metric(get_or<std::string>(tr, "train", "metric", "l1"));
        cfg.train.output_loss = detail::parse_loss(get_or<std::string>(tr, "train", "output_loss", "hinge"));
        cfg.train.patience = get_or<int>(tr, "train", "patience", cfg.train.patience);
        cfg.train.retention = get_or<std::vector<double>>(tr, "train", "retention", {});
        const std::string init = get_or<std::string>(tr, "train", "init", "random");
        if (init == "random") {
            cfg.train.init = InitKind::Random;
        } else if (init == "identity") {
            cfg.train.init = InitKind::Identity;
        } else {
            throw std::invalid_argument("config: train.init must be random or identity");
        }
        cfg.train.identity_ridge = get_or<double>(tr, "train", "identity_ridge", cfg.train.identity_ridge);
    }
    cfg.train.seed = cfg.seed;

    if (!cfg.train.retention.empty() && int(cfg.train.retention.size()) != cfg.depth()) {
        throw std::invalid_argument("config: train.retention needs one entry per layer");
    }
    cfg.train.validate();
    cfg.network_spec().validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("config: cannot open " + path);
    }
    nlohmann::json root;
    try {
        in >> root;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config: parse error: ") + e.what());
    }
    return parse_experiment_config(root);
}

/// Materializes the configured dataset with split tags assigned.
inline LabeledDataset<double> build_dataset(const DatasetConfig& cfg, std::uint64_t master_seed) {
    LabeledDataset<double> data;
    if (cfg.generator == "blobs") {
        data = gen_blobs<double>(cfg.n, cfg.dim, cfg.separation, sub_seed(master_seed, "data"));
    } else if (cfg.generator == "rectangles") {
        data = gen_rectangles<double>(cfg.n, cfg.side, sub_seed(master_seed, "data"));
    } else if (!cfg.csv.empty()) {
        data = load_csv<double>(cfg.csv, cfg.label_column, cfg.header, cfg.normalize);
    } else {
        data = load_idx<double>(cfg.images, cfg.labels);
    }
    split(data, cfg.split_fractions, sub_seed(master_seed, "split"));
    return data;
}

/// FNV-1a over raw bytes; manifests record it so runs can be tied to configs.
inline std::string content_hash(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

struct RunArtifacts {
    std::string model_path;
    std::vector<std::string> report_paths;
    std::string manifest_path;
    std::vector<std::string> warnings;
    double validation_error = -1.0;  // output layer's selection metric at the chosen epoch
};

// Trains per the config and writes model + per-layer reports + manifest into
// output_dir. `config_hash` should be the hash of the raw config file bytes.
inline RunArtifacts run_experiment(const ExperimentConfig& cfg, const std::string& config_hash) {
    namespace fs = std::filesystem;
    LabeledDataset<double> data = build_dataset(cfg.dataset, cfg.seed);
    const SplitData<double> train = subset(data, Split::Train);
    const SplitData<double> val = subset(data, Split::Validation);
    if (train.features.rows() < 2) {
        throw std::invalid_argument("run: training split needs at least two rows");
    }

    TrainResult<double> result = train_network(cfg.network_spec(), train.features, train.labels, val.features,
                                               val.labels, data.num_classes, cfg.train);

    fs::create_directories(cfg.output_dir);
    RunArtifacts artifacts;
    artifacts.warnings = result.warnings;
    artifacts.model_path = (fs::path(cfg.output_dir) / "model.kmlp").string();

    ModelFile model;
    model.network = std::move(result.network);
    model.metric = cfg.train.metric;
    model.loss = cfg.train.output_loss;
    model.num_classes = data.num_classes;
    save_model(model, artifacts.model_path);

    for (std::size_t i = 0; i < result.reports.size(); ++i) {
        const std::string path = (fs::path(cfg.output_dir) / ("report_layer" + std::to_string(i) + ".tsv")).string();
        write_train_report(result.reports[i], path);
        artifacts.report_paths.push_back(path);
    }
    if (!result.reports.empty() && !result.reports.back().epochs.empty()) {
        const auto& rep = result.reports.back();
        artifacts.validation_error = rep.epochs[std::size_t(rep.chosen_epoch)].val_metric;
    }

    artifacts.manifest_path = (fs::path(cfg.output_dir) / "manifest.txt").string();
    std::ofstream manifest(artifacts.manifest_path);
    manifest << "config_hash\t" << config_hash << '\n';
    manifest << "seed\t" << cfg.seed << '\n';
    manifest << "model\tmodel.kmlp\n";
    manifest << "layers\t" << cfg.depth() << '\n';

    return artifacts;
}

}  // namespace kmlp

#endif  // KMLP_EXPERIMENT_HPP
