// kmlp command line: dataset generation, training from a config file,
// evaluation, and per-layer inspection of trained models.

#include "kmlp/analysis.hpp"
#include "kmlp/data.hpp"
#include "kmlp/experiment.hpp"
#include "kmlp/model_io.hpp"
#include "kmlp/training.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct DataArgs {
    std::string csv;
    std::string images;
    std::string labels;
    int label_column = -1;
    bool header = false;
    bool normalize = false;
};

void add_data_options(CLI::App* cmd, DataArgs& args) {
    cmd->add_option("--data", args.csv, "CSV dataset (features, integer label column)");
    cmd->add_option("--images", args.images, "IDX image file");
    cmd->add_option("--labels", args.labels, "IDX label file");
    cmd->add_option("--label-column", args.label_column, "CSV label column, negative counts from the end");
    cmd->add_flag("--header", args.header, "CSV has a header row");
    cmd->add_flag("--normalize", args.normalize, "min-max normalize CSV features into [0,1]");
}

kmlp::LabeledDataset<double> load_data(const DataArgs& args) {
    if (!args.csv.empty()) {
        return kmlp::load_csv<double>(args.csv, args.label_column, args.header, args.normalize);
    }
    if (!args.images.empty() && !args.labels.empty()) {
        return kmlp::load_idx<double>(args.images, args.labels);
    }
    throw std::invalid_argument("expected --data CSV or an --images/--labels IDX pair");
}

int cmd_gen(const std::string& name, long n, std::uint64_t seed, const std::string& out_dir, long dim,
            double separation, long side, const std::string& format) {
    kmlp::LabeledDataset<double> data;
    if (name == "blobs") {
        data = kmlp::gen_blobs<double>(n, dim, separation, seed);
    } else if (name == "rectangles") {
        data = kmlp::gen_rectangles<double>(n, side, seed);
    } else {
        throw std::invalid_argument("gen: --name must be blobs or rectangles");
    }

    fs::create_directories(out_dir);
    if (format == "csv") {
        const std::string path = (fs::path(out_dir) / (name + ".csv")).string();
        kmlp::save_csv(data, path);
        std::cout << "wrote " << path << " (" << data.size() << " rows, " << data.dim() << " features)\n";
    } else if (format == "idx") {
        if (name != "rectangles") {
            throw std::invalid_argument("gen: idx output is only defined for image data");
        }
        const std::string img = (fs::path(out_dir) / (name + "-images-idx3-ubyte")).string();
        const std::string lab = (fs::path(out_dir) / (name + "-labels-idx1-ubyte")).string();
        kmlp::save_idx(data, img, lab, std::uint32_t(side), std::uint32_t(side));
        std::cout << "wrote " << img << " and " << lab << " (" << data.size() << " images)\n";
    } else {
        throw std::invalid_argument("gen: --format must be csv or idx");
    }
    return 0;
}

int cmd_train(const std::string& config_path) {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) {
        throw kmlp::FormatError("config: cannot open " + config_path);
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string raw = buffer.str();

    nlohmann::json root;
    try {
        root = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config: parse error: ") + e.what());
    }
    const kmlp::ExperimentConfig cfg = kmlp::parse_experiment_config(root);

    const kmlp::RunArtifacts artifacts = kmlp::run_experiment(cfg, kmlp::content_hash(raw));
    for (const std::string& warning : artifacts.warnings) {
        std::cerr << "warning: " << warning << '\n';
    }
    std::cout << "model=" << artifacts.model_path << '\n';
    for (const std::string& path : artifacts.report_paths) {
        std::cout << "report=" << path << '\n';
    }
    std::cout << "manifest=" << artifacts.manifest_path << '\n';
    if (artifacts.validation_error >= 0) {
        std::printf("validation_metric=%.6f\n", artifacts.validation_error);
    }
    return 0;
}

int cmd_eval(const std::string& model_path, const DataArgs& data_args) {
    const kmlp::ModelFile model = kmlp::load_model(model_path);
    const kmlp::LabeledDataset<double> data = load_data(data_args);
    const double error = kmlp::evaluate(model.network, data.features, data.labels);
    std::printf("error_rate=%.6f\n", error);
    return 0;
}

int cmd_inspect(const std::string& model_path, const DataArgs& data_args) {
    const kmlp::ModelFile model = kmlp::load_model(model_path);
    const kmlp::LabeledDataset<double> data = load_data(data_args);
    const auto rows = kmlp::inspect_rows(model.network, data.features, data.labels);

    std::printf("%-6s %-12s %-12s %-12s %-14s %-16s\n", "layer", "l1", "l2", "alignment", "max_rkhs_norm",
                "complexity_bound");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        std::printf("%-6zu %-12.6g %-12.6g %-12.6g %-14.6g %-16.6g\n", i + 1, r.dissimilarity_l1,
                    r.dissimilarity_l2, r.dissimilarity_alignment, r.max_rkhs_norm, r.complexity_bound);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kernel multilayer perceptrons with layer-wise training"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    std::string gen_name, gen_out = ".", gen_format = "csv";
    long gen_n = 1000, gen_dim = 2, gen_side = 28;
    std::uint64_t gen_seed = 0;
    double gen_separation = 6.0;
    gen->add_option("--name", gen_name, "blobs or rectangles")->required();
    gen->add_option("--n", gen_n, "number of examples")->required();
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--d", gen_dim, "blobs: feature dimension");
    gen->add_option("--separation", gen_separation, "blobs: class center distance");
    gen->add_option("--side", gen_side, "rectangles: image side length");
    gen->add_option("--format", gen_format, "csv or idx");

    auto* train = app.add_subcommand("train", "train from a config file");
    std::string config_path;
    train->add_option("--config", config_path, "experiment config (json)")->required();

    auto* eval = app.add_subcommand("eval", "evaluate a model; prints error_rate=<float>");
    std::string eval_model;
    DataArgs eval_data;
    eval->add_option("--model", eval_model, "model file")->required();
    add_data_options(eval, eval_data);

    auto* inspect = app.add_subcommand("inspect", "per-layer representation diagnostics");
    std::string inspect_model;
    DataArgs inspect_data;
    inspect->add_option("--model", inspect_model, "model file")->required();
    add_data_options(inspect, inspect_data);

    try {
        app.parse(argc, argv);
        if (gen->parsed()) {
            return cmd_gen(gen_name, gen_n, gen_seed, gen_out, gen_dim, gen_separation, gen_side, gen_format);
        }
        if (train->parsed()) {
            return cmd_train(config_path);
        }
        if (eval->parsed()) {
            return cmd_eval(eval_model, eval_data);
        }
        return cmd_inspect(inspect_model, inspect_data);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const kmlp::DivergenceError& e) {
        std::cerr << "error: divergence: " << e.what() << '\n';
        return 3;
    } catch (const kmlp::FormatError& e) {
        std::cerr << "error: format: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: invalid: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
