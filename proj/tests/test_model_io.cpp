#include "kmlp/model_io.hpp"

#include "kmlp/data.hpp"
#include "kmlp/experiment.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace kmlp;

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    const fs::path dir = fs::temp_directory_path() / "kmlp_io_tests";
    fs::create_directories(dir);
    return dir;
}

ModelFile tiny_model() {
    std::mt19937_64 rng(13);
    ModelFile model;
    KernelLayer<double> hidden;
    hidden.kernel.sigma = 1.5;
    hidden.centers = test::random_matrix(5, 3, rng);
    hidden.alpha = test::random_matrix(5, 2, rng);
    hidden.bias = test::random_vector(2, rng);
    hidden.kernel.lipschitz = lipschitz_estimate(hidden.kernel);
    KernelLayer<double> out;
    out.kernel.sigma = 0.9;
    out.centers = test::random_matrix(4, 2, rng);
    out.alpha = test::random_matrix(4, 1, rng);
    out.bias = test::random_vector(1, rng);
    model.network.layers = {hidden, out};
    model.network.frozen_upto = 2;
    model.metric = Metric::Alignment;
    model.loss = OutputLoss::Hinge;
    model.num_classes = 2;
    return model;
}

std::string file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("model round trip") {
    const fs::path dir = scratch_dir();
    const ModelFile model = tiny_model();
    const fs::path p1 = dir / "model_a.kmlp";
    const fs::path p2 = dir / "model_b.kmlp";
    save_model(model, p1.string());
    save_model(model, p2.string());

    // writing is deterministic
    CHECK(file_bytes(p1) == file_bytes(p2));

    const ModelFile loaded = load_model(p1.string());
    CHECK(loaded.metric == model.metric);
    CHECK(loaded.loss == model.loss);
    CHECK(loaded.num_classes == 2);
    REQUIRE(loaded.network.depth() == 2);
    CHECK(loaded.network.frozen_upto == 2);
    for (int i = 0; i < 2; ++i) {
        const auto& a = model.network.layers[std::size_t(i)];
        const auto& b = loaded.network.layers[std::size_t(i)];
        CHECK((a.centers - b.centers).norm() == 0.0);
        CHECK((a.alpha - b.alpha).norm() == 0.0);
        CHECK((a.bias - b.bias).norm() == 0.0);
        CHECK(a.kernel.sigma == b.kernel.sigma);
        CHECK(a.kernel.lipschitz.value_or(-1) == b.kernel.lipschitz.value_or(-1));
    }

    // saving the loaded model reproduces the bytes
    const fs::path p3 = dir / "model_c.kmlp";
    save_model(loaded, p3.string());
    CHECK(file_bytes(p3) == file_bytes(p1));
}

TEST_CASE("model loader rejects corrupt files") {
    const fs::path dir = scratch_dir();

    {
        const fs::path p = dir / "not_a_model";
        std::ofstream out(p, std::ios::binary);
        out << "definitely not a model";
        out.close();
        CHECK_THROWS_AS(load_model(p.string()), FormatError);
    }

    {
        const ModelFile model = tiny_model();
        const fs::path full = dir / "full.kmlp";
        save_model(model, full.string());
        const std::string bytes = file_bytes(full);
        const fs::path cut = dir / "cut.kmlp";
        std::ofstream out(cut, std::ios::binary);
        out.write(bytes.data(), std::streamsize(bytes.size() / 2));
        out.close();
        CHECK_THROWS_AS(load_model(cut.string()), FormatError);
    }

    CHECK_THROWS_AS(load_model((dir / "missing.kmlp").string()), FormatError);
}

TEST_CASE("train report writing") {
    const fs::path dir = scratch_dir();
    TrainReport<double> report;
    report.epochs = {{0, 0.5, 0.4, 1754700000.0}, {1, 0.25, 0.2, 1754700001.0}};
    report.chosen_epoch = 1;
    report.final_l1 = 0.125;
    report.final_l2 = 0.06;
    report.final_alignment = 0.01;
    report.final_rkhs_norms = Vector::Ones(2);
    report.wall_seconds = 0.75;

    const fs::path p = dir / "report.tsv";
    write_train_report(report, p.string());
    const std::string text = file_bytes(p);
    CHECK(text.find("epoch\ttrain_objective\tval_metric\ttimestamp") != std::string::npos);
    CHECK(text.find("chosen_epoch\t1") != std::string::npos);
    CHECK(text.find("final_dissimilarity\tl1=0.125") != std::string::npos);
    CHECK(text.find("wall_seconds") != std::string::npos);
    CHECK(text.find("2025-08-09T") != std::string::npos);  // stamp of 1754700000
}

TEST_CASE("experiment config parsing") {
    const auto valid = nlohmann::json::parse(R"({
        "seed": 7,
        "output_dir": "/tmp/kmlp_run",
        "dataset": {"generator": "blobs", "n": 100, "d": 2, "separation": 6.0, "split": [0.8, 0.2, 0.0]},
        "network": {"hidden_widths": [8], "sigmas": [3.0, 1.0], "a": 0.0, "c": 1.0},
        "train": {"learning_rate": 0.01, "epochs": 50, "batch_size": 16, "metric": "l1",
                  "output_loss": "hinge", "patience": 10, "retention": [1.0, 1.0]}
    })");
    const ExperimentConfig cfg = parse_experiment_config(valid);
    CHECK(cfg.seed == 7);
    CHECK(cfg.depth() == 2);
    CHECK(cfg.hidden_widths == std::vector<Index>{8});
    CHECK(cfg.train.metric == Metric::L1);
    CHECK(cfg.train.retention.size() == 2);

    // unknown keys are rejected with their path
    auto unknown = valid;
    unknown["train"]["learning_rat"] = 0.1;
    try {
        parse_experiment_config(unknown);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("train.learning_rat") != std::string::npos);
    }

    auto top_unknown = valid;
    top_unknown["sneaky"] = 1;
    CHECK_THROWS_AS(parse_experiment_config(top_unknown), std::invalid_argument);

    // one kernel per layer
    auto bad_sigmas = valid;
    bad_sigmas["network"]["sigmas"] = {3.0};
    CHECK_THROWS_AS(parse_experiment_config(bad_sigmas), std::invalid_argument);

    // exactly one dataset source
    auto two_sources = valid;
    two_sources["dataset"]["csv"] = "x.csv";
    CHECK_THROWS_AS(parse_experiment_config(two_sources), std::invalid_argument);

    auto bad_metric = valid;
    bad_metric["train"]["metric"] = "l3";
    CHECK_THROWS_AS(parse_experiment_config(bad_metric), std::invalid_argument);

    auto bad_split = valid;
    bad_split["dataset"]["split"] = {0.5, 0.5};
    CHECK_THROWS_AS(parse_experiment_config(bad_split), std::invalid_argument);
}

TEST_CASE("run_experiment produces a model, reports, and manifest") {
    const fs::path dir = scratch_dir() / "run";
    fs::remove_all(dir);

    const auto json = nlohmann::json::parse(R"({
        "seed": 3,
        "output_dir": ")" + dir.string() + R"(",
        "dataset": {"generator": "blobs", "n": 60, "d": 2, "separation": 6.0, "split": [0.75, 0.25, 0.0]},
        "network": {"hidden_widths": [4], "sigmas": [3.0, 1.0]},
        "train": {"learning_rate": 0.01, "epochs": 60, "batch_size": 16, "patience": 60}
    })");
    const ExperimentConfig cfg = parse_experiment_config(json);
    const RunArtifacts artifacts = run_experiment(cfg, "deadbeef");

    CHECK(fs::exists(artifacts.model_path));
    CHECK(artifacts.report_paths.size() == 2);
    for (const auto& p : artifacts.report_paths) CHECK(fs::exists(p));
    CHECK(fs::exists(artifacts.manifest_path));
    CHECK(file_bytes(artifacts.manifest_path).find("config_hash\tdeadbeef") != std::string::npos);

    const ModelFile model = load_model(artifacts.model_path);
    CHECK(model.network.depth() == 2);
    CHECK(model.num_classes == 2);

    // the trained model classifies fresh blobs from the same distribution
    const auto fresh = gen_blobs<double>(200, 2, 6.0, 999);
    CHECK(evaluate(model.network, fresh.features, fresh.labels) <= 0.05);
}
