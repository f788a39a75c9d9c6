#include "kmlp/training.hpp"

#include "kmlp/data.hpp"
#include "gradient_check.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

using namespace kmlp;

namespace {

KernelSpec<double> gaussian(double sigma) {
    KernelSpec<double> spec;
    spec.sigma = sigma;
    return spec;
}

KernelLayer<double> make_layer(const Matrix& centers, const Matrix& alpha, const Vector& bias, double sigma) {
    KernelLayer<double> layer;
    layer.kernel = gaussian(sigma);
    layer.centers = centers;
    layer.alpha = alpha;
    layer.bias = bias;
    return layer;
}

}  // namespace

TEST_CASE("hinge_risk values") {
    Vector s1(1);
    s1 << 2.0;
    IntVector y1(1);
    y1 << 1;
    CHECK(hinge_risk(s1, y1) == 0.0);

    s1 << 0.0;
    CHECK(hinge_risk(s1, y1) == 1.0);

    Vector s2(2);
    s2 << 2.0, -0.5;
    IntVector y2(2);
    y2 << 1, 1;
    CHECK(hinge_risk(s2, y2) == doctest::Approx(0.75).epsilon(1e-15));

    CHECK_THROWS_AS(hinge_risk(s2, y1), std::invalid_argument);
}

TEST_CASE("cross_entropy_risk values") {
    Matrix uniform = Matrix::Constant(3, 10, 0.42);
    IntVector y(3);
    y << 0, 5, 9;
    CHECK(cross_entropy_risk(uniform, y) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    CHECK(cross_entropy_risk(uniform, y) == doctest::Approx(2.302585).epsilon(1e-6));

    Matrix saturated = Matrix::Zero(1, 3);
    saturated(0, 1) = 1e3;
    IntVector y1(1);
    y1 << 1;
    CHECK(cross_entropy_risk(saturated, y1) == doctest::Approx(0.0).epsilon(1e-9));

    Matrix two(1, 2);
    two << 1.0, 0.0;
    IntVector y0(1);
    y0 << 0;
    CHECK(cross_entropy_risk(two, y0) == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
    CHECK(cross_entropy_risk(two, y0) == doctest::Approx(0.31326).epsilon(1e-5));

    IntVector bad(1);
    bad << 7;
    CHECK_THROWS_AS(cross_entropy_risk(two, bad), std::invalid_argument);
}

TEST_CASE("hidden_objective closed forms") {
    std::mt19937_64 rng(11);
    const auto next = gaussian(1.0);

    // constant-output layer: the Gram above is all ones, so the l1 objective is
    // the between-class pair fraction times (1 - a)
    {
        const Matrix input = test::random_matrix(6, 2, rng);
        IntVector labels(6);
        labels << 0, 1, 1, 0, 1, 1;
        const auto layer = make_layer(input, Matrix::Zero(6, 3), Vector::Zero(3), 1.0);
        const double psi = label_stats(labels).between_class_pair_fraction;
        const auto parts = hidden_objective(layer, input, labels, next, Metric::L1, 0.0);
        CHECK(parts.total == doctest::Approx(psi * (1.0 - next.a)).epsilon(1e-12));

        // tau adds tau * 0 for the zero layer
        const auto with_tau = hidden_objective(layer, input, labels, next, Metric::L1, 0.7);
        CHECK(with_tau.total == doctest::Approx(parts.total).epsilon(1e-12));
        CHECK(with_tau.max_norm == 0.0);
    }

    // a representation that attains the target exactly: single class, constant map
    {
        const Matrix input = test::random_matrix(5, 2, rng);
        IntVector labels = IntVector::Zero(5);
        const auto layer = make_layer(input, Matrix::Zero(5, 2), Vector::Ones(2), 1.0);
        for (Metric m : {Metric::L1, Metric::L2, Metric::Alignment}) {
            CHECK(hidden_objective(layer, input, labels, next, m, 0.0).total ==
                  doctest::Approx(0.0).epsilon(1e-14));
        }
    }

    // near-ideal two-class representation at separation 6 sigma
    {
        Matrix input(4, 1);
        input << 0.0, 0.0, 6.0, 6.0;
        IntVector labels(4);
        labels << 0, 0, 1, 1;
        const auto layer = identity_init(gaussian(2.0), Matrix(input), 1e-10).layer;
        const auto parts = hidden_objective(layer, input, labels, next, Metric::L1, 0.0);
        CHECK(parts.risk < 1e-9);
    }
}

TEST_CASE("output_objective closed forms") {
    std::mt19937_64 rng(13);
    const Matrix centers = test::random_matrix(3, 2, rng);

    // margins of at least one: zero hinge risk
    {
        Matrix input(2, 2);
        input << 3.0, 0.0, -3.0, 0.0;
        IntVector labels(2);
        labels << 1, 0;
        auto layer = identity_init(gaussian(1.0), Matrix(input), 0.0).layer;
        layer.alpha = layer.alpha.col(0).eval();
        layer.alpha /= 2.0;  // scores become +-1.5 on the first axis
        layer.bias = Vector::Zero(1);
        const auto parts = output_objective(layer, input, labels, OutputLoss::Hinge, 0.0);
        CHECK(parts.risk == 0.0);
        CHECK(parts.total == 0.0);
    }

    // doubling alpha doubles the norm term exactly
    {
        const Matrix alpha = test::random_matrix(3, 1, rng);
        const auto layer = make_layer(centers, alpha, Vector::Zero(1), 1.0);
        const auto doubled = make_layer(centers, Matrix(2.0 * alpha), Vector::Zero(1), 1.0);
        IntVector labels(4);
        labels << 0, 1, 0, 1;
        const Matrix input = test::random_matrix(4, 2, rng);
        const auto p1 = output_objective(layer, input, labels, OutputLoss::Hinge, 0.1);
        const auto p2 = output_objective(doubled, input, labels, OutputLoss::Hinge, 0.1);
        CHECK(p2.max_norm == doctest::Approx(2.0 * p1.max_norm).epsilon(1e-12));
    }

    // two-point hand oracle: risk + tau * norm
    {
        Matrix c(1, 1), a(1, 1);
        c << 0.0;
        a << 1.0;
        const auto layer = make_layer(c, a, Vector::Zero(1), 1.0);
        Matrix input(2, 1);
        input << 0.0, 1.0;
        IntVector labels(2);
        labels << 1, 0;
        // scores: k(0,0) = 1 -> margin ok; k(1,0) = e^{-1} -> label 0 wants negative
        const double hinge = (std::max(0.0, 1.0 - 1.0) + std::max(0.0, 1.0 + std::exp(-1.0))) / 2.0;
        const double norm = 1.0;  // alpha' G alpha = 1
        const auto parts = output_objective(layer, input, labels, OutputLoss::Hinge, 0.25);
        CHECK(parts.risk == doctest::Approx(hinge).epsilon(1e-12));
        CHECK(parts.max_norm == doctest::Approx(norm).epsilon(1e-12));
        CHECK(parts.total == doctest::Approx(hinge + 0.25 * norm).epsilon(1e-12));
    }

    // label/width mismatches
    {
        const auto layer = make_layer(centers, Matrix::Zero(3, 2), Vector::Zero(2), 1.0);
        IntVector labels(2);
        labels << 0, 1;
        CHECK_THROWS_AS(output_objective(layer, Matrix::Zero(2, 2), labels, OutputLoss::Hinge, 0.0),
                        std::invalid_argument);
        const auto single = make_layer(centers, Matrix::Zero(3, 1), Vector::Zero(1), 1.0);
        CHECK_THROWS_AS(output_objective(single, Matrix::Zero(2, 2), labels, OutputLoss::CrossEntropy, 0.0),
                        std::invalid_argument);
    }
}

TEST_CASE("objective decomposition matches independent parts") {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix centers = test::random_matrix(4, 2, rng);
        const Matrix alpha = test::random_matrix(4, 3, rng);
        const auto layer = make_layer(centers, alpha, test::random_vector(3, rng), 1.1);
        const Matrix input = test::random_matrix(6, 2, rng);
        const IntVector labels = test::random_labels(6, 2, rng);
        const auto next = gaussian(0.9);
        const double tau = 0.3;

        const auto parts = hidden_objective(layer, input, labels, next, Metric::L2, tau);
        const GramMatrix<double> S = gram(next, Matrix(layer_forward(layer, input)));
        const double dis = dissimilarity(S, ideal_gram(labels, next.a, next.c), Metric::L2);
        const double max_norm = rkhs_norms(layer).maxCoeff();
        CHECK(parts.risk == doctest::Approx(dis).epsilon(1e-13));
        CHECK(parts.max_norm == doctest::Approx(max_norm).epsilon(1e-13));
        CHECK(parts.total == doctest::Approx(dis + tau * max_norm).epsilon(1e-13));
    }
}

TEST_CASE("analytic gradients match finite differences") {
    std::mt19937_64 rng(29);

    auto random_instance = [&](Index n, Index d_in, Index m, Index d_out, double scale) {
        struct Instance {
            KernelLayer<double> layer;
            Matrix input;
        } inst;
        inst.layer = make_layer(test::random_matrix(m, d_in, rng, scale),
                                Matrix(test::random_matrix(m, d_out, rng) / std::sqrt(double(m))),
                                test::random_vector(d_out, rng, 0.5), 0.8 + 0.1 * double(rng() % 10));
        inst.input = test::random_matrix(n, d_in, rng, scale);
        return inst;
    };

    SUBCASE("hidden objectives") {
        for (Metric metric : {Metric::L1, Metric::L2, Metric::Alignment}) {
            for (double tau : {0.0, 0.3}) {
                int done = 0;
                while (done < 6) {
                    const Index n = 3 + Index(rng() % 5);
                    auto [layer, input] = random_instance(n, 2, 3, 2, 1.5);
                    const IntVector labels = test::random_labels(n, 2, rng);
                    const auto next = gaussian(1.0 + 0.1 * double(rng() % 5));

                    // keep clear of the l1 kink and of norm ties
                    if (metric == Metric::L1) {
                        const GramMatrix<double> S = gram(next, Matrix(layer_forward(layer, input)));
                        const auto T = ideal_gram(labels, next.a, next.c);
                        bool near_kink = false;
                        for (Index r = 0; r < n && !near_kink; ++r) {
                            for (Index k = 0; k < n; ++k) {
                                if (r != k && std::abs(S.values(r, k) - T.values(r, k)) < 1e-3) {
                                    near_kink = true;
                                    break;
                                }
                            }
                        }
                        if (near_kink) continue;
                    }
                    if (tau > 0.0) {
                        const Vector norms = rkhs_norms(layer);
                        Vector sorted = norms;
                        std::sort(sorted.data(), sorted.data() + sorted.size());
                        if (sorted[sorted.size() - 1] < 1e-3 ||
                            (sorted.size() > 1 && sorted[sorted.size() - 1] - sorted[sorted.size() - 2] < 1e-4)) {
                            continue;
                        }
                    }

                    LayerGradients<double> analytic;
                    hidden_objective(layer, input, labels, next, metric, tau, &analytic);
                    const auto numeric = test::finite_difference_gradients(layer, [&](const auto& l) {
                        return hidden_objective(l, input, labels, next, metric, tau).total;
                    });
                    CHECK(test::gradient_disagreement(analytic, numeric) < 1e-4);
                    ++done;
                }
            }
        }
    }

    SUBCASE("output objectives") {
        for (OutputLoss loss : {OutputLoss::Hinge, OutputLoss::CrossEntropy}) {
            for (double tau : {0.0, 0.3}) {
                int done = 0;
                while (done < 6) {
                    const Index n = 3 + Index(rng() % 5);
                    const Index k = loss == OutputLoss::Hinge ? 2 : 3;
                    const Index width = loss == OutputLoss::Hinge ? 1 : k;
                    auto [layer, input] = random_instance(n, 2, 4, width, 1.5);
                    const IntVector labels = test::random_labels(n, int(k), rng);

                    if (loss == OutputLoss::Hinge) {
                        const Matrix scores = layer_forward(layer, input);
                        bool near_kink = false;
                        for (Index i = 0; i < n; ++i) {
                            const double y = labels[i] > 0 ? 1.0 : -1.0;
                            if (std::abs(1.0 - y * scores(i, 0)) < 1e-3) near_kink = true;
                        }
                        if (near_kink) continue;
                    }
                    if (tau > 0.0) {
                        const Vector norms = rkhs_norms(layer);
                        if (norms.maxCoeff() < 1e-3) continue;
                        if (norms.size() > 1) {
                            Vector sorted = norms;
                            std::sort(sorted.data(), sorted.data() + sorted.size());
                            if (sorted[sorted.size() - 1] - sorted[sorted.size() - 2] < 1e-4) continue;
                        }
                    }

                    LayerGradients<double> analytic;
                    output_objective(layer, input, labels, loss, tau, &analytic);
                    const auto numeric = test::finite_difference_gradients(layer, [&](const auto& l) {
                        return output_objective(l, input, labels, loss, tau).total;
                    });
                    CHECK(test::gradient_disagreement(analytic, numeric) < 1e-4);
                    ++done;
                }
            }
        }
    }

    SUBCASE("hinge bias gradient at the zero layer") {
        const Index n = 6;
        const Matrix input = test::random_matrix(n, 2, rng);
        IntVector labels(n);
        labels << 1, 0, 1, 0, 1, 0;
        const auto layer = make_layer(test::random_matrix(4, 2, rng), Matrix::Zero(4, 1), Vector::Zero(1), 1.0);
        LayerGradients<double> analytic;
        output_objective(layer, input, labels, OutputLoss::Hinge, 0.0, &analytic);
        // all margins violated at score 0: d_bias = -mean(y)
        double mean_y = 0.0;
        for (Index i = 0; i < n; ++i) mean_y += labels[i] > 0 ? 1.0 : -1.0;
        mean_y /= double(n);
        CHECK(analytic.bias[0] == doctest::Approx(-mean_y).epsilon(1e-14));
    }

    SUBCASE("l2 hidden gradient at the zero layer") {
        const Index n = 5;
        const Matrix input = test::random_matrix(n, 2, rng);
        const IntVector labels = test::random_labels(n, 2, rng);
        const auto layer = make_layer(test::random_matrix(3, 2, rng), Matrix::Zero(3, 2), Vector::Zero(2), 1.0);
        const auto next = gaussian(1.0);
        LayerGradients<double> analytic;
        hidden_objective(layer, input, labels, next, Metric::L2, 0.0, &analytic);
        const auto numeric = test::finite_difference_gradients(layer, [&](const auto& l) {
            return hidden_objective(l, input, labels, next, Metric::L2, 0.0).total;
        });
        CHECK(test::gradient_disagreement(analytic, numeric) < 1e-4);
    }
}

TEST_CASE("train_layer behavior") {
    std::mt19937_64 rng(37);

    SUBCASE("zero epochs returns the layer unchanged") {
        const Matrix input = test::random_matrix(8, 2, rng);
        const IntVector labels = test::random_labels(8, 2, rng);
        auto layer = random_layer(gaussian(1.0), input, 3, 7);
        const Matrix alpha_before = layer.alpha;

        TrainConfig<double> cfg;
        cfg.epochs = 0;
        LayerObjective<double> obj;
        obj.next_kernel = gaussian(1.0);
        const auto res = train_layer(std::move(layer), input, labels, Matrix(0, 2), IntVector(), obj, cfg, 1);
        CHECK((res.layer.alpha - alpha_before).norm() == 0.0);
        CHECK(res.report.epochs.empty());
    }

    SUBCASE("hidden layer on separable blobs cuts dissimilarity by 5x") {
        auto data = gen_blobs<double>(40, 2, 6.0, 123);
        auto layer = random_layer(gaussian(3.0), data.features, 4, 99);

        TrainConfig<double> cfg;
        cfg.epochs = 200;
        cfg.learning_rate = 1e-2;
        cfg.batch_size = 16;
        cfg.patience = 200;  // run to the end
        LayerObjective<double> obj;
        obj.next_kernel = gaussian(1.0);
        obj.metric = Metric::L1;

        const auto res =
            train_layer(std::move(layer), data.features, data.labels, data.features, data.labels, obj, cfg, 5);
        const double initial = res.report.epochs.front().train_objective;
        const double chosen = res.report.epochs[std::size_t(res.report.chosen_epoch)].train_objective;
        CHECK(chosen < 0.2 * initial);
    }

    SUBCASE("identical seeds give identical runs") {
        auto data = gen_blobs<double>(24, 2, 4.0, 7);
        TrainConfig<double> cfg;
        cfg.epochs = 20;
        cfg.learning_rate = 1e-2;
        cfg.batch_size = 8;
        LayerObjective<double> obj;
        obj.next_kernel = gaussian(1.0);

        auto run = [&]() {
            auto layer = random_layer(gaussian(2.0), data.features, 3, 11);
            return train_layer(std::move(layer), data.features, data.labels, data.features, data.labels, obj,
                               cfg, 21);
        };
        const auto a = run();
        const auto b = run();
        CHECK((a.layer.alpha - b.layer.alpha).norm() == 0.0);
        CHECK((a.layer.bias - b.layer.bias).norm() == 0.0);
        REQUIRE(a.report.epochs.size() == b.report.epochs.size());
        for (std::size_t i = 0; i < a.report.epochs.size(); ++i) {
            CHECK(a.report.epochs[i].train_objective == b.report.epochs[i].train_objective);
            CHECK(a.report.epochs[i].val_metric == b.report.epochs[i].val_metric);
        }
        CHECK(a.report.chosen_epoch == b.report.chosen_epoch);
    }

    SUBCASE("returned parameters achieve the minimum recorded validation metric") {
        auto data = gen_blobs<double>(30, 2, 3.0, 17);
        auto layer = random_layer(gaussian(2.0), data.features, 1, 3);
        TrainConfig<double> cfg;
        cfg.epochs = 30;
        cfg.learning_rate = 5e-2;
        cfg.batch_size = 8;
        cfg.output_loss = OutputLoss::Hinge;
        cfg.patience = 30;
        LayerObjective<double> obj;
        obj.role = LayerRole::Output;

        const auto res = train_layer(std::move(layer), data.features, data.labels, data.features, data.labels,
                                     obj, cfg, 55);
        double best = res.report.epochs.front().val_metric;
        for (const auto& rec : res.report.epochs) best = std::min(best, rec.val_metric);
        CHECK(res.report.epochs[std::size_t(res.report.chosen_epoch)].val_metric == best);
        // ties resolve to the earliest epoch
        for (int e = 0; e < res.report.chosen_epoch; ++e) {
            CHECK(res.report.epochs[std::size_t(e)].val_metric > best);
        }
    }

    SUBCASE("divergence is detected and names the epoch") {
        // an absurd learning rate overflows the scores, which poisons the
        // softmax and then the parameters
        auto data = gen_blobs<double>(40, 2, 4.0, 5);
        IntVector labels = IntVector::Zero(40);
        auto layer = random_layer(gaussian(10.0), data.features, 2, 9);
        TrainConfig<double> cfg;
        cfg.epochs = 50;
        cfg.learning_rate = 1e307;
        cfg.batch_size = 8;
        cfg.output_loss = OutputLoss::CrossEntropy;
        LayerObjective<double> obj;
        obj.role = LayerRole::Output;
        obj.loss = OutputLoss::CrossEntropy;
        try {
            train_layer(std::move(layer), data.features, labels, data.features, labels, obj, cfg, 2);
            FAIL("expected DivergenceError");
        } catch (const DivergenceError& e) {
            CHECK(e.epoch() >= 1);
            CHECK(std::string(e.what()).find("epoch") != std::string::npos);
        }
    }
}

TEST_CASE("train_network end to end on blobs") {
    auto data = gen_blobs<double>(80, 2, 6.0, 2024);
    split(data, {0.75, 0.25, 0.0}, 31);
    const auto train = subset(data, Split::Train);
    const auto val = subset(data, Split::Validation);

    NetworkSpec<double> spec;
    spec.hidden_widths = {4};
    spec.kernels = {gaussian(3.0), gaussian(1.0)};

    TrainConfig<double> cfg;
    cfg.epochs = 150;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 16;
    cfg.patience = 150;
    cfg.seed = 7;

    const auto result =
        train_network(spec, train.features, train.labels, val.features, val.labels, data.num_classes, cfg);
    REQUIRE(result.network.depth() == 2);
    REQUIRE(result.reports.size() == 2);
    CHECK(result.network.frozen_upto == 2);

    // training accuracy reaches 100% on well-separated blobs
    CHECK(evaluate(result.network, train.features, train.labels) == 0.0);

    // frozen-layer immutability: re-forwarding reproduces the stored inputs bit for bit
    CHECK((result.layer_inputs[0] - train.features).norm() == 0.0);
    const Matrix rep1 = layer_forward(result.network.layers[0], train.features);
    CHECK((result.layer_inputs[1] - rep1).norm() == 0.0);

    // determinism across runs
    const auto again =
        train_network(spec, train.features, train.labels, val.features, val.labels, data.num_classes, cfg);
    for (int i = 0; i < 2; ++i) {
        CHECK((result.network.layers[std::size_t(i)].alpha - again.network.layers[std::size_t(i)].alpha).norm() ==
              0.0);
        CHECK((result.network.layers[std::size_t(i)].bias - again.network.layers[std::size_t(i)].bias).norm() ==
              0.0);
    }

    // single-layer network degenerates to a regularized kernel classifier
    NetworkSpec<double> flat;
    flat.kernels = {gaussian(3.0)};
    TrainConfig<double> flat_cfg = cfg;
    flat_cfg.tau_prime = 0.01;
    const auto single =
        train_network(flat, train.features, train.labels, val.features, val.labels, data.num_classes, flat_cfg);
    CHECK(single.network.depth() == 1);
    CHECK(evaluate(single.network, train.features, train.labels) <= 0.05);
}

TEST_CASE("predict readout rules") {
    Matrix input(1, 1);
    input << 0.0;

    KernelNetwork<double> net;
    net.layers.push_back(make_layer(input, Matrix::Zero(1, 1), Vector::Zero(1), 1.0));
    net.frozen_upto = 0;
    CHECK_THROWS_AS(predict(net, input), std::logic_error);

    net.frozen_upto = 1;
    // score exactly 0 reads out as class 1
    CHECK(predict(net, input)[0] == 1);

    // argmax ties break to the lowest class index
    Matrix logits(2, 3);
    logits << 3.0, 3.0, 1.0, -1.0, 2.0, 2.0;
    const IntVector labels = readout_labels(logits);
    CHECK(labels[0] == 0);
    CHECK(labels[1] == 1);

    CHECK_THROWS_AS(output_width(3, OutputLoss::Hinge), std::invalid_argument);
    CHECK(output_width(2, OutputLoss::Hinge) == 1);
    CHECK(output_width(5, OutputLoss::CrossEntropy) == 5);
}
