#ifndef KMLP_TRAINING_HPP
#define KMLP_TRAINING_HPP

#include "kmlp/kernel.hpp"
#include "kmlp/network.hpp"
#include "kmlp/targets.hpp"
#include "kmlp/types.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace kmlp {

enum class OutputLoss { Hinge, CrossEntropy };
enum class InitKind { Random, Identity };
enum class LayerRole { Hidden, Output };

inline std::string to_string(OutputLoss loss) {
    return loss == OutputLoss::Hinge ? "hinge" : "cross_entropy";
}

template <typename Scalar = double>
struct TrainConfig {
    Scalar learning_rate = Scalar(1e-3);
    Scalar adam_beta1 = Scalar(0.9);
    Scalar adam_beta2 = Scalar(0.999);
    Scalar adam_eps = Scalar(1e-8);
    int epochs = 100;
    int batch_size = 64;
    Scalar tau_prime = Scalar(0);
    Metric metric = Metric::L1;
    OutputLoss output_loss = OutputLoss::Hinge;
    int patience = 10;
    std::uint64_t seed = 0;
    std::vector<Scalar> retention{};  // center fraction per layer; entry 0 must stay 1
    InitKind init = InitKind::Random;
    Scalar identity_ridge = Scalar(-1);  // < 0 selects default_identity_ridge()

    void validate() const {
        if (!(learning_rate > Scalar(0))) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
        if (!(adam_beta1 >= Scalar(0) && adam_beta1 < Scalar(1)))
            throw std::invalid_argument("TrainConfig: adam_beta1 must lie in [0, 1)");
        if (!(adam_beta2 >= Scalar(0) && adam_beta2 < Scalar(1)))
            throw std::invalid_argument("TrainConfig: adam_beta2 must lie in [0, 1)");
        if (!(adam_eps > Scalar(0))) throw std::invalid_argument("TrainConfig: adam_eps must be positive");
        if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be nonnegative");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be positive");
        if (!(tau_prime >= Scalar(0))) throw std::invalid_argument("TrainConfig: tau_prime must be nonnegative");
        if (patience < 0) throw std::invalid_argument("TrainConfig: patience must be nonnegative");
        for (Scalar r : retention) {
            if (!(r > Scalar(0) && r <= Scalar(1)))
                throw std::invalid_argument("TrainConfig: retention fractions must lie in (0, 1]");
        }
    }
};

// ---------------------------------------------------------------------------
// Classification risks
// ---------------------------------------------------------------------------

/// Mean hinge loss max(0, 1 - y s) over scores with labels in {+1, -1}.
template <typename Scalar>
Scalar hinge_risk(const VectorX<Scalar>& scores, const IntVector& labels) {
    if (scores.size() != labels.size()) {
        throw std::invalid_argument("hinge_risk: scores/labels length mismatch");
    }
    Scalar total = Scalar(0);
    for (Index n = 0; n < scores.size(); ++n) {
        const Scalar y = labels[n] > 0 ? Scalar(1) : Scalar(-1);
        total += std::max(Scalar(0), Scalar(1) - y * scores[n]);
    }
    return total / Scalar(scores.size());
}

/// Mean negative log softmax probability of the true class, with row-max
/// subtraction for stability. Labels live in 0..K-1.
template <typename Scalar>
Scalar cross_entropy_risk(const MatrixX<Scalar>& logits, const IntVector& labels) {
    if (logits.rows() != labels.size()) {
        throw std::invalid_argument("cross_entropy_risk: logits/labels length mismatch");
    }
    if (logits.cols() < 2) {
        throw std::invalid_argument("cross_entropy_risk: needs at least two classes");
    }
    Scalar total = Scalar(0);
    for (Index n = 0; n < logits.rows(); ++n) {
        if (labels[n] < 0 || labels[n] >= logits.cols()) {
            throw std::invalid_argument("cross_entropy_risk: label out of range at row " + std::to_string(n));
        }
        const Scalar mx = logits.row(n).maxCoeff();
        const Scalar lse = std::log((logits.row(n).array() - mx).exp().sum());
        total += mx + lse - logits(n, labels[n]);
    }
    return total / Scalar(logits.rows());
}

/// Class labels from raw scores: single unit reads out by sign (sign(0) = +1,
/// meaning class 1); several units read out by argmax with ties to the lowest index.
template <typename Scalar>
IntVector readout_labels(const MatrixX<Scalar>& scores) {
    IntVector labels(scores.rows());
    for (Index i = 0; i < scores.rows(); ++i) {
        if (scores.cols() == 1) {
            labels[i] = scores(i, 0) >= Scalar(0) ? 1 : 0;
        } else {
            Index best = 0;
            for (Index j = 1; j < scores.cols(); ++j) {
                if (scores(i, j) > scores(i, best)) best = j;
            }
            labels[i] = int(best);
        }
    }
    return labels;
}

// ---------------------------------------------------------------------------
// Per-layer objectives and their analytic gradients
// ---------------------------------------------------------------------------

template <typename Scalar = double>
struct ObjectiveParts {
    Scalar total = Scalar(0);     // risk + tau_prime * max_norm
    Scalar risk = Scalar(0);      // dissimilarity (hidden) or classification risk (output)
    Scalar max_norm = Scalar(0);  // max_j RKHS norm of the layer
};

template <typename Scalar = double>
struct LayerGradients {
    MatrixX<Scalar> alpha;
    VectorX<Scalar> bias;
};

namespace detail {

// tau_prime * max_j |w_j| over the precomputed center Gram; adds the gradient
// into grads->alpha when requested. Subgradient conventions: 0 at |w_j| = 0,
// ties over j resolved to the lowest-index maximizer.
template <typename Scalar>
Scalar norm_penalty(const MatrixX<Scalar>& alpha, const MatrixX<Scalar>& G_cc, Scalar tau_prime,
                    Scalar* max_norm, LayerGradients<Scalar>* grads) {
    const MatrixX<Scalar> Galpha = G_cc.template selfadjointView<Eigen::Upper>() * alpha;
    Index best = 0;
    Scalar best_norm = Scalar(-1);
    for (Index j = 0; j < alpha.cols(); ++j) {
        const Scalar q = alpha.col(j).dot(Galpha.col(j));
        const Scalar norm = std::sqrt(std::max(q, Scalar(0)));
        if (norm > best_norm) {
            best_norm = norm;
            best = j;
        }
    }
    *max_norm = best_norm;
    if (grads != nullptr && tau_prime > Scalar(0) && best_norm > Scalar(0)) {
        grads->alpha.col(best) += (tau_prime / best_norm) * Galpha.col(best);
    }
    return tau_prime * best_norm;
}

// d(dissimilarity)/dS for each metric; symmetric whenever S is.
template <typename Scalar>
MatrixX<Scalar> dissimilarity_weight(const MatrixX<Scalar>& S, const MatrixX<Scalar>& T, Metric metric) {
    const Scalar n2 = Scalar(S.size());
    switch (metric) {
        case Metric::L1: {
            MatrixX<Scalar> W = (S - T).unaryExpr([](Scalar r) {
                return r > Scalar(0) ? Scalar(1) : (r < Scalar(0) ? Scalar(-1) : Scalar(0));
            });
            return MatrixX<Scalar>(W / n2);
        }
        case Metric::L2:
            return MatrixX<Scalar>(Scalar(2) / n2 * (S - T));
        case Metric::Alignment: {
            const Scalar gt = (S.array() * T.array()).sum();
            const Scalar gn = S.norm();
            const Scalar tn = T.norm();
            return MatrixX<Scalar>((gt / (gn * gn * gn * tn)) * S - T / (gn * tn));
        }
    }
    return MatrixX<Scalar>::Zero(S.rows(), S.cols());
}

// Hidden-layer risk and gradients on a precomputed input-to-center kernel
// block K (rows = examples in the batch). The layer output is Y = K alpha + b;
// its Gram under the kernel above is compared against the ideal Gram of the
// batch labels. Upstream layers are frozen, so the chain rule stops at (alpha, b).
template <typename Scalar>
ObjectiveParts<Scalar> hidden_objective_pre(const MatrixX<Scalar>& K, const MatrixX<Scalar>& alpha,
                                            const VectorX<Scalar>& bias, const IntVector& labels,
                                            const KernelSpec<Scalar>& next_kernel, Metric metric,
                                            Scalar tau_prime, const MatrixX<Scalar>& G_cc,
                                            bool want_norm, LayerGradients<Scalar>* grads) {
    if (K.rows() < 2) {
        throw std::invalid_argument("hidden objective: pair loss needs at least two examples");
    }
    if (grads != nullptr) {
        grads->alpha = MatrixX<Scalar>::Zero(alpha.rows(), alpha.cols());
        grads->bias = VectorX<Scalar>::Zero(bias.size());
    }

    MatrixX<Scalar> Y = K * alpha;
    Y.rowwise() += bias.transpose();

    const GramMatrix<Scalar> S = gram(next_kernel, Y);
    const IdealGram<Scalar> T = ideal_gram(labels, next_kernel.a, next_kernel.c);

    ObjectiveParts<Scalar> parts;
    parts.risk = dissimilarity(S, T, metric);

    if (grads != nullptr) {
        const MatrixX<Scalar> W = dissimilarity_weight(S.values, T.values, metric);
        const MatrixX<Scalar> P = W.cwiseProduct(S.values);
        // dS_mn/dy_m = -2 (y_m - y_n) S_mn / sigma^2, summed over both index
        // positions, collapses to a weighted-Laplacian product with Y.
        const Scalar coef = Scalar(4) / (next_kernel.sigma * next_kernel.sigma);
        const VectorX<Scalar> rowsum = P.rowwise().sum();
        MatrixX<Scalar> dY = coef * (P * Y - rowsum.asDiagonal() * Y);
        grads->alpha += K.transpose() * dY;
        grads->bias += dY.colwise().sum().transpose();
    }

    parts.total = parts.risk;
    if (want_norm || tau_prime > Scalar(0)) {
        parts.total += norm_penalty(alpha, G_cc, tau_prime, &parts.max_norm, grads);
    }
    return parts;
}

// Output-layer risk and gradients on a precomputed kernel block.
template <typename Scalar>
ObjectiveParts<Scalar> output_objective_pre(const MatrixX<Scalar>& K, const MatrixX<Scalar>& alpha,
                                            const VectorX<Scalar>& bias, const IntVector& labels,
                                            OutputLoss loss, Scalar tau_prime, const MatrixX<Scalar>& G_cc,
                                            bool want_norm, LayerGradients<Scalar>* grads) {
    const Index n = K.rows();
    if (grads != nullptr) {
        grads->alpha = MatrixX<Scalar>::Zero(alpha.rows(), alpha.cols());
        grads->bias = VectorX<Scalar>::Zero(bias.size());
    }

    MatrixX<Scalar> Y = K * alpha;
    Y.rowwise() += bias.transpose();

    ObjectiveParts<Scalar> parts;
    MatrixX<Scalar> dY;

    if (loss == OutputLoss::Hinge) {
        if (alpha.cols() != 1) {
            throw std::invalid_argument("output objective: hinge expects a single output unit");
        }
        if ((labels.array() < 0).any() || (labels.array() > 1).any()) {
            throw std::invalid_argument("output objective: hinge expects binary labels in {0, 1}");
        }
        IntVector pm(n);
        for (Index i = 0; i < n; ++i) pm[i] = labels[i] > 0 ? 1 : -1;
        parts.risk = hinge_risk<Scalar>(Y.col(0), pm);
        if (grads != nullptr) {
            dY = MatrixX<Scalar>::Zero(n, 1);
            for (Index i = 0; i < n; ++i) {
                const Scalar y = Scalar(pm[i]);
                if (Scalar(1) - y * Y(i, 0) > Scalar(0)) {
                    dY(i, 0) = -y / Scalar(n);
                }
            }
        }
    } else {
        if (alpha.cols() < 2) {
            throw std::invalid_argument("output objective: cross-entropy expects one unit per class");
        }
        parts.risk = cross_entropy_risk(Y, labels);
        if (grads != nullptr) {
            dY.resize(n, Y.cols());
            for (Index i = 0; i < n; ++i) {
                const Scalar mx = Y.row(i).maxCoeff();
                VectorX<Scalar> p = (Y.row(i).array() - mx).exp();
                p /= p.sum();
                dY.row(i) = p.transpose() / Scalar(n);
                dY(i, labels[i]) -= Scalar(1) / Scalar(n);
            }
        }
    }

    if (grads != nullptr) {
        grads->alpha += K.transpose() * dY;
        grads->bias += dY.colwise().sum().transpose();
    }

    parts.total = parts.risk;
    if (want_norm || tau_prime > Scalar(0)) {
        parts.total += norm_penalty(alpha, G_cc, tau_prime, &parts.max_norm, grads);
    }
    return parts;
}

}  // namespace detail

// Hidden-layer objective: dissimilarity between the ideal Gram of `labels` and
// the Gram of this layer's output under the kernel of the layer above, plus
// tau_prime times the largest per-unit RKHS norm. Optionally fills the
// analytic gradients with respect to the layer's own (alpha, bias).
template <typename Scalar>
ObjectiveParts<Scalar> hidden_objective(const KernelLayer<Scalar>& layer, const MatrixIn<Scalar>& input,
                                        const IntVector& labels, const KernelSpec<Scalar>& next_kernel,
                                        Metric metric, Scalar tau_prime,
                                        LayerGradients<Scalar>* grads = nullptr) {
    if (input.rows() != labels.size()) {
        throw std::invalid_argument("hidden_objective: input/labels row mismatch");
    }
    const GramMatrix<Scalar> K = gram(layer.kernel, input, layer.centers);
    const GramMatrix<Scalar> G_cc = gram(layer.kernel, layer.centers);
    return detail::hidden_objective_pre(K.values, layer.alpha, layer.bias, labels, next_kernel, metric,
                                        tau_prime, G_cc.values, true, grads);
}

// Output-layer objective: classification risk plus the same norm penalty.
// Hinge requires one output unit and binary labels {0, 1}; cross-entropy
// requires one unit per class.
template <typename Scalar>
ObjectiveParts<Scalar> output_objective(const KernelLayer<Scalar>& layer, const MatrixIn<Scalar>& input,
                                        const IntVector& labels, OutputLoss loss, Scalar tau_prime,
                                        LayerGradients<Scalar>* grads = nullptr) {
    if (input.rows() != labels.size()) {
        throw std::invalid_argument("output_objective: input/labels row mismatch");
    }
    const GramMatrix<Scalar> K = gram(layer.kernel, input, layer.centers);
    const GramMatrix<Scalar> G_cc = gram(layer.kernel, layer.centers);
    return detail::output_objective_pre(K.values, layer.alpha, layer.bias, labels, loss, tau_prime,
                                        G_cc.values, true, grads);
}

/// What a layer is being trained against.
template <typename Scalar = double>
struct LayerObjective {
    LayerRole role = LayerRole::Hidden;
    KernelSpec<Scalar> next_kernel{};  // hidden only: the kernel consuming this layer's output
    Metric metric = Metric::L1;
    OutputLoss loss = OutputLoss::Hinge;
};

template <typename Scalar>
ObjectiveParts<Scalar> layer_objective(const KernelLayer<Scalar>& layer, const MatrixIn<Scalar>& input,
                                       const IntVector& labels, const LayerObjective<Scalar>& obj,
                                       Scalar tau_prime, LayerGradients<Scalar>* grads = nullptr) {
    return obj.role == LayerRole::Hidden
               ? hidden_objective(layer, input, labels, obj.next_kernel, obj.metric, tau_prime, grads)
               : output_objective(layer, input, labels, obj.loss, tau_prime, grads);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename Scalar = double>
struct AdamState {
    MatrixX<Scalar> m_alpha, v_alpha;
    VectorX<Scalar> m_bias, v_bias;
    long step_count = 0;

    explicit AdamState(const KernelLayer<Scalar>& layer)
        : m_alpha(MatrixX<Scalar>::Zero(layer.alpha.rows(), layer.alpha.cols())),
          v_alpha(MatrixX<Scalar>::Zero(layer.alpha.rows(), layer.alpha.cols())),
          m_bias(VectorX<Scalar>::Zero(layer.bias.size())),
          v_bias(VectorX<Scalar>::Zero(layer.bias.size())) {}

    void step(KernelLayer<Scalar>& layer, const LayerGradients<Scalar>& g, const TrainConfig<Scalar>& cfg) {
        ++step_count;
        const Scalar b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
        const Scalar corr1 = Scalar(1) - std::pow(b1, Scalar(step_count));
        const Scalar corr2 = Scalar(1) - std::pow(b2, Scalar(step_count));

        m_alpha = b1 * m_alpha + (Scalar(1) - b1) * g.alpha;
        v_alpha = b2 * v_alpha + (Scalar(1) - b2) * g.alpha.cwiseProduct(g.alpha);
        layer.alpha.array() -= cfg.learning_rate * (m_alpha.array() / corr1) /
                               ((v_alpha.array() / corr2).sqrt() + cfg.adam_eps);

        m_bias = b1 * m_bias + (Scalar(1) - b1) * g.bias;
        v_bias = b2 * v_bias + (Scalar(1) - b2) * g.bias.cwiseProduct(g.bias);
        layer.bias.array() -= cfg.learning_rate * (m_bias.array() / corr1) /
                              ((v_bias.array() / corr2).sqrt() + cfg.adam_eps);
    }
};

// ---------------------------------------------------------------------------
// Layer training loop
// ---------------------------------------------------------------------------

struct EpochRecord {
    int epoch = 0;  // 0 records the initialization, before any update
    double train_objective = 0.0;
    double val_metric = 0.0;
    double unix_time = 0.0;  // wall-clock stamp of the record, not part of the determinism contract
};

template <typename Scalar = double>
struct TrainReport {
    std::vector<EpochRecord> epochs;
    int chosen_epoch = 0;
    // Dissimilarity trio (l1, l2, alignment) at the chosen parameters: the
    // layer's output Gram for hidden layers, the Gram it consumes for the
    // output layer.
    Scalar final_l1 = Scalar(0), final_l2 = Scalar(0), final_alignment = Scalar(0);
    VectorX<Scalar> final_rkhs_norms;
    double wall_seconds = 0.0;
};

template <typename Scalar = double>
struct LayerTrainResult {
    KernelLayer<Scalar> layer;
    TrainReport<Scalar> report;
};

namespace detail {

template <typename Scalar>
MatrixX<Scalar> take_rows(const MatrixX<Scalar>& X, const std::vector<Index>& rows, Index begin, Index count) {
    MatrixX<Scalar> out(count, X.cols());
    for (Index i = 0; i < count; ++i) {
        out.row(i) = X.row(rows[std::size_t(begin + i)]);
    }
    return out;
}

inline IntVector take_labels(const IntVector& y, const std::vector<Index>& rows, Index begin, Index count) {
    IntVector out(count);
    for (Index i = 0; i < count; ++i) {
        out[i] = y[rows[std::size_t(begin + i)]];
    }
    return out;
}

}  // namespace detail

// Minibatch Adam over the layer's (alpha, bias), at most cfg.epochs passes.
// The pair loss of a hidden layer uses the full B x B Gram block of each batch
// against the matching block of the ideal Gram. Epoch 0 records the
// initialization; the returned parameters are those of the earliest epoch
// attaining the best selection metric (validation dissimilarity for hidden
// layers, validation error for the output layer; training rows stand in when
// no validation rows are given). Training stops early once the metric has not
// improved for more than cfg.patience consecutive epochs.
template <typename Scalar>
LayerTrainResult<Scalar> train_layer(KernelLayer<Scalar> layer, const MatrixIn<Scalar>& X_train,
                                     const IntVector& y_train, const MatrixIn<Scalar>& X_val,
                                     const IntVector& y_val, const LayerObjective<Scalar>& obj,
                                     const TrainConfig<Scalar>& cfg, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    cfg.validate();
    layer.validate();
    if (X_train.rows() != y_train.size() || X_val.rows() != y_val.size()) {
        throw std::invalid_argument("train_layer: features/labels row mismatch");
    }
    if (!X_train.allFinite() || !X_val.allFinite()) {
        throw std::invalid_argument("train_layer: non-finite inputs");
    }
    if (obj.role == LayerRole::Hidden && cfg.batch_size < 2) {
        throw std::invalid_argument("train_layer: pair losses need batch_size >= 2");
    }

    LayerTrainResult<Scalar> result;
    if (cfg.epochs == 0) {
        result.layer = std::move(layer);
        return result;
    }

    // Centers are frozen while (alpha, bias) train, so every kernel evaluation
    // the loop needs can happen once up front.
    const MatrixX<Scalar> K_train = gram(layer.kernel, X_train, layer.centers).values;
    const MatrixX<Scalar> G_cc = gram(layer.kernel, layer.centers).values;
    const bool has_val = X_val.rows() > 0;
    const MatrixX<Scalar> K_sel = has_val ? gram(layer.kernel, X_val, layer.centers).values : K_train;
    const IntVector& y_sel = has_val ? y_val : y_train;

    auto selection_metric = [&]() -> double {
        MatrixX<Scalar> Y = K_sel * layer.alpha;
        Y.rowwise() += layer.bias.transpose();
        if (obj.role == LayerRole::Hidden) {
            const GramMatrix<Scalar> S = gram(obj.next_kernel, Y);
            return double(dissimilarity(S, ideal_gram(y_sel, obj.next_kernel.a, obj.next_kernel.c), obj.metric));
        }
        const IntVector pred = readout_labels(Y);
        Index wrong = 0;
        for (Index i = 0; i < pred.size(); ++i) wrong += pred[i] != y_sel[i] ? 1 : 0;
        return double(wrong) / double(pred.size());
    };

    auto train_objective = [&]() -> double {
        return double(obj.role == LayerRole::Hidden
                          ? detail::hidden_objective_pre(K_train, layer.alpha, layer.bias, y_train,
                                                         obj.next_kernel, obj.metric, cfg.tau_prime, G_cc,
                                                         true, static_cast<LayerGradients<Scalar>*>(nullptr))
                                .total
                          : detail::output_objective_pre(K_train, layer.alpha, layer.bias, y_train, obj.loss,
                                                         cfg.tau_prime, G_cc, true,
                                                         static_cast<LayerGradients<Scalar>*>(nullptr))
                                .total);
    };

    TrainReport<Scalar>& report = result.report;
    auto record = [&](int epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_objective = train_objective();
        rec.val_metric = selection_metric();
        rec.unix_time =
            std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
        report.epochs.push_back(rec);
        return rec.val_metric;
    };

    MatrixX<Scalar> best_alpha = layer.alpha;
    VectorX<Scalar> best_bias = layer.bias;
    double best_metric = record(0);
    int best_epoch = 0;
    int stale = 0;

    AdamState<Scalar> adam(layer);
    LayerGradients<Scalar> grads;
    std::mt19937_64 batch_rng(sub_seed(seed, "batch"));
    std::vector<Index> order(std::size_t(X_train.rows()));
    std::iota(order.begin(), order.end(), Index(0));

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), batch_rng);
        for (Index begin = 0; begin < X_train.rows(); begin += cfg.batch_size) {
            const Index count = std::min<Index>(cfg.batch_size, X_train.rows() - begin);
            if (obj.role == LayerRole::Hidden && count < 2) {
                continue;  // a trailing singleton has no pairs
            }
            const MatrixX<Scalar> Kb = detail::take_rows(K_train, order, begin, count);
            const IntVector yb = detail::take_labels(y_train, order, begin, count);
            if (obj.role == LayerRole::Hidden) {
                detail::hidden_objective_pre(Kb, layer.alpha, layer.bias, yb, obj.next_kernel, obj.metric,
                                             cfg.tau_prime, G_cc, false, &grads);
            } else {
                detail::output_objective_pre(Kb, layer.alpha, layer.bias, yb, obj.loss, cfg.tau_prime, G_cc,
                                             false, &grads);
            }
            adam.step(layer, grads, cfg);
            if (!layer.finite()) {
                throw DivergenceError("train_layer: parameters diverged", epoch);
            }
        }

        const double metric = record(epoch);
        if (metric < best_metric) {
            best_metric = metric;
            best_epoch = epoch;
            best_alpha = layer.alpha;
            best_bias = layer.bias;
            stale = 0;
        } else {
            ++stale;
            if (stale > cfg.patience) {
                break;
            }
        }
    }

    layer.alpha = std::move(best_alpha);
    layer.bias = std::move(best_bias);
    report.chosen_epoch = best_epoch;
    report.final_rkhs_norms = rkhs_norms(layer);

    {
        const KernelSpec<Scalar>& k = obj.role == LayerRole::Hidden ? obj.next_kernel : layer.kernel;
        MatrixX<Scalar> rep;
        if (obj.role == LayerRole::Hidden) {
            rep = K_train * layer.alpha;
            rep.rowwise() += layer.bias.transpose();
        } else {
            rep = X_train;
        }
        const GramMatrix<Scalar> S = gram(k, rep);
        const IdealGram<Scalar> T = ideal_gram(y_train, k.a, k.c);
        report.final_l1 = dissimilarity(S, T, Metric::L1);
        report.final_l2 = dissimilarity(S, T, Metric::L2);
        report.final_alignment = dissimilarity(S, T, Metric::Alignment);
    }

    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.layer = std::move(layer);
    return result;
}

// ---------------------------------------------------------------------------
// Network training
// ---------------------------------------------------------------------------

/// Architecture: hidden widths plus one kernel per layer (hidden + output).
template <typename Scalar = double>
struct NetworkSpec {
    std::vector<Index> hidden_widths;
    std::vector<KernelSpec<Scalar>> kernels;

    int depth() const { return static_cast<int>(kernels.size()); }

    void validate() const {
        if (kernels.empty()) {
            throw std::invalid_argument("NetworkSpec: needs at least the output layer kernel");
        }
        if (kernels.size() != hidden_widths.size() + 1) {
            throw std::invalid_argument("NetworkSpec: expects one kernel per layer (hidden + output)");
        }
        for (const auto& k : kernels) k.validate();
        for (Index w : hidden_widths) {
            if (w < 1) throw std::invalid_argument("NetworkSpec: layer widths must be positive");
        }
    }
};

template <typename Scalar = double>
struct TrainResult {
    KernelNetwork<Scalar> network;
    std::vector<TrainReport<Scalar>> reports;
    std::vector<MatrixX<Scalar>> layer_inputs;  // training representation fed to each layer
    std::vector<std::string> warnings;
};

/// Output width demanded by the loss: one unit for binary hinge, one per class otherwise.
inline Index output_width(int num_classes, OutputLoss loss) {
    if (loss == OutputLoss::Hinge) {
        if (num_classes != 2) {
            throw std::invalid_argument("hinge output requires exactly two classes");
        }
        return 1;
    }
    if (num_classes < 2) {
        throw std::invalid_argument("classification needs at least two classes");
    }
    return num_classes;
}

// Greedy layer-wise training: each hidden layer is trained against the ideal
// Gram seen through the kernel above it, then frozen; the final layer is
// trained as a classifier on the frozen representation.
template <typename Scalar>
TrainResult<Scalar> train_network(const NetworkSpec<Scalar>& spec, const MatrixIn<Scalar>& X_train,
                                  const IntVector& y_train, const MatrixIn<Scalar>& X_val,
                                  const IntVector& y_val, int num_classes,
                                  const TrainConfig<Scalar>& cfg) {
    spec.validate();
    cfg.validate();
    const int depth = spec.depth();
    if (!cfg.retention.empty()) {
        if (static_cast<int>(cfg.retention.size()) != depth) {
            throw std::invalid_argument("train_network: retention list must have one entry per layer");
        }
        if (cfg.retention[0] != Scalar(1)) {
            throw std::invalid_argument("train_network: the input layer keeps all centers (retention[0] = 1)");
        }
    }

    TrainResult<Scalar> result;
    result.network.frozen_upto = 0;
    MatrixX<Scalar> rep_train = X_train;
    MatrixX<Scalar> rep_val = X_val;

    for (int i = 0; i < depth; ++i) {
        const bool is_output = i == depth - 1;
        const Index width =
            is_output ? output_width(num_classes, cfg.output_loss) : spec.hidden_widths[std::size_t(i)];
        const Scalar retention = cfg.retention.empty() ? Scalar(1) : cfg.retention[std::size_t(i)];
        const std::string tag = "layer" + std::to_string(i);

        KernelLayer<Scalar> layer;
        if (!is_output && cfg.init == InitKind::Identity) {
            if (retention != Scalar(1)) {
                throw std::invalid_argument("train_network: identity init keeps every center");
            }
            if (width != rep_train.cols()) {
                throw std::invalid_argument("train_network: identity init needs equal input and output widths");
            }
            const Scalar ridge = cfg.identity_ridge < Scalar(0)
                                     ? default_identity_ridge(spec.kernels[std::size_t(i)])
                                     : cfg.identity_ridge;
            layer = identity_init(spec.kernels[std::size_t(i)], rep_train, ridge).layer;
        } else if (retention < Scalar(1)) {
            KernelLayer<Scalar> shape;
            shape.kernel = spec.kernels[std::size_t(i)];
            shape.alpha.resize(1, width);
            layer = subsample_centers(shape, rep_train, y_train, retention, sub_seed(cfg.seed, tag));
        } else {
            layer = random_layer(spec.kernels[std::size_t(i)], rep_train, width,
                                 sub_seed(sub_seed(cfg.seed, tag), "init"));
        }

        LayerObjective<Scalar> obj;
        if (is_output) {
            obj.role = LayerRole::Output;
            obj.loss = cfg.output_loss;
        } else {
            obj.role = LayerRole::Hidden;
            obj.next_kernel = spec.kernels[std::size_t(i + 1)];
            obj.metric = cfg.metric;
        }

        LayerTrainResult<Scalar> trained = train_layer(std::move(layer), rep_train, y_train, rep_val, y_val,
                                                       obj, cfg, sub_seed(cfg.seed, tag + ":train"));

        result.layer_inputs.push_back(rep_train);
        result.reports.push_back(std::move(trained.report));
        result.network.layers.push_back(std::move(trained.layer));
        result.network.frozen_upto = i + 1;

        if (!is_output) {
            rep_train = layer_forward(result.network.layers.back(), rep_train);
            if (rep_val.rows() > 0) {
                rep_val = layer_forward(result.network.layers.back(), rep_val);
            }
        }
    }

    if (num_classes == 2 && cfg.tau_prime > Scalar(0)) {
        const LabelStats stats = label_stats(y_train);
        const KernelSpec<Scalar>& k = spec.kernels.back();
        const Scalar bound = std::sqrt(Scalar(2) * (k.c - k.a)) *
                             Scalar(std::min(stats.positive_fraction, 1.0 - stats.positive_fraction));
        if (cfg.tau_prime >= bound) {
            result.warnings.push_back("tau_prime = " + std::to_string(double(cfg.tau_prime)) +
                                      " is at or above the layer-wise optimality bound " +
                                      std::to_string(double(bound)));
        }
    }

    return result;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

/// Class labels for each row of X under a fully trained network.
template <typename Scalar>
IntVector predict(const KernelNetwork<Scalar>& net, const MatrixIn<Scalar>& X) {
    if (net.depth() == 0 || net.frozen_upto != net.depth()) {
        throw std::logic_error("predict: network is not fully trained");
    }
    return readout_labels(network_forward(net, X));
}

/// Mean 0/1 loss of predict() against the given labels.
template <typename Scalar>
double evaluate(const KernelNetwork<Scalar>& net, const MatrixIn<Scalar>& X, const IntVector& y) {
    if (X.rows() != y.size()) {
        throw std::invalid_argument("evaluate: features/labels row mismatch");
    }
    if (X.rows() == 0) {
        throw std::invalid_argument("evaluate: empty dataset");
    }
    const IntVector pred = predict(net, X);
    Index wrong = 0;
    for (Index i = 0; i < y.size(); ++i) {
        wrong += pred[i] != y[i] ? 1 : 0;
    }
    return double(wrong) / double(y.size());
}

}  // namespace kmlp

#endif  // KMLP_TRAINING_HPP
