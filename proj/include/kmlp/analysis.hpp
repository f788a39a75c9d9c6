#ifndef KMLP_ANALYSIS_HPP
#define KMLP_ANALYSIS_HPP

#include "kmlp/kernel.hpp"
#include "kmlp/network.hpp"
#include "kmlp/targets.hpp"
#include "kmlp/types.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace kmlp {

/// Gaussian-complexity bound 2 A sqrt(c/N) of a kernel machine class with
/// RKHS norm at most A on a kernel with diagonal c.
template <typename Scalar>
Scalar complexity_bound_layer(Scalar A, Scalar c, Index n) {
    if (!(A >= Scalar(0)) || !(c >= Scalar(0)) || n < 1) {
        throw std::invalid_argument("complexity_bound_layer: expects A >= 0, c >= 0, N >= 1");
    }
    return Scalar(2) * A * std::sqrt(c / Scalar(n));
}

// Whole-network complexity relative to a base class of scalar maps:
//   d_1 * prod_i (A_i L_i d_i) * base
// over the layers above the first, where A_i bounds the l1 norm of each
// coefficient vector and L_i is the layer kernel's Lipschitz constant.
template <typename Scalar>
Scalar complexity_bound_network(const std::vector<Scalar>& coeff_l1, const std::vector<Scalar>& lipschitz,
                                const std::vector<Scalar>& widths, Scalar base) {
    if (widths.empty() || coeff_l1.size() != widths.size() - 1 || lipschitz.size() != coeff_l1.size()) {
        throw std::invalid_argument(
            "complexity_bound_network: expects widths for every layer and one (A, L) per upper layer");
    }
    Scalar bound = widths.front() * base;
    for (std::size_t i = 0; i < coeff_l1.size(); ++i) {
        bound *= coeff_l1[i] * lipschitz[i] * widths[i + 1];
    }
    return bound;
}

/// Largest l1 norm over the layer's coefficient vectors, the A entering the
/// network complexity bound.
template <typename Scalar>
Scalar coeff_l1_bound(const KernelLayer<Scalar>& layer) {
    Scalar best = Scalar(0);
    for (Index j = 0; j < layer.output_dim(); ++j) {
        best = std::max(best, layer.alpha.col(j).template lpNorm<1>());
    }
    return best;
}

/// Convenience form over a trained network, with Lipschitz constants estimated
/// from each upper layer's kernel.
template <typename Scalar>
Scalar complexity_bound_network(const KernelNetwork<Scalar>& net, Scalar base) {
    if (net.depth() == 0) {
        throw std::invalid_argument("complexity_bound_network: empty network");
    }
    std::vector<Scalar> widths, coeffs, lips;
    for (int i = 0; i < net.depth(); ++i) {
        widths.push_back(Scalar(net.layers[std::size_t(i)].output_dim()));
        if (i > 0) {
            coeffs.push_back(coeff_l1_bound(net.layers[std::size_t(i)]));
            lips.push_back(lipschitz_estimate(net.layers[std::size_t(i)].kernel));
        }
    }
    return complexity_bound_network(coeffs, lips, widths, base);
}

// High-probability bound on the true classification error of a margin-1
// classifier: empirical hinge risk + 2 * (complexity bound) + 9 sqrt(log(4/d) / 2N).
template <typename Scalar>
Scalar generalization_bound(Scalar empirical_hinge, Scalar A, Scalar c, Index n, Scalar delta) {
    if (!(delta > Scalar(0) && delta < Scalar(1))) {
        throw std::invalid_argument("generalization_bound: delta must lie in (0, 1)");
    }
    if (!(empirical_hinge >= Scalar(0))) {
        throw std::invalid_argument("generalization_bound: empirical hinge risk is nonnegative");
    }
    return empirical_hinge + Scalar(2) * complexity_bound_layer(A, c, n) +
           Scalar(9) * std::sqrt(std::log(Scalar(4) / delta) / (Scalar(2) * Scalar(n)));
}

// Error of two stacked layers given per-layer errors: the upstream error
// enters through the layer's Lipschitz kernel and summed squared RKHS norms,
//   eps_i + sqrt(eps_prev) * sqrt(2 L_i sum_j norms_j^2).
template <typename Scalar>
Scalar propagation_bound(Scalar eps_i, Scalar eps_prev, Scalar L_i, const VectorX<Scalar>& norms) {
    if (!(eps_i >= Scalar(0)) || !(eps_prev >= Scalar(0)) || !(L_i >= Scalar(0))) {
        throw std::invalid_argument("propagation_bound: inputs must be nonnegative");
    }
    return eps_i + std::sqrt(eps_prev) * std::sqrt(Scalar(2) * L_i * norms.squaredNorm());
}

/// Largest regularizer weight under which the ideal representation stays optimal
/// for the output-layer objective: sqrt(2(c - a)) * min(kappa, 1 - kappa).
template <typename Scalar>
Scalar tau_bound_output(const IntVector& labels, Scalar c, Scalar a) {
    const LabelStats stats = label_stats(labels);
    const double kappa = stats.positive_fraction;
    return std::sqrt(Scalar(2) * (c - a)) * Scalar(std::min(kappa, 1.0 - kappa));
}

/// Hidden-layer counterpart: sqrt(2 d (c - a)) * psi * iota, where iota is the
/// caller-supplied infimum kernel slope (not estimable for kernels whose slope
/// vanishes at coincident points).
template <typename Scalar>
Scalar tau_bound_hidden(const IntVector& labels, Scalar c, Scalar a, Index d, Scalar iota) {
    if (d < 1 || !(iota > Scalar(0))) {
        throw std::invalid_argument("tau_bound_hidden: expects d >= 1 and iota > 0");
    }
    const LabelStats stats = label_stats(labels);
    return std::sqrt(Scalar(2) * Scalar(d) * (c - a)) * Scalar(stats.between_class_pair_fraction) * iota;
}

// ---------------------------------------------------------------------------
// Representation diagnostics
// ---------------------------------------------------------------------------

/// Read-only snapshot of a representation's quality against the ideal Gram.
/// Producer fields (max_rkhs_norm, complexity_bound) describe the layer that
/// emitted the representation and are 0 for the raw input.
template <typename Scalar = double>
struct LayerDiagnostics {
    Scalar dissimilarity_l1 = Scalar(0);
    Scalar dissimilarity_l2 = Scalar(0);
    Scalar dissimilarity_alignment = Scalar(0);
    Scalar within_class_kernel_mean = Scalar(0);
    Scalar within_class_kernel_min = Scalar(0);
    Scalar between_class_kernel_mean = Scalar(0);
    Scalar between_class_kernel_max = Scalar(0);
    Scalar max_rkhs_norm = Scalar(0);
    Scalar complexity_bound = Scalar(0);
    Scalar lipschitz = Scalar(0);
};

// Diagnostics of the representation after `layer_index` layers (0 = raw input),
// measured through the kernel of the layer that consumes it. Requires the
// forwarding layers to be trained.
template <typename Scalar>
LayerDiagnostics<Scalar> representation_report(const KernelNetwork<Scalar>& net, const MatrixIn<Scalar>& X,
                                               const IntVector& labels, int layer_index) {
    if (layer_index < 0 || layer_index >= net.depth()) {
        throw std::invalid_argument("representation_report: layer_index must lie in [0, depth)");
    }
    if (net.frozen_upto < layer_index) {
        throw std::logic_error("representation_report: layers below the requested index are untrained");
    }
    if (X.rows() != labels.size()) {
        throw std::invalid_argument("representation_report: features/labels row mismatch");
    }

    const KernelSpec<Scalar>& kernel = net.layers[std::size_t(layer_index)].kernel;
    const MatrixX<Scalar> rep = network_forward(net, X, layer_index);
    const GramMatrix<Scalar> S = gram(kernel, rep);
    const IdealGram<Scalar> T = ideal_gram(labels, kernel.a, kernel.c);

    LayerDiagnostics<Scalar> diag;
    diag.dissimilarity_l1 = dissimilarity(S, T, Metric::L1);
    diag.dissimilarity_l2 = dissimilarity(S, T, Metric::L2);
    diag.dissimilarity_alignment = dissimilarity(S, T, Metric::Alignment);

    const Index n = labels.size();
    Scalar within_sum = Scalar(0), between_sum = Scalar(0);
    Index within_count = 0, between_count = 0;
    Scalar within_min = std::numeric_limits<Scalar>::infinity();
    Scalar between_max = -std::numeric_limits<Scalar>::infinity();
    for (Index m = 0; m < n; ++m) {
        for (Index k = 0; k < n; ++k) {
            const Scalar v = S.values(m, k);
            if (labels[m] == labels[k]) {
                within_sum += v;
                within_min = std::min(within_min, v);
                ++within_count;
            } else {
                between_sum += v;
                between_max = std::max(between_max, v);
                ++between_count;
            }
        }
    }
    diag.within_class_kernel_mean = within_sum / Scalar(within_count);
    diag.within_class_kernel_min = within_min;
    if (between_count > 0) {
        diag.between_class_kernel_mean = between_sum / Scalar(between_count);
        diag.between_class_kernel_max = between_max;
    } else {
        diag.between_class_kernel_mean = std::numeric_limits<Scalar>::quiet_NaN();
        diag.between_class_kernel_max = std::numeric_limits<Scalar>::quiet_NaN();
    }

    if (layer_index >= 1) {
        const VectorX<Scalar> norms = rkhs_norms(net.layers[std::size_t(layer_index - 1)]);
        diag.max_rkhs_norm = norms.size() > 0 ? norms.maxCoeff() : Scalar(0);
        diag.complexity_bound = complexity_bound_layer(diag.max_rkhs_norm, kernel.c, n);
    }
    diag.lipschitz = lipschitz_estimate(kernel);
    return diag;
}

// One row per layer for inspection output. Row i (1-based) of a depth-l
// network describes the representation produced by layer i for i < l; the
// last row pairs the representation entering the classifier with the
// classifier's own norm statistics.
template <typename Scalar>
std::vector<LayerDiagnostics<Scalar>> inspect_rows(const KernelNetwork<Scalar>& net, const MatrixIn<Scalar>& X,
                                                   const IntVector& labels) {
    if (net.depth() == 0) {
        throw std::invalid_argument("inspect_rows: empty network");
    }
    std::vector<LayerDiagnostics<Scalar>> rows;
    for (int i = 1; i < net.depth(); ++i) {
        rows.push_back(representation_report(net, X, labels, i));
    }
    LayerDiagnostics<Scalar> last = representation_report(net, X, labels, net.depth() - 1);
    const VectorX<Scalar> norms = rkhs_norms(net.layers.back());
    last.max_rkhs_norm = norms.size() > 0 ? norms.maxCoeff() : Scalar(0);
    last.complexity_bound = complexity_bound_layer(last.max_rkhs_norm, net.layers.back().kernel.c, X.rows());
    rows.push_back(last);
    return rows;
}

}  // namespace kmlp

#endif  // KMLP_ANALYSIS_HPP
