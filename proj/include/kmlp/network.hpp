#ifndef KMLP_NETWORK_HPP
#define KMLP_NETWORK_HPP

#include "kmlp/kernel.hpp"
#include "kmlp/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace kmlp {

/// One layer of kernel machines: output_j(x) = sum_m alpha(m,j) k(x, center_m) + bias_j.
/// Centers hold the already-mapped representations of the retained training rows.
template <typename Scalar = double>
struct KernelLayer {
    MatrixX<Scalar> centers;  // M x d_in
    MatrixX<Scalar> alpha;    // M x d_out
    VectorX<Scalar> bias;     // d_out
    KernelSpec<Scalar> kernel;

    Index center_count() const { return centers.rows(); }
    Index input_dim() const { return centers.cols(); }
    Index output_dim() const { return alpha.cols(); }

    bool finite() const { return centers.allFinite() && alpha.allFinite() && bias.allFinite(); }

    void validate() const {
        kernel.validate();
        if (centers.rows() < 1) {
            throw std::invalid_argument("KernelLayer: needs at least one center");
        }
        if (alpha.rows() != centers.rows()) {
            throw std::invalid_argument("KernelLayer: alpha row count must match center count");
        }
        if (bias.size() != alpha.cols()) {
            throw std::invalid_argument("KernelLayer: bias length must match output width");
        }
        if (!finite()) {
            throw std::invalid_argument("KernelLayer: parameters must be finite");
        }
    }
};

/// Ordered layer stack; layers [0, frozen_upto) are trained and immutable.
template <typename Scalar = double>
struct KernelNetwork {
    std::vector<KernelLayer<Scalar>> layers;
    int frozen_upto = 0;

    int depth() const { return static_cast<int>(layers.size()); }

    void validate() const {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            layers[i].validate();
            if (i + 1 < layers.size() && layers[i].output_dim() != layers[i + 1].input_dim()) {
                throw std::invalid_argument("KernelNetwork: layer " + std::to_string(i + 1) +
                                            " output width does not feed layer " + std::to_string(i + 2));
            }
        }
        if (frozen_upto < 0 || frozen_upto > depth()) {
            throw std::invalid_argument("KernelNetwork: frozen_upto out of range");
        }
    }
};

template <typename Scalar>
MatrixX<Scalar> layer_forward(const KernelLayer<Scalar>& layer, const MatrixIn<Scalar>& input) {
    if (input.cols() != layer.input_dim()) {
        throw std::invalid_argument("layer_forward: input width " + std::to_string(input.cols()) +
                                    " does not match layer input width " +
                                    std::to_string(layer.input_dim()));
    }
    const GramMatrix<Scalar> K = gram(layer.kernel, input, layer.centers);
    MatrixX<Scalar> out = K.values * layer.alpha;
    out.rowwise() += layer.bias.transpose();
    return out;
}

// Composition through the first `upto` layers; upto = 0 is the identity map.
template <typename Scalar>
MatrixX<Scalar> network_forward(const KernelNetwork<Scalar>& net, const MatrixIn<Scalar>& input, int upto) {
    if (upto < 0 || upto > net.depth()) {
        throw std::invalid_argument("network_forward: upto must lie in [0, depth]");
    }
    MatrixX<Scalar> rep = input;
    for (int i = 0; i < upto; ++i) {
        rep = layer_forward(net.layers[i], rep);
    }
    return rep;
}

template <typename Scalar>
MatrixX<Scalar> network_forward(const KernelNetwork<Scalar>& net, const MatrixIn<Scalar>& input) {
    return network_forward(net, input, net.depth());
}

// RKHS norm per output unit: |w_j|^2 = alpha_j' G_cc alpha_j with G_cc the
// center Gram. Rounding can push the quadratic form a hair negative; clamp at 0.
template <typename Scalar>
VectorX<Scalar> rkhs_norms(const KernelLayer<Scalar>& layer) {
    const GramMatrix<Scalar> G = gram(layer.kernel, layer.centers);
    VectorX<Scalar> norms(layer.output_dim());
    for (Index j = 0; j < layer.output_dim(); ++j) {
        const Scalar q = layer.alpha.col(j).dot(G.values * layer.alpha.col(j));
        norms[j] = std::sqrt(std::max(q, Scalar(0)));
    }
    return norms;
}

template <typename Scalar>
struct IdentityInitResult {
    KernelLayer<Scalar> layer;
    Scalar reconstruction_error = Scalar(0);  // max |forward(input) - input|
};

// Layer that reproduces `input` on the given rows: centers = input, bias = 0,
// alpha solved from (G + ridge I) alpha = input. Requires d_out = d_in and
// pairwise-distinct rows (the center Gram is singular otherwise).
template <typename Scalar>
IdentityInitResult<Scalar> identity_init(const KernelSpec<Scalar>& kernel,
                                         const MatrixIn<Scalar>& input,
                                         Scalar ridge = Scalar(0)) {
    kernel.validate();
    if (input.rows() < 1) {
        throw std::invalid_argument("identity_init: empty input");
    }
    if (!(ridge >= Scalar(0))) {
        throw std::invalid_argument("identity_init: ridge must be nonnegative");
    }

    const Index n = input.rows();
    GramMatrix<Scalar> G = gram(kernel, input);

    if (ridge == Scalar(0)) {
        for (Index m = 0; m < n; ++m) {
            for (Index k = m + 1; k < n; ++k) {
                if ((input.row(m) - input.row(k)).squaredNorm() == Scalar(0)) {
                    throw NumericalError("identity_init: duplicate input rows " + std::to_string(m) +
                                         " and " + std::to_string(k) +
                                         " make the center Gram singular at ridge 0");
                }
            }
        }
    }

    MatrixX<Scalar> system = G.values;
    system.diagonal().array() += ridge;

    Eigen::LDLT<MatrixX<Scalar>> solver(system);
    MatrixX<Scalar> alpha;
    bool failed = solver.info() != Eigen::Success;
    if (!failed) {
        alpha = solver.solve(input);
        failed = !alpha.allFinite();
    }

    KernelLayer<Scalar> layer;
    if (!failed) {
        layer.kernel = kernel;
        layer.centers = input;
        layer.alpha = std::move(alpha);
        layer.bias = VectorX<Scalar>::Zero(input.cols());
    }

    Scalar err = Scalar(0);
    if (!failed) {
        err = (layer_forward(layer, input) - input).template lpNorm<Eigen::Infinity>();
        const Scalar scale = std::max(Scalar(1), input.template lpNorm<Eigen::Infinity>());
        failed = !std::isfinite(double(err)) || err > Scalar(1e-2) * scale;
    }
    if (failed) {
        const Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(system, Eigen::EigenvaluesOnly);
        const Scalar lmax = eig.eigenvalues().cwiseAbs().maxCoeff();
        const Scalar lmin = eig.eigenvalues().cwiseAbs().minCoeff();
        const double cond = lmin > Scalar(0) ? double(lmax / lmin) : std::numeric_limits<double>::infinity();
        throw NumericalError("identity_init: center Gram system is singular beyond ridge rescue", cond);
    }

    return IdentityInitResult<Scalar>{std::move(layer), err};
}

/// Ridge used by identity_init when the caller does not pin one;
/// 1e-8 of the mean Gram diagonal, which is c for these kernels.
template <typename Scalar>
Scalar default_identity_ridge(const KernelSpec<Scalar>& kernel) {
    return Scalar(1e-8) * kernel.c;
}

// Fresh untrained layer on the given centers: alpha ~ U(-1/sqrt(M), 1/sqrt(M)),
// bias 0, so initial outputs stay O(1) regardless of center count.
template <typename Scalar>
KernelLayer<Scalar> random_layer(const KernelSpec<Scalar>& kernel, MatrixX<Scalar> centers,
                                 Index output_dim, std::uint64_t seed) {
    kernel.validate();
    if (centers.rows() < 1) {
        throw std::invalid_argument("random_layer: needs at least one center");
    }
    if (output_dim < 1) {
        throw std::invalid_argument("random_layer: output width must be positive");
    }
    KernelLayer<Scalar> layer;
    layer.kernel = kernel;
    layer.centers = std::move(centers);

    const Scalar bound = Scalar(1) / std::sqrt(Scalar(layer.centers.rows()));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-double(bound), double(bound));
    layer.alpha.resize(layer.centers.rows(), output_dim);
    for (Index j = 0; j < output_dim; ++j) {
        for (Index m = 0; m < layer.centers.rows(); ++m) {
            layer.alpha(m, j) = Scalar(dist(rng));
        }
    }
    layer.bias = VectorX<Scalar>::Zero(output_dim);
    return layer;
}

// Untrained copy of `shape` (same kernel and width) whose centers are a random
// subset of ceil(fraction * N) input rows, redrawn until every class appears.
// Row order within the subset follows the input. Deterministic per seed.
template <typename Scalar>
KernelLayer<Scalar> subsample_centers(const KernelLayer<Scalar>& shape, const MatrixIn<Scalar>& input,
                                      const IntVector& labels, Scalar fraction, std::uint64_t seed) {
    if (!(fraction > Scalar(0) && fraction <= Scalar(1))) {
        throw std::invalid_argument("subsample_centers: fraction must lie in (0, 1]");
    }
    const Index n = input.rows();
    if (labels.size() != n) {
        throw std::invalid_argument("subsample_centers: labels/input row mismatch");
    }

    std::vector<int> classes(labels.data(), labels.data() + labels.size());
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    const Index class_count = static_cast<Index>(classes.size());
    if (fraction * Scalar(n) < Scalar(class_count)) {
        throw std::invalid_argument("subsample_centers: fraction*N = " +
                                    std::to_string(double(fraction) * double(n)) +
                                    " cannot cover " + std::to_string(class_count) + " classes");
    }

    const Index keep = fraction == Scalar(1) ? n : Index(std::ceil(double(fraction) * double(n)));

    std::vector<Index> subset;
    if (keep >= n) {
        subset.resize(n);
        std::iota(subset.begin(), subset.end(), Index(0));
    } else {
        std::mt19937_64 rng(sub_seed(seed, "subsample"));
        std::vector<Index> all(n);
        std::iota(all.begin(), all.end(), Index(0));
        for (int attempt = 0; attempt < 100000; ++attempt) {
            subset.clear();
            std::sample(all.begin(), all.end(), std::back_inserter(subset), keep, rng);
            std::vector<char> seen(classes.size(), 0);
            for (Index idx : subset) {
                const auto it = std::lower_bound(classes.begin(), classes.end(), labels[idx]);
                seen[std::size_t(it - classes.begin())] = 1;
            }
            if (std::all_of(seen.begin(), seen.end(), [](char s) { return s != 0; })) {
                break;
            }
            subset.clear();
        }
        if (subset.empty()) {
            throw std::runtime_error("subsample_centers: could not draw a class-covering subset");
        }
    }

    MatrixX<Scalar> centers(keep, input.cols());
    for (Index i = 0; i < keep; ++i) {
        centers.row(i) = input.row(subset[std::size_t(i)]);
    }
    return random_layer(shape.kernel, std::move(centers), shape.output_dim(), sub_seed(seed, "init"));
}

}  // namespace kmlp

#endif  // KMLP_NETWORK_HPP
