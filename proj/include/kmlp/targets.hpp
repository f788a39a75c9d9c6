#ifndef KMLP_TARGETS_HPP
#define KMLP_TARGETS_HPP

#include "kmlp/kernel.hpp"
#include "kmlp/types.hpp"

#include <cmath>
#include <string>

namespace kmlp {

enum class Metric { L1, L2, Alignment };

inline std::string to_string(Metric m) {
    switch (m) {
        case Metric::L1: return "l1";
        case Metric::L2: return "l2";
        case Metric::Alignment: return "alignment";
    }
    return "?";
}

/// Target kernel matrix: entry c where labels agree, a where they differ.
template <typename Scalar = double>
struct IdealGram {
    MatrixX<Scalar> values;
    IntVector labels;

    Index size() const { return values.rows(); }
};

template <typename Scalar>
IdealGram<Scalar> ideal_gram(const IntVector& labels, Scalar a, Scalar c) {
    if (!(c > a)) {
        throw std::invalid_argument("ideal_gram: requires c > a");
    }
    const Index n = labels.size();
    if (n < 1) {
        throw std::invalid_argument("ideal_gram: needs at least one label");
    }
    IdealGram<Scalar> out;
    out.labels = labels;
    out.values.resize(n, n);
    for (Index m = 0; m < n; ++m) {
        for (Index k = 0; k < n; ++k) {
            out.values(m, k) = labels[m] == labels[k] ? c : a;
        }
    }
    return out;
}

// Scalar distance between a kernel matrix and its target, all variants
// minimized (at 0 for l1/l2) when G matches the target:
//   l1        mean |T - G|
//   l2        mean (T - G)^2
//   alignment 1 - <G,T>_F / (|G|_F |T|_F)
template <typename Scalar>
Scalar dissimilarity(const MatrixX<Scalar>& G, const IdealGram<Scalar>& target, Metric metric) {
    if (G.rows() != G.cols()) {
        throw std::invalid_argument("dissimilarity: G must be square");
    }
    if (G.rows() != target.values.rows()) {
        throw std::invalid_argument("dissimilarity: G is " + std::to_string(G.rows()) +
                                    "x" + std::to_string(G.cols()) + " but target is " +
                                    std::to_string(target.values.rows()) + " wide");
    }
    const auto resid = (target.values - G).array();
    const Scalar n2 = Scalar(G.size());
    switch (metric) {
        case Metric::L1:
            return resid.abs().sum() / n2;
        case Metric::L2:
            return resid.square().sum() / n2;
        case Metric::Alignment: {
            const Scalar gt = (G.array() * target.values.array()).sum();
            const Scalar gn = G.norm();
            const Scalar tn = target.values.norm();
            return Scalar(1) - gt / (gn * tn);
        }
    }
    return Scalar(0);
}

template <typename Scalar>
Scalar dissimilarity(const GramMatrix<Scalar>& G, const IdealGram<Scalar>& target, Metric metric) {
    return dissimilarity(G.values, target, metric);
}

/// Batch label statistics that enter the regularizer-size bounds:
/// positive_fraction (share of labels > 0) and between-class ordered-pair share.
struct LabelStats {
    double positive_fraction = 0.0;
    double between_class_pair_fraction = 0.0;
};

inline LabelStats label_stats(const IntVector& labels) {
    const Index n = labels.size();
    if (n < 1) {
        throw std::invalid_argument("label_stats: needs at least one label");
    }
    LabelStats s;
    Index positive = 0;
    for (Index i = 0; i < n; ++i) {
        positive += labels[i] > 0 ? 1 : 0;
    }
    s.positive_fraction = double(positive) / double(n);
    Index between = 0;
    for (Index m = 0; m < n; ++m) {
        for (Index k = 0; k < n; ++k) {
            between += labels[m] != labels[k] ? 1 : 0;
        }
    }
    s.between_class_pair_fraction = double(between) / (double(n) * double(n));
    return s;
}

}  // namespace kmlp

#endif  // KMLP_TARGETS_HPP
