#ifndef KMLP_KERNEL_HPP
#define KMLP_KERNEL_HPP

#include "kmlp/types.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace kmlp {

enum class KernelKind { Gaussian };

/// A bounded kernel together with the constants its guarantees rely on:
/// c = k(x,x), a = target infimum of k, L = Lipschitz constant in one argument.
template <typename Scalar = double>
struct KernelSpec {
    KernelKind kind = KernelKind::Gaussian;
    Scalar sigma = Scalar(1);
    Scalar a = Scalar(0);
    Scalar c = Scalar(1);
    std::optional<Scalar> lipschitz{};

    void validate() const {
        if (!(sigma > Scalar(0))) {
            throw std::invalid_argument("KernelSpec: sigma must be positive");
        }
        if (!(c > a)) {
            throw std::invalid_argument("KernelSpec: requires c > a");
        }
        if (kind == KernelKind::Gaussian) {
            if (c != Scalar(1)) {
                throw std::invalid_argument("KernelSpec: gaussian kernel has c = 1 exactly");
            }
            if (!(a >= Scalar(0) && a < Scalar(1))) {
                throw std::invalid_argument("KernelSpec: gaussian target infimum a must lie in [0, 1)");
            }
        }
        if (lipschitz && !(*lipschitz >= Scalar(0))) {
            throw std::invalid_argument("KernelSpec: lipschitz constant must be nonnegative");
        }
    }
};

/// Dense kernel matrix; `symmetric` is true when both input sets coincide.
template <typename Scalar = double>
struct GramMatrix {
    MatrixX<Scalar> values;
    bool symmetric = false;

    Index rows() const { return values.rows(); }
    Index cols() const { return values.cols(); }
};

template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar eval_kernel(const KernelSpec<typename DerivedX::Scalar>& spec,
                                      const Eigen::MatrixBase<DerivedX>& x,
                                      const Eigen::MatrixBase<DerivedY>& y) {
    using Scalar = typename DerivedX::Scalar;
    if (x.size() != y.size()) {
        throw std::invalid_argument("eval_kernel: input dimensions differ (" +
                                    std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
    }
    const Scalar d2 = (x.derived() - y.derived()).squaredNorm();
    return std::exp(-d2 / (spec.sigma * spec.sigma));
}

// Kernel matrix (G)_{mn} = k(x_m, z_n) over the rows of X and Z, computed from
// the expansion |x-z|^2 = |x|^2 + |z|^2 - 2 x.z so the whole block is one GEMM.
// Squared distances are clamped at 0, which pins entries into (0, 1].
template <typename DerivedX, typename DerivedZ>
GramMatrix<typename DerivedX::Scalar> gram(const KernelSpec<typename DerivedX::Scalar>& spec,
                                           const Eigen::MatrixBase<DerivedX>& X,
                                           const Eigen::MatrixBase<DerivedZ>& Z) {
    using Scalar = typename DerivedX::Scalar;
    if (X.cols() != Z.cols()) {
        throw std::invalid_argument("gram: X and Z must have the same column count");
    }

    const MatrixX<Scalar>& Xd = X.derived();
    const MatrixX<Scalar>& Zd = Z.derived();

    GramMatrix<Scalar> out;
    out.symmetric = (static_cast<const void*>(&Xd) == static_cast<const void*>(&Zd)) ||
                    (Xd.rows() == Zd.rows() && (Xd.array() == Zd.array()).all());

    const VectorX<Scalar> sx = Xd.rowwise().squaredNorm();
    const VectorX<Scalar> sz = Zd.rowwise().squaredNorm();
    MatrixX<Scalar> d2 = Scalar(-2) * (Xd * Zd.transpose());
    d2.colwise() += sx;
    d2.rowwise() += sz.transpose();
    d2 = d2.cwiseMax(Scalar(0));

    const Scalar inv_s2 = Scalar(1) / (spec.sigma * spec.sigma);
    out.values = (-d2 * inv_s2).array().exp();
    if (out.symmetric) {
        // Mirror the upper triangle so symmetry holds exactly, not just to rounding.
        out.values.template triangularView<Eigen::StrictlyLower>() = out.values.transpose();
    }
    return out;
}

template <typename Derived>
GramMatrix<typename Derived::Scalar> gram(const KernelSpec<typename Derived::Scalar>& spec,
                                          const Eigen::MatrixBase<Derived>& X) {
    GramMatrix<typename Derived::Scalar> out = gram(spec, X, X);
    out.symmetric = true;
    return out;
}

// Supremum over distances t >= 0 of |dk/dt| = 2 t exp(-t^2/sigma^2) / sigma^2,
// attained at t = sigma/sqrt(2). Stores the estimate into the spec and returns it.
template <typename Scalar>
Scalar lipschitz_estimate(KernelSpec<Scalar>& spec) {
    const Scalar value = std::sqrt(Scalar(2)) * std::exp(Scalar(-0.5)) / spec.sigma;
    spec.lipschitz = value;
    return value;
}

template <typename Scalar>
Scalar lipschitz_estimate(const KernelSpec<Scalar>& spec) {
    KernelSpec<Scalar> copy = spec;
    return lipschitz_estimate(copy);
}

}  // namespace kmlp

#endif  // KMLP_KERNEL_HPP
