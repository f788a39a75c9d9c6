#ifndef KMLP_TYPES_HPP
#define KMLP_TYPES_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>

namespace kmlp {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using IntVector = Eigen::VectorXi;

// Non-deduced matrix parameter: the scalar comes from another argument, so
// Eigen expressions convert to plain matrices at the call site.
template <typename Scalar>
using MatrixIn = std::type_identity_t<MatrixX<Scalar>>;

/// Malformed input file (bad magic, truncation, unparsable field).
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::int64_t offset = -1)
        : std::runtime_error(offset >= 0 ? what + " (offset " + std::to_string(offset) + ")" : what),
          offset_(offset) {}

    std::int64_t offset() const { return offset_; }

private:
    std::int64_t offset_;
};

/// Linear-algebra failure (singular system, lost precision).
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, double condition_estimate = 0.0)
        : std::runtime_error(what), condition_estimate_(condition_estimate) {}

    double condition_estimate() const { return condition_estimate_; }

private:
    double condition_estimate_;
};

/// Optimizer produced non-finite parameters.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, int epoch)
        : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}

    int epoch() const { return epoch_; }

private:
    int epoch_;
};

// Derives an independent stream seed from the master seed and a stream name
// (FNV-1a), so data/init/batching randomness can be varied independently.
inline std::uint64_t sub_seed(std::uint64_t master, std::string_view stream) {
    std::uint64_t h = 14695981039346656037ull;
    for (int shift = 0; shift < 64; shift += 8) {
        h ^= (master >> shift) & 0xffu;
        h *= 1099511628211ull;
    }
    for (unsigned char ch : stream) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace kmlp

#endif  // KMLP_TYPES_HPP
