#ifndef KMLP_MODEL_IO_HPP
#define KMLP_MODEL_IO_HPP

#include "kmlp/network.hpp"
#include "kmlp/targets.hpp"
#include "kmlp/training.hpp"
#include "kmlp/types.hpp"

#include <chrono>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <fstream>
#include <string>
#include <vector>

namespace kmlp {

/// A trained network plus everything needed to evaluate it on new data.
struct ModelFile {
    KernelNetwork<double> network;
    Metric metric = Metric::L1;  // dissimilarity the hidden layers were trained with
    OutputLoss loss = OutputLoss::Hinge;
    int num_classes = 2;
};

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(out, bits);
}

inline std::uint32_t read_u32(std::istream& in, std::int64_t& offset) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("model: truncated file", offset);
    offset += 4;
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

inline std::uint64_t read_u64(std::istream& in, std::int64_t& offset) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw FormatError("model: truncated file", offset);
    offset += 8;
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

inline double read_f64(std::istream& in, std::int64_t& offset) {
    const std::uint64_t bits = read_u64(in, offset);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace detail

constexpr char kModelMagic[5] = {'K', 'M', 'L', 'P', '1'};

// Self-describing binary model container, tag "KMLP1". Layout (little-endian):
// magic, metric u8, loss u8, num_classes u32, layer count u32, then per layer
// kernel kind/sigma/a/c/lipschitz, shape u64s, and the center/alpha/bias
// payloads as raw rows of f64. Bit-exact round trip for trained networks.
inline void save_model(const ModelFile& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("model: cannot write " + path);
    }
    out.write(kModelMagic, 5);
    out.put(char(static_cast<unsigned char>(model.metric)));
    out.put(char(static_cast<unsigned char>(model.loss)));
    detail::write_u32(out, std::uint32_t(model.num_classes));
    detail::write_u32(out, std::uint32_t(model.network.layers.size()));
    for (const auto& layer : model.network.layers) {
        out.put(char(static_cast<unsigned char>(layer.kernel.kind)));
        detail::write_f64(out, layer.kernel.sigma);
        detail::write_f64(out, layer.kernel.a);
        detail::write_f64(out, layer.kernel.c);
        out.put(layer.kernel.lipschitz ? char(1) : char(0));
        detail::write_f64(out, layer.kernel.lipschitz.value_or(0.0));
        detail::write_u64(out, std::uint64_t(layer.center_count()));
        detail::write_u64(out, std::uint64_t(layer.input_dim()));
        detail::write_u64(out, std::uint64_t(layer.output_dim()));
        for (Index m = 0; m < layer.center_count(); ++m) {
            for (Index c = 0; c < layer.input_dim(); ++c) detail::write_f64(out, layer.centers(m, c));
        }
        for (Index m = 0; m < layer.center_count(); ++m) {
            for (Index j = 0; j < layer.output_dim(); ++j) detail::write_f64(out, layer.alpha(m, j));
        }
        for (Index j = 0; j < layer.output_dim(); ++j) detail::write_f64(out, layer.bias[j]);
    }
    if (!out) {
        throw FormatError("model: write failed for " + path);
    }
}

inline ModelFile load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("model: cannot open " + path);
    }
    std::int64_t offset = 0;
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, kModelMagic, 5) != 0) {
        throw FormatError("model: not a KMLP1 file", 0);
    }
    offset += 5;

    auto read_u8 = [&]() {
        const int ch = in.get();
        if (ch == EOF) throw FormatError("model: truncated file", offset);
        ++offset;
        return static_cast<unsigned char>(ch);
    };

    ModelFile model;
    const unsigned char metric = read_u8();
    if (metric > 2) throw FormatError("model: unknown metric tag", offset - 1);
    model.metric = static_cast<Metric>(metric);
    const unsigned char loss = read_u8();
    if (loss > 1) throw FormatError("model: unknown loss tag", offset - 1);
    model.loss = static_cast<OutputLoss>(loss);
    model.num_classes = int(detail::read_u32(in, offset));
    const std::uint32_t layer_count = detail::read_u32(in, offset);
    if (model.num_classes < 2 || layer_count < 1 || layer_count > 1024) {
        throw FormatError("model: implausible header", offset);
    }

    for (std::uint32_t i = 0; i < layer_count; ++i) {
        KernelLayer<double> layer;
        const unsigned char kind = read_u8();
        if (kind != 0) throw FormatError("model: unknown kernel kind", offset - 1);
        layer.kernel.kind = KernelKind::Gaussian;
        layer.kernel.sigma = detail::read_f64(in, offset);
        layer.kernel.a = detail::read_f64(in, offset);
        layer.kernel.c = detail::read_f64(in, offset);
        const bool has_lip = read_u8() != 0;
        const double lip = detail::read_f64(in, offset);
        if (has_lip) layer.kernel.lipschitz = lip;

        const std::uint64_t m = detail::read_u64(in, offset);
        const std::uint64_t d_in = detail::read_u64(in, offset);
        const std::uint64_t d_out = detail::read_u64(in, offset);
        if (m < 1 || d_in < 1 || d_out < 1 || m > (1u << 26) || d_in > (1u << 26) || d_out > (1u << 26)) {
            throw FormatError("model: implausible layer shape", offset);
        }
        layer.centers.resize(Index(m), Index(d_in));
        layer.alpha.resize(Index(m), Index(d_out));
        layer.bias.resize(Index(d_out));
        for (Index r = 0; r < layer.centers.rows(); ++r) {
            for (Index c = 0; c < layer.centers.cols(); ++c) layer.centers(r, c) = detail::read_f64(in, offset);
        }
        for (Index r = 0; r < layer.alpha.rows(); ++r) {
            for (Index c = 0; c < layer.alpha.cols(); ++c) layer.alpha(r, c) = detail::read_f64(in, offset);
        }
        for (Index j = 0; j < layer.bias.size(); ++j) layer.bias[j] = detail::read_f64(in, offset);

        model.network.layers.push_back(std::move(layer));
    }
    model.network.frozen_upto = int(layer_count);

    try {
        model.network.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("model: invalid network (") + e.what() + ")");
    }
    return model;
}

/// One record per epoch (epoch, train objective, validation metric, timestamp)
/// followed by the summary trailer.
inline void write_train_report(const TrainReport<double>& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("report: cannot write " + path);
    }
    out.precision(17);
    out << "epoch\ttrain_objective\tval_metric\ttimestamp\n";
    for (const EpochRecord& rec : report.epochs) {
        const std::time_t t = std::time_t(rec.unix_time);
        char stamp[32] = "-";
        if (rec.unix_time > 0) {
            std::tm tm_utc{};
            gmtime_r(&t, &tm_utc);
            std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
        }
        out << rec.epoch << '\t' << rec.train_objective << '\t' << rec.val_metric << '\t' << stamp << '\n';
    }
    out << "chosen_epoch\t" << report.chosen_epoch << '\n';
    out << "final_dissimilarity\tl1=" << report.final_l1 << "\tl2=" << report.final_l2
        << "\talignment=" << report.final_alignment << '\n';
    out << "final_rkhs_norms";
    for (Index j = 0; j < report.final_rkhs_norms.size(); ++j) out << '\t' << report.final_rkhs_norms[j];
    out << '\n';
    out << "wall_seconds\t" << report.wall_seconds << '\n';
}

}  // namespace kmlp

#endif  // KMLP_MODEL_IO_HPP
