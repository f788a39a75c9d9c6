#ifndef KMLP_DATA_HPP
#define KMLP_DATA_HPP

#include "kmlp/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace kmlp {

enum class Split { Train, Validation, Test };

template <typename Scalar = double>
struct LabeledDataset {
    MatrixX<Scalar> features;
    IntVector labels;
    int num_classes = 0;
    std::vector<Split> tags;  // one per row; defaults to Train

    Index size() const { return features.rows(); }
    Index dim() const { return features.cols(); }
};

template <typename Scalar = double>
struct SplitData {
    MatrixX<Scalar> features;
    IntVector labels;
};

template <typename Scalar>
SplitData<Scalar> subset(const LabeledDataset<Scalar>& data, Split which) {
    Index count = 0;
    for (Split s : data.tags) count += s == which ? 1 : 0;
    SplitData<Scalar> out;
    out.features.resize(count, data.dim());
    out.labels.resize(count);
    Index at = 0;
    for (Index i = 0; i < data.size(); ++i) {
        if (data.tags[std::size_t(i)] == which) {
            out.features.row(at) = data.features.row(i);
            out.labels[at] = data.labels[i];
            ++at;
        }
    }
    return out;
}

namespace detail {

template <typename Scalar>
void finalize(LabeledDataset<Scalar>& data) {
    if (data.features.rows() != data.labels.size()) {
        throw std::invalid_argument("dataset: features/labels row mismatch");
    }
    if (!data.features.allFinite()) {
        throw std::invalid_argument("dataset: non-finite feature values");
    }
    int max_label = -1;
    for (Index i = 0; i < data.labels.size(); ++i) {
        if (data.labels[i] < 0) {
            throw std::invalid_argument("dataset: labels must be nonnegative class indices");
        }
        max_label = std::max(max_label, data.labels[i]);
    }
    data.num_classes = max_label + 1;
    data.tags.assign(std::size_t(data.size()), Split::Train);
}

inline std::uint32_t read_u32_be(std::istream& in, std::int64_t& offset, const char* what) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (!in) {
        throw FormatError(std::string("idx: truncated while reading ") + what, offset);
    }
    offset += 4;
    return (std::uint32_t(bytes[0]) << 24) | (std::uint32_t(bytes[1]) << 16) |
           (std::uint32_t(bytes[2]) << 8) | std::uint32_t(bytes[3]);
}

}  // namespace detail

/// Directory used to resolve relative dataset paths; KMLP_DATA_DIR overrides
/// the working directory.
inline std::filesystem::path resolve_data_path(const std::string& path) {
    const std::filesystem::path p(path);
    if (p.is_absolute() || std::filesystem::exists(p)) {
        return p;
    }
    if (const char* dir = std::getenv("KMLP_DATA_DIR")) {
        const std::filesystem::path candidate = std::filesystem::path(dir) / p;
        if (std::filesystem::exists(candidate)) {
            return candidate;
        }
    }
    return p;
}

// IDX image/label pair (big-endian, magics 0x803 / 0x801). Rows are flattened
// images scaled by 1/255 into [0, 1].
template <typename Scalar = double>
LabeledDataset<Scalar> load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(resolve_data_path(images_path), std::ios::binary);
    if (!img) {
        throw FormatError("idx: cannot open image file " + images_path);
    }
    std::int64_t offset = 0;
    const std::uint32_t img_magic = detail::read_u32_be(img, offset, "image magic");
    if (img_magic != 0x00000803u) {
        throw FormatError("idx: bad image magic number", 0);
    }
    const std::uint32_t count = detail::read_u32_be(img, offset, "image count");
    const std::uint32_t rows = detail::read_u32_be(img, offset, "image rows");
    const std::uint32_t cols = detail::read_u32_be(img, offset, "image cols");
    const std::size_t pixels = std::size_t(rows) * cols;

    LabeledDataset<Scalar> data;
    data.features.resize(Index(count), Index(pixels));
    std::vector<unsigned char> buffer(pixels);
    for (std::uint32_t i = 0; i < count; ++i) {
        img.read(reinterpret_cast<char*>(buffer.data()), std::streamsize(pixels));
        if (!img) {
            throw FormatError("idx: truncated image data", offset);
        }
        offset += std::int64_t(pixels);
        for (std::size_t p = 0; p < pixels; ++p) {
            data.features(Index(i), Index(p)) = Scalar(buffer[p]) / Scalar(255);
        }
    }

    std::ifstream lab(resolve_data_path(labels_path), std::ios::binary);
    if (!lab) {
        throw FormatError("idx: cannot open label file " + labels_path);
    }
    std::int64_t lab_offset = 0;
    const std::uint32_t lab_magic = detail::read_u32_be(lab, lab_offset, "label magic");
    if (lab_magic != 0x00000801u) {
        throw FormatError("idx: bad label magic number", 0);
    }
    const std::uint32_t lab_count = detail::read_u32_be(lab, lab_offset, "label count");
    if (lab_count != count) {
        throw FormatError("idx: image/label count mismatch (" + std::to_string(count) + " images, " +
                              std::to_string(lab_count) + " labels)",
                          lab_offset);
    }
    data.labels.resize(Index(count));
    for (std::uint32_t i = 0; i < count; ++i) {
        char byte;
        lab.read(&byte, 1);
        if (!lab) {
            throw FormatError("idx: truncated label data", lab_offset);
        }
        ++lab_offset;
        data.labels[Index(i)] = int(static_cast<unsigned char>(byte));
    }

    detail::finalize(data);
    return data;
}

/// IDX pair writer (pixel values = feature * 255 rounded; exact for {0, 1} features).
template <typename Scalar>
void save_idx(const LabeledDataset<Scalar>& data, const std::string& images_path,
              const std::string& labels_path, std::uint32_t rows, std::uint32_t cols) {
    if (Index(rows) * Index(cols) != data.dim()) {
        throw std::invalid_argument("save_idx: rows*cols must equal the feature width");
    }
    auto write_u32_be = [](std::ostream& out, std::uint32_t v) {
        const unsigned char bytes[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
        out.write(reinterpret_cast<const char*>(bytes), 4);
    };

    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("idx: cannot write " + images_path);
    write_u32_be(img, 0x00000803u);
    write_u32_be(img, std::uint32_t(data.size()));
    write_u32_be(img, rows);
    write_u32_be(img, cols);
    for (Index i = 0; i < data.size(); ++i) {
        for (Index p = 0; p < data.dim(); ++p) {
            const double v = std::round(double(data.features(i, p)) * 255.0);
            img.put(char(static_cast<unsigned char>(std::min(255.0, std::max(0.0, v)))));
        }
    }

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("idx: cannot write " + labels_path);
    write_u32_be(lab, 0x00000801u);
    write_u32_be(lab, std::uint32_t(data.size()));
    for (Index i = 0; i < data.size(); ++i) {
        lab.put(char(static_cast<unsigned char>(data.labels[i])));
    }
}

// CSV with numeric features and one integer label column (negative indices
// count from the end). Optional min-max normalization rescales each feature
// column into [0, 1].
template <typename Scalar = double>
LabeledDataset<Scalar> load_csv(const std::string& path, int label_column = -1, bool has_header = false,
                                bool normalize = false) {
    std::ifstream in(resolve_data_path(path));
    if (!in) {
        throw FormatError("csv: cannot open " + path);
    }

    std::vector<std::vector<Scalar>> rows;
    std::vector<int> labels;
    std::string line;
    std::int64_t line_number = 0;
    Index width = -1;

    while (std::getline(in, line)) {
        ++line_number;
        if (line_number == 1 && has_header) continue;
        if (line.empty()) continue;

        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");

        if (width < 0) {
            width = Index(cells.size());
            if (width < 2) {
                throw FormatError("csv: need at least one feature and a label column (line " +
                                  std::to_string(line_number) + ")");
            }
        } else if (Index(cells.size()) != width) {
            throw FormatError("csv: ragged row with " + std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(width) + " (line " + std::to_string(line_number) + ")");
        }

        int lc = label_column < 0 ? int(width) + label_column : label_column;
        if (lc < 0 || lc >= int(width)) {
            throw std::invalid_argument("csv: label column out of range");
        }

        std::vector<Scalar> feats;
        feats.reserve(std::size_t(width) - 1);
        for (Index c = 0; c < width; ++c) {
            const std::string& text = cells[std::size_t(c)];
            try {
                std::size_t used = 0;
                if (c == Index(lc)) {
                    const long v = std::stol(text, &used);
                    if (used != text.size()) throw std::invalid_argument(text);
                    labels.push_back(int(v));
                } else {
                    const double v = std::stod(text, &used);
                    if (used != text.size()) throw std::invalid_argument(text);
                    feats.push_back(Scalar(v));
                }
            } catch (const std::exception&) {
                throw FormatError("csv: unparsable cell '" + text + "' (line " + std::to_string(line_number) +
                                  ")");
            }
        }
        rows.push_back(std::move(feats));
    }

    if (rows.empty()) {
        throw FormatError("csv: no data rows in " + path);
    }

    LabeledDataset<Scalar> data;
    data.features.resize(Index(rows.size()), Index(rows.front().size()));
    data.labels.resize(Index(labels.size()));
    for (Index i = 0; i < data.features.rows(); ++i) {
        for (Index c = 0; c < data.features.cols(); ++c) {
            data.features(i, c) = rows[std::size_t(i)][std::size_t(c)];
        }
        data.labels[i] = labels[std::size_t(i)];
    }

    if (normalize) {
        for (Index c = 0; c < data.features.cols(); ++c) {
            const Scalar lo = data.features.col(c).minCoeff();
            const Scalar hi = data.features.col(c).maxCoeff();
            if (hi > lo) {
                data.features.col(c) = (data.features.col(c).array() - lo) / (hi - lo);
            } else {
                data.features.col(c).setZero();
            }
        }
    }

    detail::finalize(data);
    return data;
}

/// CSV writer (features then the label in the last column), full precision.
template <typename Scalar>
void save_csv(const LabeledDataset<Scalar>& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("csv: cannot write " + path);
    }
    out.precision(17);
    for (Index i = 0; i < data.size(); ++i) {
        for (Index c = 0; c < data.dim(); ++c) {
            out << data.features(i, c) << ',';
        }
        out << data.labels[i] << '\n';
    }
}

// Synthetic images of a single hollow rectangle: integer width/height drawn
// from [3, side-2], redrawn while equal; the top-left corner is uniform over
// placements that keep the rectangle inside. Border pixels get 255 and the
// image is then scaled by 1/255, so values are exactly {0, 1}. Label 1 when
// the rectangle is wider than tall.
template <typename Scalar = double>
LabeledDataset<Scalar> gen_rectangles(Index n, Index side = 28, std::uint64_t seed = 0) {
    if (n < 1) throw std::invalid_argument("gen_rectangles: n must be positive");
    if (side < 6) throw std::invalid_argument("gen_rectangles: side must be at least 6");

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Index> extent(3, side - 2);

    LabeledDataset<Scalar> data;
    data.features = MatrixX<Scalar>::Zero(n, side * side);
    data.labels.resize(n);

    for (Index i = 0; i < n; ++i) {
        Index w = extent(rng), h = extent(rng);
        while (w == h) {
            w = extent(rng);
            h = extent(rng);
        }
        std::uniform_int_distribution<Index> row_pos(0, side - h);
        std::uniform_int_distribution<Index> col_pos(0, side - w);
        const Index r0 = row_pos(rng);
        const Index c0 = col_pos(rng);

        auto set = [&](Index r, Index c) { data.features(i, r * side + c) = Scalar(1); };
        for (Index c = c0; c < c0 + w; ++c) {
            set(r0, c);
            set(r0 + h - 1, c);
        }
        for (Index r = r0; r < r0 + h; ++r) {
            set(r, c0);
            set(r, c0 + w - 1);
        }
        data.labels[i] = w > h ? 1 : 0;
    }

    detail::finalize(data);
    return data;
}

/// Two unit-variance Gaussian clusters at +-(separation/2) along the first axis,
/// n/2 points per class.
template <typename Scalar = double>
LabeledDataset<Scalar> gen_blobs(Index n, Index d, Scalar separation, std::uint64_t seed = 0) {
    if (n < 2 || n % 2 != 0) throw std::invalid_argument("gen_blobs: n must be even and positive");
    if (d < 1) throw std::invalid_argument("gen_blobs: d must be at least 1");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    LabeledDataset<Scalar> data;
    data.features.resize(n, d);
    data.labels.resize(n);
    for (Index i = 0; i < n; ++i) {
        const int label = i < n / 2 ? 0 : 1;
        const Scalar shift = (label == 0 ? Scalar(-1) : Scalar(1)) * separation / Scalar(2);
        for (Index c = 0; c < d; ++c) {
            data.features(i, c) = Scalar(normal(rng)) + (c == 0 ? shift : Scalar(0));
        }
        data.labels[i] = label;
    }

    detail::finalize(data);
    return data;
}

// Stratified split: per class, a seeded shuffle followed by largest-remainder
// allocation of the train/validation/test counts. When the train fraction is
// positive every class lands at least one training row.
template <typename Scalar>
void split(LabeledDataset<Scalar>& data, const std::array<double, 3>& fractions, std::uint64_t seed) {
    double sum = 0;
    for (double f : fractions) {
        if (f < 0) throw std::invalid_argument("split: fractions must be nonnegative");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("split: fractions must sum to 1");
    }

    int active = 0;
    for (double f : fractions) active += f > 0 ? 1 : 0;

    std::vector<std::vector<Index>> by_class(std::size_t(data.num_classes));
    for (Index i = 0; i < data.size(); ++i) {
        by_class[std::size_t(data.labels[i])].push_back(i);
    }

    std::mt19937_64 rng(seed);
    data.tags.assign(std::size_t(data.size()), Split::Train);

    for (auto& members : by_class) {
        if (members.empty()) continue;
        if (Index(members.size()) < active) {
            throw std::invalid_argument("split: a class has fewer rows than populated splits");
        }
        std::shuffle(members.begin(), members.end(), rng);

        const double n_c = double(members.size());
        std::array<Index, 3> counts{};
        std::array<double, 3> remainder{};
        Index assigned = 0;
        for (int s = 0; s < 3; ++s) {
            const double exact = fractions[std::size_t(s)] * n_c;
            counts[std::size_t(s)] = Index(std::floor(exact + 1e-12));
            remainder[std::size_t(s)] = exact - double(counts[std::size_t(s)]);
            assigned += counts[std::size_t(s)];
        }
        while (assigned < Index(members.size())) {
            int pick = 0;
            for (int s = 1; s < 3; ++s) {
                if (remainder[std::size_t(s)] > remainder[std::size_t(pick)]) pick = s;
            }
            ++counts[std::size_t(pick)];
            remainder[std::size_t(pick)] = -1;
            ++assigned;
        }
        if (fractions[0] > 0 && counts[0] == 0) {
            int donor = counts[1] >= counts[2] ? 1 : 2;
            --counts[std::size_t(donor)];
            ++counts[0];
        }

        Index at = 0;
        for (int s = 0; s < 3; ++s) {
            const Split tag = s == 0 ? Split::Train : (s == 1 ? Split::Validation : Split::Test);
            for (Index k = 0; k < counts[std::size_t(s)]; ++k) {
                data.tags[std::size_t(members[std::size_t(at++)])] = tag;
            }
        }
    }
}

}  // namespace kmlp

#endif  // KMLP_DATA_HPP
