#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <zlib.h>

#include "fedsvd/activation.hpp"
#include "fedsvd/error.hpp"

namespace fedsvd {

// Samples stored column-wise: `features` is num_features x num_samples.
// `labels[i]` indexes into `class_list`, which is sorted and deduplicated.
struct Dataset {
    Matrix features;
    std::vector<int> labels;
    std::vector<std::string> class_list;

    std::size_t num_samples() const noexcept { return labels.size(); }
    Eigen::Index num_features() const noexcept { return features.rows(); }
    std::size_t num_classes() const noexcept { return class_list.size(); }
};

inline void check_consistent(const Dataset& ds) {
    if (static_cast<std::size_t>(ds.features.cols()) != ds.labels.size())
        throw ShapeError("dataset has " + std::to_string(ds.features.cols()) + " feature columns but " +
                         std::to_string(ds.labels.size()) + " labels");
    for (int l : ds.labels)
        if (l < 0 || static_cast<std::size_t>(l) >= ds.class_list.size())
            throw EncodingError("label index " + std::to_string(l) + " outside class list");
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

// Which column holds the class label: a zero-based index (negative counts
// from the end, -1 = last column) or a header name.
using LabelColumn = std::variant<long, std::string>;

namespace detail {

class LineSource {
public:
    explicit LineSource(const std::string& path) : path_(path) {
        if (ends_with(path, ".gz") || ends_with(path, ".gzip")) {
            gz_ = gzopen(path.c_str(), "rb");
            if (gz_ == nullptr) throw IngestError("cannot open '" + path + "'");
            buf_.resize(1 << 16);
        } else {
            file_.open(path);
            if (!file_) throw IngestError("cannot open '" + path + "'");
        }
    }
    ~LineSource() {
        if (gz_ != nullptr) gzclose(gz_);
    }
    LineSource(const LineSource&) = delete;
    LineSource& operator=(const LineSource&) = delete;

    bool next(std::string& line) {
        if (gz_ == nullptr) return static_cast<bool>(std::getline(file_, line));
        line.clear();
        while (true) {
            char* got = gzgets(gz_, buf_.data(), static_cast<int>(buf_.size()));
            if (got == nullptr) {
                int err = 0;
                gzerror(gz_, &err);
                if (err != Z_OK && err != Z_STREAM_END) throw IngestError("decompression failed for '" + path_ + "'");
                return !line.empty();
            }
            line.append(got);
            if (!line.empty() && line.back() == '\n') {
                line.pop_back();
                return true;
            }
        }
    }

private:
    static bool ends_with(const std::string& s, std::string_view suffix) {
        return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
    }

    std::string path_;
    std::ifstream file_;
    gzFile gz_ = nullptr;
    std::vector<char> buf_;
};

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
        s.remove_suffix(1);
    return s;
}

inline void split_cells(std::string_view line, std::vector<std::string_view>& cells) {
    cells.clear();
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            return;
        }
        cells.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
}

inline bool parse_double(std::string_view cell, double& out) {
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    if (cell.empty()) return false;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
    return ec == std::errc() && ptr == cell.data() + cell.size();
}

inline bool blank(std::string_view line) { return trim(line).empty(); }

}  // namespace detail

// Reads a comma-separated file. Every column except the label column must be
// numeric; labels are kept verbatim and interned into a sorted class list.
// Files ending in .gz are decompressed on the fly. Pass std::nullopt as the
// label column to read an unlabeled file (labels and class_list stay empty).
inline Dataset load_csv(const std::string& path, std::optional<LabelColumn> label_column, bool has_header) {
    detail::LineSource src(path);
    std::string line;
    std::vector<std::string_view> cells;
    std::size_t line_no = 0;

    std::optional<std::size_t> label_idx;
    std::size_t width = 0;
    bool width_known = false;

    auto resolve_index = [&](std::size_t ncols) {
        if (!label_column) return;
        if (const long* idx = std::get_if<long>(&*label_column)) {
            const long resolved = *idx < 0 ? static_cast<long>(ncols) + *idx : *idx;
            if (resolved < 0 || resolved >= static_cast<long>(ncols))
                throw ArgumentError("label column " + std::to_string(*idx) + " out of range for " +
                                    std::to_string(ncols) + " columns");
            label_idx = static_cast<std::size_t>(resolved);
        }
    };

    if (has_header) {
        bool got = false;
        while (src.next(line)) {
            ++line_no;
            if (!detail::blank(line)) {
                got = true;
                break;
            }
        }
        if (!got) throw IngestError("'" + path + "' is empty");
        detail::split_cells(line, cells);
        width = cells.size();
        width_known = true;
        if (label_column) {
            if (const std::string* name = std::get_if<std::string>(&*label_column)) {
                const auto it = std::find(cells.begin(), cells.end(), std::string_view(*name));
                if (it == cells.end()) throw ArgumentError("no column named '" + *name + "' in header of '" + path + "'");
                label_idx = static_cast<std::size_t>(it - cells.begin());
            } else {
                resolve_index(width);
            }
        }
    } else if (label_column && std::holds_alternative<std::string>(*label_column)) {
        throw ArgumentError("label column given by name but the file has no header");
    }

    std::vector<double> values;
    std::vector<std::string> raw_labels;
    std::size_t samples = 0;
    while (src.next(line)) {
        ++line_no;
        if (detail::blank(line)) continue;
        detail::split_cells(line, cells);
        if (!width_known) {
            width = cells.size();
            width_known = true;
            resolve_index(width);
        }
        if (cells.size() != width)
            throw FormatError("'" + path + "' line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                              " columns, found " + std::to_string(cells.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (label_idx && c == *label_idx) {
                raw_labels.emplace_back(cells[c]);
                continue;
            }
            double v = 0.0;
            if (!detail::parse_double(cells[c], v))
                throw IngestError("'" + path + "' line " + std::to_string(line_no) + ", column " + std::to_string(c) +
                                  ": cannot parse '" + std::string(cells[c]) + "' as a number");
            values.push_back(v);
        }
        ++samples;
    }
    if (samples == 0) throw IngestError("'" + path + "' contains no data rows");

    Dataset ds;
    const auto nfeat = static_cast<Eigen::Index>(width - (label_idx ? 1 : 0));
    ds.features = Eigen::Map<const Matrix>(values.data(), nfeat, static_cast<Eigen::Index>(samples));
    if (label_idx) {
        std::vector<std::string> classes = raw_labels;
        std::sort(classes.begin(), classes.end());
        classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
        std::map<std::string_view, int> lookup;
        for (std::size_t i = 0; i < classes.size(); ++i) lookup.emplace(classes[i], static_cast<int>(i));
        ds.labels.reserve(samples);
        for (const auto& l : raw_labels) ds.labels.push_back(lookup.at(l));
        ds.class_list = std::move(classes);
    }
    return ds;
}

// Re-expresses the labels against an externally agreed class list (every
// federation member must use the same output ordering).
inline Dataset with_class_list(Dataset ds, std::vector<std::string> classes) {
    std::vector<std::string> sorted = classes;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::map<std::string, int> lookup;
    for (std::size_t i = 0; i < sorted.size(); ++i) lookup.emplace(sorted[i], static_cast<int>(i));
    for (int& l : ds.labels) {
        const auto& name = ds.class_list.at(static_cast<std::size_t>(l));
        const auto it = lookup.find(name);
        if (it == lookup.end()) throw EncodingError("label '" + name + "' is not in the supplied class list");
        l = it->second;
    }
    ds.class_list = std::move(sorted);
    return ds;
}

inline void write_csv(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write '" + path + "'");
    out.precision(17);
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
        for (Eigen::Index i = 0; i < ds.features.rows(); ++i) out << ds.features(i, j) << ',';
        out << ds.class_list.at(static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(j)])) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Target encoding
// ---------------------------------------------------------------------------

// One-hot rows with 1 -> high and 0 -> low; n x num_classes.
inline Matrix encode_targets(std::span<const int> labels, std::size_t num_classes, double low = 0.05,
                             double high = 0.95) {
    if (!(low > 0.0 && low < high && high < 1.0))
        throw ArgumentError("encode_targets: need 0 < low < high < 1, got low=" + std::to_string(low) +
                            " high=" + std::to_string(high));
    if (num_classes == 0) throw ArgumentError("encode_targets: empty class list");
    Matrix t = Matrix::Constant(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(num_classes), low);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int l = labels[i];
        if (l < 0 || static_cast<std::size_t>(l) >= num_classes)
            throw EncodingError("encode_targets: label index " + std::to_string(l) + " not in class list of size " +
                                std::to_string(num_classes));
        t(static_cast<Eigen::Index>(i), l) = high;
    }
    return t;
}

// Activation whose clip range admits targets encoded with (low, high).
inline ActivationSpec activation_for_encoding(double low, double high, ActivationKind kind = ActivationKind::logistic) {
    return {kind, std::min(low, 1.0 - high)};
}

// ---------------------------------------------------------------------------
// Deterministic shuffling, splitting and partitioning
// ---------------------------------------------------------------------------

// Uniform integer in [0, bound) by rejection, independent of the standard
// library's distribution implementation so shuffles are reproducible everywhere.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = 0;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

// Fisher-Yates permutation of 0..n-1.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[uniform_below(rng, i)]);
    return idx;
}

inline Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
    Dataset out;
    out.class_list = ds.class_list;
    out.features.resize(ds.features.rows(), static_cast<Eigen::Index>(indices.size()));
    out.labels.reserve(indices.size());
    for (std::size_t j = 0; j < indices.size(); ++j) {
        out.features.col(static_cast<Eigen::Index>(j)) = ds.features.col(static_cast<Eigen::Index>(indices[j]));
        out.labels.push_back(ds.labels[indices[j]]);
    }
    return out;
}

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

inline SplitIndices split_indices(std::size_t n, double train_fraction, std::uint64_t seed) {
    if (n < 2) throw ArgumentError("split: need at least 2 samples, got " + std::to_string(n));
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ArgumentError("split: train fraction must lie in (0, 1), got " + std::to_string(train_fraction));
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
    if (n_train == 0 || n_train == n)
        throw ArgumentError("split: fraction " + std::to_string(train_fraction) + " of " + std::to_string(n) +
                            " samples leaves an empty side");
    auto perm = shuffled_indices(n, seed);
    SplitIndices out;
    out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    return out;
}

inline std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double train_fraction = 0.70,
                                                    std::uint64_t seed = 0) {
    const auto s = split_indices(ds.num_samples(), train_fraction, seed);
    return {subset(ds, s.train), subset(ds, s.test)};
}

enum class PartitionMode {
    iid_shuffle,
    label_sorted,
};

inline std::string to_string(PartitionMode m) {
    return m == PartitionMode::iid_shuffle ? "iid" : "label-sorted";
}

inline PartitionMode partition_mode_from_string(const std::string& s) {
    if (s == "iid" || s == "iid_shuffle" || s == "iid-shuffle") return PartitionMode::iid_shuffle;
    if (s == "label-sorted" || s == "label_sorted" || s == "non-iid") return PartitionMode::label_sorted;
    throw ArgumentError("unknown partition mode '" + s + "' (expected iid or label-sorted)");
}

struct PartitionPlan {
    PartitionMode mode = PartitionMode::iid_shuffle;
    std::size_t num_clients = 1;
    std::uint64_t seed = 0;
};

// Splits sample indices 0..labels.size()-1 into num_clients disjoint shards
// whose sizes differ by at most one.
//
// iid_shuffle: shuffle, group by class (keeping the shuffled order inside each
//   class), then deal round-robin. Every shard gets within one sample of its
//   proportional share of each class.
// label_sorted: stable sort by class, then cut into contiguous chunks; the
//   first n % P chunks carry the extra sample.
inline std::vector<std::vector<std::size_t>> partition_indices(std::span<const int> labels, const PartitionPlan& plan) {
    const std::size_t n = labels.size();
    const std::size_t p = plan.num_clients;
    if (p == 0) throw ArgumentError("partition: number of clients must be >= 1");
    if (p > n)
        throw ArgumentError("partition: " + std::to_string(p) + " clients for " + std::to_string(n) + " samples");

    std::vector<std::size_t> order;
    if (plan.mode == PartitionMode::iid_shuffle) {
        order = shuffled_indices(n, plan.seed);
    } else {
        order.resize(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });

    std::vector<std::vector<std::size_t>> shards(p);
    const std::size_t base = n / p;
    const std::size_t extra = n % p;
    for (std::size_t s = 0; s < p; ++s) shards[s].reserve(base + (s < extra ? 1 : 0));

    if (plan.mode == PartitionMode::iid_shuffle) {
        for (std::size_t i = 0; i < n; ++i) shards[i % p].push_back(order[i]);
    } else {
        std::size_t pos = 0;
        for (std::size_t s = 0; s < p; ++s) {
            const std::size_t len = base + (s < extra ? 1 : 0);
            shards[s].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                             order.begin() + static_cast<std::ptrdiff_t>(pos + len));
            pos += len;
        }
    }
    return shards;
}

inline std::vector<Dataset> partition(const Dataset& ds, const PartitionPlan& plan) {
    std::vector<Dataset> out;
    for (const auto& shard : partition_indices(ds.labels, plan)) out.push_back(subset(ds, shard));
    return out;
}

// k stacked copies of the samples.
inline Dataset replicate(const Dataset& ds, std::size_t k) {
    if (k == 0) throw ArgumentError("replicate: factor must be >= 1");
    if (k == 1) return ds;
    Dataset out;
    out.class_list = ds.class_list;
    out.features.resize(ds.features.rows(), ds.features.cols() * static_cast<Eigen::Index>(k));
    for (std::size_t r = 0; r < k; ++r) {
        out.features.middleCols(static_cast<Eigen::Index>(r) * ds.features.cols(), ds.features.cols()) = ds.features;
        out.labels.insert(out.labels.end(), ds.labels.begin(), ds.labels.end());
    }
    return out;
}

// Per-feature min-max scaling to [0, 1]; constant features map to 0.
struct MinMaxScaler {
    Vector lo;
    Vector hi;

    static MinMaxScaler fit(const Matrix& features) {
        if (features.cols() == 0) throw ArgumentError("MinMaxScaler: no samples");
        return {features.rowwise().minCoeff(), features.rowwise().maxCoeff()};
    }

    Matrix apply(const Matrix& features) const {
        if (features.rows() != lo.size()) throw ShapeError("MinMaxScaler: feature count mismatch");
        Matrix out = features;
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            const double span = hi(i) - lo(i);
            if (span > 0.0)
                out.row(i) = (out.row(i).array() - lo(i)) / span;
            else
                out.row(i).setZero();
        }
        return out;
    }
};

}  // namespace fedsvd
