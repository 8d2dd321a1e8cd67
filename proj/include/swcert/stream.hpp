#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "swcert/errors.hpp"
#include "swcert/rng.hpp"
#include "swcert/smoothing.hpp"

namespace swcert {

/// Ordered feature vectors with one ground-truth class per time step.
/// Time steps are 1-based in the public API (step i lives at index i - 1).
class LabeledStream {
public:
    LabeledStream() = default;

    LabeledStream(std::vector<Feature> items, std::vector<int> labels, int num_classes)
        : items_(std::move(items)), labels_(std::move(labels)), num_classes_(num_classes) {
        if (items_.empty()) throw std::domain_error("LabeledStream: empty stream");
        if (items_.size() != labels_.size()) throw std::domain_error("LabeledStream: items/labels length mismatch");
        if (num_classes_ < 1) throw std::domain_error("LabeledStream: num_classes must be positive");
        dim_ = items_.front().size();
        if (dim_ == 0) throw std::domain_error("LabeledStream: zero-dimensional items");
        for (const Feature& f : items_) {
            if (f.size() != dim_) throw std::domain_error("LabeledStream: inconsistent item dimension");
            for (double v : f)
                if (!std::isfinite(v)) throw std::domain_error("LabeledStream: non-finite feature");
        }
        for (int y : labels_)
            if (y < 0 || y >= num_classes_) throw std::domain_error("LabeledStream: label out of range");
    }

    std::size_t size() const { return items_.size(); }
    std::size_t dim() const { return dim_; }
    int num_classes() const { return num_classes_; }

    const std::vector<Feature>& items() const { return items_; }
    const std::vector<int>& labels() const { return labels_; }

    /// Item at 1-based step i.
    const Feature& item(std::size_t i) const { return items_.at(i - 1); }
    int label(std::size_t i) const { return labels_.at(i - 1); }

    friend bool operator==(const LabeledStream&, const LabeledStream&) = default;

private:
    std::vector<Feature> items_;
    std::vector<int> labels_;
    int num_classes_ = 0;
    std::size_t dim_ = 0;
};

/// The last min(i, w) items of a stream ending at step i.
struct WindowView {
    std::span<const Feature> items;
    std::size_t w = 0;
    std::size_t end_step = 0;

    std::size_t size() const { return items.size(); }
    /// 1-based step of the oldest item in the window.
    std::size_t first_step() const { return end_step + 1 - items.size(); }
};

inline std::size_t window_length(std::size_t i, std::size_t w) { return std::min(i, w); }

inline WindowView window_at(const LabeledStream& stream, std::size_t i, std::size_t w) {
    if (w < 1) throw std::domain_error("window_at: window size must be at least 1");
    if (i < 1 || i > stream.size()) throw std::domain_error("window_at: step out of range");
    const std::size_t s = window_length(i, w);
    return {std::span<const Feature>(stream.items()).subspan(i - s, s), w, i};
}

/// Majority label over the window ending at step i; ties go to the label of
/// the most recent item among the tied classes.
inline int window_label(std::span<const int> labels, std::size_t i, std::size_t w) {
    if (i < 1 || i > labels.size()) throw std::domain_error("window_label: step out of range");
    const std::size_t s = window_length(i, w);
    std::map<int, std::size_t> counts;
    for (std::size_t k = i - s; k < i; ++k) ++counts[labels[k]];
    std::size_t best = 0;
    for (const auto& [y, c] : counts) best = std::max(best, c);
    for (std::size_t k = i; k-- > i - s;)
        if (counts[labels[k]] == best) return labels[k];
    return labels[i - 1];
}

inline int window_label(const LabeledStream& stream, std::size_t i, std::size_t w) {
    return window_label(std::span<const int>(stream.labels()), i, w);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    for (auto& c : cells) {
        while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.remove_prefix(1);
        while (!c.empty() && (c.back() == ' ' || c.back() == '\t' || c.back() == '\r')) c.remove_suffix(1);
    }
    return cells;
}

inline double parse_double(std::string_view cell, std::size_t row) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
        throw parse_error("non-numeric cell '" + std::string(cell) + "'", row);
    if (!std::isfinite(v)) throw parse_error("non-finite cell '" + std::string(cell) + "'", row);
    return v;
}

inline int parse_int(std::string_view cell, std::size_t row) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
        throw parse_error("non-integer label '" + std::string(cell) + "'", row);
    return v;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Reads the `f0,...,f{D-1},label` format. Rows are 1-based with the header as row 1.
inline LabeledStream read_csv_stream(std::istream& in, std::size_t dim, const std::string& label_column = "label",
                                     std::optional<int> num_classes = std::nullopt) {
    std::string line;
    if (!std::getline(in, line) || line.find_first_not_of(" \t\r") == std::string::npos)
        throw std::domain_error("load_csv_stream: empty file");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

    const auto header = detail::split_csv_line(line);
    const auto find_col = [&](const std::string& name) -> std::size_t {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (header[c] == name) return c;
        throw parse_error("missing column '" + name + "'", 1);
    };
    std::vector<std::size_t> feature_cols(dim);
    for (std::size_t k = 0; k < dim; ++k) feature_cols[k] = find_col("f" + std::to_string(k));
    const std::size_t label_col = find_col(label_column);

    std::vector<Feature> items;
    std::vector<int> labels;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw parse_error("expected " + std::to_string(header.size()) + " cells, found " +
                                  std::to_string(cells.size()),
                              row);
        Feature f(dim);
        for (std::size_t k = 0; k < dim; ++k) f[k] = detail::parse_double(cells[feature_cols[k]], row);
        const int y = detail::parse_int(cells[label_col], row);
        if (y < 0) throw parse_error("negative label", row);
        items.push_back(std::move(f));
        labels.push_back(y);
    }
    if (items.empty()) throw std::domain_error("load_csv_stream: no data rows");

    const int max_label = *std::max_element(labels.begin(), labels.end());
    const int classes = num_classes.value_or(max_label + 1);
    if (classes <= max_label) throw parse_error("label exceeds num_classes override", row);
    return LabeledStream(std::move(items), std::move(labels), classes);
}

inline LabeledStream load_csv_stream(const std::string& path, std::size_t dim, const std::string& label_column = "label",
                                     std::optional<int> num_classes = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv_stream: cannot open '" + path + "'");
    return read_csv_stream(in, dim, label_column, num_classes);
}

inline void write_csv_header(std::ostream& out, std::size_t dim) {
    for (std::size_t k = 0; k < dim; ++k) out << 'f' << k << ',';
    out << "label\n";
}

inline void write_csv_row(std::ostream& out, std::span<const double> features, int label) {
    for (double v : features) out << detail::format_double(v) << ',';
    out << label << '\n';
}

inline void write_csv_stream(std::ostream& out, const LabeledStream& stream) {
    write_csv_header(out, stream.dim());
    for (std::size_t i = 0; i < stream.size(); ++i) write_csv_row(out, stream.items()[i], stream.labels()[i]);
}

inline void emit_csv_stream(const LabeledStream& stream, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("emit_csv_stream: cannot open '" + path + "' for writing");
    write_csv_stream(out, stream);
    if (!out) throw std::runtime_error("emit_csv_stream: write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Synthetic streams
// ---------------------------------------------------------------------------

struct SyntheticConfig {
    int num_classes = 3;
    std::size_t dim = 4;
    std::size_t length = 300;
    std::size_t min_segment = 10;  ///< segment lengths drawn uniformly from [min, max]
    std::size_t max_segment = 30;
    double separation = 3.0;       ///< distance of each class mean from the origin
    double noise = 0.5;            ///< within-class standard deviation
    std::uint64_t seed = 0;
};

/// Piecewise-constant label segments; items scattered around per-class means.
/// Class c < dim sits at separation * e_c; further classes use random unit directions.
inline LabeledStream generate_synthetic_stream(const SyntheticConfig& cfg) {
    if (cfg.length < 1 || cfg.dim < 1 || cfg.num_classes < 2)
        throw std::domain_error("generate_synthetic_stream: need length >= 1, dim >= 1, num_classes >= 2");
    if (cfg.min_segment < 1 || cfg.max_segment < cfg.min_segment)
        throw std::domain_error("generate_synthetic_stream: invalid segment length range");
    if (!(cfg.separation >= 0.0) || !(cfg.noise >= 0.0))
        throw std::domain_error("generate_synthetic_stream: separation and noise must be nonnegative");

    Engine rng = substream(cfg.seed, StreamTag::Synthetic);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<Feature> means(cfg.num_classes, Feature(cfg.dim, 0.0));
    for (int c = 0; c < cfg.num_classes; ++c) {
        if (static_cast<std::size_t>(c) < cfg.dim) {
            means[c][c] = cfg.separation;
            continue;
        }
        double norm = 0.0;
        for (double& v : means[c]) {
            v = normal(rng);
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : means[c]) v = norm > 0 ? cfg.separation * v / norm : 0.0;
    }

    std::uniform_int_distribution<std::size_t> seg_len(cfg.min_segment, cfg.max_segment);
    std::uniform_int_distribution<int> other_class(0, cfg.num_classes - 2);
    std::uniform_int_distribution<int> any_class(0, cfg.num_classes - 1);

    std::vector<Feature> items;
    std::vector<int> labels;
    items.reserve(cfg.length);
    labels.reserve(cfg.length);
    int cls = any_class(rng);
    while (items.size() < cfg.length) {
        const std::size_t len = std::min(seg_len(rng), cfg.length - items.size());
        for (std::size_t k = 0; k < len; ++k) {
            Feature f(cfg.dim);
            for (std::size_t d = 0; d < cfg.dim; ++d) f[d] = means[cls][d] + cfg.noise * normal(rng);
            items.push_back(std::move(f));
            labels.push_back(cls);
        }
        const int next = other_class(rng);
        cls = next >= cls ? next + 1 : next;
    }
    return LabeledStream(std::move(items), std::move(labels), cfg.num_classes);
}

// ---------------------------------------------------------------------------
// Standardisation
// ---------------------------------------------------------------------------

struct Standardization {
    LabeledStream stream;
    std::vector<double> mean;
    std::vector<double> stddev;          ///< population standard deviation of the raw data
    std::vector<bool> zero_variance;     ///< coordinates that were centred only
};

inline Standardization standardize_stream(const LabeledStream& stream) {
    if (stream.size() < 2) throw std::domain_error("standardize_stream: need at least two items");
    const std::size_t n = stream.size(), dim = stream.dim();
    Standardization out{{}, std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0), std::vector<bool>(dim, false)};
    for (const Feature& f : stream.items())
        for (std::size_t k = 0; k < dim; ++k) out.mean[k] += f[k];
    for (double& m : out.mean) m /= static_cast<double>(n);
    for (const Feature& f : stream.items())
        for (std::size_t k = 0; k < dim; ++k) out.stddev[k] += (f[k] - out.mean[k]) * (f[k] - out.mean[k]);
    for (std::size_t k = 0; k < dim; ++k) {
        out.stddev[k] = std::sqrt(out.stddev[k] / static_cast<double>(n));
        out.zero_variance[k] = !(out.stddev[k] > 0.0);
    }

    std::vector<Feature> items = stream.items();
    for (Feature& f : items)
        for (std::size_t k = 0; k < dim; ++k) {
            f[k] -= out.mean[k];
            if (!out.zero_variance[k]) f[k] /= out.stddev[k];
        }
    out.stream = LabeledStream(std::move(items), stream.labels(), stream.num_classes());
    return out;
}

}  // namespace swcert
