#pragma once

/// Numeric substrate: dense matrices, datasets, deterministic index splits,
/// empirical quantiles and CSV ingestion.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "clover/rng.hpp"

namespace clover {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Row-major dense matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) throw Error("matrix data size does not match shape");
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    const std::vector<double>& data() const noexcept { return data_; }

    Matrix select_rows(std::span<const std::size_t> idx) const {
        Matrix out(idx.size(), cols_);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            auto src = row(idx[i]);
            std::copy(src.begin(), src.end(), out.row(i).begin());
        }
        return out;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct Dataset {
    Matrix features;
    std::vector<double> targets;
    std::vector<std::string> feature_names;
    std::string target_name = "y";

    std::size_t size() const noexcept { return targets.size(); }
    std::size_t dim() const noexcept { return features.cols(); }

    void validate() const {
        if (features.rows() != targets.size()) throw Error("feature rows and target length differ");
        if (features.cols() == 0) throw Error("dataset needs at least one feature");
        if (!feature_names.empty() && feature_names.size() != features.cols())
            throw Error("feature name count does not match feature width");
    }

    Dataset subset(std::span<const std::size_t> idx) const {
        Dataset out;
        out.features = features.select_rows(idx);
        out.targets.reserve(idx.size());
        for (auto i : idx) out.targets.push_back(targets[i]);
        out.feature_names = feature_names;
        out.target_name = target_name;
        return out;
    }
};

inline std::vector<std::string> default_feature_names(std::size_t d) {
    std::vector<std::string> names;
    names.reserve(d);
    for (std::size_t j = 0; j < d; ++j) names.push_back("x" + std::to_string(j + 1));
    return names;
}

// ---------------------------------------------------------------------------
// Empirical quantile

/// Number of order statistics k such that k/n >= phi first holds, i.e. the rank
/// of inf{t : #{a_i <= t}/n >= phi}. The comparison is the double predicate
/// k/n >= phi, so the rank agrees with a linear sort-and-scan.
inline std::size_t quantile_rank(std::size_t n, double phi) {
    const auto nd = static_cast<double>(n);
    auto k = static_cast<std::size_t>(std::max(1.0, std::ceil(phi * nd)));
    k = std::min(k, n);
    while (k > 1 && static_cast<double>(k - 1) / nd >= phi) --k;
    while (k < n && static_cast<double>(k) / nd < phi) ++k;
    return k;
}

/// Empirical phi-quantile inf{t : (1/n) #{a_i <= t} >= phi}; always a sample member.
inline double empirical_quantile(std::span<const double> values, double phi) {
    if (values.empty()) throw Error("empty sample");
    if (!(phi > 0.0 && phi <= 1.0)) throw Error("invalid level");
    std::vector<double> buf(values.begin(), values.end());
    const std::size_t k = quantile_rank(buf.size(), phi);
    std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(k - 1), buf.end());
    return buf[k - 1];
}

// ---------------------------------------------------------------------------
// Index splits

struct IndexSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> cal;
    std::vector<std::size_t> part;
    std::vector<std::size_t> cut;
    std::vector<std::size_t> test;
};

struct SplitFractions {
    double train = 0.4;
    double cal = 0.4;
    double test = 0.2;
};

struct InnerSplit {
    bool enabled = false;
    double part_fraction = 0.5;
};

inline std::size_t floor_count(double fraction, std::size_t n) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

/// Random permutation of [0, n) by Fisher-Yates.
inline std::vector<std::size_t> permutation(std::size_t n, RngStream& rng) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
    return p;
}

/// Splits `idx` into (first, rest) with floor(fraction * |idx|) random members in
/// the first set. Both outputs are sorted.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
random_bipartition(std::span<const std::size_t> idx, double fraction, RngStream& rng) {
    const auto perm = permutation(idx.size(), rng);
    const std::size_t k = floor_count(fraction, idx.size());
    std::vector<std::size_t> first, rest;
    first.reserve(k);
    rest.reserve(idx.size() - k);
    for (std::size_t i = 0; i < perm.size(); ++i) (i < k ? first : rest).push_back(idx[perm[i]]);
    std::sort(first.begin(), first.end());
    std::sort(rest.begin(), rest.end());
    return {std::move(first), std::move(rest)};
}

/// Calibration and test sets get floor(f * n) rows; train gets the remainder.
inline IndexSplit split_indices(std::size_t n, SplitFractions f, InnerSplit inner, RngStream& rng) {
    if (n < 3) throw Error("split_indices: need at least 3 rows");
    if (!(f.train > 0 && f.cal > 0 && f.test > 0)) throw Error("split fractions must be positive");
    if (std::abs(f.train + f.cal + f.test - 1.0) > 1e-9) throw Error("split fractions must sum to 1");
    if (inner.enabled && !(inner.part_fraction > 0 && inner.part_fraction < 1))
        throw Error("inner split fraction must lie in (0, 1)");

    const std::size_t n_cal = floor_count(f.cal, n);
    const std::size_t n_test = floor_count(f.test, n);
    const std::size_t n_train = n - n_cal - n_test;
    const auto perm = permutation(n, rng);

    IndexSplit s;
    s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.cal.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                 perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_cal));
    s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_cal), perm.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.cal.begin(), s.cal.end());
    std::sort(s.test.begin(), s.test.end());

    if (inner.enabled) {
        auto [part, cut] = random_bipartition(s.cal, inner.part_fraction, rng);
        s.part = std::move(part);
        s.cut = std::move(cut);
    } else {
        s.part = s.cal;
        s.cut = s.cal;
    }
    return s;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

inline void append_double(std::string& out, double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

}  // namespace detail

/// Parses one numeric cell; rejects empty, malformed and non-finite values.
inline double parse_cell(std::string_view cell, std::size_t row, std::string_view column) {
    double v = 0.0;
    const auto* first = cell.data();
    const auto* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (cell.empty() || res.ec != std::errc{} || res.ptr != last || !std::isfinite(v)) {
        std::ostringstream msg;
        msg << "unparseable cell at row " << row << ", column '" << column << "': '" << cell << "'";
        throw Error(msg.str());
    }
    return v;
}

/// Reads a comma-separated file with a mandatory header row. The target column is
/// chosen by name, or the last column when `target` is empty. Rows are numbered
/// from 1 for the first data row.
inline Dataset parse_csv(std::istream& in, const std::string& target = {}) {
    std::string line;
    if (!std::getline(in, line)) throw Error("csv: missing header row");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    const auto header_views = detail::split_commas(line);
    std::vector<std::string> header(header_views.begin(), header_views.end());
    if (header.size() < 2) throw Error("csv: need at least one feature column and one target column");

    std::size_t target_col = header.size() - 1;
    if (!target.empty()) {
        const auto it = std::find(header.begin(), header.end(), target);
        if (it == header.end()) throw Error("csv: missing target column '" + target + "'");
        target_col = static_cast<std::size_t>(it - header.begin());
    }

    Dataset ds;
    ds.target_name = header[target_col];
    for (std::size_t j = 0; j < header.size(); ++j)
        if (j != target_col) ds.feature_names.push_back(header[j]);

    const std::size_t d = header.size() - 1;
    std::vector<double> values;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        const auto cells = detail::split_commas(line);
        if (cells.size() != header.size()) {
            std::ostringstream msg;
            msg << "csv: row " << row << " has " << cells.size() << " cells, expected " << header.size();
            throw Error(msg.str());
        }
        for (std::size_t j = 0; j < cells.size(); ++j) {
            const double v = parse_cell(cells[j], row, header[j]);
            if (j == target_col)
                ds.targets.push_back(v);
            else
                values.push_back(v);
        }
    }
    ds.features = Matrix(row, d, std::move(values));
    ds.validate();
    return ds;
}

inline Dataset load_csv(const std::string& path, const std::string& target = {}) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    return parse_csv(in, target);
}

/// Reads only the named columns, in the given order; other columns are ignored.
inline Matrix parse_feature_csv(std::istream& in, const std::vector<std::string>& names) {
    std::string line;
    if (!std::getline(in, line)) throw Error("csv: missing header row");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
    const auto header_views = detail::split_commas(line);
    const std::vector<std::string> header(header_views.begin(), header_views.end());
    std::vector<std::size_t> cols;
    for (const auto& n : names) {
        const auto it = std::find(header.begin(), header.end(), n);
        if (it == header.end()) throw Error("csv: missing feature column '" + n + "'");
        cols.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    std::vector<double> values;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        const auto cells = detail::split_commas(line);
        if (cells.size() != header.size()) {
            std::ostringstream msg;
            msg << "csv: row " << row << " has " << cells.size() << " cells, expected " << header.size();
            throw Error(msg.str());
        }
        for (auto c : cols) values.push_back(parse_cell(cells[c], row, header[c]));
    }
    return Matrix(row, names.size(), std::move(values));
}

inline Matrix load_feature_csv(const std::string& path, const std::vector<std::string>& names) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    return parse_feature_csv(in, names);
}

/// Writes features then target, shortest round-trip decimal representation.
inline void write_csv(std::ostream& out, const Dataset& ds) {
    const auto names = ds.feature_names.empty() ? default_feature_names(ds.dim()) : ds.feature_names;
    std::string buf;
    for (const auto& n : names) buf += n + ",";
    buf += ds.target_name + "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.features.row(i)) {
            detail::append_double(buf, v);
            buf += ',';
        }
        detail::append_double(buf, ds.targets[i]);
        buf += '\n';
    }
    out << buf;
}

inline void save_csv(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    write_csv(out, ds);
}

}  // namespace clover
