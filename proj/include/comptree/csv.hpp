#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "comptree/errors.hpp"
#include "comptree/solver.hpp"

namespace comptree {

// A CSV-backed dataset: header row required, comma separated, '.' decimal.
// Covariates are all non-target columns in header order.
struct CsvDataset {
    std::vector<std::string> columns;  // covariate names, in order
    bool has_target = false;
    Dataset data;                      // y empty when the target is absent
    std::vector<ColumnScale> rescale;  // per-covariate maps when rescaled
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        if (comma == std::string::npos) {
            out.push_back(trim(line.substr(pos)));
            break;
        }
        out.push_back(trim(line.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

inline double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
    double v = 0.0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size())
        throw DataError("row " + std::to_string(row) + ", column " + std::to_string(col + 1) +
                        ": not a number: '" + cell + "'");
    return v;
}

}  // namespace detail

// Loads a CSV dataset. The target column is located by name; when
// `require_target` is false a missing target yields an X-only dataset.
// With `rescale_columns` every covariate is min-max mapped to [0,1] and the
// affine maps are recorded.
inline CsvDataset load_csv_dataset(const std::string& path, const std::string& target,
                                   bool require_target, bool rescale_columns) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path);
    std::string line;
    if (!std::getline(f, line)) throw DataError(path + ": empty file, header row required");

    const std::vector<std::string> header = detail::split_csv_line(line);
    int target_col = -1;
    CsvDataset out;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == target)
            target_col = static_cast<int>(c);
        else
            out.columns.push_back(header[c]);
    }
    if (target_col < 0 && require_target)
        throw DataError(path + ": target column '" + target + "' not found");
    out.has_target = target_col >= 0;
    if (out.columns.empty()) throw DataError(path + ": no covariate columns");

    out.data.p = static_cast<int>(out.columns.size());
    std::size_t row = 1;
    while (std::getline(f, line)) {
        ++row;
        if (detail::trim(line).empty()) continue;
        const std::vector<std::string> cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError(path + ": row " + std::to_string(row) + " has " +
                            std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(header.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const double v = detail::parse_cell(cells[c], row, c);
            if (static_cast<int>(c) == target_col)
                out.data.y.push_back(v);
            else
                out.data.X.push_back(v);
        }
        ++out.data.n;
    }
    if (out.data.n == 0) throw DataError(path + ": no data rows");

    if (rescale_columns) {
        out.rescale.resize(static_cast<std::size_t>(out.data.p));
        for (int c = 0; c < out.data.p; ++c) {
            double lo = out.data.x(0, c), hi = lo;
            for (int r = 1; r < out.data.n; ++r) {
                lo = std::min(lo, out.data.x(r, c));
                hi = std::max(hi, out.data.x(r, c));
            }
            out.rescale[static_cast<std::size_t>(c)] = {lo, hi};
            for (int r = 0; r < out.data.n; ++r) {
                double& v = out.data.X[static_cast<std::size_t>(r) * out.data.p + c];
                v = hi > lo ? (v - lo) / (hi - lo) : 0.0;
            }
        }
    }
    return out;
}

// Applies a fitted model's stored column maps to raw covariates, clamping
// into [0,1] so prediction stays defined slightly outside the training range.
inline void apply_rescale(const Model& m, Dataset& d) {
    if (m.rescale.empty()) return;
    if (static_cast<int>(m.rescale.size()) != d.p)
        throw DataError("model rescale maps cover " + std::to_string(m.rescale.size()) +
                        " columns, data has " + std::to_string(d.p));
    for (int c = 0; c < d.p; ++c) {
        const ColumnScale cs = m.rescale[static_cast<std::size_t>(c)];
        for (int r = 0; r < d.n; ++r) {
            double& v = d.X[static_cast<std::size_t>(r) * d.p + c];
            v = cs.max > cs.min ? (v - cs.min) / (cs.max - cs.min) : 0.0;
            v = std::clamp(v, 0.0, 1.0);
        }
    }
}

}  // namespace comptree
