#include "figmm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include "figmm/errors.hpp"
#include "figmm/gaussian.hpp"

namespace figmm {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        // trim surrounding whitespace
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        fields.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') {
        fields.push_back("");
    }
    return fields;
}

}  // namespace

IncompleteDataset::IncompleteDataset(std::vector<std::string> column_names,
                                     Eigen::MatrixXd values,
                                     std::vector<std::vector<bool>> observed,
                                     std::vector<std::string> row_ids,
                                     std::optional<CategoricalColumn> categorical)
    : column_names_(std::move(column_names)),
      values_(std::move(values)),
      observed_(std::move(observed)),
      row_ids_(std::move(row_ids)),
      categorical_(std::move(categorical)) {
    const int n = static_cast<int>(values_.rows());
    const int p = static_cast<int>(values_.cols());
    if (static_cast<int>(column_names_.size()) != p) {
        throw IoError("column name count does not match the value matrix");
    }
    if (static_cast<int>(observed_.size()) != n) {
        throw IoError("response indicator row count does not match the value matrix");
    }
    for (const auto& row : observed_) {
        if (static_cast<int>(row.size()) != p) {
            throw IoError("response indicator width does not match the value matrix");
        }
    }
    if (row_ids_.empty()) {
        row_ids_.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            row_ids_.push_back(std::to_string(i));
        }
    } else if (static_cast<int>(row_ids_.size()) != n) {
        throw IoError("row id count does not match the value matrix");
    }
    if (categorical_ && static_cast<int>(categorical_->codes.size()) != n) {
        throw IoError("categorical code count does not match the value matrix");
    }

    // mask missing cells in the matrix regardless of how the caller filled them
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) {
            if (!observed_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
                values_(i, j) = std::numeric_limits<double>::quiet_NaN();
            }
        }
    }

    std::map<std::string, int> seen;
    pattern_of_record_.resize(static_cast<std::size_t>(n));
    packed_observed_.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        ObservedPattern pat(observed_[static_cast<std::size_t>(i)]);
        const std::string key = pat.key();
        auto it = seen.find(key);
        int idx;
        if (it == seen.end()) {
            idx = static_cast<int>(patterns_.size());
            seen.emplace(key, idx);
            patterns_.push_back(pat);
            records_by_pattern_.emplace_back();
        } else {
            idx = it->second;
        }
        pattern_of_record_[static_cast<std::size_t>(i)] = idx;
        records_by_pattern_[static_cast<std::size_t>(idx)].push_back(i);
        packed_observed_[static_cast<std::size_t>(i)] =
            gather(values_.row(i).transpose(), pat.observed_indices());
    }
}

bool IncompleteDataset::is_observed(int i, int j) const {
    return observed_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
}

int IncompleteDataset::complete_count() const {
    int c = 0;
    for (int i = 0; i < size(); ++i) {
        if (fully_observed(i)) {
            ++c;
        }
    }
    return c;
}

int IncompleteDataset::column_index(const std::string& name) const {
    for (int j = 0; j < dim(); ++j) {
        if (column_names_[static_cast<std::size_t>(j)] == name) {
            return j;
        }
    }
    return -1;
}

void IncompleteDataset::apply_log_transform() {
    for (int i = 0; i < size(); ++i) {
        for (int j = 0; j < dim(); ++j) {
            if (!is_observed(i, j)) {
                continue;
            }
            const double v = values_(i, j);
            if (!(v > 0.0)) {
                throw IoError("log transform requires positive values; offending cell at row " +
                              std::to_string(i) + ", column " +
                              column_names_[static_cast<std::size_t>(j)]);
            }
            values_(i, j) = std::log(v);
        }
    }
    for (int i = 0; i < size(); ++i) {
        packed_observed_[static_cast<std::size_t>(i)] =
            gather(values_.row(i).transpose(), pattern(i).observed_indices());
    }
}

IncompleteDataset read_csv(std::istream& in, const CsvOptions& options,
                           const std::string& origin) {
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError("empty file: " + origin);
    }
    const std::vector<std::string> header = split_csv_line(line);
    if (header.empty()) {
        throw IoError("missing header row: " + origin);
    }

    int categorical_idx = -1;
    int id_idx = -1;
    for (int j = 0; j < static_cast<int>(header.size()); ++j) {
        if (options.categorical_column && header[static_cast<std::size_t>(j)] == *options.categorical_column) {
            categorical_idx = j;
        }
        if (options.id_column && header[static_cast<std::size_t>(j)] == *options.id_column) {
            id_idx = j;
        }
    }
    if (options.categorical_column && categorical_idx < 0) {
        throw IoError("categorical column '" + *options.categorical_column + "' not found in " + origin);
    }
    if (options.id_column && id_idx < 0) {
        throw IoError("id column '" + *options.id_column + "' not found in " + origin);
    }

    std::vector<std::string> numeric_names;
    std::vector<int> numeric_cols;
    for (int j = 0; j < static_cast<int>(header.size()); ++j) {
        if (j == categorical_idx || j == id_idx) {
            continue;
        }
        numeric_names.push_back(header[static_cast<std::size_t>(j)]);
        numeric_cols.push_back(j);
    }
    if (numeric_names.empty()) {
        throw IoError("no numeric columns in " + origin);
    }

    std::vector<std::vector<double>> rows;
    std::vector<std::vector<bool>> observed;
    std::vector<std::string> ids;
    std::vector<std::string> cat_raw;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        if (line[0] == '#') {
            continue;
        }
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw IoError("row " + std::to_string(line_no) + " in " + origin + " has " +
                          std::to_string(fields.size()) + " fields, expected " +
                          std::to_string(header.size()));
        }
        std::vector<double> vals;
        std::vector<bool> obs;
        vals.reserve(numeric_cols.size());
        obs.reserve(numeric_cols.size());
        for (std::size_t c = 0; c < numeric_cols.size(); ++c) {
            const std::string& cell = fields[static_cast<std::size_t>(numeric_cols[c])];
            if (cell == options.missing_token) {
                vals.push_back(std::numeric_limits<double>::quiet_NaN());
                obs.push_back(false);
                continue;
            }
            std::size_t pos = 0;
            double v = 0.0;
            bool ok = true;
            try {
                v = std::stod(cell, &pos);
            } catch (const std::exception&) {
                ok = false;
            }
            if (!ok || pos != cell.size()) {
                throw IoError("unparsable cell at row " + std::to_string(line_no) + ", column '" +
                              numeric_names[c] + "' in " + origin + ": '" + cell + "'");
            }
            vals.push_back(v);
            obs.push_back(true);
        }
        rows.push_back(std::move(vals));
        observed.push_back(std::move(obs));
        if (id_idx >= 0) {
            ids.push_back(fields[static_cast<std::size_t>(id_idx)]);
        }
        if (categorical_idx >= 0) {
            const std::string& cell = fields[static_cast<std::size_t>(categorical_idx)];
            if (cell == options.missing_token || cell.empty()) {
                throw IoError("categorical column must be fully observed; missing at row " +
                              std::to_string(line_no) + " in " + origin);
            }
            cat_raw.push_back(cell);
        }
    }
    if (rows.empty()) {
        throw IoError("no data rows in " + origin);
    }

    if (!ids.empty()) {
        std::set<std::string> unique(ids.begin(), ids.end());
        if (unique.size() != ids.size()) {
            throw IoError("duplicate row ids in " + origin);
        }
    }

    const int n = static_cast<int>(rows.size());
    const int p = static_cast<int>(numeric_names.size());
    Eigen::MatrixXd values(n, p);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) {
            values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }

    std::optional<CategoricalColumn> categorical;
    if (categorical_idx >= 0) {
        CategoricalColumn col;
        col.name = header[static_cast<std::size_t>(categorical_idx)];
        std::set<std::string> levels(cat_raw.begin(), cat_raw.end());
        col.level_names.assign(levels.begin(), levels.end());
        col.codes.reserve(cat_raw.size());
        for (const auto& v : cat_raw) {
            const auto it = std::lower_bound(col.level_names.begin(), col.level_names.end(), v);
            col.codes.push_back(static_cast<int>(it - col.level_names.begin()));
        }
        categorical = std::move(col);
    }

    IncompleteDataset data(std::move(numeric_names), std::move(values), std::move(observed),
                           std::move(ids), std::move(categorical));
    if (options.log_transform) {
        data.apply_log_transform();
    }
    return data;
}

IncompleteDataset read_csv_file(const std::string& path, const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    return read_csv(in, options, path);
}

IncompleteDataset dataset_from_complete(const Eigen::MatrixXd& values,
                                        std::vector<std::string> column_names) {
    const int n = static_cast<int>(values.rows());
    const int p = static_cast<int>(values.cols());
    if (column_names.empty()) {
        for (int j = 0; j < p; ++j) {
            column_names.push_back("y" + std::to_string(j + 1));
        }
    }
    std::vector<std::vector<bool>> observed(
        static_cast<std::size_t>(n), std::vector<bool>(static_cast<std::size_t>(p), true));
    return IncompleteDataset(std::move(column_names), values, std::move(observed));
}

}  // namespace figmm
