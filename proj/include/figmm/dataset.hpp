#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "figmm/pattern.hpp"

namespace figmm {

struct CategoricalColumn {
    std::string name;
    std::vector<std::string> level_names;  // sorted; codes index into this
    std::vector<int> codes;                // one per record

    int levels() const noexcept { return static_cast<int>(level_names.size()); }
};

// n records of p numeric items with a response-indicator matrix, optional row
// ids and one optional categorical covariate. Missing cells are NaN in the
// value matrix and false in the indicator. Records are grouped by missingness
// pattern at construction; the per-record packed observed values are cached
// because every EM iteration reads them.
class IncompleteDataset {
public:
    IncompleteDataset(std::vector<std::string> column_names, Eigen::MatrixXd values,
                      std::vector<std::vector<bool>> observed,
                      std::vector<std::string> row_ids = {},
                      std::optional<CategoricalColumn> categorical = std::nullopt);

    int size() const noexcept { return static_cast<int>(values_.rows()); }
    int dim() const noexcept { return static_cast<int>(values_.cols()); }

    const std::vector<std::string>& column_names() const noexcept { return column_names_; }
    const std::string& row_id(int i) const { return row_ids_[static_cast<std::size_t>(i)]; }
    const std::vector<std::string>& row_ids() const noexcept { return row_ids_; }

    double value(int i, int j) const { return values_(i, j); }
    const Eigen::MatrixXd& matrix() const noexcept { return values_; }
    bool is_observed(int i, int j) const;

    int pattern_index(int i) const { return pattern_of_record_[static_cast<std::size_t>(i)]; }
    const ObservedPattern& pattern(int i) const {
        return patterns_[static_cast<std::size_t>(pattern_index(i))];
    }
    const std::vector<ObservedPattern>& unique_patterns() const noexcept { return patterns_; }
    const std::vector<std::vector<int>>& records_by_pattern() const noexcept {
        return records_by_pattern_;
    }

    // observed coordinates of record i, packed in index order
    const Eigen::VectorXd& observed_values(int i) const {
        return packed_observed_[static_cast<std::size_t>(i)];
    }
    Eigen::VectorXd full_row(int i) const { return values_.row(i).transpose(); }

    bool fully_observed(int i) const { return pattern(i).fully_observed(); }
    bool fully_missing(int i) const { return pattern(i).fully_missing(); }
    int complete_count() const;
    int incomplete_count() const { return size() - complete_count(); }

    const std::optional<CategoricalColumn>& categorical() const noexcept { return categorical_; }

    // -1 when the name is unknown
    int column_index(const std::string& name) const;

    // Natural log of every observed cell; throws IoError on nonpositive values.
    void apply_log_transform();

private:
    std::vector<std::string> column_names_;
    Eigen::MatrixXd values_;
    std::vector<std::vector<bool>> observed_;
    std::vector<std::string> row_ids_;
    std::optional<CategoricalColumn> categorical_;

    std::vector<ObservedPattern> patterns_;
    std::vector<int> pattern_of_record_;
    std::vector<std::vector<int>> records_by_pattern_;
    std::vector<Eigen::VectorXd> packed_observed_;
};

struct CsvOptions {
    std::string missing_token = "NA";  // case-sensitive
    std::optional<std::string> categorical_column;
    std::optional<std::string> id_column;
    bool log_transform = false;
};

IncompleteDataset read_csv(std::istream& in, const CsvOptions& options = {},
                           const std::string& origin = "<stream>");
IncompleteDataset read_csv_file(const std::string& path, const CsvOptions& options = {});

// a fully observed dataset from a plain matrix (simulation harness, tests)
IncompleteDataset dataset_from_complete(const Eigen::MatrixXd& values,
                                        std::vector<std::string> column_names = {});

}  // namespace figmm
