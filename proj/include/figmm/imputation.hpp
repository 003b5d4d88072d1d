#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace figmm {

class IncompleteDataset;

// The fractionally imputed dataset: for every incomplete record, M completed
// draws split across mixture components with weights p_ig / M_ig; fully
// observed records carry a single pseudo-draw with weight one. Draw rows are
// stored flat, grouped by record and by component within a record.
struct FractionalImputation {
    struct RecordBlock {
        bool fully_observed = false;
        // posterior over components at the generating parameters; for
        // incomplete records this is the mass-renormalized posterior (dropped
        // components carry exact zeros) so that weights * counts reproduce it
        Eigen::VectorXd posterior;
        std::vector<int> counts;  // M_ig; empty for fully observed records
        int first_row = 0;
        int rows = 0;
    };

    int dim = 0;
    int imputations = 0;  // M, total draws per incomplete record
    std::vector<RecordBlock> records;
    Eigen::MatrixXd values;                    // rows x p completed vectors
    Eigen::VectorXd weights;                   // fractional weight per row
    std::vector<std::int32_t> row_record;
    std::vector<std::int32_t> row_component;   // -1 for pseudo-draws
    std::vector<std::int32_t> row_draw;        // 1-based within (record, component); 0 for pseudo-draws

    int row_count() const noexcept { return static_cast<int>(weights.size()); }
    int record_count() const noexcept { return static_cast<int>(records.size()); }

    // structural invariants: sizes line up and per-record weights sum to one
    void check_consistent() const;
};

// Long-form CSV with columns record_id, component, draw_index,
// fractional_weight, then the item columns; values carry 17 significant
// digits. `metadata` rows are emitted as leading "# key: value" comments.
void write_imputation_csv(std::ostream& out, const FractionalImputation& imp,
                          const IncompleteDataset& data,
                          const std::vector<std::pair<std::string, std::string>>& metadata = {});
void write_imputation_csv_file(const std::string& path, const FractionalImputation& imp,
                               const IncompleteDataset& data,
                               const std::vector<std::pair<std::string, std::string>>& metadata = {});

// Reads a long-form file back for estimation. Posteriors and counts are not
// part of the format; the result carries rows, weights and record grouping.
struct LoadedImputation {
    FractionalImputation imputation;
    std::vector<std::string> column_names;
    std::vector<std::string> record_ids;  // one per record block
};
LoadedImputation read_imputation_csv(std::istream& in, const std::string& origin = "<stream>");
LoadedImputation read_imputation_csv_file(const std::string& path);

// Reconstructs per-record counts and component masses of a loaded imputation
// once the component count is known (from the model file); needed before
// replicate-weight machinery can run on loaded artifacts.
void rebuild_blocks(FractionalImputation& imp, int components);

}  // namespace figmm
