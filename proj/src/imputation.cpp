#include "figmm/imputation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "figmm/dataset.hpp"
#include "figmm/errors.hpp"
#include "figmm/mixture.hpp"

namespace figmm {

void FractionalImputation::check_consistent() const {
    const int rows = row_count();
    if (values.rows() != rows || static_cast<int>(row_record.size()) != rows ||
        static_cast<int>(row_component.size()) != rows ||
        static_cast<int>(row_draw.size()) != rows) {
        throw Error("imputation row arrays are inconsistent");
    }
    for (const auto& rec : records) {
        double total = 0.0;
        for (int r = rec.first_row; r < rec.first_row + rec.rows; ++r) {
            total += weights(r);
        }
        if (std::abs(total - 1.0) > 1e-12) {
            throw Error("per-record fractional weights do not sum to one");
        }
    }
}

static void write_metadata(std::ostream& out,
                           const std::vector<std::pair<std::string, std::string>>& metadata) {
    for (const auto& [k, v] : metadata) {
        out << "# " << k << ": " << v << '\n';
    }
}

void write_imputation_csv(std::ostream& out, const FractionalImputation& imp,
                          const IncompleteDataset& data,
                          const std::vector<std::pair<std::string, std::string>>& metadata) {
    write_metadata(out, metadata);
    out << "record_id,component,draw_index,fractional_weight";
    for (const auto& name : data.column_names()) {
        out << ',' << name;
    }
    out << '\n';
    for (int r = 0; r < imp.row_count(); ++r) {
        const int i = imp.row_record[static_cast<std::size_t>(r)];
        const int comp = imp.row_component[static_cast<std::size_t>(r)];
        out << data.row_id(i) << ',' << (comp < 0 ? 0 : comp + 1) << ','
            << imp.row_draw[static_cast<std::size_t>(r)] << ','
            << format_double(imp.weights(r));
        for (int j = 0; j < imp.dim; ++j) {
            out << ',' << format_double(imp.values(r, j));
        }
        out << '\n';
    }
}

void write_imputation_csv_file(const std::string& path, const FractionalImputation& imp,
                               const IncompleteDataset& data,
                               const std::vector<std::pair<std::string, std::string>>& metadata) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    write_imputation_csv(out, imp, data, metadata);
}

LoadedImputation read_imputation_csv(std::istream& in, const std::string& origin) {
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            header.push_back(field);
        }
        break;
    }
    if (header.size() < 5 || header[0] != "record_id" || header[1] != "component" ||
        header[2] != "draw_index" || header[3] != "fractional_weight") {
        throw IoError("not a long-form imputation file: " + origin);
    }

    LoadedImputation loaded;
    loaded.column_names.assign(header.begin() + 4, header.end());
    const int p = static_cast<int>(loaded.column_names.size());

    std::vector<std::string> ids;
    std::vector<double> weights;
    std::vector<int> components;
    std::vector<int> draw_index;
    std::vector<double> cells;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) {
            fields.push_back(field);
        }
        if (static_cast<int>(fields.size()) != p + 4) {
            throw IoError("row " + std::to_string(line_no) + " in " + origin +
                          " has the wrong field count");
        }
        try {
            ids.push_back(fields[0]);
            components.push_back(std::stoi(fields[1]));
            draw_index.push_back(std::stoi(fields[2]));
            weights.push_back(std::stod(fields[3]));
            for (int j = 0; j < p; ++j) {
                cells.push_back(std::stod(fields[static_cast<std::size_t>(4 + j)]));
            }
        } catch (const std::exception&) {
            throw IoError("unparsable cell at row " + std::to_string(line_no) + " in " + origin);
        }
    }
    const int rows = static_cast<int>(weights.size());
    if (rows == 0) {
        throw IoError("no rows in " + origin);
    }

    FractionalImputation imp;
    imp.dim = p;
    imp.values.resize(rows, p);
    imp.weights.resize(rows);
    imp.row_record.resize(static_cast<std::size_t>(rows));
    imp.row_component.resize(static_cast<std::size_t>(rows));
    imp.row_draw.resize(static_cast<std::size_t>(rows));

    int record = -1;
    std::string prev_id;
    for (int r = 0; r < rows; ++r) {
        const std::string& id = ids[static_cast<std::size_t>(r)];
        if (record < 0 || id != prev_id) {
            ++record;
            prev_id = id;
            loaded.record_ids.push_back(id);
            FractionalImputation::RecordBlock block;
            block.first_row = r;
            block.rows = 0;
            block.fully_observed = components[static_cast<std::size_t>(r)] == 0;
            imp.records.push_back(block);
        }
        imp.records.back().rows += 1;
        imp.weights(r) = weights[static_cast<std::size_t>(r)];
        imp.row_record[static_cast<std::size_t>(r)] = record;
        imp.row_component[static_cast<std::size_t>(r)] =
            components[static_cast<std::size_t>(r)] - 1;
        imp.row_draw[static_cast<std::size_t>(r)] = draw_index[static_cast<std::size_t>(r)];
        for (int j = 0; j < p; ++j) {
            imp.values(r, j) = cells[static_cast<std::size_t>(r) * static_cast<std::size_t>(p) +
                                     static_cast<std::size_t>(j)];
        }
    }
    imp.check_consistent();
    loaded.imputation = std::move(imp);
    return loaded;
}

LoadedImputation read_imputation_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    return read_imputation_csv(in, path);
}

void rebuild_blocks(FractionalImputation& imp, int components) {
    int max_rows = 1;
    for (auto& block : imp.records) {
        block.counts.assign(static_cast<std::size_t>(components), 0);
        block.posterior = Eigen::VectorXd::Zero(components);
        for (int r = block.first_row; r < block.first_row + block.rows; ++r) {
            const int g = imp.row_component[static_cast<std::size_t>(r)];
            if (g < 0) {
                continue;
            }
            if (g >= components) {
                throw IoError("imputation references component " + std::to_string(g + 1) +
                              " beyond the model's " + std::to_string(components));
            }
            block.counts[static_cast<std::size_t>(g)] += 1;
            block.posterior(g) += imp.weights(r);
        }
        if (block.fully_observed) {
            block.counts.clear();
        } else {
            max_rows = std::max(max_rows, block.rows);
        }
    }
    imp.imputations = max_rows;
}

}  // namespace figmm
