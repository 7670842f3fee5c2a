#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tseb {

// Column-role map for CSV ingestion. Columns not named here must be numeric
// and become features, in file order.
struct TableSchema {
    std::string treatment = "T";
    std::string outcome = "Y";
    std::string cell = "OD";
    std::string time;            // empty = no temporal stratum column
    std::string outcome_binary;  // empty = no binary companion column
    std::string base_weight;     // empty = uniform base weights
};

// Tabular dataset carrier shared by every module: covariates X, continuous
// dose T, outcome Y, spatial cell label, optional temporal label.
// Immutable after construction; safe for concurrent read-only sharing.
struct ObservationTable {
    Eigen::MatrixXd features;  // n x p
    Eigen::VectorXd treatment;
    Eigen::VectorXd outcome;
    std::vector<std::string> cell_label;
    std::optional<std::vector<std::string>> time_label;
    std::optional<Eigen::VectorXi> outcome_binary;  // 0/1 companion of Y
    std::optional<Eigen::VectorXd> base_weight;     // survey-style priors
    std::vector<std::string> feature_names;

    Eigen::Index n() const { return features.rows(); }
    Eigen::Index p() const { return features.cols(); }

    // Enforces shape agreement, finiteness, and >= 2 rows per distinct cell
    // label. Throws DataError on violation.
    void validate() const;
};

// One (time, space) stratum identity. Ordering is lexicographic so stratum
// enumeration is deterministic.
struct StratumKey {
    std::string time;
    std::string space;
    friend bool operator<(const StratumKey& a, const StratumKey& b) {
        return a.time != b.time ? a.time < b.time : a.space < b.space;
    }
    friend bool operator==(const StratumKey& a, const StratumKey& b) = default;
};

// Row -> stratum mapping over the populated (time, space) combinations.
struct StratumIndex {
    std::vector<StratumKey> strata;             // sorted, no duplicates, all populated
    std::vector<std::int32_t> row_assignment;   // n entries, values in [0, strata.size())
    std::vector<std::vector<Eigen::Index>> rows_by_stratum;
    int time_count = 0;   // I: distinct temporal labels
    int space_count = 0;  // J: distinct spatial labels

    std::size_t size() const { return strata.size(); }
};

struct DatasetSummary {
    Eigen::Index n = 0;
    Eigen::Index p = 0;
    std::size_t stratum_count = 0;
    double treatment_nonzero_fraction = 0.0;
    std::vector<Eigen::Index> per_stratum_rows;
};

// Loads a comma-separated file with a header row. Throws DataError naming the
// offending row/column for unparseable values, missing schema columns, or an
// empty dataset. Lines starting with '#' before the header are skipped.
ObservationTable load_table(const std::string& path, const TableSchema& schema);

// Writes the table as CSV with 17 significant digits so a reload reproduces
// every value bit-exactly.
void save_table(const ObservationTable& table, const std::string& path,
                const TableSchema& schema, const std::string& comment = {});

// Human-readable stratum name for diagnostics, e.g. "stratum (w1, 87)" or
// "stratum 87" when there is no temporal label.
std::string to_string(const StratumKey& key);

// Enumerates populated (time, space) strata in lexicographic order. Throws
// DataError if any populated stratum has fewer than 2 rows.
StratumIndex build_stratum_index(const ObservationTable& table);

// Index with every row in one stratum; turns the stratified constraint
// builder into the global one.
StratumIndex single_stratum_index(Eigen::Index n);

DatasetSummary summarize(const ObservationTable& table, const StratumIndex& idx);

}  // namespace tseb
