#include "tseb/table.hpp"

#include "tseb/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace tseb {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    out.push_back(field);
    return out;
}

bool parse_double(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t')) --e;
    if (b == e) return false;
    auto [ptr, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && ptr == e;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void ObservationTable::validate() const {
    const Eigen::Index rows = n();
    if (rows == 0) throw DataError("empty dataset");
    auto check_len = [&](Eigen::Index len, const char* what) {
        if (len != rows) {
            throw DataError(std::string(what) + " has " + std::to_string(len) +
                            " entries, expected " + std::to_string(rows));
        }
    };
    check_len(treatment.size(), "treatment column");
    check_len(outcome.size(), "outcome column");
    check_len(static_cast<Eigen::Index>(cell_label.size()), "cell label column");
    if (time_label) check_len(static_cast<Eigen::Index>(time_label->size()), "time label column");
    if (outcome_binary) check_len(outcome_binary->size(), "binary outcome column");
    if (base_weight) check_len(base_weight->size(), "base weight column");
    if (!feature_names.empty() &&
        static_cast<Eigen::Index>(feature_names.size()) != p()) {
        throw DataError("feature name count does not match feature count");
    }

    if (!features.allFinite()) throw DataError("non-finite feature value");
    if (!treatment.allFinite()) throw DataError("non-finite treatment value");
    if (!outcome.allFinite()) throw DataError("non-finite outcome value");
    if ((treatment.array() < 0.0).any()) throw DataError("negative treatment value");

    std::map<std::string, Eigen::Index> cell_counts;
    for (const auto& c : cell_label) ++cell_counts[c];
    for (const auto& [label, count] : cell_counts) {
        if (count < 2) {
            throw DataError("cell label '" + label + "' has " + std::to_string(count) +
                            " row(s); at least 2 are required for per-cell standardization");
        }
    }
}

ObservationTable load_table(const std::string& path, const TableSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);

    std::string line;
    // Skip leading comment lines (emitted artifacts carry a '# seed=...' line).
    do {
        if (!std::getline(in, line)) throw DataError("empty dataset");
    } while (!line.empty() && line[0] == '#');

    const std::vector<std::string> header = split_csv_line(line);
    auto find_col = [&](const std::string& name, bool required) -> int {
        if (name.empty()) return -1;
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            if (required) throw DataError("missing column named in schema: " + name);
            return -1;
        }
        return static_cast<int>(it - header.begin());
    };

    const int col_t = find_col(schema.treatment, true);
    const int col_y = find_col(schema.outcome, true);
    const int col_cell = find_col(schema.cell, true);
    const int col_time = find_col(schema.time, !schema.time.empty());
    const int col_ybin = find_col(schema.outcome_binary, !schema.outcome_binary.empty());
    const int col_q = find_col(schema.base_weight, !schema.base_weight.empty());

    std::vector<int> feature_cols;
    std::vector<std::string> feature_names;
    for (int c = 0; c < static_cast<int>(header.size()); ++c) {
        if (c == col_t || c == col_y || c == col_cell || c == col_time ||
            c == col_ybin || c == col_q)
            continue;
        feature_cols.push_back(c);
        feature_names.push_back(header[c]);
    }

    std::vector<std::vector<double>> feat_rows;
    std::vector<double> t_vals, y_vals, q_vals;
    std::vector<int> ybin_vals;
    std::vector<std::string> cells, times;

    Eigen::Index row_number = 0;  // 1-based data row in error messages
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        ++row_number;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw DataError("row " + std::to_string(row_number) + " has " +
                            std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(header.size()));
        }
        auto numeric = [&](int col) {
            double v;
            if (!parse_double(fields[col], v)) {
                throw DataError("row " + std::to_string(row_number) +
                                ": non-numeric value '" + fields[col] +
                                "' in column '" + header[col] + "'");
            }
            return v;
        };
        t_vals.push_back(numeric(col_t));
        y_vals.push_back(numeric(col_y));
        cells.push_back(fields[col_cell]);
        if (col_time >= 0) times.push_back(fields[col_time]);
        if (col_ybin >= 0) ybin_vals.push_back(static_cast<int>(numeric(col_ybin)));
        if (col_q >= 0) q_vals.push_back(numeric(col_q));
        std::vector<double> feat(feature_cols.size());
        for (std::size_t j = 0; j < feature_cols.size(); ++j) feat[j] = numeric(feature_cols[j]);
        feat_rows.push_back(std::move(feat));
    }

    const Eigen::Index n = row_number;
    if (n == 0) throw DataError("empty dataset");
    const Eigen::Index p = static_cast<Eigen::Index>(feature_cols.size());

    ObservationTable table;
    table.features.resize(n, p);
    table.treatment.resize(n);
    table.outcome.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        table.treatment[i] = t_vals[i];
        table.outcome[i] = y_vals[i];
        for (Eigen::Index j = 0; j < p; ++j) table.features(i, j) = feat_rows[i][j];
    }
    table.cell_label = std::move(cells);
    table.feature_names = std::move(feature_names);
    if (col_time >= 0) table.time_label = std::move(times);
    if (col_ybin >= 0) {
        Eigen::VectorXi yb(n);
        for (Eigen::Index i = 0; i < n; ++i) yb[i] = ybin_vals[i];
        table.outcome_binary = std::move(yb);
    }
    if (col_q >= 0) {
        Eigen::VectorXd q(n);
        for (Eigen::Index i = 0; i < n; ++i) q[i] = q_vals[i];
        table.base_weight = std::move(q);
    }
    table.validate();
    return table;
}

void save_table(const ObservationTable& table, const std::string& path,
                const TableSchema& schema, const std::string& comment) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    if (!comment.empty()) out << "# " << comment << "\n";

    out << schema.cell;
    if (table.time_label) out << "," << (schema.time.empty() ? "TIME" : schema.time);
    out << "," << schema.treatment << "," << schema.outcome;
    if (table.outcome_binary)
        out << "," << (schema.outcome_binary.empty() ? "Y_BIN" : schema.outcome_binary);
    if (table.base_weight)
        out << "," << (schema.base_weight.empty() ? "Q" : schema.base_weight);
    for (Eigen::Index j = 0; j < table.p(); ++j) {
        out << ",";
        out << (static_cast<std::size_t>(j) < table.feature_names.size()
                    ? table.feature_names[j]
                    : "x" + std::to_string(j + 1));
    }
    out << "\n";

    for (Eigen::Index i = 0; i < table.n(); ++i) {
        out << table.cell_label[i];
        if (table.time_label) out << "," << (*table.time_label)[i];
        out << "," << format_double(table.treatment[i]);
        out << "," << format_double(table.outcome[i]);
        if (table.outcome_binary) out << "," << (*table.outcome_binary)[i];
        if (table.base_weight) out << "," << format_double((*table.base_weight)[i]);
        for (Eigen::Index j = 0; j < table.p(); ++j) out << "," << format_double(table.features(i, j));
        out << "\n";
    }
    if (!out) throw DataError("write failed: " + path);
}

std::string to_string(const StratumKey& key) {
    if (key.time.empty()) return "stratum " + key.space;
    return "stratum (" + key.time + ", " + key.space + ")";
}

StratumIndex build_stratum_index(const ObservationTable& table) {
    const Eigen::Index n = table.n();
    std::map<StratumKey, std::vector<Eigen::Index>> groups;
    std::set<std::string> time_ids, space_ids;
    for (Eigen::Index i = 0; i < n; ++i) {
        StratumKey key;
        key.space = table.cell_label[i];
        if (table.time_label) key.time = (*table.time_label)[i];
        groups[key].push_back(i);
        space_ids.insert(key.space);
        time_ids.insert(key.time);
    }

    StratumIndex idx;
    idx.row_assignment.assign(static_cast<std::size_t>(n), -1);
    idx.time_count = static_cast<int>(time_ids.size());
    idx.space_count = static_cast<int>(space_ids.size());
    for (auto& [key, rows] : groups) {
        if (rows.size() < 2) {
            throw DataError("stratum (time='" + key.time + "', space='" + key.space +
                            "') has " + std::to_string(rows.size()) +
                            " row(s); per-cell standardization needs at least 2");
        }
        const auto s = static_cast<std::int32_t>(idx.strata.size());
        for (Eigen::Index r : rows) idx.row_assignment[static_cast<std::size_t>(r)] = s;
        idx.strata.push_back(key);
        idx.rows_by_stratum.push_back(std::move(rows));
    }
    return idx;
}

StratumIndex single_stratum_index(Eigen::Index n) {
    if (n < 2) throw DataError("need at least 2 rows for a stratum");
    StratumIndex idx;
    idx.strata.push_back(StratumKey{"", "all"});
    idx.row_assignment.assign(static_cast<std::size_t>(n), 0);
    idx.rows_by_stratum.emplace_back();
    idx.rows_by_stratum[0].reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) idx.rows_by_stratum[0].push_back(i);
    idx.time_count = 1;
    idx.space_count = 1;
    return idx;
}

DatasetSummary summarize(const ObservationTable& table, const StratumIndex& idx) {
    DatasetSummary s;
    s.n = table.n();
    s.p = table.p();
    s.stratum_count = idx.size();
    s.treatment_nonzero_fraction =
        s.n == 0 ? 0.0
                 : static_cast<double>((table.treatment.array() != 0.0).count()) /
                       static_cast<double>(s.n);
    s.per_stratum_rows.reserve(idx.size());
    for (const auto& rows : idx.rows_by_stratum)
        s.per_stratum_rows.push_back(static_cast<Eigen::Index>(rows.size()));
    return s;
}

}  // namespace tseb
