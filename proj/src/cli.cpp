#include "tseb/cli.hpp"

#include "tseb/balance.hpp"
#include "tseb/errors.hpp"
#include "tseb/evaluate.hpp"
#include "tseb/hexgrid.hpp"
#include "tseb/preprocess.hpp"
#include "tseb/synthgen.hpp"
#include "tseb/table.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace tseb {
namespace {

using nlohmann::ordered_json;

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// FNV-1a over the canonical dump of the resolved substantive options. Output
// paths stay out of the fingerprint so relocating artifacts keeps the hash.
std::string config_fingerprint(const ordered_json& config) {
    const std::string text = config.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string artifact_comment(std::uint64_t seed, const std::string& hash) {
    return "seed=" + std::to_string(seed) + " config_hash=" + hash;
}

void ensure_dir(const std::string& dir) {
    if (dir.empty() || dir == ".") return;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
    if (dir.empty()) return name;
    return (std::filesystem::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << content;
    if (!out) throw DataError("write failed: " + path);
}

void write_json(const std::string& path, const ordered_json& doc) {
    write_text(path, doc.dump(2) + "\n");
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::vector<std::string> read_header(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        return split_csv(line);
    }
    throw DataError("no header row in " + path);
}

double parse_double(const std::string& text, const std::string& context) {
    double v = 0.0;
    const char* b = text.data();
    const char* e = b + text.size();
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc{} || res.ptr != e)
        throw DataError(context + ": non-numeric value '" + text + "'");
    return v;
}

long parse_long(const std::string& text, const std::string& context) {
    long v = 0;
    const char* b = text.data();
    const char* e = b + text.size();
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc{} || res.ptr != e)
        throw DataError(context + ": non-integer value '" + text + "'");
    return v;
}

// Column-role flags shared by the dataset-consuming subcommands. The three
// optional roles are auto-detected from the header under their default names;
// naming one explicitly makes its presence mandatory.
struct SchemaOptions {
    std::string treatment = "T";
    std::string outcome = "Y";
    std::string cell = "OD";
    std::string time = "TIME";
    std::string binary = "Y_BIN";
    std::string weight = "Q";
    bool time_forced = false;
    bool binary_forced = false;
    bool weight_forced = false;
};

void add_schema_options(CLI::App* cmd, SchemaOptions& s) {
    cmd->add_option("--treatment-column", s.treatment, "continuous dose column")
        ->capture_default_str();
    cmd->add_option("--outcome-column", s.outcome, "outcome column")->capture_default_str();
    cmd->add_option("--cell-column", s.cell, "spatial cell label column")->capture_default_str();
    cmd->add_option("--time-column", s.time, "temporal label column (auto-detected by default)")
        ->capture_default_str()
        ->each([&s](const std::string&) { s.time_forced = true; });
    cmd->add_option("--binary-column", s.binary,
                    "binary outcome companion column (auto-detected by default)")
        ->capture_default_str()
        ->each([&s](const std::string&) { s.binary_forced = true; });
    cmd->add_option("--weight-column", s.weight, "base weight column (auto-detected by default)")
        ->capture_default_str()
        ->each([&s](const std::string&) { s.weight_forced = true; });
}

TableSchema resolve_schema(const SchemaOptions& s, const std::string& data_path) {
    const auto header = read_header(data_path);
    auto present = [&header](const std::string& name) {
        return std::find(header.begin(), header.end(), name) != header.end();
    };
    TableSchema schema;
    schema.treatment = s.treatment;
    schema.outcome = s.outcome;
    schema.cell = s.cell;
    if (!s.time.empty() && (s.time_forced || present(s.time))) schema.time = s.time;
    if (!s.binary.empty() && (s.binary_forced || present(s.binary)))
        schema.outcome_binary = s.binary;
    if (!s.weight.empty() && (s.weight_forced || present(s.weight))) schema.base_weight = s.weight;
    return schema;
}

ordered_json schema_json(const TableSchema& schema) {
    return ordered_json{{"treatment", schema.treatment},
                        {"outcome", schema.outcome},
                        {"cell", schema.cell},
                        {"time", schema.time},
                        {"outcome_binary", schema.outcome_binary},
                        {"base_weight", schema.base_weight}};
}

void write_weights_file(const std::string& path, const Eigen::VectorXd& w,
                        const std::string& comment) {
    std::string out = "# " + comment + "\nrow_id,weight\n";
    for (Eigen::Index i = 0; i < w.size(); ++i)
        out += std::to_string(i) + "," + format_value(w[i]) + "\n";
    write_text(path, out);
}

Eigen::VectorXd load_weights_file(const std::string& path, Eigen::Index n) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::string line;
    bool header_seen = false;
    std::vector<double> vals;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto cols = split_csv(line);
        const std::string where = path + " line " + std::to_string(lineno);
        if (!header_seen) {
            header_seen = true;
            if (cols.size() != 2 || cols[0] != "row_id" || cols[1] != "weight")
                throw DataError(where + ": expected header row_id,weight");
            continue;
        }
        if (cols.size() != 2) throw DataError(where + ": expected 2 fields");
        const long id = parse_long(cols[0], where);
        if (id != static_cast<long>(vals.size()))
            throw DataError(where + ": row_id " + cols[0] + " out of order, expected " +
                            std::to_string(vals.size()));
        vals.push_back(parse_double(cols[1], where));
    }
    if (static_cast<Eigen::Index>(vals.size()) != n)
        throw DataError("weights row count " + std::to_string(vals.size()) +
                        " does not match dataset row count " + std::to_string(n));
    return Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

Eigen::VectorXd uniform_weights(Eigen::Index n) {
    return Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
}

ordered_json label_json(const ConstraintLabel& label) {
    ordered_json j;
    j["kind"] = to_string(label.kind);
    if (label.stratum >= 0) j["stratum"] = label.stratum;
    if (label.feature >= 0) j["feature"] = label.feature;
    if (label.moment >= 0) j["moment"] = label.moment;
    return j;
}

ordered_json residual_summary(const BalanceProblem& prob, const WeightSolution& sol) {
    std::map<ConstraintKind, double> worst;
    for (Eigen::Index i = 0; i < sol.residuals.size(); ++i) {
        const auto kind = prob.design.row_labels[static_cast<std::size_t>(i)].kind;
        auto [it, inserted] = worst.try_emplace(kind, 0.0);
        it->second = std::max(it->second, std::abs(sol.residuals[i]));
    }
    ordered_json out = ordered_json::object();
    for (const auto& [kind, v] : worst) out[to_string(kind)] = v;
    return out;
}

struct GenerateArgs {
    SynthConfig cfg;
    std::string out = "dataset.csv";
};

void run_generate(const GenerateArgs& a) {
    a.cfg.validate();
    const ordered_json resolved{{"command", "generate"},
                                {"n", a.cfg.n},
                                {"p", a.cfg.p},
                                {"confounding_rate", a.cfg.confounding_rate},
                                {"confounding_strength", a.cfg.confounding_strength},
                                {"od_trials", a.cfg.od_trials},
                                {"od_prob", a.cfg.od_prob},
                                {"treatment_shift", a.cfg.treatment_shift},
                                {"seed", a.cfg.seed}};
    const std::string hash = config_fingerprint(resolved);

    const ObservationTable table = gen_dataset(a.cfg);
    TableSchema schema;
    schema.outcome_binary = "Y_BIN";
    save_table(table, a.out, schema, artifact_comment(a.cfg.seed, hash));

    const Eigen::VectorXd uni = uniform_weights(table.n());
    const Eigen::Index nc = std::min(a.cfg.confounder_count(), table.p());
    double conf_sum = 0.0, other_sum = 0.0;
    for (Eigen::Index j = 0; j < table.p(); ++j) {
        const double c = std::abs(weighted_pearson(table.features.col(j), table.treatment, uni));
        (j < nc ? conf_sum : other_sum) += c;
    }
    std::set<std::string> cells(table.cell_label.begin(), table.cell_label.end());
    const double treated =
        static_cast<double>((table.treatment.array() > 0.0).count()) / table.n();

    ordered_json meta{{"command", "generate"}, {"seed", a.cfg.seed}, {"config_hash", hash}};
    meta["config"] = resolved;
    ordered_json summary{{"rows", table.n()},
                         {"features", table.p()},
                         {"distinct_cells", cells.size()},
                         {"treated_fraction", treated}};
    summary["mean_abs_corr_all"] = (conf_sum + other_sum) / static_cast<double>(table.p());
    summary["mean_abs_corr_confounded"] =
        nc > 0 ? ordered_json(conf_sum / static_cast<double>(nc)) : ordered_json(nullptr);
    summary["mean_abs_corr_other"] =
        table.p() > nc ? ordered_json(other_sum / static_cast<double>(table.p() - nc))
                       : ordered_json(nullptr);
    meta["summary"] = summary;
    write_json(a.out + ".meta.json", meta);

    std::cout << "generate: wrote " << table.n() << " rows, " << table.p() << " features, "
              << cells.size() << " cells to " << a.out << "\n";
}

struct PartitionArgs {
    std::string inventory;
    double threshold = 0.02;
    std::uint64_t seed = 0;
    std::string out = "partition.csv";
    std::string report;
};

void run_partition(const PartitionArgs& a) {
    const ordered_json resolved{
        {"command", "partition"}, {"threshold_fraction", a.threshold}, {"seed", a.seed}};
    const std::string hash = config_fingerprint(resolved);

    const GridInventory inv = load_inventory(a.inventory);
    const FlexiblePartition part = flexible_partition(inv, a.threshold, a.seed);
    const PartitionValidation val = validate_partition(part, inv, a.threshold);
    save_partition(part, a.out, artifact_comment(a.seed, hash));

    int under = 0;
    ordered_json grids = ordered_json::array();
    for (std::size_t g = 0; g < part.grids.size(); ++g) {
        const auto& grid = part.grids[g];
        under += grid.under_threshold ? 1 : 0;
        grids.push_back(ordered_json{{"grid_id", g},
                                     {"cells", grid.member_cells.size()},
                                     {"volume", grid.aggregate_volume},
                                     {"effective_resolution", grid.effective_resolution},
                                     {"under_threshold", grid.under_threshold}});
    }
    ordered_json rep{{"command", "partition"},
                     {"seed", a.seed},
                     {"config_hash", hash},
                     {"threshold_fraction", a.threshold},
                     {"cells", inv.cells.size()},
                     {"total_volume", inv.total_orders},
                     {"grid_count", part.grids.size()},
                     {"under_threshold_count", under},
                     {"valid", val.ok()},
                     {"violations", val.violations}};
    rep["grids"] = grids;
    const std::string report_path = a.report.empty() ? a.out + ".report.json" : a.report;
    write_json(report_path, rep);

    std::cout << "partition: " << part.grids.size() << " grids over " << inv.cells.size()
              << " cells, " << under << " under threshold, "
              << (val.ok() ? "valid" : "INVALID") << "\n";
}

struct BalanceArgs {
    std::string data;
    std::string method = "tsebct";
    EbctOptions ebct;
    SolverConfig solver;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    SchemaOptions schema;
};

void run_balance(const BalanceArgs& a) {
    a.solver.validate();
    const TableSchema schema = resolve_schema(a.schema, a.data);
    const ObservationTable table = load_table(a.data, schema);
    ensure_dir(a.out_dir);

    const ordered_json resolved{{"command", "balance"},
                                {"method", a.method},
                                {"pca_threshold", a.ebct.pca_threshold},
                                {"treatment_degree", a.ebct.treatment_degree},
                                {"interaction_moments", a.ebct.interaction_moments},
                                {"learning_rate", a.solver.learning_rate},
                                {"tolerance", a.solver.tolerance},
                                {"max_iterations", a.solver.max_iterations},
                                {"hessian_ridge", a.solver.hessian_ridge},
                                {"backtracking", a.solver.backtracking},
                                {"seed", a.seed},
                                {"schema", schema_json(schema)}};
    const std::string hash = config_fingerprint(resolved);
    const std::string comment = artifact_comment(a.seed, hash);

    std::vector<std::string> methods;
    if (a.method == "all")
        methods = {"ipw", "ebct", "tsebct"};
    else
        methods = {a.method};

    for (const auto& m : methods) {
        WeightSolution sol;
        ordered_json rep{{"command", "balance"},
                         {"method", m},
                         {"seed", a.seed},
                         {"config_hash", hash},
                         {"observations", table.n()}};
        if (m == "ipw") {
            sol = solve_ipw(table);
            rep["constraints"] = nullptr;
            rep["converged"] = sol.converged;
            rep["iterations"] = sol.iterations;
            rep["final_loss"] = nullptr;
            rep["dropped_rows"] = ordered_json::array();
            rep["max_residual_by_kind"] = ordered_json::object();
        } else {
            const BalanceProblem prob =
                m == "ebct" ? make_ebct_problem(table, a.ebct)
                            : make_tsebct_problem(table, build_stratum_index(table), a.ebct);
            if (!prob.dropped_rows.empty())
                std::cerr << "warning: dropped " << prob.dropped_rows.size()
                          << " linearly dependent constraint rows for method " << m << "\n";
            sol = solve_newton(prob, a.solver);
            rep["constraints"] = prob.constraints();
            rep["converged"] = sol.converged;
            rep["iterations"] = sol.iterations;
            rep["final_loss"] = sol.final_loss();
            ordered_json dropped = ordered_json::array();
            for (const auto& label : prob.dropped_rows) dropped.push_back(label_json(label));
            rep["dropped_rows"] = dropped;
            rep["max_residual_by_kind"] = residual_summary(prob, sol);
        }
        rep["weight_sum"] = sol.weights.sum();

        write_weights_file(join_path(a.out_dir, "weights_" + m + ".csv"), sol.weights, comment);
        std::string trace = "# " + comment + "\niteration,loss\n";
        for (std::size_t k = 0; k < sol.loss_trace.size(); ++k)
            trace += std::to_string(k) + "," + format_value(sol.loss_trace[k]) + "\n";
        write_text(join_path(a.out_dir, "trace_" + m + ".csv"), trace);
        write_json(join_path(a.out_dir, "report_" + m + ".json"), rep);

        if (m == "ipw")
            std::cout << "balance ipw: done\n";
        else
            std::cout << "balance " << m << ": " << (sol.converged ? "converged" : "STOPPED")
                      << " after " << sol.iterations << " iterations, final loss "
                      << format_value(sol.final_loss()) << "\n";
    }
}

// File stem with any weights_ prefix stripped; used when no label is given.
std::string derive_label(const std::string& weights_path) {
    if (weights_path.empty()) return "unweighted";
    std::string stem = std::filesystem::path(weights_path).stem().string();
    if (stem.rfind("weights_", 0) == 0) stem = stem.substr(8);
    return stem.empty() ? "weights" : stem;
}

ordered_json correlation_json(const CorrelationReport& corr) {
    ordered_json j{{"average_absolute_unweighted", corr.average_absolute_unweighted},
                   {"average_absolute_weighted", corr.average_absolute_weighted}};
    ordered_json feats = ordered_json::array();
    for (const auto& f : corr.per_feature)
        feats.push_back(ordered_json{
            {"feature", f.feature}, {"unweighted", f.unweighted}, {"weighted", f.weighted}});
    j["per_feature"] = feats;
    ordered_json strata = ordered_json::array();
    for (const auto& s : corr.per_stratum) {
        ordered_json sj{{"time", s.key.time},
                        {"space", s.key.space},
                        {"average_absolute_unweighted", s.average_absolute_unweighted},
                        {"average_absolute_weighted", s.average_absolute_weighted}};
        ordered_json sf = ordered_json::array();
        for (const auto& f : s.per_feature)
            sf.push_back(ordered_json{
                {"feature", f.feature}, {"unweighted", f.unweighted}, {"weighted", f.weighted}});
        sj["per_feature"] = sf;
        strata.push_back(sj);
    }
    j["per_stratum"] = strata;
    return j;
}

std::string correlation_csv(const CorrelationReport& corr, const std::string& comment) {
    std::string out = "# " + comment + "\nfeature,unweighted,weighted\n";
    for (const auto& f : corr.per_feature)
        out += f.feature + "," + format_value(f.unweighted) + "," + format_value(f.weighted) +
               "\n";
    out += "average_absolute," + format_value(corr.average_absolute_unweighted) + "," +
           format_value(corr.average_absolute_weighted) + "\n";
    return out;
}

struct EvaluateArgs {
    std::string data;
    std::string weights;
    std::string label;
    double dose = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    SchemaOptions schema;
};

void run_evaluate(const EvaluateArgs& a) {
    const TableSchema schema = resolve_schema(a.schema, a.data);
    const ObservationTable table = load_table(a.data, schema);
    const StratumIndex idx = build_stratum_index(table);
    const Eigen::VectorXd w =
        a.weights.empty() ? uniform_weights(table.n()) : load_weights_file(a.weights, table.n());
    const std::string label = a.label.empty() ? derive_label(a.weights) : a.label;
    ensure_dir(a.out_dir);

    const ordered_json resolved{{"command", "evaluate"},
                                {"method", label},
                                {"dose", std::isnan(a.dose) ? ordered_json(nullptr)
                                                            : ordered_json(a.dose)},
                                {"seed", a.seed},
                                {"schema", schema_json(schema)}};
    const std::string hash = config_fingerprint(resolved);
    const std::string comment = artifact_comment(a.seed, hash);

    const CorrelationReport corr = correlation_report(table, w, idx);
    ordered_json cj{{"command", "evaluate"},
                    {"method", label},
                    {"seed", a.seed},
                    {"config_hash", hash}};
    cj.update(correlation_json(corr));
    write_json(join_path(a.out_dir, "correlation_" + label + ".json"), cj);
    write_text(join_path(a.out_dir, "correlation_" + label + ".csv"),
               correlation_csv(corr, comment));

    std::cout << "evaluate " << label << ": mean |corr| " << format_value(
                     corr.average_absolute_unweighted)
              << " unweighted, " << format_value(corr.average_absolute_weighted)
              << " weighted\n";

    if (table.outcome_binary) {
        const MetricsReport mr = metrics_report(table, w, label, a.dose);
        const ordered_json mj{{"command", "evaluate"},
                              {"method", mr.method},
                              {"seed", a.seed},
                              {"config_hash", hash},
                              {"dose", mr.dose},
                              {"auuc", mr.auuc},
                              {"auc", mr.auc}};
        write_json(join_path(a.out_dir, "metrics_" + label + ".json"), mj);
        std::cout << "evaluate " << label << ": auuc " << format_value(mr.auuc) << ", auc "
                  << format_value(mr.auc) << "\n";
    } else {
        std::cerr << "note: no binary outcome column; skipping uplift metrics\n";
    }
}

struct ReportArgs {
    std::string data;
    std::vector<std::string> weight_specs;
    double dose = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    SchemaOptions schema;
};

void run_report(const ReportArgs& a) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::set<std::string> seen{"unweighted"};
    for (const auto& spec : a.weight_specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
            throw ConfigError("--weights expects label=path, got '" + spec + "'");
        const std::string label = spec.substr(0, eq);
        if (!seen.insert(label).second) throw ConfigError("duplicate weights label: " + label);
        entries.emplace_back(label, spec.substr(eq + 1));
    }

    const TableSchema schema = resolve_schema(a.schema, a.data);
    const ObservationTable table = load_table(a.data, schema);
    const StratumIndex idx = build_stratum_index(table);
    ensure_dir(a.out_dir);

    ordered_json labels = ordered_json::array();
    labels.push_back("unweighted");
    for (const auto& [label, path] : entries) labels.push_back(label);
    const ordered_json resolved{{"command", "report"},
                                {"methods", labels},
                                {"dose", std::isnan(a.dose) ? ordered_json(nullptr)
                                                            : ordered_json(a.dose)},
                                {"seed", a.seed},
                                {"schema", schema_json(schema)}};
    const std::string hash = config_fingerprint(resolved);
    const std::string comment = artifact_comment(a.seed, hash);

    std::string corr_csv = "# " + comment + "\nmethod,average_absolute_correlation\n";
    std::string metr_csv = "# " + comment + "\nmethod,auuc,auc,dose\n";
    ordered_json corr_rows = ordered_json::array();
    ordered_json metr_rows = ordered_json::array();

    auto add_method = [&](const std::string& label, const Eigen::VectorXd& w) {
        const CorrelationReport corr = correlation_report(table, w, idx);
        corr_csv += label + "," + format_value(corr.average_absolute_weighted) + "\n";
        corr_rows.push_back(ordered_json{
            {"method", label},
            {"average_absolute_correlation", corr.average_absolute_weighted}});
        if (table.outcome_binary) {
            const MetricsReport mr = metrics_report(table, w, label, a.dose);
            metr_csv += label + "," + format_value(mr.auuc) + "," + format_value(mr.auc) + "," +
                        format_value(mr.dose) + "\n";
            metr_rows.push_back(ordered_json{
                {"method", label}, {"auuc", mr.auuc}, {"auc", mr.auc}, {"dose", mr.dose}});
        }
        std::cout << "report " << label << ": mean |corr| "
                  << format_value(corr.average_absolute_weighted) << "\n";
    };

    add_method("unweighted", uniform_weights(table.n()));
    for (const auto& [label, path] : entries) add_method(label, load_weights_file(path, table.n()));

    write_text(join_path(a.out_dir, "correlation_summary.csv"), corr_csv);
    ordered_json rep{{"command", "report"},
                     {"seed", a.seed},
                     {"config_hash", hash},
                     {"correlation", corr_rows}};
    if (table.outcome_binary) {
        write_text(join_path(a.out_dir, "metrics_summary.csv"), metr_csv);
        rep["metrics"] = metr_rows;
    } else {
        std::cerr << "note: no binary outcome column; skipping uplift metrics\n";
        rep["metrics"] = nullptr;
    }
    write_json(join_path(a.out_dir, "report.json"), rep);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"covariate balancing for continuous-dose observational data"};
    app.set_config("--config", "", "read default option values from an INI file");
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* cgen = app.add_subcommand("generate", "synthesize a confounded benchmark dataset");
    cgen->add_option("--n", gen.cfg.n, "rows")->capture_default_str();
    cgen->add_option("--p", gen.cfg.p, "feature columns")->capture_default_str();
    cgen->add_option("--rc,--confounding-rate", gen.cfg.confounding_rate,
                     "fraction of features that drive the dose")
        ->capture_default_str();
    cgen->add_option("--sc,--confounding-strength", gen.cfg.confounding_strength,
                     "coefficient of each confounder in the dose")
        ->capture_default_str();
    cgen->add_option("--od-trials", gen.cfg.od_trials, "binomial trials of the cell labels")
        ->capture_default_str();
    cgen->add_option("--od-prob", gen.cfg.od_prob, "binomial success probability")
        ->capture_default_str();
    cgen->add_option("--shift", gen.cfg.treatment_shift, "dose below this maps to zero")
        ->capture_default_str();
    cgen->add_option("--seed", gen.cfg.seed, "random seed")->capture_default_str();
    cgen->add_option("--out", gen.out, "output CSV path")->capture_default_str();
    cgen->callback([&gen] { run_generate(gen); });

    PartitionArgs part;
    auto* cpart = app.add_subcommand("partition", "aggregate hexagonal cells into flexible grids");
    cpart->add_option("--inventory", part.inventory, "CSV with columns q,r,volume")->required();
    cpart->add_option("--threshold", part.threshold,
                      "order-volume fraction each grid must reach")
        ->capture_default_str();
    cpart->add_option("--seed", part.seed, "random seed for tie breaking")->capture_default_str();
    cpart->add_option("--out", part.out, "cell-to-grid assignment CSV")->capture_default_str();
    cpart->add_option("--report", part.report, "report JSON path (default <out>.report.json)");
    cpart->callback([&part] { run_partition(part); });

    BalanceArgs bal;
    auto* cbal = app.add_subcommand("balance", "solve for covariate-balancing weights");
    cbal->add_option("--data", bal.data, "dataset CSV")->required();
    cbal->add_option("--method", bal.method, "weighting method")
        ->check(CLI::IsMember({"ipw", "ebct", "tsebct", "all"}))
        ->capture_default_str();
    cbal->add_option("--pca-threshold", bal.ebct.pca_threshold,
                     "explained-variance fraction kept by the projection")
        ->capture_default_str();
    cbal->add_option("--treatment-degree", bal.ebct.treatment_degree,
                     "number of dose moments balanced globally")
        ->capture_default_str();
    cbal->add_option("--interaction-moments", bal.ebct.interaction_moments,
                     "dose moments interacted with each component")
        ->capture_default_str();
    cbal->add_option("--lr", bal.solver.learning_rate, "Newton step size")->capture_default_str();
    cbal->add_option("--tolerance", bal.solver.tolerance, "convergence loss target")
        ->capture_default_str();
    cbal->add_option("--max-iterations", bal.solver.max_iterations, "iteration cap")
        ->capture_default_str();
    cbal->add_option("--ridge", bal.solver.hessian_ridge, "Hessian regularization")
        ->capture_default_str();
    cbal->add_flag("--backtracking", bal.solver.backtracking,
                   "halve the step while the convergence loss increases");
    cbal->add_option("--seed", bal.seed, "provenance seed echoed into artifacts")
        ->capture_default_str();
    cbal->add_option("--out-dir", bal.out_dir, "artifact directory")->capture_default_str();
    add_schema_options(cbal, bal.schema);
    cbal->callback([&bal] { run_balance(bal); });

    EvaluateArgs ev;
    auto* cev = app.add_subcommand("evaluate", "score one weighting against the dataset");
    cev->add_option("--data", ev.data, "dataset CSV")->required();
    cev->add_option("--weights", ev.weights, "weights CSV (omit for uniform)");
    cev->add_option("--label", ev.label, "method label used in artifact names");
    cev->add_option("--dose", ev.dose, "uplift dose (default mean positive dose)");
    cev->add_option("--seed", ev.seed, "provenance seed echoed into artifacts")
        ->capture_default_str();
    cev->add_option("--out-dir", ev.out_dir, "artifact directory")->capture_default_str();
    add_schema_options(cev, ev.schema);
    cev->callback([&ev] { run_evaluate(ev); });

    ReportArgs rp;
    auto* crep = app.add_subcommand("report", "compare weightings side by side");
    crep->add_option("--data", rp.data, "dataset CSV")->required();
    crep->add_option("--weights", rp.weight_specs, "label=path weights entry, repeatable");
    crep->add_option("--dose", rp.dose, "uplift dose (default mean positive dose)");
    crep->add_option("--seed", rp.seed, "provenance seed echoed into artifacts")
        ->capture_default_str();
    crep->add_option("--out-dir", rp.out_dir, "artifact directory")->capture_default_str();
    add_schema_options(crep, rp.schema);
    crep->callback([&rp] { run_report(rp); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const SolverError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}

}  // namespace tseb
