#include "tseb/synthgen.hpp"

#include "tseb/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace tseb {

void SynthConfig::validate() const {
    if (n < 1) throw ConfigError("n must be >= 1");
    if (p < 1) throw ConfigError("p must be >= 1");
    if (confounding_rate < 0.0 || confounding_rate > 1.0)
        throw ConfigError("confounding rate must lie in [0,1]");
    if (confounding_strength < 0.0 || confounding_strength > 1.0)
        throw ConfigError("confounding strength must lie in [0,1]");
    if (confounding_rate > 0.0 && confounder_count() < 1)
        throw ConfigError("confounding rate too small: floor(p*r_c) must be >= 1 when r_c > 0");
    if (od_trials < 0) throw ConfigError("od_trials must be >= 0");
    if (od_prob < 0.0 || od_prob > 1.0) throw ConfigError("od_prob must lie in [0,1]");
}

Eigen::MatrixXd gen_features(const SynthConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd X(cfg.n, cfg.p);
    for (Eigen::Index i = 0; i < cfg.n; ++i)
        for (Eigen::Index j = 0; j < cfg.p; ++j) X(i, j) = normal(rng);
    return X;
}

std::vector<int> gen_cells(const SynthConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    std::binomial_distribution<int> binom(cfg.od_trials, cfg.od_prob);
    std::vector<int> labels(static_cast<std::size_t>(cfg.n));
    for (auto& v : labels) v = binom(rng);
    return labels;
}

TreatmentDraw gen_treatment(const Eigen::MatrixXd& X, const SynthConfig& cfg,
                            std::mt19937_64& rng) {
    cfg.validate();
    const Eigen::Index nc = cfg.confounder_count();
    if (X.cols() < nc)
        throw DataError("feature matrix has fewer columns than floor(p*r_c)");

    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd raw(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double s = normal(rng);
        for (Eigen::Index j = 0; j < nc; ++j) s += cfg.confounding_strength * X(i, j);
        raw[i] = s;
    }

    const double lo = raw.minCoeff();
    const double hi = raw.maxCoeff();
    if (!(hi > lo))
        throw DataError("degenerate treatment normalization: max equals min");

    TreatmentDraw out;
    out.t_raw = (raw.array() - lo) / (hi - lo);
    out.treatment = (out.t_raw.array() > cfg.treatment_shift)
                        .select(out.t_raw.array() - cfg.treatment_shift, 0.0);
    return out;
}

Eigen::VectorXd gen_outcome(const Eigen::MatrixXd& X, const Eigen::VectorXd& T,
                            std::mt19937_64& rng, double noise_sd) {
    if (X.rows() != T.size()) throw DataError("feature/treatment row mismatch");
    std::normal_distribution<double> noise(0.0, 1.0);
    Eigen::VectorXd y(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double v = T[i];
        // 1-based column index j; only even j contribute, with slope j/2 + T.
        for (Eigen::Index j = 2; j <= X.cols(); j += 2)
            v += (static_cast<double>(j) / 2.0 + T[i]) * X(i, j - 1);
        y[i] = v + noise_sd * noise(rng);
    }
    return y;
}

namespace {

// Reassigns labels realized on a single row to the nearest populated label so
// the table invariant (>= 2 rows per cell) holds for every seed.
void merge_singleton_labels(std::vector<int>& labels) {
    for (;;) {
        std::map<int, int> counts;
        for (int v : labels) ++counts[v];
        int singleton = 0;
        bool found = false;
        for (const auto& [label, count] : counts) {
            if (count == 1) {
                singleton = label;
                found = true;
                break;
            }
        }
        if (!found || counts.size() < 2) return;

        int best = 0;
        long best_score = -1;
        for (const auto& [label, count] : counts) {
            if (label == singleton) continue;
            const long dist = std::abs(static_cast<long>(label) - singleton);
            const long score = dist * 1000 - count;  // nearest label, larger count on ties
            if (best_score < 0 || score < best_score) {
                best_score = score;
                best = label;
            }
        }
        for (auto& v : labels)
            if (v == singleton) v = best;
    }
}

}  // namespace

ObservationTable gen_dataset(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);

    ObservationTable table;
    table.features = gen_features(cfg, rng);
    std::vector<int> cells = gen_cells(cfg, rng);
    TreatmentDraw draw = gen_treatment(table.features, cfg, rng);
    table.treatment = std::move(draw.treatment);
    table.outcome = gen_outcome(table.features, table.treatment, rng);

    if (cfg.n >= 2) merge_singleton_labels(cells);
    table.cell_label.reserve(cells.size());
    for (int v : cells) table.cell_label.push_back(std::to_string(v));

    // Median split of Y gives the 1:1 binary companion.
    std::vector<double> sorted(table.outcome.data(), table.outcome.data() + cfg.n);
    std::sort(sorted.begin(), sorted.end());
    const double median =
        cfg.n % 2 == 1 ? sorted[static_cast<std::size_t>(cfg.n / 2)]
                       : 0.5 * (sorted[static_cast<std::size_t>(cfg.n / 2 - 1)] +
                                sorted[static_cast<std::size_t>(cfg.n / 2)]);
    Eigen::VectorXi ybin(cfg.n);
    for (Eigen::Index i = 0; i < cfg.n; ++i) ybin[i] = table.outcome[i] > median ? 1 : 0;
    table.outcome_binary = std::move(ybin);

    table.feature_names.reserve(static_cast<std::size_t>(cfg.p));
    for (Eigen::Index j = 1; j <= cfg.p; ++j)
        table.feature_names.push_back("x" + std::to_string(j));

    table.validate();
    return table;
}

}  // namespace tseb
