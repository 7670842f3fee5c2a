#include "tseb/preprocess.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>
#include <vector>

#include "tseb/errors.hpp"

namespace tseb {

Eigen::VectorXd standardize(const Eigen::VectorXd& v, const std::string& label) {
    if (v.size() < 2) throw DataError("need at least 2 values to standardize " + label);
    if (!v.allFinite()) throw DataError("non-finite values in " + label);
    const double mean = v.mean();
    Eigen::VectorXd centered = v.array() - mean;
    const double sd = std::sqrt(centered.squaredNorm() / static_cast<double>(v.size()));
    if (sd < 1e-8) throw DataError("zero variance in " + label);
    return centered / sd;
}

PcaModel pca_fit(const Eigen::MatrixXd& X, double explained_threshold) {
    if (X.rows() < 2) throw DataError("need at least 2 rows to fit PCA");
    if (X.cols() < 1) throw DataError("need at least 1 feature to fit PCA");
    if (!X.allFinite()) throw DataError("non-finite input to PCA");
    if (!(explained_threshold > 0.0) || explained_threshold > 1.0)
        throw ConfigError("explained variance threshold must be in (0, 1]");

    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    Eigen::RowVectorXd mean = X.colwise().mean();
    Eigen::MatrixXd centered = X.rowwise() - mean;
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw SolverError("covariance eigendecomposition failed");

    Eigen::VectorXd values = eig.eigenvalues().reverse().cwiseMax(0.0);
    const double total = values.sum();
    if (total <= 0.0) throw DataError("input has zero total variance");

    int retained = 0;
    double cum = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) {
        cum += values[i];
        retained = static_cast<int>(i) + 1;
        if (cum / total >= explained_threshold - 1e-12) break;
    }

    PcaModel model;
    model.retained_k = retained;
    model.explained_variance = values.head(retained);
    model.column_means = mean.transpose();
    model.total_variance = total;
    model.component_directions.resize(retained, p);
    for (int i = 0; i < retained; ++i) {
        Eigen::VectorXd dir = eig.eigenvectors().col(p - 1 - i);
        // Sign convention: largest-magnitude coordinate positive.
        Eigen::Index arg = 0;
        dir.cwiseAbs().maxCoeff(&arg);
        if (dir[arg] < 0.0) dir = -dir;
        model.component_directions.row(i) = dir.transpose();
    }
    return model;
}

Eigen::MatrixXd pca_transform(const PcaModel& model, const Eigen::MatrixXd& X) {
    if (X.cols() != model.column_means.size()) {
        throw DataError("feature count " + std::to_string(X.cols()) +
                        " does not match the fitted model's " +
                        std::to_string(model.column_means.size()));
    }
    if (!X.allFinite()) throw DataError("non-finite input to PCA transform");
    return (X.rowwise() - model.column_means.transpose()) * model.component_directions.transpose();
}

Eigen::MatrixXd treatment_moments(const Eigen::VectorXd& treatment, int degree) {
    if (degree < 1) throw ConfigError("treatment degree must be at least 1");
    if (!treatment.allFinite()) throw DataError("non-finite treatment values");
    Eigen::MatrixXd moments(treatment.size(), degree);
    Eigen::VectorXd power = Eigen::VectorXd::Ones(treatment.size());
    for (int d = 0; d < degree; ++d) {
        power = power.cwiseProduct(treatment);
        moments.col(d) = standardize(power, "treatment moment " + std::to_string(d + 1));
    }
    return moments;
}

std::string to_string(ConstraintKind kind) {
    switch (kind) {
        case ConstraintKind::weight_sum: return "weight_sum";
        case ConstraintKind::treatment_moment: return "treatment_moment";
        case ConstraintKind::stratum_feature: return "stratum_feature";
        case ConstraintKind::stratum_interaction: return "stratum_interaction";
    }
    return "unknown";
}

BlockDesign build_block_design(const Eigen::MatrixXd& components, const Eigen::MatrixXd& moments,
                               const StratumIndex& idx, const Eigen::VectorXd& base_weights,
                               int interaction_moments) {
    const Eigen::Index n = components.rows();
    const auto k = static_cast<int>(components.cols());
    const auto d = static_cast<int>(moments.cols());
    if (moments.rows() != n) throw DataError("component and moment row counts differ");
    if (d < 1) throw DataError("need at least 1 treatment moment");
    if (interaction_moments < 1 || interaction_moments > d)
        throw ConfigError("interaction moment count must be in [1, treatment degree]");
    if (static_cast<Eigen::Index>(idx.row_assignment.size()) != n)
        throw DataError("stratum index does not cover the data rows");

    BlockDesign design;
    if (base_weights.size() == 0) {
        design.base_weights = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    } else {
        if (base_weights.size() != n) throw DataError("base weight count does not match rows");
        if (!base_weights.allFinite() || (base_weights.array() <= 0.0).any())
            throw DataError("base weights must be positive");
        design.base_weights = base_weights / base_weights.sum();
    }

    const auto strata = static_cast<int>(idx.size());
    const int per_stratum_rows = k * (1 + interaction_moments);
    const Eigen::Index m = 1 + d + static_cast<Eigen::Index>(strata) * per_stratum_rows;
    design.full_support_rows = 1 + d;
    design.targets = Eigen::VectorXd::Zero(m);
    design.targets[0] = 1.0;
    design.row_labels.reserve(static_cast<std::size_t>(m));
    design.stratum_columns = idx.rows_by_stratum;

    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(1 + d + per_stratum_rows));

    int row = 0;
    design.row_labels.push_back({ConstraintKind::weight_sum, -1, -1, -1});
    for (Eigen::Index i = 0; i < n; ++i) entries.emplace_back(row, static_cast<int>(i), 1.0);
    ++row;
    for (int j = 0; j < d; ++j) {
        design.row_labels.push_back({ConstraintKind::treatment_moment, -1, -1, j});
        for (Eigen::Index i = 0; i < n; ++i)
            entries.emplace_back(row, static_cast<int>(i), moments(i, j));
        ++row;
    }

    for (int s = 0; s < strata; ++s) {
        const std::vector<Eigen::Index>& members = idx.rows_by_stratum[s];
        const auto ns = static_cast<Eigen::Index>(members.size());
        design.stratum_row_ranges.emplace_back(row, row + per_stratum_rows);
        for (int f = 0; f < k; ++f) {
            Eigen::VectorXd local(ns);
            for (Eigen::Index i = 0; i < ns; ++i) local[i] = components(members[i], f);
            Eigen::VectorXd scaled = standardize(
                local, "component " + std::to_string(f + 1) + " in " + to_string(idx.strata[s]));

            design.row_labels.push_back({ConstraintKind::stratum_feature, s, f, -1});
            for (Eigen::Index i = 0; i < ns; ++i)
                entries.emplace_back(row, static_cast<int>(members[i]), scaled[i]);
            ++row;
            for (int j = 0; j < interaction_moments; ++j) {
                design.row_labels.push_back({ConstraintKind::stratum_interaction, s, f, j});
                for (Eigen::Index i = 0; i < ns; ++i)
                    entries.emplace_back(row, static_cast<int>(members[i]),
                                         scaled[i] * moments(members[i], j));
                ++row;
            }
        }
    }

    design.g_matrix.resize(m, n);
    design.g_matrix.setFromTriplets(entries.begin(), entries.end());
    design.g_matrix.makeCompressed();
    return design;
}

}  // namespace tseb
