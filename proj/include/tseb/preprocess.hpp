#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <string>
#include <utility>
#include <vector>

#include "tseb/table.hpp"

namespace tseb {

// Shifts and scales to mean 0, standard deviation 1 (population convention,
// divisor n). The label names the column/stratum in the zero-variance error.
Eigen::VectorXd standardize(const Eigen::VectorXd& v, const std::string& label = "input");

struct PcaModel {
    Eigen::MatrixXd component_directions;  // retained_k x p, orthonormal rows
    Eigen::VectorXd explained_variance;    // non-increasing
    Eigen::VectorXd column_means;          // p
    double total_variance = 0.0;           // sum over all p eigenvalues
    int retained_k = 0;
};

// Eigen-decomposition of the sample covariance of column-centered X, keeping
// the smallest component count whose cumulative explained-variance ratio
// reaches the threshold.
PcaModel pca_fit(const Eigen::MatrixXd& X, double explained_threshold = 0.95);

// Centered X projected onto the retained components; n x retained_k.
Eigen::MatrixXd pca_transform(const PcaModel& model, const Eigen::MatrixXd& X);

// Columns T, T^2, ..., T^degree, each standardized after expansion.
Eigen::MatrixXd treatment_moments(const Eigen::VectorXd& treatment, int degree = 1);

enum class ConstraintKind { weight_sum, treatment_moment, stratum_feature, stratum_interaction };

std::string to_string(ConstraintKind kind);

struct ConstraintLabel {
    ConstraintKind kind = ConstraintKind::weight_sum;
    int stratum = -1;  // index into the StratumIndex; -1 for full-support rows
    int feature = -1;  // component index within the stratum block
    int moment = -1;   // treatment moment index

    friend bool operator==(const ConstraintLabel& a, const ConstraintLabel& b) = default;
};

// Constraint system of the balancing program: row r of g_matrix dotted with
// the weight vector must equal targets[r]. Stratum rows are structurally zero
// outside their stratum's observation columns.
struct BlockDesign {
    Eigen::SparseMatrix<double, Eigen::RowMajor> g_matrix;  // m x n
    Eigen::VectorXd targets;                                // m
    Eigen::VectorXd base_weights;                           // n, positive, sums to 1
    std::vector<ConstraintLabel> row_labels;                // m
    int full_support_rows = 0;  // leading rows: weight_sum + treatment moments
    std::vector<std::pair<int, int>> stratum_row_ranges;     // [begin, end) per stratum
    std::vector<std::vector<Eigen::Index>> stratum_columns;  // observation ids per stratum

    Eigen::Index rows() const { return g_matrix.rows(); }
    Eigen::Index cols() const { return g_matrix.cols(); }
};

// Assembles the block design: one all-ones weight_sum row (target 1), the d
// standardized treatment-moment rows, then per stratum the within-stratum
// standardized component rows and their products with the first
// interaction_moments treatment moments (targets all 0). Empty base_weights
// means uniform; otherwise entries must be positive and are normalized.
BlockDesign build_block_design(const Eigen::MatrixXd& components, const Eigen::MatrixXd& moments,
                               const StratumIndex& idx,
                               const Eigen::VectorXd& base_weights = Eigen::VectorXd(),
                               int interaction_moments = 1);

}  // namespace tseb
