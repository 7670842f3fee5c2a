#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "tseb/preprocess.hpp"
#include "tseb/table.hpp"

namespace tseb {

enum class BalanceMethod { IPW, EBCT, TSEBCT };

std::string to_string(BalanceMethod method);

// A balancing program min KL(w || Q) s.t. C w = M, w >= 0, with C guaranteed
// full row rank: linearly dependent constraint rows are filtered out at
// construction and reported in dropped_rows.
struct BalanceProblem {
    BlockDesign design;
    BalanceMethod method = BalanceMethod::TSEBCT;
    std::vector<ConstraintLabel> dropped_rows;

    static BalanceProblem create(BlockDesign design, BalanceMethod method);

    Eigen::Index constraints() const { return design.rows(); }
    Eigen::Index observations() const { return design.cols(); }
};

struct SolverConfig {
    double learning_rate = 1.0;
    double tolerance = 0.01;  // on the convergence loss, max |C w - M|
    int max_iterations = 200;
    double hessian_ridge = 1e-8;  // escalated x10 up to 1e-2 on factorization failure
    bool backtracking = false;    // halve the step while the convergence loss increases

    void validate() const;
};

struct WeightSolution {
    Eigen::VectorXd weights;      // n, strictly positive, sums to 1
    Eigen::VectorXd multipliers;  // m
    Eigen::VectorXd residuals;    // C w - M at the returned weights
    std::vector<double> loss_trace;  // entry 0 = loss at the zero start
    bool converged = false;
    int iterations = 0;

    double final_loss() const { return loss_trace.empty() ? 0.0 : loss_trace.back(); }
};

// log(Q' exp(-C'Z)) + M'Z, the Lagrangian dual, computed with max-subtraction.
double dual_objective(const Eigen::VectorXd& z, const BalanceProblem& prob);

// Softmax weights w_i = Q_i exp(-(C'Z)_i) / sum_j Q_j exp(-(C'Z)_j).
Eigen::VectorXd primal_weights(const Eigen::VectorXd& z, const BalanceProblem& prob);

// M - C w(Z).
Eigen::VectorXd dual_gradient(const Eigen::VectorXd& z, const BalanceProblem& prob);

// C (diag(w) - w w') C' + hessian_ridge I, dense; intended for small problems
// and derivative checks. The solver assembles the same matrix blockwise.
Eigen::MatrixXd dual_hessian(const Eigen::VectorXd& z, const BalanceProblem& prob,
                             double hessian_ridge = 1e-8);

// Newton iteration Z <- Z - l H^-1 g from Z = 0, recording the convergence
// loss |C w - M|_inf each iteration; stops below tolerance or at the
// iteration cap. Throws SolverError when the Hessian stays unsolvable at the
// maximum ridge.
WeightSolution solve_newton(const BalanceProblem& prob, const SolverConfig& cfg = {});

struct EbctOptions {
    double pca_threshold = 0.95;
    int treatment_degree = 1;
    int interaction_moments = 1;
};

// Global program: PCA components, treatment moments and their interactions
// balanced over all rows jointly (a single stratum).
BalanceProblem make_ebct_problem(const ObservationTable& table, const EbctOptions& opt = {});

// Stratified program: the same constraint template repeated within every
// (time, space) stratum.
BalanceProblem make_tsebct_problem(const ObservationTable& table, const StratumIndex& idx,
                                   const EbctOptions& opt = {});

WeightSolution solve_ebct(const ObservationTable& table, const EbctOptions& opt = {},
                          const SolverConfig& cfg = {});
WeightSolution solve_tsebct(const ObservationTable& table, const StratumIndex& idx,
                            const EbctOptions& opt = {}, const SolverConfig& cfg = {});

// Stabilized generalized-propensity weights: least squares of T on the
// features, normal densities, marginal over conditional.
WeightSolution solve_ipw(const ObservationTable& table);

}  // namespace tseb
