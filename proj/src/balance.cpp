#include "tseb/balance.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "tseb/errors.hpp"

namespace tseb {

namespace {

constexpr double kMaxRidge = 1e-2;
constexpr double kRankThresholdScale = 1e-10;
constexpr double kMinPositive = std::numeric_limits<double>::min();

void check_multiplier_size(const Eigen::VectorXd& z, const BalanceProblem& prob) {
    if (z.size() != prob.constraints())
        throw ConfigError("multiplier size " + std::to_string(z.size()) +
                          " does not match constraint count " +
                          std::to_string(prob.constraints()));
}

Eigen::MatrixXd dense_row_block(const Eigen::SparseMatrix<double, Eigen::RowMajor>& mat,
                                int begin, int end) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(end - begin, mat.cols());
    for (int r = begin; r < end; ++r)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(mat, r); it; ++it)
            out(r - begin, it.col()) = it.value();
    return out;
}

// Removes the basis components from v (two passes for numerical safety) and
// returns the residual norm.
double project_out(const std::vector<Eigen::VectorXd>& basis, Eigen::VectorXd& v) {
    for (int pass = 0; pass < 2; ++pass)
        for (const Eigen::VectorXd& b : basis) v -= b.dot(v) * b;
    return v.norm();
}

// Dense per-stratum view of the constraint matrix: full-support rows G over
// all columns, stratum rows B_s over the stratum's own columns.
struct ArrowView {
    Eigen::MatrixXd full;                   // g x n
    std::vector<Eigen::MatrixXd> stratum;   // b_s x n_s
    std::vector<Eigen::MatrixXd> full_cut;  // g x n_s, full rows on stratum columns
    std::vector<std::pair<int, int>> ranges;
    std::vector<std::vector<Eigen::Index>> columns;
    int g = 0;
};

ArrowView build_arrow_view(const BlockDesign& design) {
    ArrowView view;
    view.g = design.full_support_rows;
    view.full = dense_row_block(design.g_matrix, 0, view.g);
    view.ranges = design.stratum_row_ranges;
    view.columns = design.stratum_columns;

    std::vector<Eigen::Index> local(static_cast<std::size_t>(design.cols()), -1);
    for (std::size_t s = 0; s < view.ranges.size(); ++s) {
        const auto [begin, end] = view.ranges[s];
        const std::vector<Eigen::Index>& cols = view.columns[s];
        const auto ns = static_cast<Eigen::Index>(cols.size());
        for (Eigen::Index i = 0; i < ns; ++i) local[cols[i]] = i;

        Eigen::MatrixXd block = Eigen::MatrixXd::Zero(end - begin, ns);
        for (int r = begin; r < end; ++r)
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(design.g_matrix,
                                                                                r);
                 it; ++it)
                block(r - begin, local[it.col()]) = it.value();
        view.stratum.push_back(std::move(block));

        Eigen::MatrixXd cut(view.g, ns);
        for (Eigen::Index i = 0; i < ns; ++i) cut.col(i) = view.full.col(cols[i]);
        view.full_cut.push_back(std::move(cut));

        for (Eigen::Index i = 0; i < ns; ++i) local[cols[i]] = -1;
    }
    return view;
}

// C diag(w) C' assembled as the arrow pattern: a dense global block, one
// dense diagonal block per stratum, and the global-stratum couplings.
// Cross-stratum blocks are structurally zero.
struct ArrowMatrix {
    Eigen::MatrixXd gg;
    std::vector<Eigen::MatrixXd> ss;
    std::vector<Eigen::MatrixXd> gs;
};

ArrowMatrix assemble_weighted_gram(const ArrowView& view, const Eigen::VectorXd& w) {
    ArrowMatrix a;
    a.gg = view.full * w.asDiagonal() * view.full.transpose();
    for (std::size_t s = 0; s < view.stratum.size(); ++s) {
        const std::vector<Eigen::Index>& cols = view.columns[s];
        Eigen::VectorXd ws(static_cast<Eigen::Index>(cols.size()));
        for (Eigen::Index i = 0; i < ws.size(); ++i) ws[i] = w[cols[i]];
        a.ss.push_back(view.stratum[s] * ws.asDiagonal() * view.stratum[s].transpose());
        a.gs.push_back(view.full_cut[s] * ws.asDiagonal() * view.stratum[s].transpose());
    }
    return a;
}

// Cholesky of the arrow matrix plus ridge, solved through the Schur
// complement of the global block.
struct ArrowFactor {
    Eigen::LLT<Eigen::MatrixXd> schur;
    std::vector<Eigen::LLT<Eigen::MatrixXd>> blocks;
    std::vector<Eigen::MatrixXd> coupling;  // b_s x g, A_ss^-1 A_gs'
    const ArrowMatrix* a = nullptr;
    const ArrowView* view = nullptr;

    bool factor(const ArrowMatrix& mat, const ArrowView& v, double ridge) {
        a = &mat;
        view = &v;
        blocks.clear();
        coupling.clear();
        Eigen::MatrixXd schur_mat =
            mat.gg + ridge * Eigen::MatrixXd::Identity(v.g, v.g);
        for (std::size_t s = 0; s < mat.ss.size(); ++s) {
            const auto b = mat.ss[s].rows();
            blocks.emplace_back();
            coupling.emplace_back();
            if (b == 0) continue;
            Eigen::MatrixXd block = mat.ss[s] + ridge * Eigen::MatrixXd::Identity(b, b);
            blocks.back().compute(block);
            if (blocks.back().info() != Eigen::Success) return false;
            coupling.back() = blocks.back().solve(mat.gs[s].transpose());
            schur_mat -= mat.gs[s] * coupling.back();
        }
        schur.compute(schur_mat);
        return schur.info() == Eigen::Success;
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
        Eigen::VectorXd out(rhs.size());
        Eigen::VectorXd top = rhs.head(view->g);
        std::vector<Eigen::VectorXd> partial(view->ranges.size());
        for (std::size_t s = 0; s < view->ranges.size(); ++s) {
            const auto [begin, end] = view->ranges[s];
            if (end == begin) continue;
            partial[s] = blocks[s].solve(rhs.segment(begin, end - begin));
            top -= a->gs[s] * partial[s];
        }
        Eigen::VectorXd zg = schur.solve(top);
        out.head(view->g) = zg;
        for (std::size_t s = 0; s < view->ranges.size(); ++s) {
            const auto [begin, end] = view->ranges[s];
            if (end == begin) continue;
            out.segment(begin, end - begin) = partial[s] - coupling[s] * zg;
        }
        return out;
    }
};

struct SoftmaxState {
    Eigen::VectorXd weights;
    Eigen::VectorXd constraint_values;  // C w
    double loss = 0.0;                  // |C w - M|_inf
    double objective = 0.0;             // lse(log q - C'z) + M'z
};

SoftmaxState evaluate_primal(const Eigen::VectorXd& z, const BlockDesign& design,
                             const Eigen::VectorXd& log_q) {
    SoftmaxState state;
    Eigen::VectorXd logits = log_q - design.g_matrix.transpose() * z;
    const double shift = logits.maxCoeff();
    Eigen::VectorXd w = (logits.array() - shift).exp();
    state.objective = shift + std::log(w.sum()) + design.targets.dot(z);
    w = w.cwiseMax(kMinPositive);
    w /= w.sum();
    state.weights = std::move(w);
    state.constraint_values = design.g_matrix * state.weights;
    state.loss = (state.constraint_values - design.targets).cwiseAbs().maxCoeff();
    return state;
}

}  // namespace

std::string to_string(BalanceMethod method) {
    switch (method) {
        case BalanceMethod::IPW: return "ipw";
        case BalanceMethod::EBCT: return "ebct";
        case BalanceMethod::TSEBCT: return "tsebct";
    }
    return "unknown";
}

void SolverConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
    if (max_iterations < 1) throw ConfigError("max iterations must be at least 1");
    if (!(hessian_ridge > 0.0)) throw ConfigError("hessian ridge must be positive");
}

BalanceProblem BalanceProblem::create(BlockDesign design, BalanceMethod method) {
    const Eigen::Index m = design.rows();
    const Eigen::Index n = design.cols();
    if (m < 1 || n < 1) throw DataError("empty constraint system");
    if (design.base_weights.size() != n ||
        static_cast<Eigen::Index>(design.row_labels.size()) != m ||
        design.targets.size() != m)
        throw DataError("inconsistent block design");
    if (!design.base_weights.allFinite() || (design.base_weights.array() <= 0.0).any())
        throw DataError("base weights must be positive");
    design.base_weights /= design.base_weights.sum();

    const double threshold = kRankThresholdScale * design.g_matrix.norm();

    BalanceProblem prob;
    prob.method = method;
    std::vector<bool> keep(static_cast<std::size_t>(m), true);

    // Full-support rows first, earlier rows winning ties; the all-ones
    // weight_sum row always survives because no standardized row spans it.
    Eigen::MatrixXd full = dense_row_block(design.g_matrix, 0, design.full_support_rows);
    std::vector<Eigen::VectorXd> full_basis;
    for (int r = 0; r < design.full_support_rows; ++r) {
        Eigen::VectorXd v = full.row(r).transpose();
        const double res = project_out(full_basis, v);
        if (res <= threshold) {
            keep[static_cast<std::size_t>(r)] = false;
        } else {
            full_basis.push_back(v / res);
        }
    }

    // Stratum rows are checked against the kept full-support rows restricted
    // to the stratum's columns plus the stratum rows kept so far. Rows from
    // different strata have disjoint support, so no cross-stratum dependency
    // exists and per-stratum filtering is exact.
    for (std::size_t s = 0; s < design.stratum_row_ranges.size(); ++s) {
        const auto [begin, end] = design.stratum_row_ranges[s];
        const std::vector<Eigen::Index>& cols = design.stratum_columns[s];
        const auto ns = static_cast<Eigen::Index>(cols.size());

        std::vector<Eigen::VectorXd> basis;
        for (int r = 0; r < design.full_support_rows; ++r) {
            if (!keep[static_cast<std::size_t>(r)]) continue;
            Eigen::VectorXd v(ns);
            for (Eigen::Index i = 0; i < ns; ++i) v[i] = full(r, cols[i]);
            const double res = project_out(basis, v);
            if (res > threshold) basis.push_back(v / res);
        }

        std::vector<Eigen::Index> local(static_cast<std::size_t>(n), -1);
        for (Eigen::Index i = 0; i < ns; ++i) local[cols[i]] = i;
        for (int r = begin; r < end; ++r) {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(ns);
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(design.g_matrix,
                                                                                r);
                 it; ++it)
                v[local[it.col()]] = it.value();
            const double res = project_out(basis, v);
            if (res <= threshold) {
                keep[static_cast<std::size_t>(r)] = false;
            } else {
                basis.push_back(v / res);
            }
        }
    }

    Eigen::Index kept = 0;
    for (bool k : keep) kept += k ? 1 : 0;
    if (kept == m) {
        prob.design = std::move(design);
        return prob;
    }

    BlockDesign filtered;
    filtered.base_weights = design.base_weights;
    filtered.stratum_columns = design.stratum_columns;
    filtered.targets.resize(kept);
    filtered.row_labels.reserve(static_cast<std::size_t>(kept));
    std::vector<Eigen::Index> new_row(static_cast<std::size_t>(m), -1);
    Eigen::Index next = 0;
    for (Eigen::Index r = 0; r < m; ++r) {
        if (!keep[static_cast<std::size_t>(r)]) {
            prob.dropped_rows.push_back(design.row_labels[static_cast<std::size_t>(r)]);
            continue;
        }
        new_row[static_cast<std::size_t>(r)] = next;
        filtered.targets[next] = design.targets[r];
        filtered.row_labels.push_back(design.row_labels[static_cast<std::size_t>(r)]);
        ++next;
    }
    filtered.full_support_rows = 0;
    for (int r = 0; r < design.full_support_rows; ++r)
        if (keep[static_cast<std::size_t>(r)]) ++filtered.full_support_rows;
    for (const auto& [begin, end] : design.stratum_row_ranges) {
        Eigen::Index first = -1, count = 0;
        for (int r = begin; r < end; ++r) {
            if (!keep[static_cast<std::size_t>(r)]) continue;
            if (first < 0) first = new_row[static_cast<std::size_t>(r)];
            ++count;
        }
        if (count == 0) {
            // Empty range anchored after the previously emitted rows.
            int anchor = filtered.stratum_row_ranges.empty()
                             ? filtered.full_support_rows
                             : filtered.stratum_row_ranges.back().second;
            filtered.stratum_row_ranges.emplace_back(anchor, anchor);
        } else {
            filtered.stratum_row_ranges.emplace_back(static_cast<int>(first),
                                                     static_cast<int>(first + count));
        }
    }

    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(static_cast<std::size_t>(design.g_matrix.nonZeros()));
    for (Eigen::Index r = 0; r < m; ++r) {
        if (!keep[static_cast<std::size_t>(r)]) continue;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
                 design.g_matrix, static_cast<int>(r));
             it; ++it)
            entries.emplace_back(static_cast<int>(new_row[static_cast<std::size_t>(r)]),
                                 static_cast<int>(it.col()), it.value());
    }
    filtered.g_matrix.resize(kept, n);
    filtered.g_matrix.setFromTriplets(entries.begin(), entries.end());
    filtered.g_matrix.makeCompressed();

    prob.design = std::move(filtered);
    return prob;
}

double dual_objective(const Eigen::VectorXd& z, const BalanceProblem& prob) {
    check_multiplier_size(z, prob);
    const BlockDesign& design = prob.design;
    Eigen::VectorXd logits =
        design.base_weights.array().log() - (design.g_matrix.transpose() * z).array();
    const double shift = logits.maxCoeff();
    const double lse = shift + std::log((logits.array() - shift).exp().sum());
    const double value = lse + design.targets.dot(z);
    if (!std::isfinite(value)) throw SolverError("dual objective is not finite");
    return value;
}

Eigen::VectorXd primal_weights(const Eigen::VectorXd& z, const BalanceProblem& prob) {
    check_multiplier_size(z, prob);
    Eigen::VectorXd log_q = prob.design.base_weights.array().log();
    return evaluate_primal(z, prob.design, log_q).weights;
}

Eigen::VectorXd dual_gradient(const Eigen::VectorXd& z, const BalanceProblem& prob) {
    check_multiplier_size(z, prob);
    Eigen::VectorXd log_q = prob.design.base_weights.array().log();
    SoftmaxState state = evaluate_primal(z, prob.design, log_q);
    return prob.design.targets - state.constraint_values;
}

Eigen::MatrixXd dual_hessian(const Eigen::VectorXd& z, const BalanceProblem& prob,
                             double hessian_ridge) {
    check_multiplier_size(z, prob);
    Eigen::VectorXd w = primal_weights(z, prob);
    Eigen::MatrixXd dense(prob.design.g_matrix);
    Eigen::VectorXd cw = dense * w;
    Eigen::MatrixXd gram = dense * w.asDiagonal() * dense.transpose();
    // Mirror the upper triangle so the result is symmetric bit-for-bit.
    Eigen::MatrixXd h = gram.selfadjointView<Eigen::Upper>();
    h -= cw * cw.transpose();
    h += hessian_ridge * Eigen::MatrixXd::Identity(h.rows(), h.cols());
    return h;
}

WeightSolution solve_newton(const BalanceProblem& prob, const SolverConfig& cfg) {
    cfg.validate();
    const BlockDesign& design = prob.design;
    const Eigen::Index m = design.rows();

    const ArrowView view = build_arrow_view(design);
    const Eigen::VectorXd log_q = design.base_weights.array().log();

    WeightSolution sol;
    Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
    SoftmaxState state = evaluate_primal(z, design, log_q);
    sol.loss_trace.push_back(state.loss);

    int iter = 0;
    while (state.loss >= cfg.tolerance && iter < cfg.max_iterations) {
        const Eigen::VectorXd gradient = design.targets - state.constraint_values;
        const Eigen::VectorXd& u = state.constraint_values;  // C w
        const ArrowMatrix gram = assemble_weighted_gram(view, state.weights);

        Eigen::VectorXd step;
        double ridge = cfg.hessian_ridge;
        while (true) {
            ArrowFactor factor;
            if (factor.factor(gram, view, ridge)) {
                Eigen::VectorXd y = factor.solve(gradient);
                Eigen::VectorXd v = factor.solve(u);
                const double denom = 1.0 - u.dot(v);
                if (denom > 1e-12) {
                    step = y + (u.dot(y) / denom) * v;
                    if (step.allFinite()) break;
                }
            }
            ridge *= 10.0;
            if (ridge > kMaxRidge * (1.0 + 1e-9))
                throw SolverError("hessian solve failed at maximum regularization");
        }

        Eigen::VectorXd scaled = cfg.learning_rate * step;
        SoftmaxState next = evaluate_primal(z - scaled, design, log_q);
        if (cfg.backtracking) {
            // The full step can overshoot into the softmax's explosive range.
            // Halving until neither the convergence loss nor the dual
            // objective increases keeps both traces non-increasing; near the
            // solution full steps pass untouched, preserving the quadratic
            // tail.
            int halvings = 0;
            while ((next.loss > state.loss || next.objective > state.objective) &&
                   halvings < 30) {
                scaled *= 0.5;
                next = evaluate_primal(z - scaled, design, log_q);
                ++halvings;
            }
        }
        z -= scaled;
        state = std::move(next);
        ++iter;
        sol.loss_trace.push_back(state.loss);
    }

    sol.converged = state.loss < cfg.tolerance;
    sol.iterations = iter;
    sol.weights = state.weights;
    sol.multipliers = z;
    sol.residuals = state.constraint_values - design.targets;
    return sol;
}

namespace {

BalanceProblem make_blocked_problem(const ObservationTable& table, const StratumIndex& idx,
                                    const EbctOptions& opt, BalanceMethod method) {
    PcaModel pca = pca_fit(table.features, opt.pca_threshold);
    Eigen::MatrixXd components = pca_transform(pca, table.features);
    Eigen::MatrixXd moments = treatment_moments(table.treatment, opt.treatment_degree);
    Eigen::VectorXd q;
    if (table.base_weight) q = *table.base_weight;
    BlockDesign design = build_block_design(components, moments, idx, q, opt.interaction_moments);
    return BalanceProblem::create(std::move(design), method);
}

}  // namespace

BalanceProblem make_ebct_problem(const ObservationTable& table, const EbctOptions& opt) {
    return make_blocked_problem(table, single_stratum_index(table.n()), opt,
                                BalanceMethod::EBCT);
}

BalanceProblem make_tsebct_problem(const ObservationTable& table, const StratumIndex& idx,
                                   const EbctOptions& opt) {
    return make_blocked_problem(table, idx, opt, BalanceMethod::TSEBCT);
}

WeightSolution solve_ebct(const ObservationTable& table, const EbctOptions& opt,
                          const SolverConfig& cfg) {
    return solve_newton(make_ebct_problem(table, opt), cfg);
}

WeightSolution solve_tsebct(const ObservationTable& table, const StratumIndex& idx,
                            const EbctOptions& opt, const SolverConfig& cfg) {
    return solve_newton(make_tsebct_problem(table, idx, opt), cfg);
}

WeightSolution solve_ipw(const ObservationTable& table) {
    const Eigen::Index n = table.n();
    const Eigen::Index p = table.p();
    if (n < 2) throw DataError("need at least 2 rows");

    Eigen::MatrixXd design(n, p + 1);
    design.col(0).setOnes();
    design.rightCols(p) = table.features;
    const Eigen::VectorXd& t = table.treatment;

    Eigen::MatrixXd normal = design.transpose() * design;
    Eigen::VectorXd rhs = design.transpose() * t;
    Eigen::VectorXd beta;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
    bool singular = ldlt.info() != Eigen::Success;
    if (!singular) {
        beta = ldlt.solve(rhs);
        singular = !beta.allFinite() ||
                   (normal * beta - rhs).norm() > 1e-6 * (rhs.norm() + 1.0);
    }
    if (singular) {
        Eigen::MatrixXd ridged =
            normal + 1e-8 * Eigen::MatrixXd::Identity(p + 1, p + 1);
        beta = Eigen::LDLT<Eigen::MatrixXd>(ridged).solve(rhs);
        if (!beta.allFinite()) throw SolverError("propensity least squares failed");
    }

    Eigen::VectorXd fitted = design * beta;
    const double marginal_mean = t.mean();
    const double marginal_var =
        (t.array() - marginal_mean).square().sum() / static_cast<double>(n);
    if (marginal_var <= 0.0) throw DataError("constant treatment");
    const double residual_var =
        (t - fitted).squaredNorm() / static_cast<double>(n);
    if (residual_var <= marginal_var * 1e-14)
        throw DataError("treatment residual variance is zero");

    Eigen::ArrayXd log_w = -0.5 * (t.array() - marginal_mean).square() / marginal_var -
                           0.5 * std::log(marginal_var) +
                           0.5 * (t - fitted).array().square() / residual_var +
                           0.5 * std::log(residual_var);
    log_w -= log_w.maxCoeff();
    Eigen::VectorXd w = log_w.exp();
    w = w.cwiseMax(kMinPositive);

    // The density ratio explodes on rows the linear dose model fits badly,
    // and a handful of such rows can absorb nearly all the mass. Capping at
    // the 99th percentile before normalizing keeps the estimator usable on
    // heavy-tailed doses; when the ratio is already flat the cap sits at the
    // common value and changes nothing.
    if (n >= 2) {
        std::vector<double> sorted(w.data(), w.data() + n);
        const auto rank = static_cast<std::ptrdiff_t>(
            std::min<double>(static_cast<double>(n - 1), std::ceil(0.99 * static_cast<double>(n)) - 1.0));
        std::nth_element(sorted.begin(), sorted.begin() + rank, sorted.end());
        const double cap = sorted[static_cast<std::size_t>(rank)];
        if (cap > 0.0) w = w.cwiseMin(cap);
    }
    w /= w.sum();

    WeightSolution sol;
    sol.weights = std::move(w);
    sol.converged = true;
    sol.iterations = 0;
    return sol;
}

}  // namespace tseb
