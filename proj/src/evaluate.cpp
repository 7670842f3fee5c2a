#include "tseb/evaluate.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "tseb/errors.hpp"

namespace tseb {

namespace {

void check_weights(const Eigen::VectorXd& w, Eigen::Index n) {
    if (w.size() != n)
        throw DataError("weight count " + std::to_string(w.size()) +
                        " does not match row count " + std::to_string(n));
    if (!w.allFinite() || (w.array() < 0.0).any())
        throw DataError("weights must be non-negative");
    if (std::abs(w.sum() - 1.0) > 1e-8) throw DataError("weights must sum to 1");
}

// Sample weights for model fitting carry an arbitrary positive scale; only
// non-negativity and a positive total are required.
void check_sample_weights(const Eigen::VectorXd& w, Eigen::Index n) {
    if (w.size() != n)
        throw DataError("weight count " + std::to_string(w.size()) +
                        " does not match row count " + std::to_string(n));
    if (!w.allFinite() || (w.array() < 0.0).any())
        throw DataError("weights must be non-negative");
    if (!(w.sum() > 0.0)) throw DataError("weights must have positive total");
}

Eigen::MatrixXd learner_design(const ObservationTable& table, const Eigen::VectorXd& dose) {
    // The dose column is also crossed with every feature; a linear base
    // without the crossed block can only express one effect size for all
    // rows, which makes uplift rankings meaningless. At zero dose the
    // crossed block vanishes, so zero-dose predictions stay the pure
    // feature fit.
    Eigen::MatrixXd design(table.n(), 2 * table.p() + 2);
    design.col(0).setOnes();
    design.middleCols(1, table.p()) = table.features;
    design.col(table.p() + 1) = dose;
    design.rightCols(table.p()) = table.features.array().colwise() * dose.array();
    return design;
}

Eigen::VectorXd scale_to_count(const Eigen::VectorXd& w) {
    return w * (static_cast<double>(w.size()) / w.sum());
}

class RidgeLinearLearner final : public BaseLearner {
  public:
    explicit RidgeLinearLearner(double ridge) : ridge_(ridge) {}

    void fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& target,
             const Eigen::VectorXd& sample_weights) override {
        const Eigen::VectorXd s = scale_to_count(sample_weights);
        Eigen::MatrixXd normal = design.transpose() * s.asDiagonal() * design;
        for (Eigen::Index j = 1; j < normal.cols(); ++j) normal(j, j) += ridge_;
        Eigen::VectorXd rhs = design.transpose() * s.cwiseProduct(target);
        coefficients_ = Eigen::LDLT<Eigen::MatrixXd>(normal).solve(rhs);
        if (!coefficients_.allFinite()) throw SolverError("weighted least squares failed");
    }

    Eigen::VectorXd predict(const Eigen::MatrixXd& design) const override {
        return design * coefficients_;
    }

    std::string id() const override { return "ridge_linear"; }

  private:
    double ridge_;
    Eigen::VectorXd coefficients_;
};

class LogisticLearner final : public BaseLearner {
  public:
    LogisticLearner(double ridge, int max_iterations, double tolerance)
        : ridge_(ridge), max_iterations_(max_iterations), tolerance_(tolerance) {}

    void fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& target,
             const Eigen::VectorXd& sample_weights) override {
        const Eigen::VectorXd s = scale_to_count(sample_weights);
        coefficients_ = Eigen::VectorXd::Zero(design.cols());
        for (int iter = 1; iter <= max_iterations_; ++iter) {
            Eigen::ArrayXd p = sigmoid(design * coefficients_);
            Eigen::VectorXd curvature = s.array() * p * (1.0 - p);
            Eigen::MatrixXd normal =
                design.transpose() * curvature.asDiagonal() * design;
            for (Eigen::Index j = 1; j < normal.cols(); ++j) normal(j, j) += ridge_;
            Eigen::VectorXd score =
                design.transpose() * (s.array() * (target.array() - p)).matrix();
            Eigen::VectorXd delta = Eigen::LDLT<Eigen::MatrixXd>(normal).solve(score);
            if (!delta.allFinite())
                throw SolverError("logistic fit diverged at iteration " + std::to_string(iter));
            coefficients_ += delta;
            if (delta.cwiseAbs().maxCoeff() < tolerance_) return;
        }
        throw SolverError("logistic fit did not converge after " +
                          std::to_string(max_iterations_) + " iterations");
    }

    Eigen::VectorXd predict(const Eigen::MatrixXd& design) const override {
        return sigmoid(design * coefficients_).matrix();
    }

    std::string id() const override { return "logistic_irls"; }

  private:
    static Eigen::ArrayXd sigmoid(const Eigen::VectorXd& eta) {
        return 1.0 / (1.0 + (-eta.array()).exp());
    }

    double ridge_;
    int max_iterations_;
    double tolerance_;
    Eigen::VectorXd coefficients_;
};

}  // namespace

double weighted_pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& w) {
    if (x.size() != y.size() || x.size() != w.size())
        throw DataError("correlation inputs must have equal length");
    check_weights(w, x.size());

    const double mx = w.dot(x);
    const double my = w.dot(y);
    Eigen::ArrayXd dx = x.array() - mx;
    Eigen::ArrayXd dy = y.array() - my;
    const double vx = (w.array() * dx.square()).sum();
    const double vy = (w.array() * dy.square()).sum();
    const double scale_x = 1.0 + std::abs(mx);
    const double scale_y = 1.0 + std::abs(my);
    if (std::sqrt(vx) <= 1e-12 * scale_x) throw DataError("zero weighted variance in x");
    if (std::sqrt(vy) <= 1e-12 * scale_y) throw DataError("zero weighted variance in y");
    const double cov = (w.array() * dx * dy).sum();
    return std::clamp(cov / std::sqrt(vx * vy), -1.0, 1.0);
}

CorrelationReport correlation_report(const ObservationTable& table,
                                     const Eigen::VectorXd& weights, const StratumIndex& idx) {
    const Eigen::Index n = table.n();
    const Eigen::Index p = table.p();
    check_weights(weights, n);
    if (static_cast<Eigen::Index>(idx.row_assignment.size()) != n)
        throw DataError("stratum index does not cover the data rows");

    const Eigen::VectorXd uniform =
        Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));

    CorrelationReport report;
    double sum_unweighted = 0.0;
    double sum_weighted = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
        FeatureCorrelation c;
        c.feature = table.feature_names[static_cast<std::size_t>(j)];
        c.unweighted = weighted_pearson(table.features.col(j), table.treatment, uniform);
        c.weighted = weighted_pearson(table.features.col(j), table.treatment, weights);
        sum_unweighted += std::abs(c.unweighted);
        sum_weighted += std::abs(c.weighted);
        report.per_feature.push_back(std::move(c));
    }
    report.average_absolute_unweighted = sum_unweighted / static_cast<double>(p);
    report.average_absolute_weighted = sum_weighted / static_cast<double>(p);

    for (std::size_t s = 0; s < idx.size(); ++s) {
        const std::vector<Eigen::Index>& rows = idx.rows_by_stratum[s];
        const auto ns = static_cast<Eigen::Index>(rows.size());
        Eigen::VectorXd t(ns), w(ns);
        for (Eigen::Index i = 0; i < ns; ++i) {
            t[i] = table.treatment[rows[i]];
            w[i] = weights[rows[i]];
        }
        const double mass = w.sum();
        if (mass <= 0.0) throw DataError("no weight mass in " + to_string(idx.strata[s]));
        w /= mass;
        const Eigen::VectorXd uniform_s =
            Eigen::VectorXd::Constant(ns, 1.0 / static_cast<double>(ns));

        // A stratum whose doses are all equal (typically all zero) has no
        // defined feature-dose correlation; it is omitted from the
        // per-stratum section instead of failing the whole report.
        auto dose_varies = [&](const Eigen::VectorXd& wv) {
            const double mean = wv.dot(t);
            const double var = (wv.array() * (t.array() - mean).square()).sum();
            return std::sqrt(var) > 1e-12 * (1.0 + std::abs(mean));
        };
        if (!dose_varies(uniform_s) || !dose_varies(w)) continue;

        StratumCorrelation sc;
        sc.key = idx.strata[s];
        double su = 0.0, sw = 0.0;
        Eigen::VectorXd x(ns);
        for (Eigen::Index j = 0; j < p; ++j) {
            for (Eigen::Index i = 0; i < ns; ++i) x[i] = table.features(rows[i], j);
            FeatureCorrelation c;
            c.feature = table.feature_names[static_cast<std::size_t>(j)];
            c.unweighted = weighted_pearson(x, t, uniform_s);
            c.weighted = weighted_pearson(x, t, w);
            su += std::abs(c.unweighted);
            sw += std::abs(c.weighted);
            sc.per_feature.push_back(std::move(c));
        }
        sc.average_absolute_unweighted = su / static_cast<double>(p);
        sc.average_absolute_weighted = sw / static_cast<double>(p);
        report.per_stratum.push_back(std::move(sc));
    }
    return report;
}

UpliftModel fit_s_learner(const ObservationTable& table, const Eigen::VectorXd& weights,
                          const SLearnerSpec& spec) {
    check_sample_weights(weights, table.n());

    Eigen::VectorXd target;
    std::shared_ptr<BaseLearner> learner;
    if (spec.learner == SLearnerSpec::Learner::linear) {
        target = table.outcome;
        learner = std::make_shared<RidgeLinearLearner>(spec.ridge);
    } else {
        if (!table.outcome_binary)
            throw DataError("binary outcome column required for the logistic learner");
        if (((table.outcome_binary->array() != 0) && (table.outcome_binary->array() != 1)).any())
            throw DataError("binary outcome must contain only 0 and 1");
        target = table.outcome_binary->cast<double>();
        learner = std::make_shared<LogisticLearner>(spec.ridge, spec.max_iterations,
                                                    spec.tolerance);
    }

    learner->fit(learner_design(table, table.treatment), target, weights);

    UpliftModel model;
    model.base_learner = learner->id();
    model.learner = std::move(learner);
    double positive_sum = 0.0;
    Eigen::Index positive_count = 0;
    for (Eigen::Index i = 0; i < table.n(); ++i) {
        if (table.treatment[i] > 0.0) {
            positive_sum += table.treatment[i];
            ++positive_count;
        }
    }
    model.reference_dose = positive_count > 0 ? positive_sum / positive_count : 0.0;
    return model;
}

Eigen::VectorXd predict_uplift(const UpliftModel& model, const ObservationTable& table,
                               double dose) {
    if (!model.learner) throw ConfigError("uplift model is not fitted");
    const Eigen::VectorXd at_dose =
        model.learner->predict(learner_design(table, Eigen::VectorXd::Constant(table.n(), dose)));
    const Eigen::VectorXd at_zero =
        model.learner->predict(learner_design(table, Eigen::VectorXd::Zero(table.n())));
    return at_dose - at_zero;
}

double auuc(const Eigen::VectorXd& uplift_scores, const Eigen::VectorXi& outcome,
            const Eigen::VectorXi& treated) {
    const Eigen::Index n = uplift_scores.size();
    if (outcome.size() != n || treated.size() != n)
        throw DataError("uplift inputs must have equal length");
    if (n == 0) throw DataError("empty uplift input");
    const Eigen::Index treated_count = (treated.array() != 0).count();
    if (treated_count == 0 || treated_count == n)
        throw DataError("need both treated and control rows");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        if (uplift_scores[a] != uplift_scores[b]) return uplift_scores[a] > uplift_scores[b];
        return a < b;
    });

    double treated_outcomes = 0.0, control_outcomes = 0.0;
    Eigen::Index treated_seen = 0, control_seen = 0;
    double last_defined = 0.0;
    double total = 0.0;
    for (Eigen::Index k = 1; k <= n; ++k) {
        const Eigen::Index row = order[static_cast<std::size_t>(k - 1)];
        if (treated[row] != 0) {
            treated_outcomes += outcome[row];
            ++treated_seen;
        } else {
            control_outcomes += outcome[row];
            ++control_seen;
        }
        if (treated_seen > 0 && control_seen > 0) {
            last_defined = (treated_outcomes / treated_seen - control_outcomes / control_seen) *
                           static_cast<double>(k);
        }
        total += last_defined;
    }
    return total / (static_cast<double>(n) * static_cast<double>(n));
}

double auc(const Eigen::VectorXd& scores, const Eigen::VectorXi& labels) {
    const Eigen::Index n = scores.size();
    if (labels.size() != n) throw DataError("score and label counts differ");
    const Eigen::Index positives = (labels.array() != 0).count();
    if (positives == 0 || positives == n)
        throw DataError("need both positive and negative labels");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return scores[a] < scores[b]; });

    // Tie groups share the average rank (1-based).
    double positive_rank_sum = 0.0;
    Eigen::Index i = 0;
    while (i < n) {
        Eigen::Index j = i;
        while (j < n && scores[order[static_cast<std::size_t>(j)]] ==
                            scores[order[static_cast<std::size_t>(i)]])
            ++j;
        const double rank = 0.5 * static_cast<double>(i + 1 + j);
        for (Eigen::Index k = i; k < j; ++k)
            if (labels[order[static_cast<std::size_t>(k)]] != 0) positive_rank_sum += rank;
        i = j;
    }
    const auto pos = static_cast<double>(positives);
    const auto neg = static_cast<double>(n - positives);
    return (positive_rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

MetricsReport metrics_report(const ObservationTable& table, const Eigen::VectorXd& weights,
                             const std::string& method_label, double dose) {
    if (!table.outcome_binary)
        throw DataError("binary outcome column required for uplift metrics");

    SLearnerSpec spec;
    spec.learner = SLearnerSpec::Learner::logistic;
    UpliftModel model = fit_s_learner(table, weights, spec);
    const double scoring_dose = std::isnan(dose) ? model.reference_dose : dose;

    const Eigen::VectorXd scores = predict_uplift(model, table, scoring_dose);
    Eigen::VectorXi treated(table.n());
    for (Eigen::Index i = 0; i < table.n(); ++i)
        treated[i] = table.treatment[i] > 0.0 ? 1 : 0;

    MetricsReport report;
    report.method = method_label;
    report.dose = scoring_dose;
    report.auuc = auuc(scores, *table.outcome_binary, treated);
    report.auc =
        auc(model.learner->predict(learner_design(table, table.treatment)), *table.outcome_binary);
    return report;
}

}  // namespace tseb
