#pragma once

#include <Eigen/Dense>

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "tseb/table.hpp"

namespace tseb {

// Pearson correlation under normalized sample weights (population moments).
double weighted_pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& w);

struct FeatureCorrelation {
    std::string feature;
    double unweighted = 0.0;
    double weighted = 0.0;
};

struct StratumCorrelation {
    StratumKey key;
    std::vector<FeatureCorrelation> per_feature;
    double average_absolute_unweighted = 0.0;
    double average_absolute_weighted = 0.0;
};

// Feature-treatment correlations before and after weighting, overall and
// within each stratum (stratum weights renormalized to sum 1).
struct CorrelationReport {
    std::vector<FeatureCorrelation> per_feature;
    double average_absolute_unweighted = 0.0;
    double average_absolute_weighted = 0.0;
    std::vector<StratumCorrelation> per_stratum;
};

CorrelationReport correlation_report(const ObservationTable& table,
                                     const Eigen::VectorXd& weights, const StratumIndex& idx);

// Base model of the S-learner: fit on [1, X, T] with per-row sample weights,
// predict a score for arbitrary treatment columns.
class BaseLearner {
  public:
    virtual ~BaseLearner() = default;
    virtual void fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& target,
                     const Eigen::VectorXd& sample_weights) = 0;
    virtual Eigen::VectorXd predict(const Eigen::MatrixXd& design) const = 0;
    virtual std::string id() const = 0;
};

struct SLearnerSpec {
    enum class Learner { linear, logistic };
    Learner learner = Learner::linear;
    double ridge = 1e-6;      // never applied to the intercept column
    int max_iterations = 100;  // IRLS cap for the logistic learner
    double tolerance = 1e-8;   // IRLS step tolerance
};

struct UpliftModel {
    std::shared_ptr<const BaseLearner> learner;
    std::string base_learner;
    double reference_dose = 0.0;  // mean positive treatment seen at fit time
};

// Single-model uplift estimator on (features, treatment) -> outcome with the
// balancing weights as sample weights. The logistic learner targets the
// binary outcome companion; the linear learner targets the continuous one.
UpliftModel fit_s_learner(const ObservationTable& table, const Eigen::VectorXd& weights,
                          const SLearnerSpec& spec = {});

// Prediction at treatment = dose minus prediction at treatment = 0, per row.
Eigen::VectorXd predict_uplift(const UpliftModel& model, const ObservationTable& table,
                               double dose);

// Area under the cumulative uplift curve: rows sorted by score descending
// (ties by row id), cum_uplift(k) = (mean treated outcome - mean control
// outcome over the top k) * k; prefixes with an empty group repeat the last
// defined value (0 before any). AUUC = sum_k cum_uplift(k) / n^2.
double auuc(const Eigen::VectorXd& uplift_scores, const Eigen::VectorXi& outcome,
            const Eigen::VectorXi& treated);

// Mann-Whitney AUC, ties counted one half.
double auc(const Eigen::VectorXd& scores, const Eigen::VectorXi& labels);

struct MetricsReport {
    std::string method;
    double auuc = 0.0;
    double auc = 0.0;
    double dose = 0.0;
};

// Fits the logistic S-learner under the given weights and scores AUUC (uplift
// at the dose, treated = T > 0) and AUC (prediction at the observed T).
// NaN dose means the mean positive treatment.
MetricsReport metrics_report(const ObservationTable& table, const Eigen::VectorXd& weights,
                             const std::string& method_label,
                             double dose = std::numeric_limits<double>::quiet_NaN());

}  // namespace tseb
