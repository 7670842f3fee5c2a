#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "tseb/errors.hpp"
#include "tseb/preprocess.hpp"
#include "tseb/table.hpp"

using namespace tseb;

namespace {

// Four points whose sample covariance (divisor n-1) is exactly diag(4, 1).
Eigen::MatrixXd diag_variance_data() {
    const double a = std::sqrt(6.0);
    const double b = std::sqrt(1.5);
    Eigen::MatrixXd x(4, 2);
    x << a, 0.0, -a, 0.0, 0.0, b, 0.0, -b;
    return x;
}

StratumIndex hand_index(std::vector<std::vector<Eigen::Index>> groups, Eigen::Index n) {
    StratumIndex idx;
    idx.rows_by_stratum = std::move(groups);
    idx.row_assignment.assign(static_cast<std::size_t>(n), 0);
    for (std::size_t s = 0; s < idx.rows_by_stratum.size(); ++s) {
        idx.strata.push_back({"", "cell" + std::to_string(s)});
        for (Eigen::Index row : idx.rows_by_stratum[s])
            idx.row_assignment[static_cast<std::size_t>(row)] = static_cast<std::int32_t>(s);
    }
    idx.time_count = 1;
    idx.space_count = static_cast<int>(idx.rows_by_stratum.size());
    return idx;
}

}  // namespace

TEST_CASE("standardize matches the hand-computed three-point case") {
    Eigen::VectorXd v(3);
    v << 1.0, 2.0, 3.0;
    const Eigen::VectorXd z = standardize(v);
    const double s = std::sqrt(1.5);
    CHECK(z[0] == doctest::Approx(-s).epsilon(1e-12));
    CHECK(z[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(z[2] == doctest::Approx(s).epsilon(1e-12));
    CHECK(z.mean() == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(z.squaredNorm() / 3.0 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("standardize is idempotent") {
    Eigen::VectorXd v(5);
    v << -2.0, 0.5, 3.1, 7.0, -4.4;
    const Eigen::VectorXd once = standardize(v);
    const Eigen::VectorXd twice = standardize(once);
    CHECK((twice - once).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("standardize rejects degenerate input") {
    Eigen::VectorXd constant = Eigen::VectorXd::Constant(4, 3.25);
    CHECK_THROWS_WITH_AS(standardize(constant, "dose"),
                         doctest::Contains("zero variance in dose"), DataError);
    Eigen::VectorXd single(1);
    single << 1.0;
    CHECK_THROWS_AS(standardize(single), DataError);
    Eigen::VectorXd bad(3);
    bad << 1.0, std::nan(""), 2.0;
    CHECK_THROWS_AS(standardize(bad), DataError);
}

TEST_CASE("pca on diagonal-covariance data retains by explained variance") {
    const Eigen::MatrixXd x = diag_variance_data();

    const PcaModel one = pca_fit(x, 0.79);
    CHECK(one.retained_k == 1);
    REQUIRE(one.explained_variance.size() == 1);
    CHECK(one.explained_variance[0] == doctest::Approx(4.0).epsilon(1e-10));
    CHECK(one.total_variance == doctest::Approx(5.0).epsilon(1e-10));
    CHECK(one.explained_variance[0] / one.total_variance == doctest::Approx(0.8).epsilon(1e-10));
    // Sign convention: the dominant axis points along +x1.
    CHECK(one.component_directions(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(one.component_directions(0, 1) == doctest::Approx(0.0).epsilon(1e-10));

    const PcaModel both = pca_fit(x, 1.0);
    CHECK(both.retained_k == 2);
    CHECK(both.explained_variance[0] == doctest::Approx(4.0).epsilon(1e-10));
    CHECK(both.explained_variance[1] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(both.explained_variance[0] >= both.explained_variance[1]);
}

TEST_CASE("transform of the fitting data reproduces the eigenvalues as variances") {
    const Eigen::MatrixXd x = diag_variance_data();
    const PcaModel model = pca_fit(x, 1.0);
    const Eigen::MatrixXd proj = pca_transform(model, x);
    REQUIRE(proj.cols() == 2);
    const double n1 = static_cast<double>(x.rows() - 1);
    for (int c = 0; c < 2; ++c) {
        Eigen::VectorXd col = proj.col(c);
        const double var = (col.array() - col.mean()).square().sum() / n1;
        CHECK(var == doctest::Approx(model.explained_variance[c]).epsilon(1e-8));
    }
}

TEST_CASE("single retained component aligns with the dominant axis") {
    const Eigen::MatrixXd x = diag_variance_data();
    const PcaModel model = pca_fit(x, 0.79);
    const Eigen::VectorXd proj = pca_transform(model, x).col(0);
    const Eigen::VectorXd axis = x.col(0);
    const double num = (proj.array() - proj.mean()).matrix().dot((axis.array() - axis.mean()).matrix());
    const double den = std::sqrt((proj.array() - proj.mean()).square().sum() *
                                 (axis.array() - axis.mean()).square().sum());
    CHECK(std::abs(num / den) > 0.999);
}

TEST_CASE("transform maps data at the column means to zero") {
    const PcaModel model = pca_fit(diag_variance_data(), 1.0);
    const Eigen::MatrixXd at_mean = Eigen::MatrixXd::Zero(3, 2);
    const Eigen::MatrixXd proj = pca_transform(model, at_mean);
    CHECK(proj.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("full-rank projection reconstructs the input") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd x(30, 4);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = gauss(rng);

    const PcaModel model = pca_fit(x, 1.0);
    REQUIRE(model.retained_k == 4);
    const Eigen::MatrixXd proj = pca_transform(model, x);
    const Eigen::MatrixXd rebuilt =
        (proj * model.component_directions).rowwise() + model.column_means.transpose();
    CHECK((rebuilt - x).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("pca validates its inputs") {
    const Eigen::MatrixXd x = diag_variance_data();
    CHECK_THROWS_AS(pca_fit(x, 0.0), ConfigError);
    CHECK_THROWS_AS(pca_fit(x, -0.5), ConfigError);
    CHECK_THROWS_AS(pca_fit(x, 1.5), ConfigError);
    CHECK_THROWS_AS(pca_fit(Eigen::MatrixXd::Zero(1, 2), 0.95), DataError);

    const PcaModel model = pca_fit(x, 1.0);
    CHECK_THROWS_AS(pca_transform(model, Eigen::MatrixXd::Zero(5, 3)), DataError);
}

TEST_CASE("treatment moments expand then standardize each power") {
    Eigen::VectorXd t(3);
    t << 0.0, 1.0, 2.0;

    const Eigen::MatrixXd first = treatment_moments(t, 1);
    REQUIRE(first.cols() == 1);
    const Eigen::VectorXd direct = standardize(t);
    CHECK((first.col(0) - direct).cwiseAbs().maxCoeff() < 1e-14);

    const Eigen::MatrixXd second = treatment_moments(t, 2);
    REQUIRE(second.cols() == 2);
    CHECK((second.col(0) - direct).cwiseAbs().maxCoeff() < 1e-14);
    // Squares [0,1,4]: mean 5/3, population sd sqrt(26)/3.
    const double root26 = std::sqrt(26.0);
    CHECK(second(0, 1) == doctest::Approx(-5.0 / root26).epsilon(1e-12));
    CHECK(second(1, 1) == doctest::Approx(-2.0 / root26).epsilon(1e-12));
    CHECK(second(2, 1) == doctest::Approx(7.0 / root26).epsilon(1e-12));
}

TEST_CASE("treatment moments commute with row permutations") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss;
    Eigen::VectorXd t(12);
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = gauss(rng);

    std::vector<Eigen::Index> perm = {5, 2, 9, 0, 11, 7, 1, 10, 3, 8, 6, 4};
    Eigen::VectorXd shuffled(t.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) shuffled[i] = t[perm[i]];

    const Eigen::MatrixXd base = treatment_moments(t, 3);
    const Eigen::MatrixXd moved = treatment_moments(shuffled, 3);
    for (Eigen::Index i = 0; i < t.size(); ++i)
        CHECK((moved.row(i) - base.row(perm[i])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("treatment moments reject degenerate configurations") {
    Eigen::VectorXd t(3);
    t << 0.0, 1.0, 2.0;
    CHECK_THROWS_AS(treatment_moments(t, 0), ConfigError);
    CHECK_THROWS_AS(treatment_moments(Eigen::VectorXd::Constant(4, 2.0), 1), DataError);
}

TEST_CASE("block design counts rows as 1 + d + strata * k * (1 + interactions)") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> gauss;

    Eigen::VectorXd t4(4);
    t4 << 0.1, 0.7, 0.3, 0.9;
    Eigen::MatrixXd c4(4, 1);
    c4 << 1.0, 2.0, 3.0, 4.0;
    const BlockDesign small =
        build_block_design(c4, treatment_moments(t4, 1), hand_index({{0, 1, 2, 3}}, 4));
    CHECK(small.rows() == 4);
    CHECK(small.cols() == 4);
    CHECK(small.full_support_rows == 2);
    REQUIRE(small.row_labels.size() == 4);
    CHECK(small.row_labels[0].kind == ConstraintKind::weight_sum);
    CHECK(small.row_labels[1].kind == ConstraintKind::treatment_moment);
    CHECK(small.row_labels[2].kind == ConstraintKind::stratum_feature);
    CHECK(small.row_labels[3].kind == ConstraintKind::stratum_interaction);
    CHECK(small.targets[0] == 1.0);
    CHECK(small.targets.tail(3).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(small.stratum_row_ranges.size() == 1);
    CHECK(small.stratum_row_ranges[0] == std::pair<int, int>{2, 4});

    Eigen::VectorXd t8(8);
    Eigen::MatrixXd c8(8, 2);
    for (Eigen::Index i = 0; i < 8; ++i) {
        t8[i] = gauss(rng);
        c8(i, 0) = gauss(rng);
        c8(i, 1) = gauss(rng);
    }
    const StratumIndex idx = hand_index({{0, 2, 4, 6}, {1, 3, 5, 7}}, 8);
    const BlockDesign two = build_block_design(c8, treatment_moments(t8, 2), idx);
    CHECK(two.rows() == 11);
    CHECK(two.full_support_rows == 3);

    const BlockDesign wide =
        build_block_design(c8, treatment_moments(t8, 2), idx, Eigen::VectorXd(), 2);
    CHECK(wide.rows() == 15);
}

TEST_CASE("block design stratum rows vanish outside their stratum") {
    std::mt19937_64 rng(22);
    std::normal_distribution<double> gauss;
    Eigen::VectorXd t(10);
    Eigen::MatrixXd c(10, 2);
    for (Eigen::Index i = 0; i < 10; ++i) {
        t[i] = gauss(rng);
        c(i, 0) = gauss(rng);
        c(i, 1) = gauss(rng);
    }
    const StratumIndex idx = hand_index({{0, 3, 4, 8}, {1, 2, 5, 6, 7, 9}}, 10);
    const BlockDesign design = build_block_design(c, treatment_moments(t, 1), idx);
    const Eigen::MatrixXd dense(design.g_matrix);

    REQUIRE(design.stratum_row_ranges.size() == 2);
    for (std::size_t s = 0; s < design.stratum_row_ranges.size(); ++s) {
        std::vector<bool> inside(10, false);
        for (Eigen::Index col : design.stratum_columns[s]) inside[static_cast<std::size_t>(col)] = true;
        const auto [begin, end] = design.stratum_row_ranges[s];
        for (int r = begin; r < end; ++r)
            for (Eigen::Index col = 0; col < 10; ++col)
                if (!inside[static_cast<std::size_t>(col)]) CHECK(dense(r, col) == 0.0);
    }
}

TEST_CASE("uniform weights satisfy the standardized constraints up front") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> gauss;
    Eigen::VectorXd t(16);
    Eigen::MatrixXd c(16, 2);
    for (Eigen::Index i = 0; i < 16; ++i) {
        t[i] = gauss(rng);
        c(i, 0) = gauss(rng);
        c(i, 1) = gauss(rng);
    }
    const StratumIndex idx = hand_index({{0, 1, 2, 3, 4, 5, 6, 7}, {8, 9, 10, 11, 12, 13, 14, 15}}, 16);
    const BlockDesign design = build_block_design(c, treatment_moments(t, 2), idx);

    CHECK(design.base_weights.size() == 16);
    CHECK((design.base_weights.array() == 1.0 / 16.0).all());
    CHECK(design.base_weights.sum() == 1.0);

    const Eigen::VectorXd residual = design.g_matrix * design.base_weights - design.targets;
    for (Eigen::Index r = 0; r < design.rows(); ++r) {
        const ConstraintKind kind = design.row_labels[static_cast<std::size_t>(r)].kind;
        if (kind == ConstraintKind::weight_sum) CHECK(std::abs(residual[r]) < 1e-12);
        if (kind == ConstraintKind::treatment_moment) CHECK(std::abs(residual[r]) < 1e-10);
        if (kind == ConstraintKind::stratum_feature) CHECK(std::abs(residual[r]) < 1e-10);
    }
}

TEST_CASE("interaction rows are the feature rows gated by the first moment") {
    Eigen::VectorXd t(4);
    t << 0.1, 0.7, 0.3, 0.9;
    Eigen::MatrixXd c(4, 1);
    c << 1.0, 2.0, 3.0, 4.0;
    const Eigen::MatrixXd moments = treatment_moments(t, 1);
    const BlockDesign design = build_block_design(c, moments, hand_index({{0, 1, 2, 3}}, 4));
    const Eigen::MatrixXd dense(design.g_matrix);

    for (Eigen::Index col = 0; col < 4; ++col)
        CHECK(dense(3, col) == doctest::Approx(dense(2, col) * moments(col, 0)).epsilon(1e-14));
}

TEST_CASE("block design validates weights and interaction counts") {
    Eigen::VectorXd t(4);
    t << 0.1, 0.7, 0.3, 0.9;
    Eigen::MatrixXd c(4, 1);
    c << 1.0, 2.0, 3.0, 4.0;
    const Eigen::MatrixXd moments = treatment_moments(t, 2);
    const StratumIndex idx = hand_index({{0, 1, 2, 3}}, 4);

    CHECK_THROWS_WITH_AS(build_block_design(c, moments, idx, Eigen::VectorXd::Ones(3)),
                         doctest::Contains("base weight count"), DataError);
    Eigen::VectorXd negative(4);
    negative << 1.0, -1.0, 1.0, 1.0;
    CHECK_THROWS_AS(build_block_design(c, moments, idx, negative), DataError);
    CHECK_THROWS_AS(build_block_design(c, moments, idx, Eigen::VectorXd(), 0), ConfigError);
    CHECK_THROWS_AS(build_block_design(c, moments, idx, Eigen::VectorXd(), 3), ConfigError);

    const BlockDesign scaled =
        build_block_design(c, moments, idx, Eigen::VectorXd::Constant(4, 7.0));
    CHECK((scaled.base_weights.array() == 0.25).all());

    CHECK_THROWS_AS(
        build_block_design(Eigen::MatrixXd::Ones(4, 1), moments, idx), DataError);
}
