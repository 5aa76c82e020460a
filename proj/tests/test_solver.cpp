#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mvcat/error.hpp"
#include "mvcat/solver.hpp"

using namespace mvcat;

namespace {

// Group-lasso multinomial fit by plain accelerated proximal gradient with a
// fixed step from the Lipschitz bound; shares no code with the solver.
Eigen::MatrixXd reference_group_lasso(const Dataset& d, double gamma, int iterations) {
    const Eigen::Index p = d.predictors();
    const Eigen::Index T = d.layout.total_classes();
    const double n = static_cast<double>(d.rows());
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(d.x);
    const double step = n / std::pow(svd.singularValues()(0), 2);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(p, T), prev = b;
    double t_prev = 1.0;
    for (int it = 0; it < iterations; ++it) {
        const double t = (1.0 + std::sqrt(1.0 + 4.0 * t_prev * t_prev)) / 2.0;
        const Eigen::MatrixXd z = b + ((t_prev - 1.0) / t) * (b - prev);
        Eigen::MatrixXd eta = d.x * z;
        for (Eigen::Index i = 0; i < eta.rows(); ++i) {
            const double m = eta.row(i).maxCoeff();
            eta.row(i) = (eta.row(i).array() - m).exp();
            eta.row(i) /= eta.row(i).sum();
        }
        Eigen::MatrixXd next = z - step * d.x.transpose() * (eta - d.y) / n;
        for (Eigen::Index m = 1; m < p; ++m) {
            const double norm = next.row(m).norm();
            next.row(m) *= norm > 0.0 ? std::max(0.0, 1.0 - step * gamma / norm) : 0.0;
        }
        prev = b;
        b = next;
        t_prev = t;
    }
    return b;
}

FitConfig tight(double lambda, double gamma) {
    FitConfig c;
    c.lambda = lambda;
    c.gamma = gamma;
    c.tol = 1e-12;
    c.max_iterations = 20000;
    return c;
}

}  // namespace

TEST_CASE("large gamma gives the intercept-only multinomial fit") {
    std::mt19937_64 rng(101);
    const CategoryLayout layout({3, 2});
    const Dataset d = testing::random_dataset(150, 5, layout, rng);
    const OddsDesign design = build_design(layout);
    const double top = gamma_max(d, design, LossKind::Full, Penalty::LogOddsGroup);
    const FitResult r = fit(d, design, tight(0.5, 10.0 * top));
    CHECK(r.beta.bottomRows(5).norm() == 0.0);
    CHECK(r.partition.irrelevant.size() == 5);
    const Eigen::RowVectorXd freq = d.y.colwise().mean();
    const Eigen::MatrixXd p = joint_probabilities(r.beta, d.x);
    CHECK((p.row(0) - freq).cwiseAbs().maxCoeff() < 1e-4);
    CHECK(std::abs(r.beta.row(0).sum()) < 1e-12);

    // Just above gamma_max the predictor rows stay at zero; just below they do not.
    CHECK(fit(d, design, tight(0.0, 1.001 * top)).beta.bottomRows(5).norm() == 0.0);
    CHECK(fit(d, design, tight(0.0, 0.9 * top)).beta.bottomRows(5).norm() > 0.0);
}

TEST_CASE("kkt residual of zero rows under a large gamma") {
    std::mt19937_64 rng(102);
    const CategoryLayout layout({2, 3});
    const Dataset d = testing::random_dataset(80, 4, layout, rng);
    const OddsDesign design = build_design(layout);
    const FitResult intercept = fit_intercept_only(d, design, LossKind::Full);
    const double top = gamma_max(d, design, LossKind::Full, Penalty::LogOddsGroup);
    CHECK(kkt_residual(intercept.beta, d, design, 0.3, 1.01 * top) < 1e-6);
    CHECK(kkt_residual(intercept.beta, d, design, 0.0, 0.5 * top) > 0.0);
}

TEST_CASE("zero lambda reduces to the group lasso") {
    std::mt19937_64 rng(103);
    const CategoryLayout layout({3, 2});
    const Dataset d = testing::random_dataset(60, 4, layout, rng);
    const OddsDesign design = build_design(layout);
    const double gamma = 0.2 * gamma_max(d, design, LossKind::Full, Penalty::LogOddsGroup);
    const FitResult r = fit(d, design, tight(0.0, gamma));
    const Eigen::MatrixXd ref = reference_group_lasso(d, gamma, 40000);
    FitConfig c = tight(0.0, gamma);
    CHECK(std::abs(r.objective() - objective_value(d, design, ref, c)) < 1e-8);
}

TEST_CASE("optimality, monotonicity and acceleration agreement") {
    std::mt19937_64 rng(104);
    const CategoryLayout layout({3, 2});
    for (int trial = 0; trial < 3; ++trial) {
        const Dataset d = testing::random_dataset(200, 10, layout, rng, 0.5);
        const OddsDesign design = build_design(layout);
        const double top = gamma_max(d, design, LossKind::Full, Penalty::LogOddsGroup);
        FitConfig c = tight(0.05 * top, 0.1 * top);
        c.tol = 1e-10;
        const FitResult fast = fit(d, design, c);
        CHECK(fast.converged);
        CHECK(kkt_residual(fast.beta, d, design, c.lambda, c.gamma) < 1e-4);

        c.accelerate = false;
        c.max_iterations = 50000;
        const FitResult slow = fit(d, design, c);
        for (std::size_t i = 1; i < slow.objective_trace.size(); ++i) {
            CHECK(slow.objective_trace[i] <= slow.objective_trace[i - 1]);
        }
        CHECK(std::abs(fast.objective() - slow.objective()) < 1e-6);

        // Nonzero predictor rows are centered; the intercept sums to zero.
        for (Eigen::Index m = 1; m < fast.beta.rows(); ++m) {
            if (fast.beta.row(m).norm() > 0.0) CHECK(std::abs(fast.beta.row(m).mean()) < 1e-6);
        }
        CHECK(std::abs(fast.beta.row(0).sum()) < 1e-10);
        const Partition p = classify_predictors(design, fast.beta, 1e-8);
        CHECK(p.log_odds == fast.partition.log_odds);
        CHECK(p.marginal == fast.partition.marginal);
        CHECK(p.irrelevant == fast.partition.irrelevant);
    }
}

TEST_CASE("fits are deterministic") {
    std::mt19937_64 rng(105);
    const CategoryLayout layout({2, 2});
    const Dataset d = testing::random_dataset(100, 6, layout, rng);
    const OddsDesign design = build_design(layout);
    FitConfig c;
    c.lambda = 0.01;
    c.gamma = 0.02;
    const FitResult a = fit(d, design, c);
    const FitResult b = fit(d, design, c);
    CHECK(a.objective_trace == b.objective_trace);
    CHECK(a.beta == b.beta);
}

TEST_CASE("observed-data objective without missing responses equals the full fit") {
    std::mt19937_64 rng(106);
    const CategoryLayout layout({3, 2});
    const Dataset d = testing::random_dataset(120, 5, layout, rng);
    const OddsDesign design = build_design(layout);
    FitConfig c = tight(0.02, 0.03);
    const FitResult full = fit(d, design, c);
    c.objective = LossKind::Observed;
    const FitResult observed = fit(d, design, c);
    CHECK(std::abs(full.objective() - observed.objective()) < 1e-8);
}

TEST_CASE("semi-supervised fit converges with missing responses") {
    std::mt19937_64 rng(107);
    const CategoryLayout layout({3, 2});
    Dataset d = testing::random_dataset(120, 5, layout, rng);
    Eigen::MatrixXi y = d.responses;
    for (Eigen::Index i = 0; i < 30; ++i) y(i, 1) = kMissing;
    for (Eigen::Index i = 30; i < 50; ++i) y(i, 0) = kMissing;
    d = make_dataset(d.raw_x, y, layout);
    const OddsDesign design = build_design(layout);
    FitConfig c = tight(0.02, 0.03);
    c.objective = LossKind::Observed;
    c.tol = 1e-10;
    const FitResult r = fit(d, design, c);
    CHECK(r.converged);
    CHECK(kkt_residual(r.beta, d, design, c.lambda, c.gamma, LossKind::Observed) < 1e-4);
    c.objective = LossKind::Full;
    CHECK_THROWS_AS(fit(d, design, c), DomainError);
}

TEST_CASE("very large lambda factorizes the joint distribution") {
    std::mt19937_64 rng(108);
    const CategoryLayout layout({3, 2});
    const Dataset d = testing::random_dataset(150, 5, layout, rng);
    const OddsDesign design = build_design(layout);
    FitConfig c = tight(1e6, 1e-4);
    c.penalize_intercept_log_odds = true;
    const FitResult r = fit(d, design, c);
    double worst = 0.0;
    for (Eigen::Index m = 0; m < r.beta.rows(); ++m) worst = std::max(worst, row_log_odds(design, r.beta.row(m).transpose()).norm());
    CHECK(worst < 1e-6);
    const Eigen::MatrixXd x = testing::normal_matrix(20, 6, rng);
    Eigen::MatrixXd xd = x;
    xd.col(0).setOnes();
    const Eigen::MatrixXd p = joint_probabilities(r.beta, xd);
    const Eigen::MatrixXd m1 = marginal_probabilities(p, layout, 0);
    const Eigen::MatrixXd m2 = marginal_probabilities(p, layout, 1);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (int k = 0; k < 2; ++k)
            for (int j = 0; j < 3; ++j) CHECK(std::abs(p(i, k * 3 + j) - m1(i, j) * m2(i, k)) < 1e-6);
    }
}

TEST_CASE("entrywise l1 penalty") {
    std::mt19937_64 rng(109);
    const CategoryLayout layout({2, 2});
    const Dataset d = testing::random_dataset(100, 4, layout, rng);
    const OddsDesign design = build_design(layout);
    FitConfig c = tight(0.0, 0.0);
    c.penalty = Penalty::EntrywiseL1;
    c.gamma = gamma_max(d, design, LossKind::Full, Penalty::EntrywiseL1) * 1.001;
    CHECK(fit(d, design, c).beta.bottomRows(4).norm() == 0.0);
    c.gamma *= 0.3;
    const FitResult r = fit(d, design, c);
    CHECK(r.beta.bottomRows(4).norm() > 0.0);
    // Entrywise soft thresholding leaves exact zeros inside nonzero rows too.
    CHECK((r.beta.bottomRows(4).array() == 0.0).count() > 0);
}

TEST_CASE("warm-started path matches cold starts") {
    std::mt19937_64 rng(110);
    const CategoryLayout layout({3, 2});
    const Dataset d = testing::random_dataset(100, 6, layout, rng);
    const OddsDesign design = build_design(layout);
    const TuningGrid grid = default_grid(d, design, LossKind::Full, 4, 1e-2, 3, 1e-2, 1e1);
    FitConfig c;
    c.tol = 1e-10;
    c.max_iterations = 20000;
    const PathResult path = fit_path(d, design, grid, c);
    REQUIRE(path.fits.size() == 4);
    for (std::size_t g = 0; g < 4; ++g) {
        for (std::size_t l = 0; l < 3; ++l) {
            FitConfig single = c;
            single.gamma = path.grid.gammas[g];
            single.lambda = path.grid.lambda(g, l);
            const FitResult cold = fit(d, design, single);
            CHECK(path.fits[g][l].objective() <= cold.objective() + 1e-6);
            if (g > 0) CHECK(path.grid.gammas[g] < path.grid.gammas[g - 1]);
        }
    }
    // Soft check: irrelevant-row counts along gamma at the first lambda multiple.
    std::string counts;
    for (std::size_t g = 0; g < 4; ++g) counts += std::to_string(path.fits[g][0].partition.irrelevant.size()) + " ";
    MESSAGE("irrelevant rows as gamma decreases: " << counts);

    TuningGrid one;
    one.gammas = {0.05};
    one.lambda_factors = {0.01};
    one.lambda_relative = false;
    FitConfig single = c;
    single.gamma = 0.05;
    single.lambda = 0.01;
    CHECK(fit_path(d, design, one, c).fits[0][0].beta == fit(d, design, single).beta);
}

TEST_CASE("solver input validation") {
    std::mt19937_64 rng(111);
    const Dataset d = testing::random_dataset(30, 2, CategoryLayout({2, 2}), rng);
    const OddsDesign other = build_bivariate_design(3, 2);
    CHECK_THROWS_AS(fit(d, other, FitConfig{}), DomainError);
    const OddsDesign design = build_bivariate_design(2, 2);
    FitConfig bad;
    bad.backtrack = 1.0;
    CHECK_THROWS_AS(fit(d, design, bad), DomainError);
    bad = FitConfig{};
    bad.gamma = -1.0;
    CHECK_THROWS_AS(fit(d, design, bad), DomainError);
    CHECK_THROWS_AS(fit(d, design, FitConfig{}, Eigen::MatrixXd::Zero(2, 4)), DomainError);
    TuningGrid empty;
    CHECK_THROWS_AS(fit_path(d, design, empty, FitConfig{}), DomainError);

    FitConfig capped;
    capped.max_iterations = 2;
    capped.tol = 1e-15;
    const FitResult r = fit(d, design, capped);
    CHECK_FALSE(r.converged);
    CHECK(r.iterations == 2);
}
