#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvcat/odds_design.hpp"
#include "mvcat/solver.hpp"

namespace mvcat {

using Rng = std::mt19937_64;

/// Independent generator for (seed, replicate, stream); any one substream can
/// be reproduced without drawing the others.
Rng substream(std::uint64_t seed, std::uint64_t replicate, std::uint64_t stream);

struct SimConfig {
    int model_id = 1;
    int p = 100;  // coefficient rows including the intercept
    int n_train = 300;
    int n_valid = 500;
    int n_test = 10000;
    int J = 3;
    int K = 2;
    int replicates = 20;
    std::uint64_t seed = 1;

    // Tuning grid used for every fitted method.
    int n_gamma = 25;
    double gamma_ratio = 1e-4;
    int n_lambda = 15;
    double lambda_lo = 1e-3;
    double lambda_hi = 1e3;
    double tuning_tol = 1e-6;
    int tuning_max_iterations = 2000;

    void validate() const;
};

struct TrueModel {
    Eigen::MatrixXd beta_star;  // p x JK, row 0 is the intercept
    Partition partition;
};

/// n x p draws with covariance 0.5^|s-t|, via the AR(1) recursion.
Eigen::MatrixXd gen_predictors(int n, int p, Rng& rng);

/// Coefficients for simulation model 1-4; ten predictor rows are nonzero.
TrueModel gen_beta(int model_id, int p, const CategoryLayout& layout, Rng& rng);

/// One 0-based joint class per row drawn from softmax(X beta) by inverse CDF
/// on a single uniform.
Eigen::VectorXi sample_classes(const Eigen::MatrixXd& beta_star, const Eigen::MatrixXd& x, Rng& rng);

/// Same draw returned as an n x T indicator.
Eigen::MatrixXd sample_responses(const Eigen::MatrixXd& beta_star, const Eigen::MatrixXd& x, Rng& rng);

/// Splits 0-based joint classes into 0-based per-response categories (n x G).
Eigen::MatrixXi responses_from_classes(const Eigen::VectorXi& classes, const CategoryLayout& layout);

enum class Method { LOMult, GMult, LMult, Sep, Oracle };

std::string method_name(Method m);
Method parse_method(const std::string& name);
std::vector<Method> all_methods();

struct ExperimentRow {
    int replicate = 0;  // 1-based
    Method method = Method::LOMult;
    double joint_err = 0.0;
    double marg_err_1 = 0.0;
    double marg_err_2 = 0.0;
    double kl = 0.0;
    double frobenius_err = 0.0;
    std::string chosen_lambda;
    std::string chosen_gamma;
    double seconds = 0.0;
};

/// Runs every replicate and method; rows are ordered by replicate, then method
/// in the order given, independent of the thread count.
std::vector<ExperimentRow> run_experiment(const SimConfig& sim, const std::vector<Method>& methods, int threads = 1);

/// One replicate; exposed for tests and timing.
std::vector<ExperimentRow> run_replicate(const SimConfig& sim, const std::vector<Method>& methods, int replicate);

void write_results_csv(std::ostream& out, const std::vector<ExperimentRow>& rows);

}  // namespace mvcat
