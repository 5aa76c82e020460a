#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mvcat/likelihood.hpp"
#include "mvcat/solver.hpp"

namespace mvcat {

struct MetricReport {
    double joint_misclassification = 0.0;
    std::vector<double> marginal_misclassification;
    double deviance = 0.0;
    std::optional<double> kl_divergence;
    Eigen::Index rows = 0;
};

/// Row-wise argmax, lowest index winning ties (0-based).
std::vector<int> argmax_rows(const Eigen::MatrixXd& probabilities);

/// Predicted 0-based joint class per row of raw predictors.
std::vector<int> predict_joint(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& raw_x,
                               const Standardization& standardization);

/// Predicted 0-based category of one response from the summed marginal.
std::vector<int> predict_marginal(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& raw_x,
                                  const Standardization& standardization, const CategoryLayout& layout,
                                  int response);

/// Mean over rows of sum_c truth_c log(truth_c / est_c); est floored at 1e-300.
double kl_divergence(const ProbabilityMatrix& truth, const ProbabilityMatrix& est);

/// Metrics of fitted probabilities against the observed responses in `data`.
/// Joint error uses complete rows; marginal error of response r uses rows
/// where r is observed; deviance uses each row's observed-data likelihood.
MetricReport evaluate(const ProbabilityMatrix& fitted, const Dataset& data,
                      const ProbabilityMatrix* truth = nullptr);

/// Convenience: probabilities of `beta` on `data.raw_x` under `standardization`.
ProbabilityMatrix predict_probabilities(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& raw_x,
                                        const Standardization& standardization);

struct Selection {
    double lambda = 0.0;
    double gamma = 0.0;
    FitResult fit;
    std::vector<std::vector<Eigen::Index>> errors;  // misclassified validation rows, [gamma][lambda]
    TuningGrid grid;                                 // sorted grid the errors refer to
};

/// Fits the path on `train`, scores joint misclassification on `valid`
/// (re-standardized with the training record) and returns the minimizer;
/// ties go to the larger gamma, then the larger lambda.
Selection select_by_validation(const Dataset& train, const Dataset& valid, const OddsDesign& design,
                               const TuningGrid& grid, const FitConfig& config);

/// Deterministic fold labels: rows are ordered by key, shuffled with `seed`
/// and dealt round-robin into k folds.
std::vector<int> assign_folds(const std::vector<std::int64_t>& keys, int k, std::uint64_t seed);

struct CrossValidation {
    double lambda = 0.0;
    double gamma = 0.0;
    std::vector<MetricReport> folds;                 // at the selected pair
    std::vector<std::vector<double>> error_rate;     // aggregate joint error, [gamma][lambda]
    TuningGrid grid;
    std::vector<int> fold_of_row;
};

/// k-fold cross validation of the joint misclassification rate. Each fold is
/// standardized on its own training rows. Row keys default to 0..n-1.
CrossValidation cross_validate(const Dataset& data, const OddsDesign& design, const TuningGrid& grid, int k,
                               std::uint64_t seed, const FitConfig& config, int threads = 1,
                               const std::vector<std::int64_t>& row_keys = {});

}  // namespace mvcat
