#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mvcat {

struct NormalizedExpression {
    Eigen::MatrixXd values;            // subjects x retained genes
    std::vector<Eigen::Index> kept;    // retained gene columns, increasing
};

/// log((c + 1) / q) with q the subject's 75th percentile count over the
/// retained genes. Genes whose 75th percentile count across subjects is below
/// min_q75 are dropped first. Percentiles interpolate linearly between order
/// statistics.
NormalizedExpression expression_normalize(const Eigen::MatrixXd& counts, double min_q75 = 20.0,
                                          const std::vector<std::string>& subject_names = {});

/// Linear-interpolation quantile of the values (q in [0, 1]).
double quantile(std::vector<double> values, double q);

struct FStatistic {
    double f = 0.0;
    double between = 0.0;
    double within = 0.0;
};

/// One-way ANOVA F statistic of each column over the groups in `group`
/// (0-based; negative entries are ignored). Groups with fewer than two
/// members are left out with a warning. Zero within-group spread with
/// nonzero between-group spread gives +inf.
std::vector<FStatistic> anova_f(const Eigen::MatrixXd& x, const std::vector<int>& group);

/// Columns ranked by F (ties: larger between-group sum of squares, then
/// lower column index); the top keep_top are then pruned greedily, dropping
/// any column whose absolute correlation with an already kept column exceeds
/// max_abs_corr. Returned in rank order.
std::vector<Eigen::Index> screen_features(const Eigen::MatrixXd& x, const std::vector<int>& group, int keep_top,
                                          double max_abs_corr);

}  // namespace mvcat
