#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvcat/odds_design.hpp"

namespace mvcat {

inline constexpr int kMissing = -1;

/// Per-column affine map applied to raw predictors before fitting. Columns
/// are centered and scaled so that ||X_j||_2^2 = n on the data it was fit on.
struct Standardization {
    Eigen::VectorXd center;
    Eigen::VectorXd scale;

    static Standardization fit(const Eigen::MatrixXd& raw, const std::vector<std::string>& names = {});
    static Standardization identity(Eigen::Index columns);

    Eigen::Index columns() const { return center.size(); }

    /// Standardized predictors with the constant column prepended (n x p).
    Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& raw) const;

    /// Coefficients expressed on the raw predictor scale.
    Eigen::MatrixXd to_original_scale(const Eigen::MatrixXd& beta) const;
};

/// Training data. Responses are stored both as 0-based categories (kMissing
/// for unobserved) and as an n x T indicator of the joint classes consistent
/// with what was observed: a single 1 for a fully observed row, a slice for a
/// partially observed one.
struct Dataset {
    CategoryLayout layout;
    Eigen::MatrixXd raw_x;
    Eigen::MatrixXd x;
    Eigen::MatrixXi responses;
    Eigen::MatrixXd y;
    Standardization standardization;
    std::vector<std::string> predictor_names;
    Eigen::Index dropped_rows = 0;

    Eigen::Index rows() const { return x.rows(); }
    Eigen::Index predictors() const { return x.cols(); }
    bool row_complete(Eigen::Index i) const;
    bool fully_observed() const;
    std::vector<bool> observed(int response) const;
};

/// Builds a dataset, dropping rows with every response missing and fitting a
/// fresh standardization on the retained rows.
Dataset make_dataset(const Eigen::MatrixXd& raw_x, const Eigen::MatrixXi& responses, const CategoryLayout& layout,
                     std::vector<std::string> predictor_names = {});

/// Same, but applies a fixed standardization (e.g. one learned on training folds).
Dataset make_dataset(const Eigen::MatrixXd& raw_x, const Eigen::MatrixXi& responses, const CategoryLayout& layout,
                     const Standardization& standardization, std::vector<std::string> predictor_names = {});

/// Row subset; standardization is refit on the subset.
Dataset subset(const Dataset& data, std::span<const Eigen::Index> rows);

/// Row subset standardized with a given record.
Dataset subset(const Dataset& data, std::span<const Eigen::Index> rows, const Standardization& standardization);

using ProbabilityMatrix = Eigen::MatrixXd;

/// Row-wise softmax of X * beta with per-row max subtraction.
ProbabilityMatrix joint_probabilities(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& x);

/// Complete-data negative log-likelihood divided by n.
double nll(const Eigen::MatrixXd& beta, const Dataset& data);
/// (1/n) X'(P - Y).
Eigen::MatrixXd gradient(const Eigen::MatrixXd& beta, const Dataset& data);

/// Observed-data negative log-likelihood divided by n: joint terms for
/// complete rows, marginal terms for partially observed rows.
double observed_nll(const Eigen::MatrixXd& beta, const Dataset& data);
/// -(1/n) X'Q with Q built from the joint, marginal and conditional probabilities.
Eigen::MatrixXd observed_gradient(const Eigen::MatrixXd& beta, const Dataset& data);

struct MarginalConditionals {
    Eigen::MatrixXd marginal1;       // n x J
    Eigen::MatrixXd marginal2;       // n x K
    Eigen::MatrixXd cond2_given1;    // n x T, entry f(j,k) = P(Y2=k | Y1=j)
    Eigen::MatrixXd cond1_given2;    // n x T, entry f(j,k) = P(Y1=j | Y2=k)
};

MarginalConditionals conditional_and_marginal_probabilities(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& x,
                                                            const CategoryLayout& layout);

/// Marginal pmf of one response, summing the joint over the others (n x K_r).
Eigen::MatrixXd marginal_probabilities(const ProbabilityMatrix& joint, const CategoryLayout& layout, int response);

enum class LossKind { Full, Observed };

/// Loss evaluator owned by a single fit; holds its own workspace.
class Loss {
public:
    Loss(const Dataset& data, LossKind kind);

    double value(const Eigen::MatrixXd& beta);
    double value_and_gradient(const Eigen::MatrixXd& beta, Eigen::MatrixXd& grad);

    const Dataset& data() const { return *data_; }

private:
    double evaluate(const Eigen::MatrixXd& beta, Eigen::MatrixXd* grad);

    const Dataset* data_;
    LossKind kind_;
    Eigen::MatrixXd eta_;
    Eigen::MatrixXd resid_;
};

}  // namespace mvcat
