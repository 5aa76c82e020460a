#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mvcat {

/// Category counts of the G categorical responses. Joint classes are
/// enumerated in mixed radix with the first response varying fastest, so for
/// two responses class f(j,k) = (k-1)J + j.
class CategoryLayout {
public:
    CategoryLayout() = default;
    explicit CategoryLayout(std::vector<int> cardinalities);

    int responses() const { return static_cast<int>(cardinalities_.size()); }
    int categories(int response) const { return cardinalities_[static_cast<std::size_t>(response)]; }
    const std::vector<int>& cardinalities() const { return cardinalities_; }
    int total_classes() const { return total_; }

    /// 0-based class of 0-based categories.
    int index(std::span<const int> categories) const;
    /// 0-based categories of a 0-based class.
    std::vector<int> categories_of(int joint_class) const;
    /// Multiplier of response r in the mixed-radix expansion.
    int stride(int response) const { return strides_[static_cast<std::size_t>(response)]; }

    bool operator==(const CategoryLayout& other) const { return cardinalities_ == other.cardinalities_; }

    std::string to_string() const;

private:
    std::vector<int> cardinalities_;
    std::vector<int> strides_;
    int total_ = 0;
};

/// 1-based joint class of 1-based categories. Throws DomainError naming the
/// offending response when a category is out of range.
int class_index(const CategoryLayout& layout, std::span<const int> categories);

/// Log odds ratio contrast matrix D (T x xi) together with the spectral
/// quantities the proximal operator needs. Immutable after construction.
class OddsDesign {
public:
    OddsDesign(CategoryLayout layout, Eigen::MatrixXi contrasts, std::vector<std::string> labels);

    const CategoryLayout& layout() const { return layout_; }
    const Eigen::MatrixXi& contrasts() const { return contrasts_; }
    const Eigen::MatrixXd& contrasts_real() const { return contrasts_real_; }
    const std::vector<std::string>& labels() const { return labels_; }

    int classes() const { return layout_.total_classes(); }
    Eigen::Index columns() const { return contrasts_.cols(); }
    Eigen::Index rank() const { return singular_sq_.size(); }

    /// Squared nonzero singular values, ascending.
    const Eigen::VectorXd& singular_sq() const { return singular_sq_; }
    /// Left singular vectors (T x r) matching singular_sq().
    const Eigen::MatrixXd& left_vectors() const { return left_vectors_; }
    /// I - D (D'D)^- D'.
    const Eigen::MatrixXd& proj_null() const { return proj_null_; }
    /// (D'D)^- D'  (xi x T).
    const Eigen::MatrixXd& pinv_map() const { return pinv_map_; }

    /// True when every nonzero squared singular value is the same number
    /// (JK for two responses); the Lagrange parameter then has a closed form.
    bool uniform_spectrum() const { return uniform_; }

private:
    CategoryLayout layout_;
    Eigen::MatrixXi contrasts_;
    Eigen::MatrixXd contrasts_real_;
    std::vector<std::string> labels_;
    Eigen::VectorXd singular_sq_;
    Eigen::MatrixXd left_vectors_;
    Eigen::MatrixXd proj_null_;
    Eigen::MatrixXd pinv_map_;
    bool uniform_ = true;
};

OddsDesign build_bivariate_design(int J, int K);
OddsDesign build_multiresponse_design(const std::vector<int>& cardinalities);

/// Dispatches on the number of responses. A single response yields an empty
/// contrast matrix (no log odds ratios exist), which is what separate
/// per-response fits use.
OddsDesign build_design(const CategoryLayout& layout);

/// D' * beta_row.
Eigen::VectorXd row_log_odds(const OddsDesign& design, const Eigen::Ref<const Eigen::VectorXd>& beta_row);

/// Predictor partition over rows 2..p (0-based rows 1..p-1).
struct Partition {
    std::vector<int> log_odds;     // rows moving log odds ratios
    std::vector<int> marginal;     // rows moving only the marginals
    std::vector<int> irrelevant;   // all-zero rows
};

Partition classify_predictors(const OddsDesign& design, const Eigen::MatrixXd& beta, double tol);

}  // namespace mvcat
