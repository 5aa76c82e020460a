#include "mvcat/odds_design.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "mvcat/error.hpp"

namespace mvcat {

CategoryLayout::CategoryLayout(std::vector<int> cardinalities) : cardinalities_(std::move(cardinalities)) {
    if (cardinalities_.empty()) {
        throw DomainError("category layout needs at least one response");
    }
    strides_.resize(cardinalities_.size());
    int total = 1;
    for (std::size_t r = 0; r < cardinalities_.size(); ++r) {
        if (cardinalities_[r] < 2) {
            throw DomainError("response " + std::to_string(r + 1) + " has " + std::to_string(cardinalities_[r]) +
                              " categories; at least 2 are required");
        }
        strides_[r] = total;
        total *= cardinalities_[r];
    }
    total_ = total;
}

int CategoryLayout::index(std::span<const int> categories) const {
    int idx = 0;
    for (std::size_t r = 0; r < cardinalities_.size(); ++r) {
        idx += categories[r] * strides_[r];
    }
    return idx;
}

std::vector<int> CategoryLayout::categories_of(int joint_class) const {
    std::vector<int> out(cardinalities_.size());
    for (std::size_t r = 0; r < cardinalities_.size(); ++r) {
        out[r] = joint_class % cardinalities_[r];
        joint_class /= cardinalities_[r];
    }
    return out;
}

std::string CategoryLayout::to_string() const {
    std::ostringstream os;
    for (std::size_t r = 0; r < cardinalities_.size(); ++r) {
        if (r) os << ',';
        os << cardinalities_[r];
    }
    return os.str();
}

int class_index(const CategoryLayout& layout, std::span<const int> categories) {
    if (static_cast<int>(categories.size()) != layout.responses()) {
        throw DomainError("expected " + std::to_string(layout.responses()) + " categories, got " +
                          std::to_string(categories.size()));
    }
    std::vector<int> zero_based(categories.size());
    for (int r = 0; r < layout.responses(); ++r) {
        const int c = categories[static_cast<std::size_t>(r)];
        if (c < 1 || c > layout.categories(r)) {
            throw DomainError("category " + std::to_string(c) + " out of range 1.." +
                              std::to_string(layout.categories(r)) + " for response " + std::to_string(r + 1));
        }
        zero_based[static_cast<std::size_t>(r)] = c - 1;
    }
    return layout.index(zero_based) + 1;
}

OddsDesign::OddsDesign(CategoryLayout layout, Eigen::MatrixXi contrasts, std::vector<std::string> labels)
    : layout_(std::move(layout)), contrasts_(std::move(contrasts)), labels_(std::move(labels)) {
    const int T = layout_.total_classes();
    if (contrasts_.rows() != T) {
        throw DomainError("contrast matrix must have one row per joint class");
    }
    contrasts_real_ = contrasts_.cast<double>();

    // Left singular vectors of D are eigenvectors of DD' (T x T), which is
    // never larger than D'D and carries the same nonzero spectrum.
    if (contrasts_.cols() == 0) {
        singular_sq_.resize(0);
        left_vectors_.resize(T, 0);
    } else {
        const Eigen::MatrixXd gram = contrasts_real_ * contrasts_real_.transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
        const Eigen::VectorXd& values = eig.eigenvalues();
        const double cutoff = 1e-10 * values.maxCoeff();
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < values.size(); ++i) {
            if (values(i) > cutoff) keep.push_back(i);
        }
        singular_sq_.resize(static_cast<Eigen::Index>(keep.size()));
        left_vectors_.resize(T, static_cast<Eigen::Index>(keep.size()));
        for (std::size_t l = 0; l < keep.size(); ++l) {
            singular_sq_(static_cast<Eigen::Index>(l)) = values(keep[l]);
            left_vectors_.col(static_cast<Eigen::Index>(l)) = eig.eigenvectors().col(keep[l]);
        }
    }

    proj_null_ = Eigen::MatrixXd::Identity(T, T) - left_vectors_ * left_vectors_.transpose();
    // D^+ = D'(DD')^+ = (D'D)^- D'
    const Eigen::MatrixXd gram_pinv =
        left_vectors_ * singular_sq_.cwiseInverse().asDiagonal() * left_vectors_.transpose();
    pinv_map_ = contrasts_real_.transpose() * gram_pinv;

    if (singular_sq_.size() > 0) {
        const double lo = singular_sq_.minCoeff();
        const double hi = singular_sq_.maxCoeff();
        uniform_ = (hi - lo) <= 1e-9 * hi;
    }
}

namespace {

std::string pair_label(int a, int b) { return std::to_string(a + 1) + std::to_string(b + 1); }

}  // namespace

OddsDesign build_bivariate_design(int J, int K) {
    if (J < 2 || K < 2) {
        throw DomainError("bivariate design needs J >= 2 and K >= 2");
    }
    return build_multiresponse_design({J, K});
}

OddsDesign build_multiresponse_design(const std::vector<int>& cardinalities) {
    if (cardinalities.size() < 2) {
        throw DomainError("multi-response design needs at least two responses");
    }
    CategoryLayout layout(cardinalities);
    const int G = layout.responses();
    const int T = layout.total_classes();

    std::vector<Eigen::VectorXi> columns;
    std::vector<std::string> labels;
    std::vector<int> cats(static_cast<std::size_t>(G), 0);

    for (int a = 0; a < G; ++a) {
        for (int b = a + 1; b < G; ++b) {
            // Configurations of the remaining responses, first varying fastest.
            std::vector<int> others;
            int n_other = 1;
            for (int r = 0; r < G; ++r) {
                if (r != a && r != b) {
                    others.push_back(r);
                    n_other *= layout.categories(r);
                }
            }
            const int Ka = layout.categories(a);
            const int Kb = layout.categories(b);
            for (int j = 0; j < Ka; ++j) {
                for (int j2 = j + 1; j2 < Ka; ++j2) {
                    for (int k = 0; k < Kb; ++k) {
                        for (int k2 = k + 1; k2 < Kb; ++k2) {
                            for (int config = 0; config < n_other; ++config) {
                                int rest = config;
                                for (int r : others) {
                                    cats[static_cast<std::size_t>(r)] = rest % layout.categories(r);
                                    rest /= layout.categories(r);
                                }
                                auto at = [&](int ca, int cb) {
                                    cats[static_cast<std::size_t>(a)] = ca;
                                    cats[static_cast<std::size_t>(b)] = cb;
                                    return layout.index(cats);
                                };
                                Eigen::VectorXi col = Eigen::VectorXi::Zero(T);
                                col(at(j, k)) += 1;
                                col(at(j2, k2)) += 1;
                                col(at(j2, k)) -= 1;
                                col(at(j, k2)) -= 1;
                                columns.push_back(std::move(col));

                                std::string label = pair_label(j, j2) + "|" + pair_label(k, k2);
                                if (G > 2) {
                                    label = "R" + std::to_string(a + 1) + "R" + std::to_string(b + 1) + ":" + label;
                                    for (int r : others) {
                                        label += ";R" + std::to_string(r + 1) + "=" +
                                                 std::to_string(cats[static_cast<std::size_t>(r)] + 1);
                                    }
                                }
                                labels.push_back(std::move(label));
                            }
                        }
                    }
                }
            }
        }
    }

    Eigen::MatrixXi D(T, static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) {
        D.col(static_cast<Eigen::Index>(c)) = columns[c];
    }
    return OddsDesign(std::move(layout), std::move(D), std::move(labels));
}

OddsDesign build_design(const CategoryLayout& layout) {
    if (layout.responses() == 1) {
        return OddsDesign(layout, Eigen::MatrixXi(layout.total_classes(), 0), {});
    }
    return build_multiresponse_design(layout.cardinalities());
}

Eigen::VectorXd row_log_odds(const OddsDesign& design, const Eigen::Ref<const Eigen::VectorXd>& beta_row) {
    if (beta_row.size() != design.classes()) {
        throw DomainError("row length " + std::to_string(beta_row.size()) + " does not match " +
                          std::to_string(design.classes()) + " joint classes");
    }
    return design.contrasts_real().transpose() * beta_row;
}

Partition classify_predictors(const OddsDesign& design, const Eigen::MatrixXd& beta, double tol) {
    if (beta.cols() != design.classes()) {
        throw DomainError("coefficient matrix has wrong number of columns");
    }
    Partition part;
    for (Eigen::Index m = 1; m < beta.rows(); ++m) {
        const Eigen::VectorXd row = beta.row(m).transpose();
        if (row.norm() <= tol) {
            part.irrelevant.push_back(static_cast<int>(m));
        } else if (row_log_odds(design, row).norm() <= tol) {
            part.marginal.push_back(static_cast<int>(m));
        } else {
            part.log_odds.push_back(static_cast<int>(m));
        }
    }
    return part;
}

}  // namespace mvcat
