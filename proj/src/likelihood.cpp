#include "mvcat/likelihood.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

#include "mvcat/error.hpp"

namespace mvcat {

namespace {

std::string column_name(const std::vector<std::string>& names, Eigen::Index j) {
    if (static_cast<std::size_t>(j) < names.size()) return "'" + names[static_cast<std::size_t>(j)] + "'";
    return std::to_string(j + 1);
}

void require_shapes(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& x) {
    if (beta.rows() != x.cols()) {
        throw DomainError("coefficient matrix has " + std::to_string(beta.rows()) + " rows but design has " +
                          std::to_string(x.cols()) + " columns");
    }
}

void require_shapes(const Eigen::MatrixXd& beta, const Dataset& data) {
    require_shapes(beta, data.x);
    if (beta.cols() != data.layout.total_classes()) {
        throw DomainError("coefficient matrix has " + std::to_string(beta.cols()) + " columns but layout has " +
                          std::to_string(data.layout.total_classes()) + " joint classes");
    }
}

// log sum_c exp(eta_c) over the row, with the row max returned for reuse.
double row_log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& eta, Eigen::Index row, double& max_out) {
    const double m = eta.maxCoeff();
    if (!std::isfinite(m)) {
        throw NumericError("non-finite linear predictor in row " + std::to_string(row + 1));
    }
    max_out = m;
    return m + std::log((eta.array() - m).exp().sum());
}

// log of the summed probability over the classes flagged in `consistent`.
double subset_log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& eta,
                          const Eigen::Ref<const Eigen::RowVectorXd>& consistent) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < eta.size(); ++c) {
        if (consistent(c) > 0.0) m = std::max(m, eta(c));
    }
    double s = 0.0;
    for (Eigen::Index c = 0; c < eta.size(); ++c) {
        if (consistent(c) > 0.0) s += std::exp(eta(c) - m);
    }
    return m + std::log(s);
}

void require_full(const Dataset& data) {
    if (!data.fully_observed()) {
        throw DomainError("dataset has unobserved responses; use the observed-data likelihood");
    }
}

}  // namespace

Standardization Standardization::fit(const Eigen::MatrixXd& raw, const std::vector<std::string>& names) {
    Standardization s;
    const auto n = static_cast<double>(raw.rows());
    s.center = raw.colwise().mean().transpose();
    s.scale.resize(raw.cols());
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
        const double ss = (raw.col(j).array() - s.center(j)).square().sum();
        const double sd = std::sqrt(ss / n);
        if (!(sd > 1e-12 * (1.0 + std::abs(s.center(j))))) {
            throw DataError("predictor column " + column_name(names, j) + " is constant and cannot be standardized");
        }
        s.scale(j) = sd;
    }
    return s;
}

Standardization Standardization::identity(Eigen::Index columns) {
    return {Eigen::VectorXd::Zero(columns), Eigen::VectorXd::Ones(columns)};
}

Eigen::MatrixXd Standardization::design_matrix(const Eigen::MatrixXd& raw) const {
    if (raw.cols() != columns()) {
        throw DomainError("expected " + std::to_string(columns()) + " predictor columns, got " +
                          std::to_string(raw.cols()));
    }
    Eigen::MatrixXd x(raw.rows(), raw.cols() + 1);
    x.col(0).setOnes();
    x.rightCols(raw.cols()) =
        ((raw.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array()).matrix();
    return x;
}

Eigen::MatrixXd Standardization::to_original_scale(const Eigen::MatrixXd& beta) const {
    if (beta.rows() != columns() + 1) {
        throw DomainError("coefficient rows do not match standardization");
    }
    Eigen::MatrixXd out(beta.rows(), beta.cols());
    out.bottomRows(columns()) = beta.bottomRows(columns()).array().colwise() / scale.array();
    out.row(0) = beta.row(0) - center.transpose() * out.bottomRows(columns());
    return out;
}

bool Dataset::row_complete(Eigen::Index i) const { return (responses.row(i).array() != kMissing).all(); }

bool Dataset::fully_observed() const { return (responses.array() != kMissing).all(); }

std::vector<bool> Dataset::observed(int response) const {
    std::vector<bool> out(static_cast<std::size_t>(responses.rows()));
    for (Eigen::Index i = 0; i < responses.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = responses(i, response) != kMissing;
    }
    return out;
}

namespace {

Dataset assemble(const Eigen::MatrixXd& raw_x, const Eigen::MatrixXi& responses, const CategoryLayout& layout,
                 const Standardization* fixed, std::vector<std::string> names) {
    if (raw_x.rows() != responses.rows()) {
        throw DataError("predictor and response tables have different row counts (" + std::to_string(raw_x.rows()) +
                        " vs " + std::to_string(responses.rows()) + ")");
    }
    if (responses.cols() != layout.responses()) {
        throw DataError("response table has " + std::to_string(responses.cols()) + " columns but layout has " +
                        std::to_string(layout.responses()) + " responses");
    }
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < responses.rows(); ++i) {
        bool any = false;
        for (int r = 0; r < layout.responses(); ++r) {
            const int c = responses(i, r);
            if (c == kMissing) continue;
            if (c < 0 || c >= layout.categories(r)) {
                throw DataError("row " + std::to_string(i + 1) + ", response " + std::to_string(r + 1) +
                                ": category " + std::to_string(c + 1) + " outside 1.." +
                                std::to_string(layout.categories(r)));
            }
            any = true;
        }
        if (any) keep.push_back(i);
    }
    const auto dropped = responses.rows() - static_cast<Eigen::Index>(keep.size());
    if (dropped > 0) {
        spdlog::warn("dropped {} row(s) with every response missing", dropped);
    }
    if (keep.empty()) {
        throw DataError("no rows left after dropping rows with every response missing");
    }

    Dataset d;
    d.layout = layout;
    d.predictor_names = std::move(names);
    d.dropped_rows = dropped;
    const auto n = static_cast<Eigen::Index>(keep.size());
    d.raw_x.resize(n, raw_x.cols());
    d.responses.resize(n, responses.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        d.raw_x.row(i) = raw_x.row(keep[static_cast<std::size_t>(i)]);
        d.responses.row(i) = responses.row(keep[static_cast<std::size_t>(i)]);
    }
    if (!d.raw_x.allFinite()) {
        throw DataError("predictor table contains non-finite values");
    }
    d.standardization = fixed ? *fixed : Standardization::fit(d.raw_x, d.predictor_names);
    d.x = d.standardization.design_matrix(d.raw_x);

    const int T = layout.total_classes();
    d.y = Eigen::MatrixXd::Zero(n, T);
    for (int c = 0; c < T; ++c) {
        const auto cats = layout.categories_of(c);
        for (Eigen::Index i = 0; i < n; ++i) {
            bool consistent = true;
            for (int r = 0; r < layout.responses() && consistent; ++r) {
                const int obs = d.responses(i, r);
                consistent = obs == kMissing || obs == cats[static_cast<std::size_t>(r)];
            }
            if (consistent) d.y(i, c) = 1.0;
        }
    }
    return d;
}

}  // namespace

Dataset make_dataset(const Eigen::MatrixXd& raw_x, const Eigen::MatrixXi& responses, const CategoryLayout& layout,
                     std::vector<std::string> predictor_names) {
    return assemble(raw_x, responses, layout, nullptr, std::move(predictor_names));
}

Dataset make_dataset(const Eigen::MatrixXd& raw_x, const Eigen::MatrixXi& responses, const CategoryLayout& layout,
                     const Standardization& standardization, std::vector<std::string> predictor_names) {
    return assemble(raw_x, responses, layout, &standardization, std::move(predictor_names));
}

namespace {

std::pair<Eigen::MatrixXd, Eigen::MatrixXi> take_rows(const Dataset& data, std::span<const Eigen::Index> rows) {
    Eigen::MatrixXd raw(static_cast<Eigen::Index>(rows.size()), data.raw_x.cols());
    Eigen::MatrixXi resp(static_cast<Eigen::Index>(rows.size()), data.responses.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        raw.row(static_cast<Eigen::Index>(i)) = data.raw_x.row(rows[i]);
        resp.row(static_cast<Eigen::Index>(i)) = data.responses.row(rows[i]);
    }
    return {std::move(raw), std::move(resp)};
}

}  // namespace

Dataset subset(const Dataset& data, std::span<const Eigen::Index> rows) {
    auto [raw, resp] = take_rows(data, rows);
    return make_dataset(raw, resp, data.layout, data.predictor_names);
}

Dataset subset(const Dataset& data, std::span<const Eigen::Index> rows, const Standardization& standardization) {
    auto [raw, resp] = take_rows(data, rows);
    return make_dataset(raw, resp, data.layout, standardization, data.predictor_names);
}

ProbabilityMatrix joint_probabilities(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& x) {
    require_shapes(beta, x);
    ProbabilityMatrix p = x * beta;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        double m = 0.0;
        const double lse = row_log_sum_exp(p.row(i), i, m);
        p.row(i) = (p.row(i).array() - lse).exp();
    }
    return p;
}

double nll(const Eigen::MatrixXd& beta, const Dataset& data) {
    require_full(data);
    require_shapes(beta, data);
    const Eigen::MatrixXd eta = data.x * beta;
    double total = 0.0;
    for (Eigen::Index i = 0; i < eta.rows(); ++i) {
        double m = 0.0;
        const double lse = row_log_sum_exp(eta.row(i), i, m);
        total += data.y.row(i).dot(eta.row(i)) - lse;
    }
    return -total / static_cast<double>(eta.rows());
}

Eigen::MatrixXd gradient(const Eigen::MatrixXd& beta, const Dataset& data) {
    require_full(data);
    require_shapes(beta, data);
    const ProbabilityMatrix p = joint_probabilities(beta, data.x);
    return data.x.transpose() * (p - data.y) / static_cast<double>(data.rows());
}

double observed_nll(const Eigen::MatrixXd& beta, const Dataset& data) {
    require_shapes(beta, data);
    const Eigen::MatrixXd eta = data.x * beta;
    double total = 0.0;
    for (Eigen::Index i = 0; i < eta.rows(); ++i) {
        double m = 0.0;
        const double lse = row_log_sum_exp(eta.row(i), i, m);
        if (data.y.row(i).sum() == 0.0) {
            throw DomainError("row " + std::to_string(i + 1) + " has no observed response");
        }
        total += subset_log_sum_exp(eta.row(i), data.y.row(i)) - lse;
    }
    return -total / static_cast<double>(eta.rows());
}

Eigen::MatrixXd observed_gradient(const Eigen::MatrixXd& beta, const Dataset& data) {
    require_shapes(beta, data);
    const Eigen::Index n = data.rows();
    const ProbabilityMatrix p = joint_probabilities(beta, data.x);
    Eigen::MatrixXd q(n, p.cols());

    if (data.layout.responses() == 2) {
        const int J = data.layout.categories(0);
        const int K = data.layout.categories(1);
        const MarginalConditionals mc = conditional_and_marginal_probabilities(beta, data.x, data.layout);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int y1 = data.responses(i, 0);
            const int y2 = data.responses(i, 1);
            if (y1 == kMissing && y2 == kMissing) {
                throw DomainError("row " + std::to_string(i + 1) + " has no observed response");
            }
            for (int k = 0; k < K; ++k) {
                for (int j = 0; j < J; ++j) {
                    const int c = k * J + j;
                    if (y1 != kMissing && y2 != kMissing) {
                        q(i, c) = ((y1 == j && y2 == k) ? 1.0 : 0.0) - p(i, c);
                    } else if (y1 != kMissing) {
                        const double ind = y1 == j ? 1.0 : 0.0;
                        q(i, c) = mc.cond2_given1(i, c) * (1.0 - mc.marginal1(i, j)) * ind - p(i, c) * (1.0 - ind);
                    } else {
                        const double ind = y2 == k ? 1.0 : 0.0;
                        q(i, c) = mc.cond1_given2(i, c) * (1.0 - mc.marginal2(i, k)) * ind - p(i, c) * (1.0 - ind);
                    }
                }
            }
        }
    } else {
        // General layouts: d/d eta_c of -log sum_{c' in S} pi_c' is pi_c - 1[c in S] pi_c / pi_S.
        for (Eigen::Index i = 0; i < n; ++i) {
            const double mass = data.y.row(i).dot(p.row(i));
            if (data.y.row(i).sum() == 0.0) {
                throw DomainError("row " + std::to_string(i + 1) + " has no observed response");
            }
            q.row(i) = data.y.row(i).cwiseProduct(p.row(i)) / mass - p.row(i);
        }
    }
    return -data.x.transpose() * q / static_cast<double>(n);
}

MarginalConditionals conditional_and_marginal_probabilities(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& x,
                                                            const CategoryLayout& layout) {
    if (layout.responses() != 2) {
        throw DomainError("conditional probabilities are defined for bivariate layouts");
    }
    require_shapes(beta, x);
    const int J = layout.categories(0);
    const int K = layout.categories(1);
    const Eigen::MatrixXd eta = x * beta;
    const ProbabilityMatrix p = joint_probabilities(beta, x);
    const Eigen::Index n = x.rows();

    MarginalConditionals out;
    out.marginal1 = marginal_probabilities(p, layout, 0);
    out.marginal2 = marginal_probabilities(p, layout, 1);
    out.cond2_given1.resize(n, J * K);
    out.cond1_given2.resize(n, J * K);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < J; ++j) {
            double m = -std::numeric_limits<double>::infinity();
            for (int k = 0; k < K; ++k) m = std::max(m, eta(i, k * J + j));
            double s = 0.0;
            for (int k = 0; k < K; ++k) s += std::exp(eta(i, k * J + j) - m);
            for (int k = 0; k < K; ++k) out.cond2_given1(i, k * J + j) = std::exp(eta(i, k * J + j) - m) / s;
        }
        for (int k = 0; k < K; ++k) {
            const auto slice = eta.row(i).segment(k * J, J);
            const double m = slice.maxCoeff();
            const double s = (slice.array() - m).exp().sum();
            out.cond1_given2.row(i).segment(k * J, J) = ((slice.array() - m).exp() / s).matrix();
        }
    }
    return out;
}

Eigen::MatrixXd marginal_probabilities(const ProbabilityMatrix& joint, const CategoryLayout& layout, int response) {
    if (response < 0 || response >= layout.responses()) {
        throw DomainError("response index " + std::to_string(response + 1) + " out of range 1.." +
                          std::to_string(layout.responses()));
    }
    if (joint.cols() != layout.total_classes()) {
        throw DomainError("probability matrix does not match layout");
    }
    const int Kr = layout.categories(response);
    const int stride = layout.stride(response);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(joint.rows(), Kr);
    for (int c = 0; c < layout.total_classes(); ++c) {
        out.col((c / stride) % Kr) += joint.col(c);
    }
    return out;
}

Loss::Loss(const Dataset& data, LossKind kind) : data_(&data), kind_(kind) {
    if (kind == LossKind::Full) require_full(data);
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        if (data.y.row(i).sum() == 0.0) {
            throw DomainError("row " + std::to_string(i + 1) + " has no observed response");
        }
    }
}

double Loss::value(const Eigen::MatrixXd& beta) { return evaluate(beta, nullptr); }

double Loss::value_and_gradient(const Eigen::MatrixXd& beta, Eigen::MatrixXd& grad) { return evaluate(beta, &grad); }

double Loss::evaluate(const Eigen::MatrixXd& beta, Eigen::MatrixXd* grad) {
    const Dataset& d = *data_;
    const Eigen::Index n = d.rows();
    eta_.noalias() = d.x * beta;
    if (grad) resid_.resize(n, eta_.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double m = 0.0;
        const double lse = row_log_sum_exp(eta_.row(i), i, m);
        if (kind_ == LossKind::Full) {
            total += lse - d.y.row(i).dot(eta_.row(i));
            if (grad) resid_.row(i) = (eta_.row(i).array() - lse).exp().matrix() - d.y.row(i);
        } else {
            const double lse_s = subset_log_sum_exp(eta_.row(i), d.y.row(i));
            total += lse - lse_s;
            if (grad) {
                const Eigen::RowVectorXd e = (eta_.row(i).array() - m).exp().matrix();
                const Eigen::RowVectorXd ey = e.cwiseProduct(d.y.row(i));
                resid_.row(i) = e / e.sum() - ey / ey.sum();
            }
        }
    }
    const double value = total / static_cast<double>(n);
    if (!std::isfinite(value)) {
        throw NumericError("non-finite negative log-likelihood");
    }
    if (grad) {
        grad->noalias() = d.x.transpose() * resid_;
        *grad /= static_cast<double>(n);
    }
    return value;
}

}  // namespace mvcat
