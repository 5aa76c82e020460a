#include "mvcat/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "mvcat/error.hpp"

namespace mvcat {

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw DomainError("quantile of an empty set");
    if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level must be in [0, 1]");
    std::sort(values.begin(), values.end());
    const double h = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

NormalizedExpression expression_normalize(const Eigen::MatrixXd& counts, double min_q75,
                                          const std::vector<std::string>& subject_names) {
    if (counts.rows() == 0 || counts.cols() == 0) throw DataError("count table is empty");
    if ((counts.array() < 0.0).any() || !counts.allFinite()) throw DataError("counts must be finite and nonnegative");

    NormalizedExpression out;
    for (Eigen::Index g = 0; g < counts.cols(); ++g) {
        const Eigen::VectorXd col = counts.col(g);
        if (quantile({col.data(), col.data() + col.size()}, 0.75) >= min_q75) out.kept.push_back(g);
    }
    if (out.kept.empty()) throw DataError("every gene falls below the 75th percentile count threshold");

    out.values.resize(counts.rows(), static_cast<Eigen::Index>(out.kept.size()));
    std::vector<double> row(out.kept.size());
    for (Eigen::Index i = 0; i < counts.rows(); ++i) {
        for (std::size_t g = 0; g < out.kept.size(); ++g) row[g] = counts(i, out.kept[g]);
        const double q = quantile(row, 0.75);
        if (!(q > 0.0)) {
            const std::string name = static_cast<std::size_t>(i) < subject_names.size()
                                         ? "'" + subject_names[static_cast<std::size_t>(i)] + "'"
                                         : std::to_string(i + 1);
            throw DataError("subject " + name + " has a 75th percentile count of zero");
        }
        for (std::size_t g = 0; g < out.kept.size(); ++g) {
            out.values(i, static_cast<Eigen::Index>(g)) = std::log((row[g] + 1.0) / q);
        }
    }
    return out;
}

std::vector<FStatistic> anova_f(const Eigen::MatrixXd& x, const std::vector<int>& group) {
    if (group.size() != static_cast<std::size_t>(x.rows())) throw DomainError("group labels do not match rows");
    const int groups = group.empty() ? 0 : *std::max_element(group.begin(), group.end()) + 1;
    std::vector<Eigen::Index> size(static_cast<std::size_t>(std::max(groups, 0)), 0);
    for (int g : group) {
        if (g >= 0) ++size[static_cast<std::size_t>(g)];
    }
    std::vector<bool> used(size.size());
    int used_groups = 0;
    Eigen::Index total = 0;
    for (std::size_t g = 0; g < size.size(); ++g) {
        used[g] = size[g] >= 2;
        if (used[g]) {
            ++used_groups;
            total += size[g];
        } else if (size[g] == 1) {
            spdlog::warn("group {} has a single member and is left out of the F statistic", g + 1);
        }
    }
    if (used_groups < 2 || total - used_groups < 1) {
        throw DataError("F statistic needs at least two groups with two or more members");
    }

    std::vector<FStatistic> out(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        std::vector<double> sum(size.size(), 0.0);
        double grand = 0.0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const int g = group[static_cast<std::size_t>(i)];
            if (g < 0 || !used[static_cast<std::size_t>(g)]) continue;
            sum[static_cast<std::size_t>(g)] += x(i, c);
            grand += x(i, c);
        }
        grand /= static_cast<double>(total);
        double within = 0.0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const auto g = static_cast<std::size_t>(group[static_cast<std::size_t>(i)]);
            if (group[static_cast<std::size_t>(i)] < 0 || !used[g]) continue;
            const double d = x(i, c) - sum[g] / static_cast<double>(size[g]);
            within += d * d;
        }
        double between = 0.0;
        for (std::size_t g = 0; g < size.size(); ++g) {
            if (!used[g]) continue;
            const double d = sum[g] / static_cast<double>(size[g]) - grand;
            between += static_cast<double>(size[g]) * d * d;
        }
        FStatistic& s = out[static_cast<std::size_t>(c)];
        s.between = between;
        s.within = within;
        const double num = between / static_cast<double>(used_groups - 1);
        const double den = within / static_cast<double>(total - used_groups);
        if (den > 0.0) {
            s.f = num / den;
        } else {
            s.f = between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        }
    }
    return out;
}

std::vector<Eigen::Index> screen_features(const Eigen::MatrixXd& x, const std::vector<int>& group, int keep_top,
                                          double max_abs_corr) {
    if (keep_top < 1) throw DomainError("keep_top must be at least 1");
    if (!(max_abs_corr > 0.0 && max_abs_corr <= 1.0)) throw DomainError("max_abs_corr must be in (0, 1]");
    const auto stats = anova_f(x, group);

    std::vector<Eigen::Index> order(stats.size());
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        const auto& sa = stats[static_cast<std::size_t>(a)];
        const auto& sb = stats[static_cast<std::size_t>(b)];
        if (sa.f != sb.f) return sa.f > sb.f;
        if (sa.between != sb.between) return sa.between > sb.between;
        return a < b;
    });
    order.resize(std::min(order.size(), static_cast<std::size_t>(keep_top)));

    // Centered, unit-norm columns; a constant column has zero correlation with everything.
    Eigen::MatrixXd z(x.rows(), static_cast<Eigen::Index>(order.size()));
    for (std::size_t k = 0; k < order.size(); ++k) {
        Eigen::VectorXd col = x.col(order[k]).array() - x.col(order[k]).mean();
        const double norm = col.norm();
        z.col(static_cast<Eigen::Index>(k)) = norm > 0.0 ? Eigen::VectorXd(col / norm) : Eigen::VectorXd::Zero(x.rows());
    }

    std::vector<Eigen::Index> kept;
    std::vector<Eigen::Index> kept_pos;
    for (std::size_t k = 0; k < order.size(); ++k) {
        bool ok = true;
        for (Eigen::Index j : kept_pos) {
            if (std::min(1.0, std::abs(z.col(static_cast<Eigen::Index>(k)).dot(z.col(j)))) > max_abs_corr) {
                ok = false;
                break;
            }
        }
        if (ok) {
            kept.push_back(order[k]);
            kept_pos.push_back(static_cast<Eigen::Index>(k));
        }
    }
    return kept;
}

}  // namespace mvcat
