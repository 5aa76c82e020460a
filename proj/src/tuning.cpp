#include "mvcat/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "mvcat/error.hpp"
#include "mvcat/parallel.hpp"

namespace mvcat {

namespace {

Eigen::Index count_errors(const std::vector<int>& predicted, const Dataset& data) {
    Eigen::Index wrong = 0;
    const auto& layout = data.layout;
    std::vector<int> cats(static_cast<std::size_t>(layout.responses()));
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        if (!data.row_complete(i)) continue;
        for (int r = 0; r < layout.responses(); ++r) cats[static_cast<std::size_t>(r)] = data.responses(i, r);
        if (layout.index(cats) != predicted[static_cast<std::size_t>(i)]) ++wrong;
    }
    return wrong;
}

Eigen::Index complete_rows(const Dataset& data) {
    Eigen::Index m = 0;
    for (Eigen::Index i = 0; i < data.rows(); ++i) m += data.row_complete(i) ? 1 : 0;
    return m;
}

void warn_missing_levels(const Dataset& train, int fold) {
    for (int r = 0; r < train.layout.responses(); ++r) {
        std::vector<bool> seen(static_cast<std::size_t>(train.layout.categories(r)), false);
        for (Eigen::Index i = 0; i < train.rows(); ++i) {
            const int c = train.responses(i, r);
            if (c != kMissing) seen[static_cast<std::size_t>(c)] = true;
        }
        for (std::size_t c = 0; c < seen.size(); ++c) {
            if (!seen[c]) {
                spdlog::warn("fold {}: training rows never observe category {} of response {}", fold + 1, c + 1,
                             r + 1);
            }
        }
    }
}

}  // namespace

std::vector<int> argmax_rows(const Eigen::MatrixXd& probabilities) {
    std::vector<int> out(static_cast<std::size_t>(probabilities.rows()));
    for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < probabilities.cols(); ++c) {
            if (probabilities(i, c) > probabilities(i, best)) best = c;
        }
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

ProbabilityMatrix predict_probabilities(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& raw_x,
                                        const Standardization& standardization) {
    if (raw_x.cols() != standardization.columns() || beta.rows() != raw_x.cols() + 1) {
        throw DomainError("predictor matrix has " + std::to_string(raw_x.cols()) + " columns but the model expects " +
                          std::to_string(beta.rows() - 1));
    }
    return joint_probabilities(beta, standardization.design_matrix(raw_x));
}

std::vector<int> predict_joint(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& raw_x,
                               const Standardization& standardization) {
    return argmax_rows(predict_probabilities(beta, raw_x, standardization));
}

std::vector<int> predict_marginal(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& raw_x,
                                  const Standardization& standardization, const CategoryLayout& layout,
                                  int response) {
    return argmax_rows(marginal_probabilities(predict_probabilities(beta, raw_x, standardization), layout, response));
}

double kl_divergence(const ProbabilityMatrix& truth, const ProbabilityMatrix& est) {
    if (truth.rows() != est.rows() || truth.cols() != est.cols()) {
        throw DomainError("probability matrices differ in shape");
    }
    if (truth.rows() == 0) throw DomainError("no rows to compare");
    double total = 0.0;
    for (Eigen::Index i = 0; i < truth.rows(); ++i) {
        for (Eigen::Index c = 0; c < truth.cols(); ++c) {
            const double t = truth(i, c);
            if (t <= 0.0) continue;
            total += t * (std::log(t) - std::log(std::max(est(i, c), 1e-300)));
        }
    }
    return total / static_cast<double>(truth.rows());
}

MetricReport evaluate(const ProbabilityMatrix& fitted, const Dataset& data, const ProbabilityMatrix* truth) {
    if (fitted.rows() != data.rows() || fitted.cols() != data.layout.total_classes()) {
        throw DomainError("fitted probabilities do not match the evaluation data");
    }
    MetricReport report;
    report.rows = data.rows();

    const Eigen::Index complete = complete_rows(data);
    const auto joint = argmax_rows(fitted);
    report.joint_misclassification =
        complete > 0 ? static_cast<double>(count_errors(joint, data)) / static_cast<double>(complete)
                     : std::numeric_limits<double>::quiet_NaN();

    for (int r = 0; r < data.layout.responses(); ++r) {
        const auto pred = argmax_rows(marginal_probabilities(fitted, data.layout, r));
        Eigen::Index seen = 0;
        Eigen::Index wrong = 0;
        for (Eigen::Index i = 0; i < data.rows(); ++i) {
            const int c = data.responses(i, r);
            if (c == kMissing) continue;
            ++seen;
            if (pred[static_cast<std::size_t>(i)] != c) ++wrong;
        }
        report.marginal_misclassification.push_back(
            seen > 0 ? static_cast<double>(wrong) / static_cast<double>(seen)
                     : std::numeric_limits<double>::quiet_NaN());
    }

    double dev = 0.0;
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        const double p = (fitted.row(i).array() * data.y.row(i).array()).sum();
        dev -= 2.0 * std::log(std::max(p, 1e-300));
    }
    report.deviance = dev;
    if (truth != nullptr) report.kl_divergence = kl_divergence(*truth, fitted);
    return report;
}

Selection select_by_validation(const Dataset& train, const Dataset& valid, const OddsDesign& design,
                               const TuningGrid& grid, const FitConfig& config) {
    if (!(train.layout == valid.layout)) throw DomainError("training and validation layouts differ");
    if (complete_rows(valid) == 0) throw DataError("validation set has no fully observed rows");
    const Eigen::MatrixXd valid_x = train.standardization.design_matrix(valid.raw_x);

    PathResult path = fit_path(train, design, grid, config);
    Selection out;
    out.grid = path.grid;
    out.errors.assign(path.fits.size(), {});
    Eigen::Index best = std::numeric_limits<Eigen::Index>::max();
    std::size_t best_g = 0;
    std::size_t best_l = 0;
    // Visiting gamma and lambda in decreasing order and replacing only on a
    // strict improvement keeps the larger gamma, then the larger lambda, on ties.
    for (std::size_t g = 0; g < path.fits.size(); ++g) {
        for (std::size_t l = 0; l < path.fits[g].size(); ++l) {
            const auto pred = argmax_rows(joint_probabilities(path.fits[g][l].beta, valid_x));
            const Eigen::Index e = count_errors(pred, valid);
            out.errors[g].push_back(e);
            if (e < best) {
                best = e;
                best_g = g;
                best_l = l;
            }
        }
    }
    out.gamma = path.grid.gammas[best_g];
    out.lambda = path.grid.lambda(best_g, best_l);
    out.fit = std::move(path.fits[best_g][best_l]);
    return out;
}

std::vector<int> assign_folds(const std::vector<std::int64_t>& keys, int k, std::uint64_t seed) {
    if (k < 2) throw DomainError("number of folds must be at least 2, got " + std::to_string(k));
    if (static_cast<std::size_t>(k) > keys.size()) {
        throw DomainError("number of folds " + std::to_string(k) + " exceeds the number of rows " +
                          std::to_string(keys.size()));
    }
    std::vector<std::size_t> order(keys.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> fold(keys.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) fold[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
    return fold;
}

CrossValidation cross_validate(const Dataset& data, const OddsDesign& design, const TuningGrid& grid, int k,
                               std::uint64_t seed, const FitConfig& config, int threads,
                               const std::vector<std::int64_t>& row_keys) {
    std::vector<std::int64_t> keys = row_keys;
    if (keys.empty()) {
        keys.resize(static_cast<std::size_t>(data.rows()));
        std::iota(keys.begin(), keys.end(), std::int64_t{0});
    } else if (keys.size() != static_cast<std::size_t>(data.rows())) {
        throw DomainError("row key count does not match the number of rows");
    }

    CrossValidation out;
    out.fold_of_row = assign_folds(keys, k, seed);
    const auto folds = static_cast<std::size_t>(k);

    struct FoldOutcome {
        std::vector<std::vector<Eigen::Index>> errors;
        std::vector<std::vector<MetricReport>> reports;
        Eigen::Index complete = 0;
        TuningGrid grid;
    };
    std::vector<FoldOutcome> outcome(folds);

    parallel_for(folds, threads, [&](std::size_t f) {
        std::vector<Eigen::Index> train_rows;
        std::vector<Eigen::Index> test_rows;
        for (Eigen::Index i = 0; i < data.rows(); ++i) {
            (out.fold_of_row[static_cast<std::size_t>(i)] == static_cast<int>(f) ? test_rows : train_rows).push_back(i);
        }
        const Dataset train = subset(data, train_rows);
        const Dataset held = subset(data, test_rows, train.standardization);
        warn_missing_levels(train, static_cast<int>(f));

        PathResult path = fit_path(train, design, grid, config);
        FoldOutcome& o = outcome[f];
        o.grid = path.grid;
        o.complete = complete_rows(held);
        o.errors.resize(path.fits.size());
        o.reports.resize(path.fits.size());
        for (std::size_t g = 0; g < path.fits.size(); ++g) {
            for (const auto& fr : path.fits[g]) {
                const ProbabilityMatrix probs = joint_probabilities(fr.beta, held.x);
                o.errors[g].push_back(count_errors(argmax_rows(probs), held));
                o.reports[g].push_back(evaluate(probs, held));
            }
        }
    });

    out.grid = outcome.front().grid;
    Eigen::Index total_complete = 0;
    for (const auto& o : outcome) total_complete += o.complete;
    if (total_complete == 0) throw DataError("no fully observed rows to score");

    Eigen::Index best = std::numeric_limits<Eigen::Index>::max();
    std::size_t best_g = 0;
    std::size_t best_l = 0;
    out.error_rate.resize(out.grid.gammas.size());
    for (std::size_t g = 0; g < out.grid.gammas.size(); ++g) {
        for (std::size_t l = 0; l < out.grid.lambda_factors.size(); ++l) {
            Eigen::Index e = 0;
            for (const auto& o : outcome) e += o.errors[g][l];
            out.error_rate[g].push_back(static_cast<double>(e) / static_cast<double>(total_complete));
            if (e < best) {
                best = e;
                best_g = g;
                best_l = l;
            }
        }
    }
    out.gamma = out.grid.gammas[best_g];
    out.lambda = out.grid.lambda(best_g, best_l);
    for (auto& o : outcome) out.folds.push_back(std::move(o.reports[best_g][best_l]));
    return out;
}

}  // namespace mvcat
