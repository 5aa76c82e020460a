#include "mvcat/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "mvcat/error.hpp"
#include "mvcat/likelihood.hpp"
#include "mvcat/parallel.hpp"
#include "mvcat/tuning.hpp"

namespace mvcat {

namespace {

enum Stream : std::uint64_t { kCoefficients = 1, kTrain, kValid, kTest };

constexpr int kNonzeroRows = 10;

Eigen::VectorXd uniform_row(int length, Rng& rng) {
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    Eigen::VectorXd row(length);
    for (int c = 0; c < length; ++c) row(c) = u(rng);
    return row;
}

// Row with no log odds ratio content for J = 3, K = 2.
Eigen::VectorXd marginal_only_row(Rng& rng) {
    const Eigen::VectorXd u = uniform_row(4, rng);
    Eigen::VectorXd row(6);
    row << -u(3) + u(2) + u(0), u(0), u(1), u(2), u(3), -u(0) + u(3) + u(1);
    return row;
}

Eigen::MatrixXd center_rows(const Eigen::MatrixXd& beta) {
    return beta.colwise() - beta.rowwise().mean();
}

std::string format_number(double v) { return fmt::format("{:.10g}", v); }

struct Replicate {
    TrueModel truth;
    Dataset train;
    Dataset valid;
    Dataset test;
    ProbabilityMatrix test_truth;
};

Replicate draw_replicate(const SimConfig& sim, int replicate) {
    const CategoryLayout layout({sim.J, sim.K});
    const auto rep = static_cast<std::uint64_t>(replicate);
    Rng coef_rng = substream(sim.seed, rep, kCoefficients);
    TrueModel truth = gen_beta(sim.model_id, sim.p, layout, coef_rng);

    auto draw = [&](int n, Stream stream) {
        Rng rng = substream(sim.seed, rep, stream);
        Eigen::MatrixXd raw = gen_predictors(n, sim.p - 1, rng);
        Eigen::MatrixXd x(n, sim.p);
        x << Eigen::VectorXd::Ones(n), raw;
        Eigen::MatrixXi y = responses_from_classes(sample_classes(truth.beta_star, x, rng), layout);
        return std::pair{std::move(raw), std::move(y)};
    };
    auto [train_x, train_y] = draw(sim.n_train, kTrain);
    auto [valid_x, valid_y] = draw(sim.n_valid, kValid);
    auto [test_x, test_y] = draw(sim.n_test, kTest);

    Dataset train = make_dataset(train_x, train_y, layout);
    Dataset valid = make_dataset(valid_x, valid_y, layout, train.standardization);
    Dataset test = make_dataset(test_x, test_y, layout, train.standardization);
    Eigen::MatrixXd test_design(sim.n_test, sim.p);
    test_design << Eigen::VectorXd::Ones(sim.n_test), test_x;
    ProbabilityMatrix test_truth = joint_probabilities(truth.beta_star, test_design);
    return {std::move(truth), std::move(train), std::move(valid), std::move(test), std::move(test_truth)};
}

FitConfig tuning_config(const SimConfig& sim) {
    FitConfig c;
    c.tol = sim.tuning_tol;
    c.max_iterations = sim.tuning_max_iterations;
    return c;
}

TuningGrid gamma_only_grid(double top, const SimConfig& sim) {
    TuningGrid g;
    g.gammas = log_spaced(top, sim.gamma_ratio * top, sim.n_gamma);
    g.lambda_factors = {0.0};
    g.lambda_relative = false;
    return g;
}

// Single-response fit of one column of the responses, tuned on that response's
// validation error. Returns coefficients on the standardized training scale.
Selection fit_single_response(const Replicate& r, const SimConfig& sim, int response) {
    const CategoryLayout single({r.train.layout.categories(response)});
    const OddsDesign design = build_design(single);
    const Dataset train = make_dataset(r.train.raw_x, r.train.responses.col(response), single);
    const Dataset valid = make_dataset(r.valid.raw_x, r.valid.responses.col(response), single, train.standardization);
    const TuningGrid grid =
        gamma_only_grid(gamma_max(train, design, LossKind::Full, Penalty::LogOddsGroup), sim);
    return select_by_validation(train, valid, design, grid, tuning_config(sim));
}

}  // namespace

Rng substream(std::uint64_t seed, std::uint64_t replicate, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

void SimConfig::validate() const {
    if (model_id < 1 || model_id > 4) throw DomainError("model id must be 1-4, got " + std::to_string(model_id));
    if (p < kNonzeroRows + 1) throw DomainError("p must be at least " + std::to_string(kNonzeroRows + 1));
    if (n_train < 2 || n_valid < 1 || n_test < 1) throw DomainError("sample sizes must be positive");
    if (J < 2 || K < 2) throw DomainError("each response needs at least two categories");
    if (replicates < 1) throw DomainError("replicates must be positive");
    if (n_gamma < 1 || n_lambda < 1) throw DomainError("grid sizes must be positive");
    if (!(gamma_ratio > 0.0 && gamma_ratio <= 1.0)) throw DomainError("gamma ratio must be in (0, 1]");
    if (!(lambda_lo > 0.0 && lambda_hi >= lambda_lo)) throw DomainError("lambda range is invalid");
}

Eigen::MatrixXd gen_predictors(int n, int p, Rng& rng) {
    if (n < 1 || p < 1) throw DomainError("gen_predictors needs n, p >= 1");
    std::normal_distribution<double> normal(0.0, 1.0);
    const double innovation = std::sqrt(1.0 - 0.25);
    Eigen::MatrixXd x(n, p);
    for (int i = 0; i < n; ++i) {
        double prev = normal(rng);
        x(i, 0) = prev;
        for (int t = 1; t < p; ++t) {
            prev = 0.5 * prev + innovation * normal(rng);
            x(i, t) = prev;
        }
    }
    return x;
}

TrueModel gen_beta(int model_id, int p, const CategoryLayout& layout, Rng& rng) {
    static constexpr int kJointRows[] = {10, 6, 3, 0};
    if (model_id < 1 || model_id > 4) throw DomainError("model id must be 1-4, got " + std::to_string(model_id));
    if (p < kNonzeroRows + 1) throw DomainError("p must be at least " + std::to_string(kNonzeroRows + 1));
    const int joint_rows = kJointRows[model_id - 1];
    if (joint_rows < kNonzeroRows && !(layout == CategoryLayout({3, 2}))) {
        throw DomainError("model " + std::to_string(model_id) + " needs the (3,2) layout, got (" +
                          layout.to_string() + ")");
    }

    std::vector<int> rows(static_cast<std::size_t>(p - 1));
    std::iota(rows.begin(), rows.end(), 1);
    std::vector<int> chosen;
    std::sample(rows.begin(), rows.end(), std::back_inserter(chosen), kNonzeroRows, rng);
    std::shuffle(chosen.begin(), chosen.end(), rng);

    TrueModel m;
    const int T = layout.total_classes();
    m.beta_star = Eigen::MatrixXd::Zero(p, T);
    for (int i = 0; i < kNonzeroRows; ++i) {
        m.beta_star.row(chosen[static_cast<std::size_t>(i)]) =
            i < joint_rows ? uniform_row(T, rng).transpose() : marginal_only_row(rng).transpose();
    }
    m.partition = classify_predictors(build_design(layout), m.beta_star, 1e-12);
    return m;
}

Eigen::VectorXi sample_classes(const Eigen::MatrixXd& beta_star, const Eigen::MatrixXd& x, Rng& rng) {
    const ProbabilityMatrix pi = joint_probabilities(beta_star, x);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::VectorXi cls(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double u = unit(rng);
        double cum = 0.0;
        Eigen::Index c = 0;
        for (; c < pi.cols() - 1; ++c) {
            cum += pi(i, c);
            if (u < cum) break;
        }
        cls(i) = static_cast<int>(c);
    }
    return cls;
}

Eigen::MatrixXd sample_responses(const Eigen::MatrixXd& beta_star, const Eigen::MatrixXd& x, Rng& rng) {
    const Eigen::VectorXi cls = sample_classes(beta_star, x, rng);
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(x.rows(), beta_star.cols());
    for (Eigen::Index i = 0; i < cls.size(); ++i) y(i, cls(i)) = 1.0;
    return y;
}

Eigen::MatrixXi responses_from_classes(const Eigen::VectorXi& classes, const CategoryLayout& layout) {
    Eigen::MatrixXi out(classes.size(), layout.responses());
    for (Eigen::Index i = 0; i < classes.size(); ++i) {
        const auto cats = layout.categories_of(classes(i));
        for (int r = 0; r < layout.responses(); ++r) out(i, r) = cats[static_cast<std::size_t>(r)];
    }
    return out;
}

std::string method_name(Method m) {
    switch (m) {
        case Method::LOMult: return "LO-Mult";
        case Method::GMult: return "G-Mult";
        case Method::LMult: return "L-Mult";
        case Method::Sep: return "Sep";
        case Method::Oracle: return "Oracle";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    for (Method m : all_methods()) {
        if (method_name(m) == name) return m;
    }
    throw DomainError("unknown method '" + name + "'");
}

std::vector<Method> all_methods() {
    return {Method::LOMult, Method::GMult, Method::LMult, Method::Sep, Method::Oracle};
}

std::vector<ExperimentRow> run_replicate(const SimConfig& sim, const std::vector<Method>& methods, int replicate) {
    sim.validate();
    const Replicate r = draw_replicate(sim, replicate);
    const OddsDesign design = build_design(r.train.layout);
    const Eigen::MatrixXd truth_centered = center_rows(r.truth.beta_star);

    std::vector<ExperimentRow> rows;
    for (Method m : methods) {
        const auto start = std::chrono::steady_clock::now();
        ExperimentRow row;
        row.replicate = replicate;
        row.method = m;
        ProbabilityMatrix fitted;
        Eigen::MatrixXd beta_original;

        auto use_selection = [&](const Selection& s) {
            fitted = joint_probabilities(s.fit.beta, r.test.x);
            beta_original = r.train.standardization.to_original_scale(s.fit.beta);
            row.chosen_lambda = format_number(s.lambda);
            row.chosen_gamma = format_number(s.gamma);
        };

        switch (m) {
            case Method::LOMult: {
                const TuningGrid grid = default_grid(r.train, design, LossKind::Full, sim.n_gamma, sim.gamma_ratio,
                                                     sim.n_lambda, sim.lambda_lo, sim.lambda_hi);
                use_selection(select_by_validation(r.train, r.valid, design, grid, tuning_config(sim)));
                break;
            }
            case Method::GMult: {
                const TuningGrid grid =
                    gamma_only_grid(gamma_max(r.train, design, LossKind::Full, Penalty::LogOddsGroup), sim);
                use_selection(select_by_validation(r.train, r.valid, design, grid, tuning_config(sim)));
                break;
            }
            case Method::LMult: {
                FitConfig c = tuning_config(sim);
                c.penalty = Penalty::EntrywiseL1;
                const TuningGrid grid =
                    gamma_only_grid(gamma_max(r.train, design, LossKind::Full, Penalty::EntrywiseL1), sim);
                use_selection(select_by_validation(r.train, r.valid, design, grid, c));
                break;
            }
            case Method::Sep: {
                const Selection first = fit_single_response(r, sim, 0);
                const Selection second = fit_single_response(r, sim, 1);
                const CategoryLayout& layout = r.train.layout;
                Eigen::MatrixXd beta(sim.p, layout.total_classes());
                for (int k = 0; k < layout.categories(1); ++k) {
                    for (int j = 0; j < layout.categories(0); ++j) {
                        beta.col(k * layout.categories(0) + j) = first.fit.beta.col(j) + second.fit.beta.col(k);
                    }
                }
                // Both single-response fits share the training standardization.
                fitted = joint_probabilities(beta, r.test.x);
                beta_original = r.train.standardization.to_original_scale(beta);
                row.chosen_lambda = "inf";
                row.chosen_gamma = format_number(first.gamma) + ";" + format_number(second.gamma);
                break;
            }
            case Method::Oracle:
                fitted = r.test_truth;
                beta_original = r.truth.beta_star;
                row.chosen_lambda = "NA";
                row.chosen_gamma = "NA";
                break;
        }

        const MetricReport report = evaluate(fitted, r.test, &r.test_truth);
        row.joint_err = report.joint_misclassification;
        row.marg_err_1 = report.marginal_misclassification[0];
        row.marg_err_2 = report.marginal_misclassification[1];
        row.kl = *report.kl_divergence;
        row.frobenius_err = (center_rows(beta_original) - truth_centered).norm();
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<ExperimentRow> run_experiment(const SimConfig& sim, const std::vector<Method>& methods, int threads) {
    sim.validate();
    std::vector<std::vector<ExperimentRow>> per(static_cast<std::size_t>(sim.replicates));
    parallel_for(per.size(), threads, [&](std::size_t i) {
        per[i] = run_replicate(sim, methods, static_cast<int>(i) + 1);
        spdlog::info("replicate {} of {} done", i + 1, per.size());
    });
    std::vector<ExperimentRow> rows;
    for (auto& v : per) {
        for (auto& row : v) rows.push_back(std::move(row));
    }
    return rows;
}

void write_results_csv(std::ostream& out, const std::vector<ExperimentRow>& rows) {
    out << "replicate,method,joint_err,marg_err_1,marg_err_2,kl,frobenius_err,chosen_lambda,chosen_gamma,seconds\n";
    for (const auto& r : rows) {
        out << r.replicate << ',' << method_name(r.method) << ',' << format_number(r.joint_err) << ','
            << format_number(r.marg_err_1) << ',' << format_number(r.marg_err_2) << ',' << format_number(r.kl) << ','
            << format_number(r.frobenius_err) << ',' << r.chosen_lambda << ',' << r.chosen_gamma << ','
            << fmt::format("{:.3f}", r.seconds) << '\n';
    }
}

}  // namespace mvcat
