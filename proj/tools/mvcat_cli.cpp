#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "mvcat/error.hpp"
#include "mvcat/io.hpp"
#include "mvcat/preprocess.hpp"
#include "mvcat/prox.hpp"
#include "mvcat/simulate.hpp"
#include "mvcat/solver.hpp"
#include "mvcat/tuning.hpp"

namespace {

using namespace mvcat;
using nlohmann::json;

struct Globals {
    std::uint64_t seed = 1;
    int threads = 1;
    bool quiet = false;
};

struct GridOptions {
    int n_gamma = 25;
    double gamma_ratio = 1e-4;
    int n_lambda = 15;
    double lambda_lo = 1e-3;
    double lambda_hi = 1e3;

    void add(CLI::App* app) {
        app->add_option("--n-gamma", n_gamma, "Number of gamma grid points")->check(CLI::PositiveNumber);
        app->add_option("--gamma-ratio", gamma_ratio, "Smallest gamma as a fraction of gamma_max");
        app->add_option("--n-lambda", n_lambda, "Number of lambda multipliers")->check(CLI::PositiveNumber);
        app->add_option("--lambda-lo", lambda_lo, "Smallest lambda / gamma");
        app->add_option("--lambda-hi", lambda_hi, "Largest lambda / gamma");
    }
};

struct DataOptions {
    std::string x_path;
    std::string y_path;
    std::string layout = "";

    void add(CLI::App* app) {
        app->add_option("--x", x_path, "Predictor CSV with header")->required()->check(CLI::ExistingFile);
        app->add_option("--y", y_path, "Response CSV with header (categories 1..K or NA)")
            ->required()
            ->check(CLI::ExistingFile);
        app->add_option("--layout", layout, "Categories per response, e.g. 3,2")->required();
    }
};

CategoryLayout parse_layout(const std::string& text) {
    std::vector<int> cards;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        try {
            std::size_t used = 0;
            cards.push_back(std::stoi(part, &used));
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::logic_error&) {
            throw DomainError("layout '" + text + "' must be comma-separated integers");
        }
    }
    return CategoryLayout(cards);
}

LossKind parse_objective(const std::string& s, const Dataset& data) {
    if (s == "full") return LossKind::Full;
    if (s == "observed") return LossKind::Observed;
    return data.fully_observed() ? LossKind::Full : LossKind::Observed;
}

std::ostream& open_output(const std::string& path, std::unique_ptr<std::ofstream>& holder) {
    if (path.empty() || path == "-") return std::cout;
    holder = std::make_unique<std::ofstream>(path);
    if (!*holder) throw DataError("cannot write '" + path + "'");
    return *holder;
}

json metrics_json(const MetricReport& m) {
    json j;
    j["joint_misclassification"] = m.joint_misclassification;
    j["marginal_misclassification"] = m.marginal_misclassification;
    j["deviance"] = m.deviance;
    j["rows"] = m.rows;
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Penalized multivariate categorical response regression"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--quiet", g.quiet, "Only report errors");

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "Fit a model; tunes by cross validation unless --lambda/--gamma given");
    DataOptions fit_data;
    fit_data.add(fit_cmd);
    GridOptions fit_grid;
    fit_grid.add(fit_cmd);
    std::string fit_out = "model.json";
    std::string fit_objective = "auto";
    std::string fit_penalty = "log-odds";
    std::optional<double> fit_lambda;
    std::optional<double> fit_gamma;
    int fit_k = 5;
    double fit_tol = 1e-8;
    int fit_max_iter = 5000;
    fit_cmd->add_option("--lambda", fit_lambda, "Log odds ratio penalty");
    fit_cmd->add_option("--gamma", fit_gamma, "Group penalty");
    fit_cmd->add_option("--k", fit_k, "Folds when tuning")->check(CLI::Range(2, 1 << 30));
    fit_cmd->add_option("--objective", fit_objective, "full, observed or auto")
        ->check(CLI::IsMember({"auto", "full", "observed"}));
    bool fit_semi = false;
    fit_cmd->add_flag("--semi", fit_semi, "Use the observed-data likelihood (same as --objective observed)");
    fit_cmd->add_option("--penalty", fit_penalty, "log-odds or l1")->check(CLI::IsMember({"log-odds", "l1"}));
    fit_cmd->add_option("--tol", fit_tol, "Relative objective change for convergence");
    fit_cmd->add_option("--max-iter", fit_max_iter, "Iteration cap");
    fit_cmd->add_option("--out", fit_out, "Model JSON path");

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "Predict from a saved model");
    std::string predict_model;
    std::string predict_x;
    std::string predict_out;
    predict_cmd->add_option("--model", predict_model, "Model JSON")->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--x", predict_x, "Predictor CSV with header")->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--out", predict_out, "Predictions CSV (default stdout)");

    // cv
    auto* cv_cmd = app.add_subcommand("cv", "k-fold cross validation over the tuning grid");
    DataOptions cv_data;
    cv_data.add(cv_cmd);
    GridOptions cv_grid;
    cv_grid.add(cv_cmd);
    int cv_k = 5;
    std::string cv_out;
    std::string cv_objective = "auto";
    double cv_tol = 1e-6;
    cv_cmd->add_option("--k", cv_k, "Folds")->check(CLI::Range(2, 1 << 30));
    cv_cmd->add_option("--objective", cv_objective, "full, observed or auto")
        ->check(CLI::IsMember({"auto", "full", "observed"}));
    cv_cmd->add_option("--tol", cv_tol, "Convergence tolerance for grid fits");
    cv_cmd->add_option("--out", cv_out, "Report JSON (default stdout)");

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Replicated simulation study");
    SimConfig sim;
    std::string sim_out;
    std::vector<std::string> sim_methods;
    sim_cmd->add_option("--model", sim.model_id, "Coefficient model 1-4")->check(CLI::Range(1, 4));
    sim_cmd->add_option("--p", sim.p, "Coefficient rows including the intercept");
    sim_cmd->add_option("--replicates", sim.replicates, "Number of replicates")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--n-train", sim.n_train, "Training size");
    sim_cmd->add_option("--n-valid", sim.n_valid, "Validation size");
    sim_cmd->add_option("--n-test", sim.n_test, "Test size");
    sim_cmd->add_option("--n-gamma", sim.n_gamma, "Number of gamma grid points");
    sim_cmd->add_option("--gamma-ratio", sim.gamma_ratio, "Smallest gamma as a fraction of gamma_max");
    sim_cmd->add_option("--n-lambda", sim.n_lambda, "Number of lambda multipliers");
    sim_cmd->add_option("--tol", sim.tuning_tol, "Convergence tolerance for grid fits");
    sim_cmd->add_option("--methods", sim_methods, "Subset of LO-Mult,G-Mult,L-Mult,Sep,Oracle")->delimiter(',');
    sim_cmd->add_option("--out", sim_out, "Results CSV (default stdout)");

    // design
    auto* design_cmd = app.add_subcommand("design", "Print the log odds ratio contrast matrix");
    std::string design_layout;
    std::string design_out;
    design_cmd->add_option("--layout", design_layout, "Categories per response, e.g. 3,2")->required();
    design_cmd->add_option("--out", design_out, "CSV path (default stdout)");

    // screen
    auto* screen_cmd = app.add_subcommand("screen", "Rank predictors by joint-class F statistic and prune");
    DataOptions screen_data;
    screen_data.add(screen_cmd);
    int screen_keep = 500;
    double screen_corr = 0.75;
    bool screen_counts = false;
    double screen_min_q75 = 20.0;
    std::string screen_out;
    screen_cmd->add_option("--keep-top", screen_keep, "Columns kept before pruning")->check(CLI::PositiveNumber);
    screen_cmd->add_option("--max-abs-corr", screen_corr, "Pruning threshold")->check(CLI::Range(0.0, 1.0));
    screen_cmd->add_flag("--counts", screen_counts, "Treat predictors as raw counts and normalize first");
    screen_cmd->add_option("--min-q75", screen_min_q75, "Gene filter on the 75th percentile count");
    screen_cmd->add_option("--out", screen_out, "CSV path (default stdout)");

    // prox-selftest
    auto* self_cmd = app.add_subcommand("prox-selftest", "Compare the closed-form prox with an iterative solve");
    int self_instances = 1000;
    self_cmd->add_option("--trials", self_instances, "Random instances")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    spdlog::set_level(g.quiet ? spdlog::level::err : spdlog::level::info);
    spdlog::set_pattern("[%l] %v");

    try {
        std::unique_ptr<std::ofstream> file;
        if (*fit_cmd) {
            const CategoryLayout layout = parse_layout(fit_data.layout);
            const Dataset data = load_dataset(fit_data.x_path, fit_data.y_path, layout);
            const OddsDesign design = build_design(layout);
            FitConfig config;
            config.objective = fit_semi ? LossKind::Observed : parse_objective(fit_objective, data);
            config.penalty = fit_penalty == "l1" ? Penalty::EntrywiseL1 : Penalty::LogOddsGroup;
            config.tol = fit_tol;
            config.max_iterations = fit_max_iter;
            if (fit_lambda.has_value() != fit_gamma.has_value()) {
                throw DomainError("give both --lambda and --gamma, or neither to tune");
            }
            if (fit_lambda) {
                config.lambda = *fit_lambda;
                config.gamma = *fit_gamma;
            } else {
                const TuningGrid grid = default_grid(data, design, config.objective, fit_grid.n_gamma,
                                                     fit_grid.gamma_ratio, fit_grid.n_lambda, fit_grid.lambda_lo,
                                                     fit_grid.lambda_hi);
                FitConfig tuning = config;
                tuning.tol = std::max(config.tol, 1e-6);
                const CrossValidation cv = cross_validate(data, design, grid, fit_k, g.seed, tuning, g.threads);
                config.lambda = cv.lambda;
                config.gamma = cv.gamma;
                spdlog::info("selected lambda {:.6g}, gamma {:.6g}", cv.lambda, cv.gamma);
            }
            const FitResult result = fit(data, design, config);
            if (!result.converged) spdlog::warn("fit stopped at the iteration cap before converging");
            save_model(make_model(data, result, config), fit_out);
            spdlog::info("{} iterations, objective {:.10g}; {} log odds, {} marginal, {} irrelevant predictors",
                         result.iterations, result.objective(), result.partition.log_odds.size(),
                         result.partition.marginal.size(), result.partition.irrelevant.size());
        } else if (*predict_cmd) {
            const Model model = load_model(predict_model);
            const CsvTable table = read_csv_file(predict_x);
            const Eigen::MatrixXd raw = numeric_matrix(table, predict_x);
            const ProbabilityMatrix probs = predict_probabilities(model.beta, raw, model.standardization);
            write_predictions_csv(open_output(predict_out, file), probs, model.layout);
        } else if (*cv_cmd) {
            const CategoryLayout layout = parse_layout(cv_data.layout);
            const Dataset data = load_dataset(cv_data.x_path, cv_data.y_path, layout);
            const OddsDesign design = build_design(layout);
            FitConfig config;
            config.objective = parse_objective(cv_objective, data);
            config.tol = cv_tol;
            const TuningGrid grid = default_grid(data, design, config.objective, cv_grid.n_gamma,
                                                 cv_grid.gamma_ratio, cv_grid.n_lambda, cv_grid.lambda_lo,
                                                 cv_grid.lambda_hi);
            const CrossValidation cv = cross_validate(data, design, grid, cv_k, g.seed, config, g.threads);
            json report;
            report["lambda"] = cv.lambda;
            report["gamma"] = cv.gamma;
            report["k"] = cv_k;
            report["seed"] = g.seed;
            report["gammas"] = cv.grid.gammas;
            report["lambda_factors"] = cv.grid.lambda_factors;
            report["error_rate"] = cv.error_rate;
            report["folds"] = json::array();
            for (const auto& m : cv.folds) report["folds"].push_back(metrics_json(m));
            report["fold_of_row"] = cv.fold_of_row;
            open_output(cv_out, file) << report.dump(2) << '\n';
        } else if (*sim_cmd) {
            sim.seed = g.seed;
            std::vector<Method> methods;
            for (const auto& name : sim_methods) methods.push_back(parse_method(name));
            if (methods.empty()) methods = all_methods();
            const auto rows = run_experiment(sim, methods, g.threads);
            write_results_csv(open_output(sim_out, file), rows);
        } else if (*design_cmd) {
            write_design_csv(open_output(design_out, file), build_design(parse_layout(design_layout)));
        } else if (*screen_cmd) {
            const CategoryLayout layout = parse_layout(screen_data.layout);
            const CsvTable xt = read_csv_file(screen_data.x_path);
            Eigen::MatrixXd x = numeric_matrix(xt, screen_data.x_path);
            std::vector<Eigen::Index> column_of(static_cast<std::size_t>(x.cols()));
            for (std::size_t j = 0; j < column_of.size(); ++j) column_of[j] = static_cast<Eigen::Index>(j);
            if (screen_counts) {
                NormalizedExpression norm = expression_normalize(x, screen_min_q75);
                x = std::move(norm.values);
                column_of = std::move(norm.kept);
            }
            const Eigen::MatrixXi y = response_matrix(read_csv_file(screen_data.y_path), layout, screen_data.y_path);
            if (y.rows() != x.rows()) throw DataError("predictor and response files differ in row count");
            std::vector<int> group(static_cast<std::size_t>(y.rows()), -1);
            std::vector<int> cats(static_cast<std::size_t>(layout.responses()));
            for (Eigen::Index i = 0; i < y.rows(); ++i) {
                bool complete = true;
                for (int r = 0; r < layout.responses(); ++r) {
                    cats[static_cast<std::size_t>(r)] = y(i, r);
                    complete = complete && y(i, r) != kMissing;
                }
                if (complete) group[static_cast<std::size_t>(i)] = layout.index(cats);
            }
            const auto stats = anova_f(x, group);
            const auto kept = screen_features(x, group, screen_keep, screen_corr);
            std::ostream& out = open_output(screen_out, file);
            out << "rank,column,name,f_statistic\n";
            for (std::size_t k = 0; k < kept.size(); ++k) {
                const Eigen::Index col = column_of[static_cast<std::size_t>(kept[k])];
                out << k + 1 << ',' << col + 1 << ',' << xt.header[static_cast<std::size_t>(col)] << ','
                    << stats[static_cast<std::size_t>(kept[k])].f << '\n';
            }
        } else if (*self_cmd) {
            Rng rng(g.seed);
            std::uniform_int_distribution<int> size(2, 4);
            std::uniform_real_distribution<double> penalty(0.0, 3.0);
            std::normal_distribution<double> entry(0.0, 2.0);
            double worst = 0.0;
            for (int t = 0; t < self_instances; ++t) {
                const OddsDesign design = build_bivariate_design(size(rng), size(rng));
                const double lb = penalty(rng);
                const double gb = penalty(rng);
                Eigen::VectorXd nu(design.classes());
                for (Eigen::Index c = 0; c < nu.size(); ++c) nu(c) = entry(rng);
                worst = std::max(worst, (prox_row(design, nu, lb, gb) - numerical_prox_oracle(design, nu, lb, gb)).norm());
            }
            std::cout << "trials " << self_instances << ", largest deviation " << worst << '\n';
            if (worst >= 1e-6) {
                spdlog::error("closed-form prox disagrees with the iterative solve");
                return 4;
            }
        }
    } catch (const DomainError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const DataError& e) {
        spdlog::error("{}", e.what());
        return 3;
    } catch (const NumericError& e) {
        spdlog::error("{}", e.what());
        return 4;
    }
    return 0;
}
