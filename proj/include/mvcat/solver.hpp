#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mvcat/likelihood.hpp"
#include "mvcat/odds_design.hpp"

namespace mvcat {

enum class Penalty {
    LogOddsGroup,  // lambda ||D'b_m|| + gamma ||b_m||
    EntrywiseL1,   // gamma ||b_m||_1 (lambda unused)
};

struct FitConfig {
    double lambda = 0.0;
    double gamma = 0.0;
    double initial_step = 1.0;
    double backtrack = 0.5;
    int max_iterations = 5000;
    double tol = 1e-8;
    LossKind objective = LossKind::Full;
    Penalty penalty = Penalty::LogOddsGroup;
    bool accelerate = true;
    // Also apply lambda ||D'b_1|| to the intercept row. Off by default; the
    // intercept is otherwise unpenalized.
    bool penalize_intercept_log_odds = false;

    void validate() const;
};

struct FitResult {
    Eigen::MatrixXd beta;
    std::vector<double> objective_trace;
    int iterations = 0;
    bool converged = false;
    Partition partition;
    double final_step = 0.0;
    double lambda = 0.0;
    double gamma = 0.0;

    double objective() const { return objective_trace.back(); }
};

double penalty_value(const OddsDesign& design, const Eigen::MatrixXd& beta, const FitConfig& config);

/// Penalized objective F(beta) = loss + penalty.
double objective_value(const Dataset& data, const OddsDesign& design, const Eigen::MatrixXd& beta,
                       const FitConfig& config);

/// Accelerated proximal gradient descent with backtracking.
FitResult fit(const Dataset& data, const OddsDesign& design, const FitConfig& config,
              const std::optional<Eigen::MatrixXd>& warm_start = std::nullopt);

/// Intercept-only fit (every predictor row held at zero).
FitResult fit_intercept_only(const Dataset& data, const OddsDesign& design, LossKind objective);

/// Smallest gamma giving an all-zero fit at lambda = 0.
double gamma_max(const Dataset& data, const OddsDesign& design, LossKind objective, Penalty penalty);

/// (lambda, gamma) grid. Gammas are visited largest first; lambda at grid point
/// (g, l) is lambda_factors[l] * gammas[g] when lambda_relative, else lambda_factors[l].
struct TuningGrid {
    std::vector<double> gammas;
    std::vector<double> lambda_factors;
    bool lambda_relative = true;

    double lambda(std::size_t g, std::size_t l) const {
        return lambda_relative ? lambda_factors[l] * gammas[g] : lambda_factors[l];
    }
    std::size_t size() const { return gammas.size() * lambda_factors.size(); }
};

/// Log-spaced values from hi down to lo.
std::vector<double> log_spaced(double hi, double lo, int count);

/// gamma: n_gamma log-spaced points from gamma_max down to gamma_ratio * gamma_max;
/// lambda: n_lambda log-spaced multiples of gamma in [lambda_lo, lambda_hi].
TuningGrid default_grid(const Dataset& data, const OddsDesign& design, LossKind objective, int n_gamma = 25,
                        double gamma_ratio = 1e-4, int n_lambda = 15, double lambda_lo = 1e-3,
                        double lambda_hi = 1e3);

/// Fits over the grid, sorted so gamma and lambda both decrease. Each fit
/// is warm-started from its neighbour: the previous lambda at the same gamma,
/// or the first lambda of the previous gamma.
struct PathResult {
    TuningGrid grid;  // sorted copy
    std::vector<std::vector<FitResult>> fits;  // [gamma][lambda]
};

PathResult fit_path(const Dataset& data, const OddsDesign& design, const TuningGrid& grid, const FitConfig& config);

/// Largest distance from -grad_m to the subdifferential of the row penalty,
/// over all rows (the intercept row must have zero gradient).
double kkt_residual(const Eigen::MatrixXd& beta, const Dataset& data, const OddsDesign& design, double lambda,
                    double gamma, LossKind objective = LossKind::Full);

}  // namespace mvcat
