#include "mvcat/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "mvcat/error.hpp"
#include "mvcat/prox.hpp"

namespace mvcat {

void FitConfig::validate() const {
    if (!(lambda >= 0.0) || !(gamma >= 0.0)) throw DomainError("penalties must be nonnegative");
    if (!(initial_step > 0.0)) throw DomainError("initial step must be positive");
    if (!(backtrack > 0.0 && backtrack < 1.0)) throw DomainError("backtracking factor must lie in (0,1)");
    if (max_iterations < 1) throw DomainError("max_iterations must be positive");
    if (!(tol > 0.0)) throw DomainError("tolerance must be positive");
}

double penalty_value(const OddsDesign& design, const Eigen::MatrixXd& beta, const FitConfig& config) {
    const Eigen::MatrixXd& D = design.contrasts_real();
    double total = 0.0;
    for (Eigen::Index m = 1; m < beta.rows(); ++m) {
        const auto row = beta.row(m);
        if (config.penalty == Penalty::EntrywiseL1) {
            if (config.gamma > 0.0) total += config.gamma * row.lpNorm<1>();
            continue;
        }
        if (config.gamma > 0.0) total += config.gamma * row.norm();
        if (config.lambda > 0.0 && D.cols() > 0) total += config.lambda * (row * D).norm();
    }
    if (config.penalize_intercept_log_odds && config.lambda > 0.0 && D.cols() > 0) {
        total += config.lambda * (beta.row(0) * D).norm();
    }
    return total;
}

double objective_value(const Dataset& data, const OddsDesign& design, const Eigen::MatrixXd& beta,
                       const FitConfig& config) {
    Loss loss(data, config.objective);
    return loss.value(beta) + penalty_value(design, beta, config);
}

namespace {

void proximal_step(const OddsDesign& design, const FitConfig& config, const Eigen::MatrixXd& u, double step,
                   Eigen::MatrixXd& out) {
    out.resize(u.rows(), u.cols());
    const double lambda_bar = step * config.lambda;
    const double gamma_bar = step * config.gamma;
    if (config.penalize_intercept_log_odds && lambda_bar > 0.0) {
        out.row(0) = prox_row(design, u.row(0).transpose(), lambda_bar, 0.0).transpose();
    } else {
        out.row(0) = u.row(0);
    }
    for (Eigen::Index m = 1; m < u.rows(); ++m) {
        if (config.penalty == Penalty::EntrywiseL1) {
            out.row(m) = u.row(m).unaryExpr([gamma_bar](double v) {
                return v > gamma_bar ? v - gamma_bar : (v < -gamma_bar ? v + gamma_bar : 0.0);
            });
        } else {
            out.row(m) = prox_row(design, u.row(m).transpose(), lambda_bar, gamma_bar).transpose();
        }
    }
}

std::string iterate_dump(const Eigen::MatrixXd& beta, int iteration, double step) {
    std::ostringstream os;
    os << "iteration " << iteration << ", step " << step << ", |beta|_F " << beta.norm() << ", max |beta| "
       << beta.cwiseAbs().maxCoeff();
    return os.str();
}

}  // namespace

FitResult fit(const Dataset& data, const OddsDesign& design, const FitConfig& config,
              const std::optional<Eigen::MatrixXd>& warm_start) {
    config.validate();
    if (!(design.layout() == data.layout)) {
        throw DomainError("design layout " + design.layout().to_string() + " does not match data layout " +
                          data.layout.to_string());
    }
    const Eigen::Index p = data.predictors();
    const Eigen::Index T = data.layout.total_classes();
    Loss loss(data, config.objective);

    Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(p, T);
    if (warm_start) {
        if (warm_start->rows() != p || warm_start->cols() != T) {
            throw DomainError("warm start has the wrong shape");
        }
        beta = *warm_start;
    }
    Eigen::MatrixXd beta_prev = beta;
    Eigen::MatrixXd extrapolated(p, T), grad(p, T), u(p, T), candidate(p, T);
    double alpha_prev = 1.0;
    double alpha = 1.0;

    FitResult result;
    result.lambda = config.lambda;
    result.gamma = config.gamma;
    double current = loss.value(beta) + penalty_value(design, beta, config);
    if (!std::isfinite(current)) throw NumericError("non-finite objective at start: " + iterate_dump(beta, 0, 0.0));
    result.objective_trace.push_back(current);

    double step = config.initial_step;
    int t = 0;
    for (t = 1; t <= config.max_iterations; ++t) {
        const double momentum = config.accelerate ? (alpha_prev - 1.0) / alpha : 0.0;
        extrapolated = beta + momentum * (beta - beta_prev);
        const double loss_at_extrapolated = loss.value_and_gradient(extrapolated, grad);

        step = config.initial_step;
        double candidate_loss = 0.0;
        for (;;) {
            u = extrapolated - step * grad;
            proximal_step(design, config, u, step, candidate);
            if (candidate.allFinite()) {
                const Eigen::MatrixXd diff = candidate - extrapolated;
                candidate_loss = loss.value(candidate);
                const double bound =
                    loss_at_extrapolated + grad.cwiseProduct(diff).sum() + diff.squaredNorm() / (2.0 * step);
                if (candidate_loss <= bound) break;
            }
            step *= config.backtrack;
            if (step < 1e-30) {
                throw NumericError("step size underflow: " + iterate_dump(extrapolated, t, step));
            }
        }

        beta_prev = beta;
        beta = candidate;
        alpha_prev = alpha;
        alpha = (1.0 + std::sqrt(1.0 + 4.0 * alpha * alpha)) / 2.0;

        const double next = candidate_loss + penalty_value(design, beta, config);
        if (!std::isfinite(next)) throw NumericError("non-finite objective: " + iterate_dump(beta, t, step));
        result.objective_trace.push_back(next);
        const double change = std::abs(next - current) / (1.0 + std::abs(current));
        current = next;
        if (change < config.tol) {
            result.converged = true;
            break;
        }
    }

    beta.row(0).array() -= beta.row(0).mean();
    result.iterations = std::min(t, config.max_iterations);
    result.final_step = step;
    result.beta = std::move(beta);
    result.partition = classify_predictors(design, result.beta, 1e-8);
    return result;
}

FitResult fit_intercept_only(const Dataset& data, const OddsDesign& design, LossKind objective) {
    FitConfig config;
    config.objective = objective;
    config.lambda = 0.0;
    config.gamma = std::numeric_limits<double>::max();
    config.tol = 1e-12;
    config.max_iterations = 20000;
    return fit(data, design, config);
}

double gamma_max(const Dataset& data, const OddsDesign& design, LossKind objective, Penalty penalty) {
    const FitResult base = fit_intercept_only(data, design, objective);
    Loss loss(data, objective);
    Eigen::MatrixXd grad;
    loss.value_and_gradient(base.beta, grad);
    double out = 0.0;
    for (Eigen::Index m = 1; m < grad.rows(); ++m) {
        out = std::max(out, penalty == Penalty::EntrywiseL1 ? grad.row(m).cwiseAbs().maxCoeff() : grad.row(m).norm());
    }
    return out;
}

std::vector<double> log_spaced(double hi, double lo, int count) {
    if (count < 1) throw DomainError("grid size must be positive");
    if (count == 1) return {hi};
    std::vector<double> out(static_cast<std::size_t>(count));
    const double a = std::log(hi);
    const double b = std::log(lo);
    for (int i = 0; i < count; ++i) {
        out[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (count - 1));
    }
    return out;
}

TuningGrid default_grid(const Dataset& data, const OddsDesign& design, LossKind objective, int n_gamma,
                        double gamma_ratio, int n_lambda, double lambda_lo, double lambda_hi) {
    const double top = gamma_max(data, design, objective, Penalty::LogOddsGroup);
    TuningGrid grid;
    grid.gammas = log_spaced(top, gamma_ratio * top, n_gamma);
    grid.lambda_factors = log_spaced(lambda_hi, lambda_lo, n_lambda);
    grid.lambda_relative = true;
    return grid;
}

PathResult fit_path(const Dataset& data, const OddsDesign& design, const TuningGrid& grid, const FitConfig& config) {
    if (grid.gammas.empty() || grid.lambda_factors.empty()) throw DomainError("tuning grid is empty");
    PathResult path;
    path.grid = grid;
    std::sort(path.grid.gammas.begin(), path.grid.gammas.end(), std::greater<>());
    std::sort(path.grid.lambda_factors.begin(), path.grid.lambda_factors.end(), std::greater<>());

    path.fits.resize(path.grid.gammas.size());
    std::optional<Eigen::MatrixXd> column_start;
    for (std::size_t g = 0; g < path.grid.gammas.size(); ++g) {
        std::optional<Eigen::MatrixXd> start = column_start;
        for (std::size_t l = 0; l < path.grid.lambda_factors.size(); ++l) {
            FitConfig c = config;
            c.gamma = path.grid.gammas[g];
            c.lambda = path.grid.lambda(g, l);
            FitResult r = fit(data, design, c, start);
            start = r.beta;
            if (l == 0) column_start = r.beta;
            path.fits[g].push_back(std::move(r));
        }
    }
    return path;
}

namespace {

// min over ||z|| <= 1 of ||r - lambda D z||.
double ball_distance(const OddsDesign& design, const Eigen::VectorXd& r, double lambda) {
    if (lambda == 0.0 || design.rank() == 0) return r.norm();
    const Eigen::VectorXd w = design.left_vectors().transpose() * r;
    const double perp2 = std::max(r.squaredNorm() - w.squaredNorm(), 0.0);
    const Eigen::VectorXd sigma = design.singular_sq().cwiseSqrt();
    const Eigen::VectorXd unconstrained = w.array() / (lambda * sigma.array());
    if (unconstrained.squaredNorm() <= 1.0) return std::sqrt(perp2);

    auto y_of = [&](double mu) -> Eigen::VectorXd {
        return (lambda * sigma.array() * w.array() / (lambda * lambda * sigma.array().square() + mu)).matrix();
    };
    double lo = 0.0;
    double hi = lambda * sigma.maxCoeff() * w.norm();
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (y_of(mid).squaredNorm() > 1.0 ? lo : hi) = mid;
    }
    const Eigen::VectorXd y = y_of(hi);
    const double range2 = (w.array() - lambda * sigma.array() * y.array()).square().sum();
    return std::sqrt(perp2 + range2);
}

}  // namespace

double kkt_residual(const Eigen::MatrixXd& beta, const Dataset& data, const OddsDesign& design, double lambda,
                    double gamma, LossKind objective) {
    Loss loss(data, objective);
    Eigen::MatrixXd grad;
    loss.value_and_gradient(beta, grad);
    const Eigen::MatrixXd& D = design.contrasts_real();

    double worst = grad.row(0).norm();
    for (Eigen::Index m = 1; m < beta.rows(); ++m) {
        const Eigen::VectorXd b = beta.row(m).transpose();
        const Eigen::VectorXd g = grad.row(m).transpose();
        const double bnorm = b.norm();
        double res = 0.0;
        if (bnorm == 0.0) {
            res = std::max(ball_distance(design, -g, lambda) - gamma, 0.0);
        } else {
            const Eigen::VectorXd db = D.transpose() * b;
            const Eigen::VectorXd smooth = g + gamma * b / bnorm;
            if (db.norm() > 1e-8 * (1.0 + bnorm)) {
                res = (smooth + lambda * D * db / db.norm()).norm();
            } else {
                res = ball_distance(design, -smooth, lambda);
            }
        }
        worst = std::max(worst, res);
    }
    return worst;
}

}  // namespace mvcat
