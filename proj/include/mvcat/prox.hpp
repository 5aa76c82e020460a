#pragma once

#include <Eigen/Dense>

#include "mvcat/odds_design.hpp"

namespace mvcat {

/// Which branch of the closed-form solution applies to a row.
enum class ProxCase {
    Zero,        // ||nu|| < gamma_bar
    Projection,  // least-squares log odds within the lambda_bar ball: project onto null(D')
    Lagrange,    // shrink towards null(D') with multiplier tau > 0
};

/// Minimizer of 1/2||eta - nu||^2 + lambda_bar ||D'eta|| + gamma_bar ||eta||.
Eigen::VectorXd prox_row(const OddsDesign& design, const Eigen::Ref<const Eigen::VectorXd>& nu, double lambda_bar,
                         double gamma_bar, ProxCase* taken = nullptr);

/// Branch selection by direct evaluation of the two case conditions.
ProxCase prox_case(const OddsDesign& design, const Eigen::Ref<const Eigen::VectorXd>& nu, double lambda_bar,
                   double gamma_bar);

/// The tau > 0 with ||(D'D + tau I)^{-1} D' nu|| = lambda_bar. Requires
/// ||(D'D)^- D' nu|| > lambda_bar > 0.
double solve_tau(const OddsDesign& design, const Eigen::Ref<const Eigen::VectorXd>& nu, double lambda_bar);

/// Three-branch solution for J = K = 2 followed by the multiplicative shrink.
Eigen::Vector4d prox_2x2(const Eigen::Vector4d& nu, double lambda_bar, double gamma_bar);

/// Value of the prox objective at eta.
double prox_objective(const OddsDesign& design, const Eigen::Ref<const Eigen::VectorXd>& eta,
                      const Eigen::Ref<const Eigen::VectorXd>& nu, double lambda_bar, double gamma_bar);

/// Reference solver: ADMM on the splitting a = eta, w = D'eta. Works from D
/// alone (no spectral caches). Throws NumericError if the residuals do not
/// drop below `tol` within `iterations`.
Eigen::VectorXd numerical_prox_oracle(const OddsDesign& design, const Eigen::Ref<const Eigen::VectorXd>& nu,
                                      double lambda_bar, double gamma_bar, int iterations = 200000,
                                      double tol = 1e-12);

}  // namespace mvcat
