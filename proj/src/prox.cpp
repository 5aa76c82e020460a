#include "mvcat/prox.hpp"

#include <cmath>
#include <string>

#include "mvcat/error.hpp"

namespace mvcat {

namespace {

void check_penalties(double lambda_bar, double gamma_bar) {
    if (!(lambda_bar >= 0.0) || !(gamma_bar >= 0.0)) {
        throw DomainError("prox penalties must be nonnegative");
    }
}

void check_length(const OddsDesign& design, const Eigen::Ref<const Eigen::VectorXd>& nu) {
    if (nu.size() != design.classes()) {
        throw DomainError("prox input has length " + std::to_string(nu.size()) + ", expected " +
                          std::to_string(design.classes()));
    }
}

// ||(D'D + tau I)^{-1} D' nu|| from the projections w = U'nu.
double lagrange_norm(const Eigen::VectorXd& w2, const Eigen::VectorXd& v2, double tau) {
    return std::sqrt((w2.array() * v2.array() / (v2.array() + tau).square()).sum());
}

Eigen::VectorXd group_shrink(const Eigen::VectorXd& v, double threshold) {
    const double norm = v.norm();
    if (norm == 0.0) return Eigen::VectorXd::Zero(v.size());
    return std::max(1.0 - threshold / norm, 0.0) * v;
}

}  // namespace

ProxCase prox_case(const OddsDesign& design, const Eigen::Ref<const Eigen::VectorXd>& nu, double lambda_bar,
                   double gamma_bar) {
    check_penalties(lambda_bar, gamma_bar);
    check_length(design, nu);
    if (nu.norm() < gamma_bar) return ProxCase::Zero;
    if ((design.pinv_map() * nu).norm() <= lambda_bar) return ProxCase::Projection;
    return ProxCase::Lagrange;
}

double solve_tau(const OddsDesign& design, const Eigen::Ref<const Eigen::VectorXd>& nu, double lambda_bar) {
    check_length(design, nu);
    const Eigen::VectorXd& v2 = design.singular_sq();
    const Eigen::VectorXd w = design.left_vectors().transpose() * nu;
    const Eigen::VectorXd w2 = w.array().square();
    const double ls_norm = std::sqrt((w2.array() / v2.array()).sum());
    if (!(lambda_bar > 0.0) || !(ls_norm > lambda_bar)) {
        throw DomainError("solve_tau requires ||(D'D)^- D' nu|| > lambda_bar > 0");
    }

    auto residual = [&](double tau) { return lagrange_norm(w2, v2, tau) - lambda_bar; };

    if (design.uniform_spectrum()) {
        const double c = v2(0);
        const double tau = std::sqrt(c * w2.sum()) / lambda_bar - c;
        if (tau > 0.0 && std::abs(residual(tau)) <= 1e-10) return tau;
    }

    // residual() is strictly decreasing in tau, positive at 0 and <= 0 at hi.
    double lo = 0.0;
    double hi = std::sqrt(w2.sum() * v2.maxCoeff()) / lambda_bar;
    for (int it = 0; it < 300 && hi - lo > 4 * std::numeric_limits<double>::epsilon() * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (residual(mid) > 0.0 ? lo : hi) = mid;
    }
    double tau = 0.5 * (lo + hi);
    for (int it = 0; it < 3; ++it) {
        const double norm = lagrange_norm(w2, v2, tau);
        const double deriv = -(w2.array() * v2.array() / (v2.array() + tau).cube()).sum() / norm;
        if (deriv == 0.0) break;
        const double next = tau - (norm - lambda_bar) / deriv;
        if (!(next > lo && next < hi)) break;
        tau = next;
    }
    return tau;
}

Eigen::VectorXd prox_row(const OddsDesign& design, const Eigen::Ref<const Eigen::VectorXd>& nu, double lambda_bar,
                         double gamma_bar, ProxCase* taken) {
    const ProxCase which = prox_case(design, nu, lambda_bar, gamma_bar);
    if (taken) *taken = which;
    switch (which) {
        case ProxCase::Zero:
            return Eigen::VectorXd::Zero(nu.size());
        case ProxCase::Projection:
            return group_shrink(design.proj_null() * nu, gamma_bar);
        case ProxCase::Lagrange:
            break;
    }
    // lambda_bar > 0 here since the least-squares norm exceeds it; a zero
    // lambda_bar with D'nu != 0 is the tau -> infinity limit: no log odds shrinkage.
    if (lambda_bar == 0.0 || design.rank() == 0) return group_shrink(nu, gamma_bar);
    const double tau = solve_tau(design, nu, lambda_bar);
    const Eigen::VectorXd& v2 = design.singular_sq();
    const Eigen::VectorXd w = design.left_vectors().transpose() * nu;
    const Eigen::VectorXd ratio = v2.array() / (v2.array() + tau);
    const Eigen::VectorXd projected = nu - design.left_vectors() * ratio.cwiseProduct(w);
    return group_shrink(projected, gamma_bar);
}

Eigen::Vector4d prox_2x2(const Eigen::Vector4d& nu, double lambda_bar, double gamma_bar) {
    check_penalties(lambda_bar, gamma_bar);
    const Eigen::Vector4d sign(1.0, -1.0, -1.0, 1.0);
    const double contrast = nu(0) - nu(1) - nu(2) + nu(3);
    Eigen::Vector4d eta;
    if (std::abs(contrast) <= 4.0 * lambda_bar) {
        eta = nu - (contrast / 4.0) * sign;
    } else if (contrast > 4.0 * lambda_bar) {
        eta = nu - lambda_bar * sign;
    } else {
        eta = nu + lambda_bar * sign;
    }
    const double norm = eta.norm();
    if (norm == 0.0) return Eigen::Vector4d::Zero();
    return std::max(1.0 - gamma_bar / norm, 0.0) * eta;
}

double prox_objective(const OddsDesign& design, const Eigen::Ref<const Eigen::VectorXd>& eta,
                      const Eigen::Ref<const Eigen::VectorXd>& nu, double lambda_bar, double gamma_bar) {
    return 0.5 * (eta - nu).squaredNorm() + lambda_bar * (design.contrasts_real().transpose() * eta).norm() +
           gamma_bar * eta.norm();
}

Eigen::VectorXd numerical_prox_oracle(const OddsDesign& design, const Eigen::Ref<const Eigen::VectorXd>& nu,
                                      double lambda_bar, double gamma_bar, int iterations, double tol) {
    check_penalties(lambda_bar, gamma_bar);
    check_length(design, nu);
    const Eigen::MatrixXd& D = design.contrasts_real();
    const Eigen::Index T = D.rows();
    const Eigen::Index xi = D.cols();
    if (lambda_bar == 0.0 && gamma_bar == 0.0) return nu;

    const double rho = 1.0;
    const Eigen::MatrixXd system =
        (1.0 + rho) * Eigen::MatrixXd::Identity(T, T) + rho * D * D.transpose();
    const Eigen::LDLT<Eigen::MatrixXd> solver(system);

    Eigen::VectorXd eta = nu;
    Eigen::VectorXd a = nu;
    Eigen::VectorXd w = D.transpose() * nu;
    Eigen::VectorXd u1 = Eigen::VectorXd::Zero(T);
    Eigen::VectorXd u2 = Eigen::VectorXd::Zero(xi);
    const double scale = 1.0 + nu.norm();

    for (int it = 0; it < iterations; ++it) {
        eta = solver.solve(nu + rho * (a - u1) + rho * D * (w - u2));
        const Eigen::VectorXd d_eta = D.transpose() * eta;
        const Eigen::VectorXd a_prev = a;
        const Eigen::VectorXd w_prev = w;
        a = group_shrink(eta + u1, gamma_bar / rho);
        w = group_shrink(d_eta + u2, lambda_bar / rho);
        u1 += eta - a;
        u2 += d_eta - w;
        const double primal = (eta - a).norm() + (d_eta - w).norm();
        const double dual = rho * ((a - a_prev).norm() + (D * (w - w_prev)).norm());
        if (primal < tol * scale && dual < tol * scale) {
            // a carries exact zeros when the whole row is shrunk away.
            return a.norm() == 0.0 ? a : eta;
        }
    }
    throw NumericError("prox reference solver did not converge in " + std::to_string(iterations) + " iterations");
}

}  // namespace mvcat
