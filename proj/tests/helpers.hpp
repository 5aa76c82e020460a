#pragma once

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mvcat/likelihood.hpp"

namespace testing {

inline Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> d(0.0, sd);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = d(rng);
    }
    return m;
}

inline Eigen::MatrixXi uniform_responses(Eigen::Index n, const mvcat::CategoryLayout& layout, std::mt19937_64& rng) {
    Eigen::MatrixXi y(n, layout.responses());
    for (int r = 0; r < layout.responses(); ++r) {
        std::uniform_int_distribution<int> d(0, layout.categories(r) - 1);
        for (Eigen::Index i = 0; i < n; ++i) y(i, r) = d(rng);
    }
    return y;
}

/// Responses drawn from a random coefficient matrix so fits have signal.
inline mvcat::Dataset random_dataset(Eigen::Index n, Eigen::Index predictors, const mvcat::CategoryLayout& layout,
                                     std::mt19937_64& rng, double signal = 1.0) {
    const Eigen::MatrixXd raw = normal_matrix(n, predictors, rng);
    Eigen::MatrixXd x(n, predictors + 1);
    x << Eigen::VectorXd::Ones(n), raw;
    const Eigen::MatrixXd beta = normal_matrix(predictors + 1, layout.total_classes(), rng, signal);
    const Eigen::MatrixXd pi = mvcat::joint_probabilities(beta, x);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXi y(n, layout.responses());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double draw = u(rng);
        double cum = 0.0;
        int c = 0;
        for (; c < layout.total_classes() - 1; ++c) {
            cum += pi(i, c);
            if (draw < cum) break;
        }
        const auto cats = layout.categories_of(c);
        for (int r = 0; r < layout.responses(); ++r) y(i, r) = cats[static_cast<std::size_t>(r)];
    }
    return mvcat::make_dataset(raw, y, layout);
}

/// Central finite-difference gradient of f at beta.
template <class F>
Eigen::MatrixXd numeric_gradient(F&& f, const Eigen::MatrixXd& beta, double h = 1e-5) {
    Eigen::MatrixXd g(beta.rows(), beta.cols());
    Eigen::MatrixXd b = beta;
    for (Eigen::Index i = 0; i < beta.rows(); ++i) {
        for (Eigen::Index j = 0; j < beta.cols(); ++j) {
            const double keep = b(i, j);
            b(i, j) = keep + h;
            const double up = f(b);
            b(i, j) = keep - h;
            const double down = f(b);
            b(i, j) = keep;
            g(i, j) = (up - down) / (2.0 * h);
        }
    }
    return g;
}

/// Largest entrywise relative error, with absolute floor 1 on the scale.
inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return ((a - b).array().abs() / (1.0 + b.array().abs())).maxCoeff();
}

}  // namespace testing
