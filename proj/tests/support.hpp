#pragma once

// Test-only oracles and generators. Nothing here calls into the library's
// factorization or solve paths, so they can be used to check them.

#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fedsvd/dataset.hpp"

namespace fedsvd::testing {

// Gaussian elimination with partial pivoting, solving a x = b in place.
inline Vector gauss_solve(Matrix a, Vector b) {
    const Eigen::Index n = a.rows();
    for (Eigen::Index k = 0; k < n; ++k) {
        Eigen::Index pivot = k;
        for (Eigen::Index i = k + 1; i < n; ++i)
            if (std::abs(a(i, k)) > std::abs(a(pivot, k))) pivot = i;
        if (a(pivot, k) == 0.0) throw std::runtime_error("gauss_solve: singular system");
        if (pivot != k) {
            for (Eigen::Index j = 0; j < n; ++j) std::swap(a(k, j), a(pivot, j));
            std::swap(b(k), b(pivot));
        }
        for (Eigen::Index i = k + 1; i < n; ++i) {
            const double f = a(i, k) / a(k, k);
            for (Eigen::Index j = k; j < n; ++j) a(i, j) -= f * a(k, j);
            b(i) -= f * b(k);
        }
    }
    Vector x(n);
    for (Eigen::Index k = n - 1; k >= 0; --k) {
        double acc = b(k);
        for (Eigen::Index j = k + 1; j < n; ++j) acc -= a(k, j) * x(j);
        x(k) = acc / a(k, k);
    }
    return x;
}

// Direct solve of (X F F X^T + lambda I) w = X F F dbar per output, with
// the logistic F built from the closed form f'(logit(d)) = d (1 - d) and all
// sums accumulated with plain loops.
inline Matrix dense_ridge_weights(const Matrix& x_with_bias, const Matrix& targets, double lambda) {
    const Eigen::Index m = x_with_bias.rows();
    const Eigen::Index n = x_with_bias.cols();
    Matrix w(m, targets.cols());
    for (Eigen::Index k = 0; k < targets.cols(); ++k) {
        Matrix a = Matrix::Zero(m, m);
        Vector rhs = Vector::Zero(m);
        for (Eigen::Index s = 0; s < n; ++s) {
            const double d = targets(s, k);
            const double dbar = std::log(d / (1.0 - d));
            const double f2 = (d * (1.0 - d)) * (d * (1.0 - d));
            for (Eigen::Index i = 0; i < m; ++i) {
                rhs(i) += x_with_bias(i, s) * f2 * dbar;
                for (Eigen::Index j = 0; j < m; ++j) a(i, j) += x_with_bias(i, s) * f2 * x_with_bias(j, s);
            }
        }
        for (Eigen::Index i = 0; i < m; ++i) a(i, i) += lambda;
        w.col(k) = gauss_solve(a, rhs);
    }
    return w;
}

// Reference singular values from a divide-and-conquer SVD (a different
// algorithm from the one-sided Jacobi used by the library).
inline Vector reference_singular_values(const Matrix& a) {
    Eigen::BDCSVD<Matrix> svd(a);
    return svd.singularValues();
}

// Singular values recovered from the eigenvalues of a a^T, descending.
inline Vector gram_singular_values(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(a * a.transpose());
    Vector ev = eig.eigenvalues().reverse();
    return ev.cwiseMax(0.0).cwiseSqrt();
}

inline double rel_inf(const Matrix& got, const Matrix& want) {
    const double scale = want.cwiseAbs().maxCoeff();
    return (got - want).cwiseAbs().maxCoeff() / (scale > 0.0 ? scale : 1.0);
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix a(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) a(i, j) = g(rng);
    return a;
}

// Gaussian features labelled by a random linear teacher (argmax), with every
// class guaranteed at least one sample.
inline Dataset random_dataset(std::mt19937_64& rng, Eigen::Index features, std::size_t samples, std::size_t classes) {
    Dataset ds;
    ds.features = random_matrix(rng, features, static_cast<Eigen::Index>(samples));
    const Matrix teacher = random_matrix(rng, features, static_cast<Eigen::Index>(classes));
    const Matrix scores = teacher.transpose() * ds.features;
    for (std::size_t s = 0; s < samples; ++s) {
        Eigen::Index best = 0;
        scores.col(static_cast<Eigen::Index>(s)).maxCoeff(&best);
        ds.labels.push_back(static_cast<int>(best));
    }
    for (std::size_t c = 0; c < classes && c < samples; ++c) ds.labels[c] = static_cast<int>(c);
    for (std::size_t c = 0; c < classes; ++c) ds.class_list.push_back("c" + std::to_string(c));
    return ds;
}

// Unit-variance blobs; class c is centred at margin * e_c, so features must
// be at least the class count.
inline Dataset blobs(std::mt19937_64& rng, std::size_t samples, std::size_t classes, Eigen::Index features = 2,
                     double margin = 5.0) {
    if (features < static_cast<Eigen::Index>(classes)) throw std::invalid_argument("blobs: need features >= classes");
    std::normal_distribution<double> g(0.0, 1.0);
    Dataset ds;
    ds.features.resize(features, static_cast<Eigen::Index>(samples));
    for (std::size_t s = 0; s < samples; ++s) {
        const auto c = static_cast<int>(s % classes);
        for (Eigen::Index i = 0; i < features; ++i) ds.features(i, static_cast<Eigen::Index>(s)) = g(rng);
        ds.features(c, static_cast<Eigen::Index>(s)) += margin;
        ds.labels.push_back(c);
    }
    for (std::size_t c = 0; c < classes; ++c) ds.class_list.push_back("k" + std::to_string(c));
    return ds;
}

}  // namespace fedsvd::testing
