#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fedsvd/activation.hpp"
#include "fedsvd/error.hpp"
#include "fedsvd/svd.hpp"

namespace fedsvd {

// The pair each output neuron contributes: the scaled left factors U*S of
// X*F and the additive right-hand side m = X*F*F*dbar.
struct OutputFactors {
    Matrix us;
    Vector m;
};

// Everything a client sends to the coordinator. No raw samples.
struct ClientUpdate {
    std::vector<OutputFactors> per_output;
    Eigen::Index num_features = 0;  // including the bias row
    std::size_t sample_count = 0;   // diagnostic only, never transmitted

    std::size_t num_outputs() const noexcept { return per_output.size(); }
};

// Running global factors at the coordinator.
struct AggregateState {
    std::vector<OutputFactors> per_output;
    std::size_t clients_incorporated = 0;

    bool empty() const noexcept { return clients_incorporated == 0; }
    Eigen::Index num_features() const noexcept { return per_output.empty() ? 0 : per_output.front().m.size(); }
};

struct ModelWeights {
    Matrix w;  // features_with_bias x classes
    ActivationSpec activation;
    double lambda_used = 0.0;

    Eigen::Index num_features() const noexcept { return w.rows(); }
    Eigen::Index num_classes() const noexcept { return w.cols(); }
};

// Prepends the bias row of ones to a features x samples matrix.
inline Matrix with_bias(const Matrix& features) {
    Matrix out(features.rows() + 1, features.cols());
    out.row(0).setOnes();
    out.bottomRows(features.rows()) = features;
    return out;
}

// Client-side computation. `x` is features_with_bias x n (bias row already
// present), `targets` is n x c with entries inside the activation's clip range.
inline ClientUpdate fit_client(const Matrix& x, const Matrix& targets, const ActivationSpec& act = {}) {
    if (x.cols() == 0) throw ArgumentError("fit_client: batch has zero samples");
    if (targets.rows() != x.cols())
        throw ShapeError("fit_client: " + std::to_string(x.cols()) + " samples but " +
                         std::to_string(targets.rows()) + " target rows");
    if (targets.cols() == 0) throw ArgumentError("fit_client: no outputs");

    const Matrix dbar = act_inverse(targets, act);
    const Matrix fprime = act_derivative_at(dbar, act);

    ClientUpdate update;
    update.num_features = x.rows();
    update.sample_count = static_cast<std::size_t>(x.cols());
    update.per_output.reserve(static_cast<std::size_t>(targets.cols()));
    for (Eigen::Index k = 0; k < targets.cols(); ++k) {
        const auto f = fprime.col(k);
        const Matrix xf = x * f.asDiagonal();
        const Vector weighted = f.cwiseProduct(f).cwiseProduct(dbar.col(k));
        update.per_output.push_back({economy_svd(xf).scaled(), x * weighted});
    }
    return update;
}

// Folds one client's factors into the running state. An empty state is
// seeded with the update unchanged.
inline AggregateState incorporate(AggregateState state, const ClientUpdate& update) {
    if (update.per_output.empty()) throw ArgumentError("incorporate: update has no outputs");
    for (std::size_t k = 0; k < update.per_output.size(); ++k) {
        const auto& o = update.per_output[k];
        if (o.m.size() != update.num_features || o.us.rows() != update.num_features)
            throw ShapeError("incorporate: output " + std::to_string(k) + " of the update is inconsistent with " +
                             std::to_string(update.num_features) + " features");
    }

    if (state.empty()) {
        state.per_output = update.per_output;
        state.clients_incorporated = 1;
        return state;
    }

    if (state.per_output.size() != update.per_output.size())
        throw ShapeError("incorporate: state has " + std::to_string(state.per_output.size()) +
                         " outputs, update has " + std::to_string(update.per_output.size()));
    for (std::size_t k = 0; k < state.per_output.size(); ++k) {
        auto& cur = state.per_output[k];
        const auto& add = update.per_output[k];
        if (cur.m.size() != add.m.size())
            throw ShapeError("incorporate: output " + std::to_string(k) + " has " + std::to_string(cur.m.size()) +
                             " features in the state but " + std::to_string(add.m.size()) + " in the update");
        cur.m += add.m;
        cur.us = merge_scaled(cur.us, add.us).scaled();
    }
    ++state.clients_incorporated;
    return state;
}

// w = U (S^2 + lambda I)^-1 U^T m per output, evaluated right to left.
// With lambda == 0 only singular values above the rank threshold are inverted.
inline ModelWeights solve_weights(const AggregateState& state, double lambda, const ActivationSpec& act = {}) {
    if (!(lambda >= 0.0)) throw ArgumentError("solve_weights: lambda must be >= 0, got " + std::to_string(lambda));
    if (state.empty()) throw ArgumentError("solve_weights: no clients incorporated");

    ModelWeights out;
    out.activation = act;
    out.lambda_used = lambda;
    out.w = Matrix::Zero(state.num_features(), static_cast<Eigen::Index>(state.per_output.size()));
    for (std::size_t k = 0; k < state.per_output.size(); ++k) {
        const auto& o = state.per_output[k];
        if (o.us.cols() == 0) continue;
        const SvdFactors f = economy_svd(o.us);
        Vector proj = f.u.transpose() * o.m;
        for (Eigen::Index i = 0; i < f.rank(); ++i) proj(i) /= f.s(i) * f.s(i) + lambda;
        out.w.col(static_cast<Eigen::Index>(k)) = f.u * proj;
    }
    return out;
}

// n x c outputs f(X^T w) for a features x n matrix without the bias row.
inline Matrix predict(const Matrix& x, const ModelWeights& weights) {
    if (x.rows() + 1 != weights.num_features())
        throw ShapeError("predict: data has " + std::to_string(x.rows()) + " features, model expects " +
                         std::to_string(weights.num_features() - 1));
    Matrix z = (weights.w.bottomRows(x.rows()).transpose() * x).transpose();
    z.rowwise() += weights.w.row(0);
    return act_forward(z, weights.activation);
}

// Row-wise argmax; ties go to the lowest column.
inline std::vector<int> argmax_rows(const Matrix& outputs) {
    std::vector<int> idx(static_cast<std::size_t>(outputs.rows()), 0);
    for (Eigen::Index i = 0; i < outputs.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < outputs.cols(); ++j)
            if (outputs(i, j) > outputs(i, best)) best = j;
        idx[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return idx;
}

inline std::vector<int> classify_indices(const Matrix& x, const ModelWeights& weights) {
    return argmax_rows(predict(x, weights));
}

inline std::vector<std::string> classify(const Matrix& x, const ModelWeights& weights,
                                         std::span<const std::string> classes) {
    if (static_cast<Eigen::Index>(classes.size()) != weights.num_classes())
        throw ShapeError("classify: " + std::to_string(classes.size()) + " labels for " +
                         std::to_string(weights.num_classes()) + " outputs");
    std::vector<std::string> out;
    for (int i : classify_indices(x, weights)) out.push_back(classes[static_cast<std::size_t>(i)]);
    return out;
}

// Fraction of positions where predicted == expected.
inline double accuracy(std::span<const int> predicted, std::span<const int> expected) {
    if (predicted.size() != expected.size())
        throw ShapeError("accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(expected.size()) + " labels");
    if (predicted.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == expected[i];
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

}  // namespace fedsvd
