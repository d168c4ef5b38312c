#pragma once

#include <charconv>
#include <cmath>
#include <sstream>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "fedsvd/error.hpp"

namespace fedsvd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ActivationKind : unsigned char {
    logistic = 0,
};

inline std::string to_string(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::logistic: return "logistic";
    }
    return "unknown";
}

inline ActivationKind activation_from_string(const std::string& name) {
    if (name == "logistic") return ActivationKind::logistic;
    throw ArgumentError("unknown activation '" + name + "'");
}

// Output nonlinearity of the one-layer network.
//
// `epsilon_clip` bounds the targets accepted by the inverse: only values in
// [epsilon_clip, 1 - epsilon_clip] are mapped, so the logit stays finite.
struct ActivationSpec {
    ActivationKind kind = ActivationKind::logistic;
    double epsilon_clip = 0.05;

    friend bool operator==(const ActivationSpec&, const ActivationSpec&) = default;
};

inline void validate(const ActivationSpec& act) {
    if (!(act.epsilon_clip > 0.0 && act.epsilon_clip < 0.5))
        throw ArgumentError("epsilon_clip must lie in (0, 0.5), got " + std::to_string(act.epsilon_clip));
}

namespace detail {

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

[[noreturn]] inline void throw_domain(const char* op, double value, Eigen::Index row, Eigen::Index col) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    std::ostringstream msg;
    msg << op << ": value " << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)) << " at (" << row << ", " << col << ") is outside the valid domain";
    throw DomainError(msg.str());
}

}  // namespace detail

// Elementwise f(z).
inline double act_forward(double z, const ActivationSpec& act) {
    switch (act.kind) {
        case ActivationKind::logistic: return detail::logistic(z);
    }
    throw ArgumentError("unsupported activation");
}

inline Matrix act_forward(const Matrix& z, const ActivationSpec& act) {
    return z.unaryExpr([&](double v) { return act_forward(v, act); });
}

// Elementwise f^-1 of encoded targets. Throws DomainError naming the first
// entry that falls outside [epsilon_clip, 1 - epsilon_clip].
inline Matrix act_inverse(const Matrix& targets, const ActivationSpec& act) {
    validate(act);
    const double lo = act.epsilon_clip;
    const double hi = 1.0 - act.epsilon_clip;
    Matrix out(targets.rows(), targets.cols());
    for (Eigen::Index j = 0; j < targets.cols(); ++j) {
        for (Eigen::Index i = 0; i < targets.rows(); ++i) {
            const double d = targets(i, j);
            if (!(d >= lo && d <= hi)) detail::throw_domain("act_inverse", d, i, j);
            switch (act.kind) {
                case ActivationKind::logistic: out(i, j) = std::log(d / (1.0 - d)); break;
            }
        }
    }
    return out;
}

// Elementwise f'(z), evaluated at pre-activation values (typically f^-1 of the targets).
inline Matrix act_derivative_at(const Matrix& z, const ActivationSpec& act) {
    Matrix out(z.rows(), z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            const double v = z(i, j);
            if (!std::isfinite(v)) detail::throw_domain("act_derivative_at", v, i, j);
            switch (act.kind) {
                case ActivationKind::logistic: {
                    const double y = detail::logistic(v);
                    out(i, j) = y * (1.0 - y);
                    break;
                }
            }
        }
    }
    return out;
}

}  // namespace fedsvd
