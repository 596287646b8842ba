#pragma once

#include "bsl/term_library.hpp"

#include <Eigen/Dense>

#include <vector>

namespace bsl::model {

/// Right-hand side Phi(u) w of a discovered ODE, compiled for repeated pointwise evaluation.
class OdeModel {
public:
    /// `W` is terms x states. Only the constant forcing is allowed in ODE libraries.
    OdeModel(const std::vector<library::TermDescriptor>& terms, const Eigen::MatrixXd& W);

    void rhs(const Eigen::VectorXd& u, Eigen::VectorXd& dudt) const;
    [[nodiscard]] int num_states() const { return static_cast<int>(W_.cols()); }

private:
    struct Term {
        std::vector<std::pair<int, int>> powers;  // (state, exponent)
        int row = 0;
    };
    std::vector<Term> terms_;
    Eigen::MatrixXd W_;
};

/// Method-of-lines right-hand side u_t = Phi(u, u_x, ...) w on a uniform periodic grid, with
/// fourth-order central differences along x.
class PdeModel {
public:
    PdeModel(const std::vector<library::TermDescriptor>& terms, const Eigen::VectorXd& w, double x0, double dx,
             int points);

    void rhs(double t, const Eigen::VectorXd& u, Eigen::VectorXd& dudt) const;
    /// Step size bound from a spectral-radius estimate of the linearized operator.
    [[nodiscard]] double stable_dt(const Eigen::VectorXd& u) const;
    /// Advances u from t over `span` with RK4 substeps no larger than stable_dt.
    void advance(double t, double span, Eigen::VectorXd& u) const;
    [[nodiscard]] int points() const { return points_; }

private:
    std::vector<library::TermDescriptor> terms_;
    Eigen::VectorXd w_;
    double x0_;
    double dx_;
    int points_;
    int max_deriv_ = 0;
};

/// Periodic fourth-order central difference of order q (1..3) of u with spacing h.
Eigen::VectorXd periodic_derivative(const Eigen::VectorXd& u, double h, int q);

}  // namespace bsl::model
