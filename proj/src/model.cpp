#include "bsl/model.hpp"

#include "bsl/errors.hpp"
#include "bsl/system_zoo.hpp"

#include <algorithm>
#include <cmath>

namespace bsl::model {

OdeModel::OdeModel(const std::vector<library::TermDescriptor>& terms, const Eigen::MatrixXd& W) : W_(W) {
    if (W.rows() != static_cast<Eigen::Index>(terms.size())) throw ArgumentError("W rows differ from term count");
    for (std::size_t j = 0; j < terms.size(); ++j) {
        if (W.row(static_cast<Eigen::Index>(j)).cwiseAbs().maxCoeff() == 0.0) continue;
        const auto& t = terms[j];
        if (t.is_forcing() && t.forcing != library::Forcing::Const)
            throw ConfigError("ODE models support only the constant forcing term");
        Term c;
        c.row = static_cast<int>(j);
        for (const auto& f : t.factors) {
            if (f.deriv.total() != 0) throw ConfigError("ODE library terms cannot contain derivatives");
            c.powers.emplace_back(f.state, f.exponent);
        }
        terms_.push_back(std::move(c));
    }
}

void OdeModel::rhs(const Eigen::VectorXd& u, Eigen::VectorXd& dudt) const {
    dudt = Eigen::VectorXd::Zero(W_.cols());
    for (const auto& t : terms_) {
        double v = 1.0;
        for (auto [s, e] : t.powers) {
            const double x = u(s);
            v *= e == 1 ? x : std::pow(x, e);
        }
        dudt += v * W_.row(t.row).transpose();
    }
}

Eigen::VectorXd periodic_derivative(const Eigen::VectorXd& u, double h, int q) {
    const auto n = u.size();
    Eigen::VectorXd d(n);
    auto at = [&](Eigen::Index i) { return u(((i % n) + n) % n); };
    for (Eigen::Index i = 0; i < n; ++i) {
        switch (q) {
            case 1: d(i) = (-at(i + 2) + 8 * at(i + 1) - 8 * at(i - 1) + at(i - 2)) / (12 * h); break;
            case 2:
                d(i) = (-at(i + 2) + 16 * at(i + 1) - 30 * at(i) + 16 * at(i - 1) - at(i - 2)) / (12 * h * h);
                break;
            case 3:
                d(i) = (-at(i + 3) + 8 * at(i + 2) - 13 * at(i + 1) + 13 * at(i - 1) - 8 * at(i - 2) + at(i - 3)) /
                       (8 * h * h * h);
                break;
            default: throw ArgumentError("finite-difference order must be 1, 2 or 3");
        }
    }
    return d;
}

PdeModel::PdeModel(const std::vector<library::TermDescriptor>& terms, const Eigen::VectorXd& w, double x0, double dx,
                   int points)
    : w_(w), x0_(x0), dx_(dx), points_(points) {
    if (w.size() != static_cast<Eigen::Index>(terms.size())) throw ArgumentError("w length differs from term count");
    if (points < 7) throw ArgumentError("method of lines needs at least 7 grid points");
    Eigen::VectorXd kept(w.size());
    int n = 0;
    for (std::size_t j = 0; j < terms.size(); ++j) {
        if (w(static_cast<Eigen::Index>(j)) == 0.0) continue;
        for (const auto& f : terms[j].factors) {
            if (f.deriv.second != 0) throw ConfigError("evolution models cannot contain time derivatives on the right");
            max_deriv_ = std::max(max_deriv_, f.deriv.first);
        }
        terms_.push_back(terms[j]);
        kept(n++) = w(static_cast<Eigen::Index>(j));
    }
    w_ = kept.head(n);
    if (max_deriv_ > 3) throw ConfigError("method of lines supports derivatives up to third order");
}

void PdeModel::rhs(double t, const Eigen::VectorXd& u, Eigen::VectorXd& dudt) const {
    library::FieldMap fields;
    fields[{0, {0, 0}}] = u;
    for (int q = 1; q <= max_deriv_; ++q) fields[{0, {q, 0}}] = periodic_derivative(u, dx_, q);
    Eigen::MatrixXd pts(points_, 2);
    for (int i = 0; i < points_; ++i) {
        pts(i, 0) = x0_ + dx_ * i;
        pts(i, 1) = t;
    }
    dudt = library::evaluate_from_fields(terms_, fields, pts) * w_;
}

double PdeModel::stable_dt(const Eigen::VectorXd& u) const {
    // Largest symbol magnitude of the fourth-order stencils at the grid Nyquist range.
    static const double kappa[] = {0.0, 1.372, 16.0 / 3.0, 6.0};
    library::FieldMap fields;
    fields[{0, {0, 0}}] = u;
    for (int q = 1; q <= max_deriv_; ++q) fields[{0, {q, 0}}] = periodic_derivative(u, dx_, q);
    double rho = 0.0;
    for (std::size_t j = 0; j < terms_.size(); ++j) {
        const auto& t = terms_[j];
        for (std::size_t i = 0; i < t.factors.size(); ++i) {
            const auto& f = t.factors[i];
            // Linearize with respect to the field in factor i, holding the others at their sup norm.
            double mag = std::abs(w_(static_cast<Eigen::Index>(j))) * f.exponent;
            for (std::size_t k = 0; k < t.factors.size(); ++k) {
                const auto& g = t.factors[k];
                const double sup = fields.at({g.state, g.deriv}).cwiseAbs().maxCoeff();
                mag *= std::pow(sup, k == i ? g.exponent - 1 : g.exponent);
            }
            rho += mag * kappa[f.deriv.first] / std::pow(dx_, f.deriv.first);
        }
    }
    if (rho <= 0) return std::numeric_limits<double>::infinity();
    return 2.0 / rho;
}

void PdeModel::advance(double t, double span, Eigen::VectorXd& u) const {
    double done = 0.0;
    Eigen::VectorXd k1, k2, k3, k4;
    int guard = 0;
    while (done < span) {
        const double dt = std::min(span - done, stable_dt(u));
        if (!(dt > 0) || ++guard > 10'000'000) throw NumericalError("method-of-lines step size collapsed");
        const double s = t + done;
        rhs(s, u, k1);
        rhs(s + 0.5 * dt, u + 0.5 * dt * k1, k2);
        rhs(s + 0.5 * dt, u + 0.5 * dt * k2, k3);
        rhs(s + dt, u + dt * k3, k4);
        u += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        if (!u.allFinite()) throw NumericalError("method-of-lines state became non-finite");
        done += dt;
    }
}

}  // namespace bsl::model
