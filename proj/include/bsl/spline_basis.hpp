#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <compare>
#include <span>
#include <vector>

namespace bsl::spline {

/// Per-axis derivative order. Axis 0 is t for ODEs and x for PDEs; axis 1 is t (or y).
struct DerivOrder {
    int first = 0;
    int second = 0;

    auto operator<=>(const DerivOrder&) const = default;
    [[nodiscard]] int total() const { return first + second; }
};

/// Nondecreasing knot sequence tau_0 <= ... <= tau_{n+k} for n basis functions of degree k.
class KnotVector {
public:
    KnotVector(std::vector<double> knots, int degree);

    /// Uniform breakpoints on [lo, hi] with the end knots repeated degree+1 times.
    static KnotVector clamped_uniform(double lo, double hi, int num_basis, int degree);
    /// Equally spaced knots lo, lo + h, ..., lo + (num_basis + degree) h.
    static KnotVector uniform(double lo, double spacing, int num_basis, int degree);

    [[nodiscard]] int degree() const { return degree_; }
    [[nodiscard]] int num_basis() const { return static_cast<int>(knots_.size()) - degree_ - 1; }
    [[nodiscard]] std::span<const double> knots() const { return knots_; }
    [[nodiscard]] double operator[](int i) const { return knots_[static_cast<std::size_t>(i)]; }
    [[nodiscard]] double lo() const { return knots_.front(); }
    [[nodiscard]] double hi() const { return knots_.back(); }
    [[nodiscard]] bool contains(double t) const { return t >= lo() && t <= hi(); }

    /// Index s of the nonempty interval [tau_s, tau_{s+1}) holding t. The last nonempty
    /// interval is closed on the right so that hi() is evaluable.
    [[nodiscard]] int find_span(double t) const;

private:
    std::vector<double> knots_;
    int degree_;
    int last_span_;
};

/// Cox-de Boor value N_{s,k}(t). Throws DomainError outside [tau_0, tau_last].
double eval_basis(const KnotVector& knots, int s, double t);

/// q-th derivative of N_{s,k} at t by repeated application of the degree-lowering
/// derivative identity. Orders above the degree give 0; q < 0 throws ArgumentError.
double eval_basis_deriv(const KnotVector& knots, int s, double t, int q);

/// Nonzero basis derivatives of order q at t: indices first..first+values.size()-1.
struct LocalBasis {
    int first = 0;
    std::vector<double> values;
};
LocalBasis local_basis(const KnotVector& knots, double t, int q);

/// Tensor-product spline space over one or two axes.
class SplineSpace {
public:
    explicit SplineSpace(KnotVector axis0);
    SplineSpace(KnotVector axis0, KnotVector axis1);

    [[nodiscard]] int dim() const { return static_cast<int>(axes_.size()); }
    [[nodiscard]] const KnotVector& axis(int i) const { return axes_[static_cast<std::size_t>(i)]; }
    /// Product of the per-axis basis counts; 2-D columns are linearized as s0 * n1 + s1.
    [[nodiscard]] int num_basis() const;
    [[nodiscard]] int max_degree() const;

private:
    std::vector<KnotVector> axes_;
};

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Basis functions (or their derivatives) evaluated at a point set.
struct BasisMatrix {
    SparseRowMatrix values;
    DerivOrder deriv;

    [[nodiscard]] Eigen::Index rows() const { return values.rows(); }
    [[nodiscard]] Eigen::Index cols() const { return values.cols(); }
};

/// Evaluate the space at `points` (one row per point, one column per axis).
/// Throws DomainError naming the first point outside the knot domain.
BasisMatrix build_basis_matrix(const SplineSpace& space, const Eigen::MatrixXd& points,
                               DerivOrder deriv = {});

/// Ordinary least squares control points minimizing ||data - N theta||_2.
/// Throws SingularityError when N does not have full column rank.
Eigen::VectorXd fit_least_squares(const BasisMatrix& basis, const Eigen::VectorXd& data);

/// Least squares with a second-difference roughness penalty on the control net,
/// usable when the measurement basis alone is rank deficient.
Eigen::VectorXd fit_penalized(const SplineSpace& space, const BasisMatrix& basis,
                              const Eigen::VectorXd& data, double lambda);

/// Penalty weight for fit_penalized minimizing generalized cross-validation over a log grid, with
/// the hat-matrix trace estimated from `probes` fixed random sign vectors.
double gcv_penalty(const SplineSpace& space, const BasisMatrix& basis, const Eigen::VectorXd& data, int probes = 8);

/// One control point per four samples, at least ten, never more than the sample count.
int default_control_points(int num_samples);

}  // namespace bsl::spline
