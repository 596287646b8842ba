#pragma once

#include "bsl/spline_basis.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bsl::library {

using spline::DerivOrder;

/// Closed set of explicit forcing terms. x is axis 0, t or y is axis 1.
enum class Forcing { None, Const, SinXSinT, SinXCosT, SinX, SinXSinY, SinXCosY };

std::string forcing_name(Forcing f);
/// Parses "sin(x)sin(t)", "const", ... Throws ConfigError for unknown names.
Forcing parse_forcing(const std::string& name);

struct Factor {
    int state = 0;
    DerivOrder deriv;
    int exponent = 1;
};

/// A product of powers of state fields and their derivatives, or a forcing term.
struct TermDescriptor {
    std::vector<Factor> factors;
    Forcing forcing = Forcing::None;

    static TermDescriptor constant();
    static TermDescriptor of_forcing(Forcing f);

    /// Factors sorted by (state, deriv) with repeated fields merged.
    [[nodiscard]] TermDescriptor canonical() const;
    /// Naming-independent identifier of the canonical form.
    [[nodiscard]] std::string key() const;
    [[nodiscard]] int degree() const;
    [[nodiscard]] bool is_forcing() const { return forcing != Forcing::None; }
};

/// Strict weak order: total degree, constant and forcing terms ahead of polynomial terms of equal
/// degree, then lexicographic on the expanded (state, deriv) sequence.
bool canonical_less(const TermDescriptor& a, const TermDescriptor& b);
void sort_canonical(std::vector<TermDescriptor>& terms);

/// All monomials in d states of total degree 1..max_degree, plus the constant when requested.
std::vector<TermDescriptor> build_polynomial_library(int d, int max_degree, bool include_constant);

/// Monomials given explicitly as exponent vectors of length d (all zeros = constant).
std::vector<TermDescriptor> build_monomials(int d, const std::vector<std::vector<int>>& exponents);

/// Terms u^a (d^q u / dx^q)^b with a + b <= max_poly_degree and 1 <= q <= max_deriv_order,
/// plus the listed forcings. Derivatives act along axis 0.
std::vector<TermDescriptor> build_pde_library(int max_poly_degree, int max_deriv_order,
                                              const std::vector<Forcing>& forcings, int spline_degree);

/// Library selection as configured per problem.
struct LibrarySpec {
    enum class Kind { Poly, Pde };
    Kind kind = Kind::Poly;
    int max_degree = 3;
    bool constant = true;
    /// Explicit monomial exponent vectors; when nonempty they replace the full polynomial set.
    std::vector<std::vector<int>> monomials;
    int max_poly_degree = 3;
    int max_deriv = 3;
    std::vector<Forcing> forcings;
};

std::vector<TermDescriptor> build_library(const LibrarySpec& spec, int num_states, int spline_degree);

struct FieldKey {
    int state = 0;
    DerivOrder deriv;
    auto operator<=>(const FieldKey&) const = default;
};

using BasisSet = std::map<DerivOrder, spline::BasisMatrix>;
using FieldMap = std::map<FieldKey, Eigen::VectorXd>;

/// Derivative orders referenced by any descriptor (always includes the zero order).
std::vector<DerivOrder> required_derivs(const std::vector<TermDescriptor>& terms);

/// Reconstructed fields N^{q} theta_k for every (state, q) a descriptor references.
/// `theta` holds one column per state. Throws ConfigError naming a missing derivative order.
FieldMap evaluate_fields(const std::vector<TermDescriptor>& terms, const Eigen::MatrixXd& theta,
                         const BasisSet& basis);

struct LibraryMatrix {
    Eigen::MatrixXd values;
    std::vector<TermDescriptor> descriptors;
};

/// Library columns from precomputed fields; `points` are the collocation coordinates used by forcings.
Eigen::MatrixXd evaluate_from_fields(const std::vector<TermDescriptor>& terms, const FieldMap& fields,
                                     const Eigen::MatrixXd& points);

LibraryMatrix evaluate_library(const std::vector<TermDescriptor>& terms, const Eigen::MatrixXd& theta,
                               const BasisSet& basis, const Eigen::MatrixXd& points);

/// Pullback of dL/dPhi (rows x terms) to dL/dfield for every referenced field, added into `out`.
void accumulate_field_gradient(const std::vector<TermDescriptor>& terms, const FieldMap& fields,
                               const Eigen::MatrixXd& dphi, FieldMap& out);

/// d phi_j / d theta for every column j, as (rows x num_basis*d) sparse matrices.
/// theta is flattened state-major: entry (s, k) sits at k * num_basis + s.
std::vector<Eigen::SparseMatrix<double>> library_jacobian_theta(const std::vector<TermDescriptor>& terms,
                                                                const Eigen::MatrixXd& theta,
                                                                const BasisSet& basis);

struct Naming {
    std::vector<std::string> states{"u"};
    /// Axis letters used for derivative subscripts and forcing arguments.
    std::vector<std::string> axes{"x", "t"};
    bool subscript_derivs = true;
};

Naming ode_naming(int d);
std::string render_term(const TermDescriptor& term, const Naming& naming);

/// One line per column of W: "<lhs> = c1(±s1)term1 - c2(±s2)term2 ...", 4 decimals, zeros omitted.
std::vector<std::string> render_equation(const std::vector<TermDescriptor>& terms, const Eigen::MatrixXd& W,
                                         const std::optional<Eigen::MatrixXd>& W_std,
                                         const std::vector<std::string>& lhs, const Naming& naming);

}  // namespace bsl::library
