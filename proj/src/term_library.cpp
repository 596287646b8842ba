#include "bsl/term_library.hpp"

#include "bsl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace bsl::library {

namespace {

struct ForcingEntry {
    Forcing id;
    const char* name;
};

constexpr ForcingEntry kForcings[] = {
    {Forcing::Const, "const"},          {Forcing::SinXSinT, "sin(x)sin(t)"}, {Forcing::SinXCosT, "sin(x)cos(t)"},
    {Forcing::SinX, "sin(x)"},          {Forcing::SinXSinY, "sin(x)sin(y)"}, {Forcing::SinXCosY, "sin(x)cos(y)"},
};

double forcing_value(Forcing f, const Eigen::MatrixXd& points, Eigen::Index i) {
    const double x = points(i, 0);
    const double s = points.cols() > 1 ? points(i, 1) : 0.0;
    switch (f) {
        case Forcing::Const: return 1.0;
        case Forcing::SinXSinT:
        case Forcing::SinXSinY: return std::sin(x) * std::sin(s);
        case Forcing::SinXCosT:
        case Forcing::SinXCosY: return std::cos(s) * std::sin(x);
        case Forcing::SinX: return std::sin(x);
        case Forcing::None: break;
    }
    return 0.0;
}

// Expanded sequence of (state, deriv) with each field repeated by its exponent.
std::vector<FieldKey> expanded(const TermDescriptor& t) {
    std::vector<FieldKey> seq;
    for (const auto& f : t.factors)
        for (int e = 0; e < f.exponent; ++e) seq.push_back({f.state, f.deriv});
    return seq;
}

int forcing_rank(Forcing f) {
    int r = 0;
    for (const auto& e : kForcings) {
        if (e.id == f) return r;
        ++r;
    }
    return -1;
}

}  // namespace

std::string forcing_name(Forcing f) {
    for (const auto& e : kForcings)
        if (e.id == f) return e.name;
    return "";
}

Forcing parse_forcing(const std::string& name) {
    for (const auto& e : kForcings)
        if (name == e.name) return e.id;
    throw ConfigError("unknown forcing term '" + name + "'");
}

TermDescriptor TermDescriptor::constant() { return of_forcing(Forcing::Const); }

TermDescriptor TermDescriptor::of_forcing(Forcing f) {
    TermDescriptor t;
    t.forcing = f;
    return t;
}

TermDescriptor TermDescriptor::canonical() const {
    TermDescriptor out;
    out.forcing = forcing;
    std::vector<Factor> sorted = factors;
    std::sort(sorted.begin(), sorted.end(), [](const Factor& a, const Factor& b) {
        return FieldKey{a.state, a.deriv} < FieldKey{b.state, b.deriv};
    });
    for (const auto& f : sorted) {
        if (f.exponent < 1) throw ArgumentError("factor exponents must be at least 1");
        if (!out.factors.empty() && out.factors.back().state == f.state && out.factors.back().deriv == f.deriv)
            out.factors.back().exponent += f.exponent;
        else
            out.factors.push_back(f);
    }
    return out;
}

std::string TermDescriptor::key() const {
    const TermDescriptor c = canonical();
    if (c.is_forcing()) return forcing_name(c.forcing);
    std::ostringstream os;
    for (std::size_t i = 0; i < c.factors.size(); ++i) {
        const auto& f = c.factors[i];
        if (i) os << '*';
        os << 's' << f.state << 'd' << f.deriv.first << '.' << f.deriv.second << '^' << f.exponent;
    }
    return os.str();
}

int TermDescriptor::degree() const {
    int d = 0;
    for (const auto& f : factors) d += f.exponent;
    return d;
}

bool canonical_less(const TermDescriptor& a, const TermDescriptor& b) {
    const int da = a.degree();
    const int db = b.degree();
    if (da != db) return da < db;
    if (a.is_forcing() != b.is_forcing()) return a.is_forcing();
    if (a.is_forcing()) return forcing_rank(a.forcing) < forcing_rank(b.forcing);
    const auto ea = expanded(a.canonical());
    const auto eb = expanded(b.canonical());
    return std::lexicographical_compare(ea.begin(), ea.end(), eb.begin(), eb.end());
}

void sort_canonical(std::vector<TermDescriptor>& terms) {
    for (auto& t : terms) t = t.canonical();
    std::stable_sort(terms.begin(), terms.end(), canonical_less);
}

std::vector<TermDescriptor> build_polynomial_library(int d, int max_degree, bool include_constant) {
    if (d < 1) throw ArgumentError("state count must be at least 1");
    if (max_degree < 1) throw ArgumentError("polynomial degree must be at least 1");
    std::vector<TermDescriptor> out;
    if (include_constant) out.push_back(TermDescriptor::constant());
    // Nondecreasing state sequences of each length enumerate the monomials in graded lex order.
    for (int deg = 1; deg <= max_degree; ++deg) {
        std::vector<int> seq(static_cast<std::size_t>(deg), 0);
        while (true) {
            TermDescriptor t;
            for (int s : seq) t.factors.push_back({s, {}, 1});
            out.push_back(t.canonical());
            int pos = deg - 1;
            while (pos >= 0 && seq[static_cast<std::size_t>(pos)] == d - 1) --pos;
            if (pos < 0) break;
            const int v = seq[static_cast<std::size_t>(pos)] + 1;
            for (int j = pos; j < deg; ++j) seq[static_cast<std::size_t>(j)] = v;
        }
    }
    return out;
}

std::vector<TermDescriptor> build_monomials(int d, const std::vector<std::vector<int>>& exponents) {
    std::vector<TermDescriptor> out;
    for (const auto& e : exponents) {
        if (static_cast<int>(e.size()) != d) throw ConfigError("monomial exponent vector length differs from state count");
        TermDescriptor t;
        for (int s = 0; s < d; ++s) {
            if (e[static_cast<std::size_t>(s)] < 0) throw ConfigError("negative monomial exponent");
            if (e[static_cast<std::size_t>(s)] > 0) t.factors.push_back({s, {}, e[static_cast<std::size_t>(s)]});
        }
        out.push_back(t.factors.empty() ? TermDescriptor::constant() : t);
    }
    sort_canonical(out);
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i].key() == out[i - 1].key()) throw ConfigError("duplicate library term " + out[i].key());
    return out;
}

std::vector<TermDescriptor> build_pde_library(int max_poly_degree, int max_deriv_order,
                                              const std::vector<Forcing>& forcings, int spline_degree) {
    if (max_poly_degree < 1) throw ArgumentError("polynomial degree must be at least 1");
    if (max_deriv_order < 0) throw ArgumentError("derivative order must be nonnegative");
    if (max_deriv_order > spline_degree) {
        std::ostringstream msg;
        msg << "library derivative order " << max_deriv_order << " exceeds spline degree " << spline_degree;
        throw ConfigError(msg.str());
    }
    std::vector<TermDescriptor> out;
    for (int a = 1; a <= max_poly_degree; ++a) out.push_back({{{0, {}, a}}, Forcing::None});
    for (int q = 1; q <= max_deriv_order; ++q) {
        for (int b = 1; b <= max_poly_degree; ++b) {
            for (int a = 0; a + b <= max_poly_degree; ++a) {
                TermDescriptor t;
                if (a > 0) t.factors.push_back({0, {}, a});
                t.factors.push_back({0, {q, 0}, b});
                out.push_back(t);
            }
        }
    }
    for (Forcing f : forcings) out.push_back(TermDescriptor::of_forcing(f));
    sort_canonical(out);
    return out;
}

std::vector<TermDescriptor> build_library(const LibrarySpec& spec, int num_states, int spline_degree) {
    if (spec.kind == LibrarySpec::Kind::Pde) {
        if (num_states != 1) throw ConfigError("PDE libraries support a single state field");
        return build_pde_library(spec.max_poly_degree, spec.max_deriv, spec.forcings, spline_degree);
    }
    if (!spec.monomials.empty()) return build_monomials(num_states, spec.monomials);
    return build_polynomial_library(num_states, spec.max_degree, spec.constant);
}

std::vector<DerivOrder> required_derivs(const std::vector<TermDescriptor>& terms) {
    std::vector<DerivOrder> out{DerivOrder{}};
    for (const auto& t : terms)
        for (const auto& f : t.factors)
            if (std::find(out.begin(), out.end(), f.deriv) == out.end()) out.push_back(f.deriv);
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

const spline::BasisMatrix& basis_for(const BasisSet& basis, DerivOrder q) {
    auto it = basis.find(q);
    if (it == basis.end()) {
        std::ostringstream msg;
        msg << "no basis matrix for derivative order (" << q.first << ", " << q.second << ")";
        throw ConfigError(msg.str());
    }
    return it->second;
}

}  // namespace

FieldMap evaluate_fields(const std::vector<TermDescriptor>& terms, const Eigen::MatrixXd& theta,
                         const BasisSet& basis) {
    FieldMap fields;
    for (const auto& t : terms) {
        for (const auto& f : t.factors) {
            const FieldKey key{f.state, f.deriv};
            if (fields.count(key)) continue;
            if (f.state < 0 || f.state >= theta.cols()) throw ConfigError("descriptor references a missing state");
            const auto& n = basis_for(basis, f.deriv);
            if (n.cols() != theta.rows()) throw ArgumentError("control point count does not match basis");
            fields[key] = n.values * theta.col(f.state);
        }
    }
    return fields;
}

Eigen::MatrixXd evaluate_from_fields(const std::vector<TermDescriptor>& terms, const FieldMap& fields,
                                     const Eigen::MatrixXd& points) {
    const Eigen::Index rows = points.rows();
    Eigen::MatrixXd phi(rows, static_cast<Eigen::Index>(terms.size()));
    for (std::size_t j = 0; j < terms.size(); ++j) {
        const auto& t = terms[j];
        auto col = phi.col(static_cast<Eigen::Index>(j));
        if (t.is_forcing()) {
            for (Eigen::Index i = 0; i < rows; ++i) col(i) = forcing_value(t.forcing, points, i);
            continue;
        }
        col.setOnes();
        for (const auto& f : t.factors) {
            const Eigen::VectorXd& v = fields.at({f.state, f.deriv});
            col.array() *= v.array().pow(f.exponent);
        }
    }
    return phi;
}

LibraryMatrix evaluate_library(const std::vector<TermDescriptor>& terms, const Eigen::MatrixXd& theta,
                               const BasisSet& basis, const Eigen::MatrixXd& points) {
    const FieldMap fields = evaluate_fields(terms, theta, basis);
    for (const auto& [key, v] : fields)
        if (v.size() != points.rows()) throw ArgumentError("collocation point count does not match basis rows");
    return {evaluate_from_fields(terms, fields, points), terms};
}

namespace {

// d phi / d field for factor `which` of term t, evaluated pointwise.
Eigen::ArrayXd factor_partial(const TermDescriptor& t, std::size_t which, const FieldMap& fields) {
    const auto& fw = t.factors[which];
    const Eigen::ArrayXd& v = fields.at({fw.state, fw.deriv}).array();
    Eigen::ArrayXd out = fw.exponent == 1 ? Eigen::ArrayXd::Ones(v.size()).eval()
                                          : (fw.exponent * v.pow(fw.exponent - 1)).eval();
    for (std::size_t i = 0; i < t.factors.size(); ++i) {
        if (i == which) continue;
        const auto& f = t.factors[i];
        out *= fields.at({f.state, f.deriv}).array().pow(f.exponent);
    }
    return out;
}

}  // namespace

void accumulate_field_gradient(const std::vector<TermDescriptor>& terms, const FieldMap& fields,
                               const Eigen::MatrixXd& dphi, FieldMap& out) {
    for (std::size_t j = 0; j < terms.size(); ++j) {
        const auto& t = terms[j];
        for (std::size_t i = 0; i < t.factors.size(); ++i) {
            const FieldKey key{t.factors[i].state, t.factors[i].deriv};
            Eigen::ArrayXd g = factor_partial(t, i, fields) * dphi.col(static_cast<Eigen::Index>(j)).array();
            auto it = out.find(key);
            if (it == out.end())
                out.emplace(key, g.matrix());
            else
                it->second += g.matrix();
        }
    }
}

std::vector<Eigen::SparseMatrix<double>> library_jacobian_theta(const std::vector<TermDescriptor>& terms,
                                                                const Eigen::MatrixXd& theta,
                                                                const BasisSet& basis) {
    const FieldMap fields = evaluate_fields(terms, theta, basis);
    const Eigen::Index nb = theta.rows();
    const Eigen::Index rows = basis_for(basis, DerivOrder{}).rows();
    std::vector<Eigen::SparseMatrix<double>> out;
    out.reserve(terms.size());
    for (const auto& t : terms) {
        Eigen::SparseMatrix<double> jac(rows, nb * theta.cols());
        std::vector<Eigen::Triplet<double>> trip;
        for (std::size_t i = 0; i < t.factors.size(); ++i) {
            const auto& f = t.factors[i];
            const Eigen::ArrayXd partial = factor_partial(t, i, fields);
            const auto& n = basis_for(basis, f.deriv).values;
            for (Eigen::Index r = 0; r < n.outerSize(); ++r) {
                for (spline::SparseRowMatrix::InnerIterator it(n, r); it; ++it) {
                    trip.emplace_back(static_cast<int>(r), static_cast<int>(f.state * nb + it.col()),
                                      partial(r) * it.value());
                }
            }
        }
        jac.setFromTriplets(trip.begin(), trip.end());
        jac.prune(0.0);
        out.push_back(std::move(jac));
    }
    return out;
}

Naming ode_naming(int d) {
    Naming n;
    n.states.clear();
    if (d <= 3) {
        const char* names[] = {"x", "y", "z"};
        for (int i = 0; i < d; ++i) n.states.emplace_back(names[i]);
    } else {
        for (int i = 0; i < d; ++i) n.states.push_back("X" + std::to_string(i + 1));
    }
    n.axes = {"t"};
    n.subscript_derivs = false;
    return n;
}

std::string render_term(const TermDescriptor& term, const Naming& naming) {
    const TermDescriptor c = term.canonical();
    if (c.forcing == Forcing::Const) return "";
    if (c.is_forcing()) return forcing_name(c.forcing);
    std::string out;
    for (const auto& f : c.factors) {
        std::string name = naming.states.at(static_cast<std::size_t>(f.state));
        if (f.deriv.total() > 0) {
            name += naming.subscript_derivs ? "_" : "'";
            for (int i = 0; i < f.deriv.first; ++i) name += naming.axes.at(0);
            for (int i = 0; i < f.deriv.second; ++i) name += naming.axes.at(1);
        }
        out += name;
        if (f.exponent > 1) out += "^" + std::to_string(f.exponent);
    }
    return out;
}

std::vector<std::string> render_equation(const std::vector<TermDescriptor>& terms, const Eigen::MatrixXd& W,
                                         const std::optional<Eigen::MatrixXd>& W_std,
                                         const std::vector<std::string>& lhs, const Naming& naming) {
    if (W.rows() != static_cast<Eigen::Index>(terms.size())) throw ArgumentError("W rows differ from term count");
    if (static_cast<Eigen::Index>(lhs.size()) != W.cols()) throw ArgumentError("lhs names differ from state count");
    std::vector<std::string> out;
    for (Eigen::Index k = 0; k < W.cols(); ++k) {
        std::string line = lhs[static_cast<std::size_t>(k)] + " =";
        bool first = true;
        for (Eigen::Index j = 0; j < W.rows(); ++j) {
            const double c = W(j, k);
            if (c == 0.0) continue;
            char buf[64];
            if (first)
                std::snprintf(buf, sizeof buf, " %.4f", c);
            else
                std::snprintf(buf, sizeof buf, " %c %.4f", c < 0 ? '-' : '+', std::abs(c));
            line += buf;
            if (W_std) {
                std::snprintf(buf, sizeof buf, "(±%.3g)", (*W_std)(j, k));
                line += buf;
            }
            line += render_term(terms[static_cast<std::size_t>(j)], naming);
            first = false;
        }
        if (first) line += " 0";
        out.push_back(line);
    }
    return out;
}

}  // namespace bsl::library
