#include "bsl/spline_basis.hpp"

#include "bsl/errors.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseQR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace bsl::spline {

KnotVector::KnotVector(std::vector<double> knots, int degree)
    : knots_(std::move(knots)), degree_(degree), last_span_(-1) {
    if (degree_ < 0) throw ArgumentError("spline degree must be nonnegative");
    if (degree_ > 15) throw ArgumentError("spline degree above 15 is not supported");
    if (knots_.size() < static_cast<std::size_t>(degree_) + 2)
        throw ArgumentError("knot vector needs at least degree + 2 knots");
    if (!std::is_sorted(knots_.begin(), knots_.end()))
        throw ArgumentError("knot vector must be nondecreasing");
    if (!(knots_.back() > knots_.front())) throw ArgumentError("knot vector has zero length");
    for (int s = static_cast<int>(knots_.size()) - 2; s >= 0; --s) {
        if (knots_[static_cast<std::size_t>(s)] < knots_[static_cast<std::size_t>(s) + 1]) {
            last_span_ = s;
            break;
        }
    }
}

KnotVector KnotVector::clamped_uniform(double lo, double hi, int num_basis, int degree) {
    if (degree < 0) throw ArgumentError("spline degree must be nonnegative");
    if (num_basis < degree + 1) throw ArgumentError("need at least degree + 1 basis functions");
    if (!(hi > lo)) throw ArgumentError("empty spline domain");
    const int pieces = num_basis - degree;
    std::vector<double> knots;
    knots.reserve(static_cast<std::size_t>(num_basis + degree + 1));
    for (int i = 0; i < degree; ++i) knots.push_back(lo);
    for (int j = 0; j <= pieces; ++j) {
        knots.push_back(j == pieces ? hi : lo + (hi - lo) * static_cast<double>(j) / pieces);
    }
    for (int i = 0; i < degree; ++i) knots.push_back(hi);
    return KnotVector(std::move(knots), degree);
}

KnotVector KnotVector::uniform(double lo, double spacing, int num_basis, int degree) {
    if (!(spacing > 0)) throw ArgumentError("knot spacing must be positive");
    std::vector<double> knots(static_cast<std::size_t>(num_basis + degree + 1));
    for (std::size_t i = 0; i < knots.size(); ++i) knots[i] = lo + spacing * static_cast<double>(i);
    return KnotVector(std::move(knots), degree);
}

int KnotVector::find_span(double t) const {
    if (!contains(t)) {
        std::ostringstream msg;
        msg << "point " << t << " outside knot domain [" << lo() << ", " << hi() << "]";
        throw DomainError(msg.str());
    }
    if (t >= knots_[static_cast<std::size_t>(last_span_) + 1]) return last_span_;
    auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    return static_cast<int>(it - knots_.begin()) - 1;
}

namespace {

// Value of N_{s,p}(t) for any p <= degree on the same knot sequence, given the span of t.
double cox_de_boor(const KnotVector& kv, int span, int s, int p, double t) {
    if (span < s || span > s + p) return 0.0;
    // Triangular table: level r holds N_{s+j, r} for j = 0..p-r.
    double table[16];
    for (int j = 0; j <= p; ++j) table[j] = (s + j == span) ? 1.0 : 0.0;
    for (int r = 1; r <= p; ++r) {
        for (int j = 0; j <= p - r; ++j) {
            const int i = s + j;
            double value = 0.0;
            const double den_left = kv[i + r] - kv[i];
            if (den_left > 0.0 && table[j] != 0.0) value += (t - kv[i]) / den_left * table[j];
            const double den_right = kv[i + r + 1] - kv[i + 1];
            if (den_right > 0.0 && table[j + 1] != 0.0)
                value += (kv[i + r + 1] - t) / den_right * table[j + 1];
            table[j] = value;
        }
    }
    return table[0];
}

double deriv_recursive(const KnotVector& kv, int span, int s, int p, double t, int q) {
    if (q == 0) return cox_de_boor(kv, span, s, p, t);
    if (q > p) return 0.0;
    double value = 0.0;
    const double den_left = kv[s + p] - kv[s];
    if (den_left > 0.0) value += p / den_left * deriv_recursive(kv, span, s, p - 1, t, q - 1);
    const double den_right = kv[s + p + 1] - kv[s + 1];
    if (den_right > 0.0) value -= p / den_right * deriv_recursive(kv, span, s + 1, p - 1, t, q - 1);
    return value;
}

void check_index(const KnotVector& kv, int s) {
    if (s < 0 || s >= kv.num_basis()) throw ArgumentError("basis index out of range");
}

}  // namespace

double eval_basis(const KnotVector& knots, int s, double t) {
    check_index(knots, s);
    const int span = knots.find_span(t);
    return cox_de_boor(knots, span, s, knots.degree(), t);
}

double eval_basis_deriv(const KnotVector& knots, int s, double t, int q) {
    if (q < 0) throw ArgumentError("derivative order must be nonnegative");
    check_index(knots, s);
    const int span = knots.find_span(t);
    return deriv_recursive(knots, span, s, knots.degree(), t, q);
}

LocalBasis local_basis(const KnotVector& knots, double t, int q) {
    if (q < 0) throw ArgumentError("derivative order must be nonnegative");
    const int k = knots.degree();
    const int span = knots.find_span(t);
    const int first = std::max(0, span - k);
    const int last = std::min(knots.num_basis() - 1, span);
    LocalBasis out;
    out.first = first;
    for (int s = first; s <= last; ++s) out.values.push_back(deriv_recursive(knots, span, s, k, t, q));
    return out;
}

SplineSpace::SplineSpace(KnotVector axis0) { axes_.push_back(std::move(axis0)); }

SplineSpace::SplineSpace(KnotVector axis0, KnotVector axis1) {
    axes_.push_back(std::move(axis0));
    axes_.push_back(std::move(axis1));
}

int SplineSpace::num_basis() const {
    int n = 1;
    for (const auto& a : axes_) n *= a.num_basis();
    return n;
}

int SplineSpace::max_degree() const {
    int k = 0;
    for (const auto& a : axes_) k = std::max(k, a.degree());
    return k;
}

BasisMatrix build_basis_matrix(const SplineSpace& space, const Eigen::MatrixXd& points,
                               DerivOrder deriv) {
    if (points.cols() != space.dim())
        throw ArgumentError("point dimension does not match spline space");
    if (deriv.first < 0 || deriv.second < 0)
        throw ArgumentError("derivative order must be nonnegative");
    if (space.dim() == 1 && deriv.second != 0)
        throw ArgumentError("second-axis derivative requested on a 1-D space");

    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        for (int a = 0; a < space.dim(); ++a) {
            if (!space.axis(a).contains(points(i, a))) {
                std::ostringstream msg;
                msg << "point " << i << " (";
                for (int b = 0; b < space.dim(); ++b) msg << (b ? ", " : "") << points(i, b);
                msg << ") outside spline domain on axis " << a << " [" << space.axis(a).lo() << ", "
                    << space.axis(a).hi() << "]";
                throw DomainError(msg.str());
            }
        }
    }

    std::vector<Eigen::Triplet<double>> triplets;
    const int k0 = space.axis(0).degree();
    triplets.reserve(static_cast<std::size_t>(points.rows()) *
                     static_cast<std::size_t>((k0 + 1) * (space.max_degree() + 1)));

    if (space.dim() == 1) {
        for (Eigen::Index i = 0; i < points.rows(); ++i) {
            const LocalBasis lb = local_basis(space.axis(0), points(i, 0), deriv.first);
            for (std::size_t j = 0; j < lb.values.size(); ++j) {
                if (lb.values[j] != 0.0)
                    triplets.emplace_back(static_cast<int>(i), lb.first + static_cast<int>(j), lb.values[j]);
            }
        }
    } else {
        const int n1 = space.axis(1).num_basis();
        for (Eigen::Index i = 0; i < points.rows(); ++i) {
            const LocalBasis a = local_basis(space.axis(0), points(i, 0), deriv.first);
            const LocalBasis b = local_basis(space.axis(1), points(i, 1), deriv.second);
            for (std::size_t j0 = 0; j0 < a.values.size(); ++j0) {
                if (a.values[j0] == 0.0) continue;
                for (std::size_t j1 = 0; j1 < b.values.size(); ++j1) {
                    const double v = a.values[j0] * b.values[j1];
                    if (v == 0.0) continue;
                    const int col = (a.first + static_cast<int>(j0)) * n1 + b.first + static_cast<int>(j1);
                    triplets.emplace_back(static_cast<int>(i), col, v);
                }
            }
        }
    }

    BasisMatrix out;
    out.deriv = deriv;
    out.values.resize(points.rows(), space.num_basis());
    out.values.setFromTriplets(triplets.begin(), triplets.end());
    out.values.makeCompressed();
    return out;
}

Eigen::VectorXd fit_least_squares(const BasisMatrix& basis, const Eigen::VectorXd& data) {
    if (data.size() != basis.rows()) throw ArgumentError("data length does not match basis rows");
    if (basis.rows() < basis.cols()) {
        std::ostringstream msg;
        msg << "least-squares fit needs at least as many samples (" << basis.rows()
            << ") as control points (" << basis.cols() << "); use fewer control points";
        throw SingularityError(msg.str());
    }
    Eigen::SparseMatrix<double> a = basis.values;
    a.makeCompressed();
    Eigen::SparseQR<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> qr;
    qr.setPivotThreshold(1e-10);
    qr.compute(a);
    if (qr.info() != Eigen::Success || qr.rank() < basis.cols()) {
        std::ostringstream msg;
        msg << "spline basis matrix is rank deficient (rank " << qr.rank() << " of " << basis.cols()
            << "); use fewer control points";
        throw SingularityError(msg.str());
    }
    Eigen::VectorXd theta = qr.solve(data);
    if (!theta.allFinite()) throw SingularityError("least-squares solve produced non-finite values");
    return theta;
}

namespace {

Eigen::SparseMatrix<double> second_difference(int n) {
    Eigen::SparseMatrix<double> d(std::max(n - 2, 0), n);
    std::vector<Eigen::Triplet<double>> t;
    for (int i = 0; i + 2 < n; ++i) {
        t.emplace_back(i, i, 1.0);
        t.emplace_back(i, i + 1, -2.0);
        t.emplace_back(i, i + 2, 1.0);
    }
    d.setFromTriplets(t.begin(), t.end());
    return d;
}

Eigen::SparseMatrix<double> identity(int n) {
    Eigen::SparseMatrix<double> id(n, n);
    id.setIdentity();
    return id;
}

Eigen::SparseMatrix<double> kron(const Eigen::SparseMatrix<double>& a, const Eigen::SparseMatrix<double>& b) {
    Eigen::SparseMatrix<double> out(a.rows() * b.rows(), a.cols() * b.cols());
    std::vector<Eigen::Triplet<double>> t;
    for (int ka = 0; ka < a.outerSize(); ++ka)
        for (Eigen::SparseMatrix<double>::InnerIterator ia(a, ka); ia; ++ia)
            for (int kb = 0; kb < b.outerSize(); ++kb)
                for (Eigen::SparseMatrix<double>::InnerIterator ib(b, kb); ib; ++ib)
                    t.emplace_back(static_cast<int>(ia.row() * b.rows() + ib.row()),
                                   static_cast<int>(ia.col() * b.cols() + ib.col()), ia.value() * ib.value());
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

}  // namespace

namespace {

struct PenalizedSystem {
    Eigen::SparseMatrix<double> n;
    Eigen::SparseMatrix<double> normal;
    Eigen::SparseMatrix<double> penalty;  // scaled so that lambda is dimensionless
};

PenalizedSystem penalized_system(const SplineSpace& space, const BasisMatrix& basis) {
    PenalizedSystem sys;
    sys.n = basis.values;
    sys.normal = Eigen::SparseMatrix<double>(sys.n.transpose()) * sys.n;
    Eigen::SparseMatrix<double> penalty;
    if (space.dim() == 1) {
        const auto d = second_difference(space.axis(0).num_basis());
        penalty = Eigen::SparseMatrix<double>(d.transpose()) * d;
    } else {
        const int n0 = space.axis(0).num_basis();
        const int n1 = space.axis(1).num_basis();
        const auto d0 = kron(second_difference(n0), identity(n1));
        const auto d1 = kron(identity(n0), second_difference(n1));
        penalty = Eigen::SparseMatrix<double>(d0.transpose()) * d0 +
                  Eigen::SparseMatrix<double>(d1.transpose()) * d1;
    }
    // Scale the penalty to the data term so lambda is dimensionless.
    const double scale = sys.normal.diagonal().mean() / std::max(penalty.diagonal().mean(), 1e-300);
    sys.penalty = scale * penalty;
    return sys;
}

}  // namespace

Eigen::VectorXd fit_penalized(const SplineSpace& space, const BasisMatrix& basis,
                              const Eigen::VectorXd& data, double lambda) {
    if (data.size() != basis.rows()) throw ArgumentError("data length does not match basis rows");
    if (!(lambda >= 0)) throw ArgumentError("penalty weight must be nonnegative");
    const PenalizedSystem sys = penalized_system(space, basis);
    Eigen::SparseMatrix<double> system = sys.normal + lambda * sys.penalty;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(system);
    if (ldlt.info() != Eigen::Success) throw SingularityError("penalized spline system is singular");
    Eigen::VectorXd theta = ldlt.solve(Eigen::VectorXd(sys.n.transpose() * data));
    if (!theta.allFinite()) throw SingularityError("penalized spline solve produced non-finite values");
    return theta;
}

double gcv_penalty(const SplineSpace& space, const BasisMatrix& basis, const Eigen::VectorXd& data, int probes) {
    if (data.size() != basis.rows()) throw ArgumentError("data length does not match basis rows");
    if (probes < 1) throw ArgumentError("trace estimate needs at least one probe");
    const PenalizedSystem sys = penalized_system(space, basis);
    const auto n = static_cast<double>(data.size());
    // Fixed Rademacher probes keep the selection deterministic.
    std::mt19937_64 rng(0x5eed);
    std::bernoulli_distribution coin(0.5);
    std::vector<Eigen::VectorXd> z(static_cast<std::size_t>(probes), Eigen::VectorXd(data.size()));
    for (auto& v : z)
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = coin(rng) ? 1.0 : -1.0;
    const Eigen::VectorXd rhs = sys.n.transpose() * data;
    double best = -1.0;
    double best_score = std::numeric_limits<double>::infinity();
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    ldlt.analyzePattern(Eigen::SparseMatrix<double>(sys.normal + sys.penalty));
    for (int e = -12; e <= 4; ++e) {
        for (double m : {1.0, 3.0}) {
            const double lambda = m * std::pow(10.0, e);
            ldlt.factorize(Eigen::SparseMatrix<double>(sys.normal + lambda * sys.penalty));
            if (ldlt.info() != Eigen::Success) continue;
            const Eigen::VectorXd theta = ldlt.solve(rhs);
            const double rss = (data - sys.n * theta).squaredNorm();
            double trace = 0.0;
            for (const auto& v : z) trace += v.dot(sys.n * ldlt.solve(Eigen::VectorXd(sys.n.transpose() * v)));
            trace /= probes;
            const double dof = n - trace;
            if (!(dof > 0.5)) continue;
            const double score = n * rss / (dof * dof);
            if (score < best_score) {
                best_score = score;
                best = lambda;
            }
        }
    }
    if (best < 0) throw SingularityError("no penalty weight gives a well-posed spline fit");
    return best;
}

int default_control_points(int num_samples) {
    return std::min(num_samples, std::max(10, num_samples / 4));
}

}  // namespace bsl::spline
