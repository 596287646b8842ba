#include "bsl/bayes_ado.hpp"

#include "bsl/errors.hpp"
#include "bsl/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace bsl::ado {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double mean_square(const Eigen::VectorXd& v) { return v.size() ? v.squaredNorm() / static_cast<double>(v.size()) : 0.0; }

double variance_floor(const Eigen::VectorXd& v, double rel) { return rel * std::max(mean_square(v), 1e-300); }

std::vector<library::TermDescriptor> active_terms(const Problem& prob, const sparse::ActiveMask& active,
                                                  std::vector<int>& cols) {
    cols.clear();
    std::vector<library::TermDescriptor> sub;
    for (Eigen::Index j = 0; j < active.rows(); ++j) {
        if (active.row(j).any()) {
            cols.push_back(static_cast<int>(j));
            sub.push_back(prob.terms[static_cast<std::size_t>(j)]);
        }
    }
    return sub;
}

const spline::BasisMatrix& basis_at(const Problem& prob, spline::DerivOrder q) {
    auto it = prob.basis.find(q);
    if (it == prob.basis.end()) {
        std::ostringstream msg;
        msg << "no collocation basis for derivative order (" << q.first << ", " << q.second << ")";
        throw ConfigError(msg.str());
    }
    return it->second;
}

Eigen::MatrixXd full_library(const Problem& prob, const Eigen::MatrixXd& theta) {
    return library::evaluate_library(prob.terms, theta, prob.basis, prob.colloc).values;
}

Eigen::MatrixXd lhs_values(const Problem& prob, const Eigen::MatrixXd& theta) {
    return basis_at(prob, prob.lhs).values * theta;
}

RowWeights bernoulli_weights(const Problem& prob, double fraction, std::mt19937_64& rng) {
    RowWeights w;
    std::bernoulli_distribution keep(fraction);
    w.measure.resize(prob.measure.rows());
    for (Eigen::Index i = 0; i < w.measure.size(); ++i) w.measure(i) = keep(rng) ? 1.0 / fraction : 0.0;
    w.colloc.resize(prob.colloc.rows());
    for (Eigen::Index i = 0; i < w.colloc.size(); ++i) w.colloc(i) = keep(rng) ? 1.0 / fraction : 0.0;
    return w;
}

struct Floors {
    Eigen::VectorXd log_b;
    Eigen::VectorXd log_p;
};

Floors variance_floors(const Problem& prob, const Hyperparams& hyper, const TrainState& init) {
    Floors f;
    const auto d = prob.data.cols();
    f.log_b.resize(d);
    f.log_p.resize(d);
    const Eigen::MatrixXd target = lhs_values(prob, init.theta);
    for (Eigen::Index k = 0; k < d; ++k) {
        f.log_b(k) = std::log(variance_floor(prob.data.col(k), hyper.b_floor));
        f.log_p(k) = std::log(variance_floor(target.col(k), hyper.p_floor));
    }
    return f;
}

Eigen::VectorXd lower_bounds(const Packing& packing, const Floors& floors) {
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(packing.size(), -kInf);
    for (const auto& b : packing.blocks()) {
        if (b.name == "log_b") lo.segment(b.offset, b.size) = floors.log_b;
        if (b.name == "log_p") lo.segment(b.offset, b.size) = floors.log_p;
    }
    return lo;
}

LossFn make_loss(const Problem& prob, const Hyperparams& hyper, const Packing& packing, const TrainState& like,
                 double batch_fraction) {
    return [&prob, &hyper, packing, like, batch_fraction](const Eigen::VectorXd& x, Eigen::VectorXd& g,
                                                         std::mt19937_64* rng) {
        TrainState s = like;
        packing.unpack(x, s);
        TrainState grad;
        RowWeights w;
        const bool stochastic = rng != nullptr && batch_fraction < 1.0;
        if (stochastic) w = bernoulli_weights(prob, batch_fraction, *rng);
        const double loss = neg_log_posterior(prob, hyper, s, &grad, stochastic ? &w : nullptr).total();
        grad.active = s.active;
        g = packing.pack(grad);
        return loss;
    };
}

sparse::StResult prune(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& target, const Eigen::VectorXd& P,
                       const Hyperparams& hyper, const sparse::ActiveMask& active) {
    if (!hyper.normalized_threshold) return sparse::st_sparse_bayes(phi, target, P, hyper.threshold, active);
    // Threshold coefficients of unit-rms columns against unit-rms targets.
    const auto rows = static_cast<double>(phi.rows());
    Eigen::VectorXd c = (phi.colwise().squaredNorm().transpose() / rows).cwiseSqrt();
    Eigen::VectorXd t = (target.colwise().squaredNorm().transpose() / rows).cwiseSqrt();
    for (Eigen::Index j = 0; j < c.size(); ++j)
        if (!(c(j) > 0)) c(j) = 1.0;
    for (Eigen::Index k = 0; k < t.size(); ++k)
        if (!(t(k) > 0)) t(k) = 1.0;
    const Eigen::MatrixXd phin = phi * c.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd tn = target * t.cwiseInverse().asDiagonal();
    const Eigen::VectorXd pn = P.cwiseQuotient(t.cwiseAbs2());
    sparse::StResult st = sparse::st_sparse_bayes(phin, tn, pn, hyper.threshold, active);
    st.W = c.cwiseInverse().asDiagonal() * st.W * t.asDiagonal();
    if (st.W_std.size()) st.W_std = c.cwiseInverse().asDiagonal() * st.W_std * t.asDiagonal();
    st.P = st.P.cwiseProduct(t.cwiseAbs2());
    return st;
}

}  // namespace

void Hyperparams::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(a0, "a0");
    positive(b0, "b0");
    positive(a1, "a1");
    positive(b1, "b1");
    positive(lr, "lr");
    positive(swag_lr, "swag_lr");
    positive(collocation_factor, "collocation_factor");
    positive(b_floor, "b_floor");
    positive(p_floor, "p_floor");
    if (ado_iters < 1) throw ConfigError("ado_iters must be at least 1");
    if (ado_epochs < 1) throw ConfigError("ado_epochs must be at least 1");
    if (post_epochs < 0) throw ConfigError("post_epochs must be nonnegative");
    if (swag_epochs < 1 && !deterministic) throw ConfigError("swag_epochs must be at least 1");
    if (swag_rank < 1) throw ConfigError("swag_rank must be at least 1");
    if (snapshot_every < 1) throw ConfigError("snapshot_every must be at least 1");
    if (!(threshold >= 0)) throw ConfigError("threshold must be nonnegative");
    if (!(swag_batch_fraction > 0 && swag_batch_fraction <= 1)) throw ConfigError("swag_batch_fraction must be in (0, 1]");
    if (!(init_penalty >= 0)) throw ConfigError("init_penalty must be nonnegative");
    if (!(collocation_margin >= 0 && collocation_margin < 0.5))
        throw ConfigError("collocation_margin must be in [0, 0.5)");
}

Hyperparams default_hyperparams(const std::string& id, Schedule schedule) {
    Hyperparams h;
    const bool full = schedule == Schedule::Full;
    auto phases = [&](int iters, int ado, int post, int swag, int desk_ado, int desk_post, int desk_swag) {
        h.ado_iters = iters;
        h.ado_epochs = full ? ado : desk_ado;
        h.post_epochs = full ? post : desk_post;
        h.swag_epochs = full ? swag : desk_swag;
    };
    if (id == "vdp") {
        phases(5, 20000, 1000, 1500, 4000, 250, 500);
    } else if (id == "lorenz96") {
        phases(5, 50000, 65000, 80000, 2000, 500, 500);
        h.collocation_factor = 1.0;
    } else if (id == "advection") {
        phases(1, 20000, 2000, 500, 2000, 250, 500);
        h.collocation_margin = 0.1;
    } else if (id == "burgers") {
        phases(5, 20000, 500, 500, 6000, 250, 500);
        h.collocation_factor = 1.0;
        h.collocation_margin = 0.1;
        h.p_floor = 1e-3;
    } else if (id == "burgers_source" || id == "heat" || id == "poisson") {
        phases(5, 20000, 1000, 500, 3000, 250, 500);
        h.collocation_factor = 1.0;
        h.collocation_margin = 0.1;
        h.p_floor = 1e-3;
    } else if (id == "lotka_volterra" || id == "hare_lynx") {
        phases(5, 20000, 1000, 1500, 4000, 250, 500);
        // The predation coefficients are about 0.025.
        h.threshold = 0.005;
        // Twenty-one annual counts leave the physics term dominant unless P stays large.
        if (id == "hare_lynx") h.p_floor = 0.2;
    } else if (!full) {
        phases(5, 0, 0, 0, 3000, 250, 500);
    }
    return h;
}

Eigen::MatrixXd collocation_grid(const std::vector<double>& lo, const std::vector<double>& hi,
                                 const std::vector<int>& counts) {
    if (lo.size() != hi.size() || lo.size() != counts.size() || lo.empty() || lo.size() > 2)
        throw ArgumentError("collocation grid needs one or two axes");
    for (int c : counts)
        if (c < 2) throw ArgumentError("collocation grid needs at least two points per axis");
    auto axis = [&](std::size_t a, int i) { return lo[a] + (hi[a] - lo[a]) * i / (counts[a] - 1); };
    if (lo.size() == 1) {
        Eigen::MatrixXd pts(counts[0], 1);
        for (int i = 0; i < counts[0]; ++i) pts(i, 0) = axis(0, i);
        return pts;
    }
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(counts[0]) * counts[1], 2);
    Eigen::Index r = 0;
    for (int i = 0; i < counts[0]; ++i)
        for (int j = 0; j < counts[1]; ++j, ++r) {
            pts(r, 0) = axis(0, i);
            pts(r, 1) = axis(1, j);
        }
    return pts;
}

Problem make_problem(spline::SplineSpace space, const Eigen::MatrixXd& coords, const Eigen::MatrixXd& data,
                     const Eigen::MatrixXd& colloc, std::vector<library::TermDescriptor> terms, spline::DerivOrder lhs) {
    if (coords.rows() != data.rows()) throw ArgumentError("coordinates and data differ in rows");
    if (coords.cols() != space.dim() || colloc.cols() != space.dim())
        throw ArgumentError("point dimension differs from the spline space");
    if (terms.empty()) throw ConfigError("empty term library");
    auto measure = spline::build_basis_matrix(space, coords);
    library::BasisSet basis;
    auto derivs = library::required_derivs(terms);
    derivs.push_back(lhs);
    for (const auto& q : derivs)
        if (!basis.count(q)) basis.emplace(q, spline::build_basis_matrix(space, colloc, q));
    return Problem{std::move(space), std::move(measure), data, colloc, std::move(basis), lhs, std::move(terms)};
}

Problem make_problem(const zoo::Benchmark& bench, const zoo::Dataset& data, const Hyperparams& hyper) {
    const int dim = bench.kind == zoo::ProblemKind::Ode ? 1 : 2;
    if (data.coords.cols() != dim) throw ConfigError("dataset dimension does not match the benchmark");
    if (data.coords.rows() < 2) throw ConfigError("dataset has fewer than two rows");
    std::vector<double> lo(dim), hi(dim);
    std::vector<int> colloc_counts(dim);
    std::vector<spline::KnotVector> axes;
    for (int a = 0; a < dim; ++a) {
        lo[a] = data.coords.col(a).minCoeff();
        hi[a] = data.coords.col(a).maxCoeff();
        if (!(hi[a] > lo[a])) throw ConfigError("dataset spans zero length on an axis");
        std::set<double> distinct(data.coords.col(a).data(), data.coords.col(a).data() + data.coords.rows());
        const int n_axis = static_cast<int>(distinct.size());
        int control = a < static_cast<int>(bench.control.size()) ? bench.control[a] : 0;
        if (control <= 0) control = spline::default_control_points(n_axis);
        control = std::max(control, bench.spline_degree + 1);
        axes.push_back(spline::KnotVector::clamped_uniform(lo[a], hi[a], control, bench.spline_degree));
        colloc_counts[a] = std::max(
            2, static_cast<int>(std::lround(n_axis * std::pow(hyper.collocation_factor, 1.0 / dim))));
    }
    spline::SplineSpace space = dim == 1 ? spline::SplineSpace(axes[0]) : spline::SplineSpace(axes[0], axes[1]);
    auto terms = library::build_library(bench.library, bench.num_states, bench.spline_degree);
    std::vector<double> clo = lo, chi = hi;
    for (int a = 0; a < dim; ++a) {
        const double w = hyper.collocation_margin * (hi[a] - lo[a]);
        clo[a] += w;
        chi[a] -= w;
    }
    return make_problem(std::move(space), data.coords, data.values, collocation_grid(clo, chi, colloc_counts),
                        std::move(terms), zoo::lhs_deriv(bench));
}

LossParts neg_log_posterior(const Problem& prob, const Hyperparams& hyper, const TrainState& s, TrainState* grad,
                            const RowWeights* weights) {
    const Eigen::Index nb = s.theta.rows();
    const Eigen::Index d = s.theta.cols();
    const Eigen::Index m = static_cast<Eigen::Index>(prob.terms.size());
    const auto n = static_cast<double>(prob.measure.rows());
    const auto nc = static_cast<double>(prob.colloc.rows());
    if (nb != prob.measure.cols() || prob.data.cols() != d || s.W.rows() != m || s.W.cols() != d ||
        s.active.rows() != m || s.active.cols() != d || s.log_b.size() != d || s.log_p.size() != d)
        throw ArgumentError("train state shape does not match the problem");
    const bool wm = weights && weights->measure.size();
    const bool wc = weights && weights->colloc.size();
    LossParts parts;
    if (grad) {
        grad->theta = Eigen::MatrixXd::Zero(nb, d);
        grad->W = Eigen::MatrixXd::Zero(m, d);
        grad->log_b = Eigen::VectorXd::Zero(d);
        grad->log_p = Eigen::VectorXd::Zero(d);
        grad->active = s.active;
    }

    // Data misfit.
    const Eigen::MatrixXd resid = prob.data - prob.measure.values * s.theta;
    for (Eigen::Index k = 0; k < d; ++k) {
        const Eigen::VectorXd r = resid.col(k);
        const Eigen::VectorXd rw = wm ? Eigen::VectorXd(weights->measure.cwiseProduct(r)) : r;
        const double rr = r.dot(rw);
        const double b = std::exp(s.log_b(k));
        parts.data += 0.5 * rr / b + 0.5 * n * s.log_b(k);
        if (grad) {
            grad->theta.col(k) -= prob.measure.values.transpose() * (rw / b);
            grad->log_b(k) = -0.5 * rr / b + 0.5 * n;
        }
    }

    // Equation residual on the collocation points.
    std::vector<int> cols;
    const auto sub = active_terms(prob, s.active, cols);
    const auto ms = static_cast<Eigen::Index>(cols.size());
    Eigen::MatrixXd wsub(ms, d);
    for (Eigen::Index a = 0; a < ms; ++a)
        for (Eigen::Index k = 0; k < d; ++k) {
            const int j = cols[static_cast<std::size_t>(a)];
            wsub(a, k) = s.active(j, k) ? s.W(j, k) : 0.0;
        }
    const library::FieldMap fields = library::evaluate_fields(sub, s.theta, prob.basis);
    const Eigen::MatrixXd phi = library::evaluate_from_fields(sub, fields, prob.colloc);
    const auto& nlhs = basis_at(prob, prob.lhs).values;
    const Eigen::MatrixXd eq = nlhs * s.theta - phi * wsub;
    Eigen::MatrixXd scaled(eq.rows(), d);
    for (Eigen::Index k = 0; k < d; ++k) {
        const Eigen::VectorXd e = eq.col(k);
        const Eigen::VectorXd ew = wc ? Eigen::VectorXd(weights->colloc.cwiseProduct(e)) : e;
        const double ee = e.dot(ew);
        const double p = std::exp(s.log_p(k));
        parts.physics += 0.5 * ee / p + 0.5 * nc * s.log_p(k);
        scaled.col(k) = ew / p;
        if (grad) grad->log_p(k) = -0.5 * ee / p + 0.5 * nc;
    }
    if (grad) {
        grad->theta += nlhs.transpose() * scaled;
        const Eigen::MatrixXd gw = -phi.transpose() * scaled;
        for (Eigen::Index a = 0; a < ms; ++a)
            for (Eigen::Index k = 0; k < d; ++k) {
                const int j = cols[static_cast<std::size_t>(a)];
                if (s.active(j, k)) grad->W(j, k) = gw(a, k);
            }
        const Eigen::MatrixXd dphi = -scaled * wsub.transpose();
        library::FieldMap fg;
        library::accumulate_field_gradient(sub, fields, dphi, fg);
        for (const auto& [key, g] : fg)
            grad->theta.col(key.state) += basis_at(prob, key.deriv).values.transpose() * g;
    }

    // Gamma-marginalized Gaussian priors.
    const double mw = static_cast<double>(s.active.count());
    double w2 = 0.0;
    for (Eigen::Index k = 0; k < d; ++k)
        for (Eigen::Index j = 0; j < m; ++j)
            if (s.active(j, k)) w2 += s.W(j, k) * s.W(j, k);
    const double shape_w = hyper.a0 + 0.5 * mw;
    const double rate_w = hyper.b0 + 0.5 * w2;
    parts.prior_w = shape_w * std::log(rate_w);
    const double mt = static_cast<double>(s.theta.size());
    const double shape_t = hyper.a1 + 0.5 * mt;
    const double rate_t = hyper.b1 + 0.5 * s.theta.squaredNorm();
    parts.prior_theta = shape_t * std::log(rate_t);
    if (grad) {
        for (Eigen::Index k = 0; k < d; ++k)
            for (Eigen::Index j = 0; j < m; ++j)
                if (s.active(j, k)) grad->W(j, k) += shape_w / rate_w * s.W(j, k);
        grad->theta += shape_t / rate_t * s.theta;
    }
    return parts;
}

Packing::Packing(Eigen::Index num_basis, const sparse::ActiveMask& active) : nb_(num_basis), active_(active) {
    const Eigen::Index d = active.cols();
    blocks_.push_back({"theta", 0, nb_ * d});
    blocks_.push_back({"W", nb_ * d, static_cast<Eigen::Index>(active.count())});
    blocks_.push_back({"log_b", blocks_[1].offset + blocks_[1].size, d});
    blocks_.push_back({"log_p", blocks_[2].offset + d, d});
    size_ = blocks_[3].offset + d;
}

Eigen::VectorXd Packing::pack(const TrainState& s) const {
    Eigen::VectorXd x(size_);
    x.head(nb_ * s.theta.cols()) = s.theta.reshaped();
    Eigen::Index i = blocks_[1].offset;
    for (Eigen::Index k = 0; k < active_.cols(); ++k)
        for (Eigen::Index j = 0; j < active_.rows(); ++j)
            if (active_(j, k)) x(i++) = s.W(j, k);
    x.segment(blocks_[2].offset, blocks_[2].size) = s.log_b;
    x.segment(blocks_[3].offset, blocks_[3].size) = s.log_p;
    return x;
}

void Packing::unpack(const Eigen::VectorXd& x, TrainState& s) const {
    if (x.size() != size_) throw ArgumentError("parameter vector length differs from the packing");
    const Eigen::Index d = active_.cols();
    s.theta = x.head(nb_ * d).reshaped(nb_, d);
    s.W = Eigen::MatrixXd::Zero(active_.rows(), d);
    Eigen::Index i = blocks_[1].offset;
    for (Eigen::Index k = 0; k < d; ++k)
        for (Eigen::Index j = 0; j < active_.rows(); ++j)
            if (active_(j, k)) s.W(j, k) = x(i++);
    s.log_b = x.segment(blocks_[2].offset, d);
    s.log_p = x.segment(blocks_[3].offset, d);
    s.active = active_;
}

OptimizeResult optimize(Eigen::VectorXd& x, const LossFn& loss, int epochs, double lr, const OptimizeOptions& opts) {
    if (epochs < 1) throw ArgumentError("epochs must be at least 1");
    if (!(lr > 0)) throw ArgumentError("learning rate must be positive");
    const Eigen::Index n = x.size();
    const Eigen::VectorXd scale = opts.scale.size() ? opts.scale : Eigen::VectorXd::Ones(n);
    if (scale.size() != n || (opts.lower.size() && opts.lower.size() != n))
        throw ArgumentError("optimizer scale or bound length differs from the parameters");
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    constexpr int check_every = 100;

    OptimizeResult res;
    res.final_lr = lr;
    Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd g(n);
    Eigen::VectorXd checkpoint = x;
    double checkpoint_loss = kInf;
    int t = 0;

    auto diverged = [&](int step) {
        if (res.restarts >= 1) {
            std::ostringstream msg;
            msg << "optimizer diverged again at step " << step << " after halving the learning rate";
            throw NumericalError(msg.str());
        }
        ++res.restarts;
        x = checkpoint;
        lr *= 0.5;
        res.final_lr = lr;
        m.setZero();
        v.setZero();
        t = 0;
    };

    for (int step = 0; step < epochs; ++step) {
        const double value = loss(x, g, opts.rng);
        if (!std::isfinite(value) || !g.allFinite()) {
            if (!std::isfinite(checkpoint_loss)) {
                std::ostringstream msg;
                msg << "non-finite loss at step " << step << " before any checkpoint";
                throw NumericalError(msg.str());
            }
            diverged(step);
            continue;
        }
        if (step % check_every == 0) {
            if (std::isfinite(checkpoint_loss) &&
                value - checkpoint_loss > 9.0 * std::max(std::abs(checkpoint_loss), 1.0)) {
                diverged(step);
                continue;
            }
            checkpoint = x;
            checkpoint_loss = value;
        }
        res.losses.push_back(value);
        ++t;
        const Eigen::ArrayXd gs = g.array() * scale.array();
        m = beta1 * m.array() + (1 - beta1) * gs;
        v = beta2 * v.array() + (1 - beta2) * gs.square();
        const double c1 = 1 - std::pow(beta1, t);
        const double c2 = 1 - std::pow(beta2, t);
        x.array() -= lr * scale.array() * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
        if (opts.lower.size()) x = x.cwiseMax(opts.lower);
        if (opts.on_step) opts.on_step(step, x);
    }
    return res;
}

Eigen::VectorXd SwagPosterior::stddev() const {
    Eigen::VectorXd sd = Eigen::VectorXd::Zero(mean.size());
    for (std::size_t i = 0; i < blocks.size(); ++i)
        if (factors[i].cols() > 0)
            sd.segment(blocks[i].offset, blocks[i].size) = factors[i].rowwise().squaredNorm().cwiseSqrt();
    return sd;
}

SwagPosterior swag_collect(const Eigen::VectorXd& x0, const LossFn& loss, int epochs, double lr, int snapshot_every,
                           int rank, const std::vector<Block>& blocks, const OptimizeOptions& opts) {
    if (epochs < 1) throw ArgumentError("SWAG needs at least one epoch");
    if (snapshot_every < 1 || rank < 1) throw ArgumentError("snapshot cadence and rank must be positive");
    SwagPosterior post;
    post.blocks = blocks.empty() ? std::vector<Block>{{"all", 0, x0.size()}} : blocks;
    const int count = 1 + epochs / snapshot_every;
    Eigen::MatrixXd snaps(x0.size(), count);
    snaps.col(0) = x0;
    post.mean = x0;
    int taken = 1;
    OptimizeOptions o = opts;
    o.on_step = [&](int step, const Eigen::VectorXd& x) {
        if ((step + 1) % snapshot_every != 0 || taken >= count) return;
        snaps.col(taken) = x;
        post.mean = (taken * post.mean + x) / (taken + 1.0);
        ++taken;
    };
    Eigen::VectorXd x = x0;
    optimize(x, loss, epochs, lr, o);
    post.snapshots = taken;
    if (rank > taken) {
        std::ostringstream msg;
        msg << "SWAG rank " << rank << " clipped to the " << taken << " collected snapshots";
        post.warnings.push_back(msg.str());
        rank = taken;
    }
    post.rank = rank;
    const Eigen::MatrixXd dev = snaps.leftCols(taken).colwise() - post.mean;
    const double denom = std::max(taken - 1, 1);
    for (const auto& b : post.blocks) {
        const Eigen::MatrixXd db = dev.middleRows(b.offset, b.size);
        if (db.size() == 0) {
            post.factors.emplace_back(b.size, 0);
            continue;
        }
        Eigen::BDCSVD<Eigen::MatrixXd> svd(db, Eigen::ComputeThinU);
        // Singular values descend; keep the largest `rank` directions with positive energy.
        const Eigen::VectorXd sv = svd.singularValues();
        const double top = sv(0);
        Eigen::Index keep = 0;
        while (keep < sv.size() && keep < rank && sv(keep) > 1e-7 * top && sv(keep) > 0) ++keep;
        Eigen::MatrixXd f = svd.matrixU().leftCols(keep) * (sv.head(keep) / std::sqrt(denom)).asDiagonal();
        post.factors.push_back(std::move(f));
    }
    return post;
}

std::vector<Eigen::VectorXd> swag_sample(const SwagPosterior& post, int n, std::uint64_t seed) {
    if (n < 1) throw ArgumentError("sample count must be at least 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
        Eigen::VectorXd x = post.mean;
        for (std::size_t i = 0; i < post.blocks.size(); ++i) {
            const auto& f = post.factors[i];
            if (f.cols() == 0) continue;
            Eigen::VectorXd z(f.cols());
            for (Eigen::Index c = 0; c < z.size(); ++c) z(c) = gauss(rng);
            x.segment(post.blocks[i].offset, post.blocks[i].size) += f * z;
        }
        out.push_back(std::move(x));
    }
    return out;
}

TrainState initial_state(const Problem& prob, const Hyperparams& hyper) {
    const Eigen::Index d = prob.data.cols();
    const Eigen::Index nb = prob.measure.cols();
    const auto m = static_cast<Eigen::Index>(prob.terms.size());
    TrainState s;
    s.theta.resize(nb, d);
    s.log_b.resize(d);
    s.log_p.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        const Eigen::VectorXd col = prob.data.col(k);
        auto penalized = [&]() {
            const double lambda =
                hyper.init_penalty > 0 ? hyper.init_penalty : spline::gcv_penalty(prob.space, prob.measure, col);
            return spline::fit_penalized(prob.space, prob.measure, col, lambda);
        };
        Eigen::VectorXd th;
        if (hyper.init_smooth) {
            th = penalized();
        } else {
            try {
                th = spline::fit_least_squares(prob.measure, col);
            } catch (const SingularityError&) {
                th = penalized();
            }
        }
        s.theta.col(k) = th;
        const Eigen::VectorXd r = col - prob.measure.values * th;
        s.log_b(k) = std::log(std::max(mean_square(r), variance_floor(col, hyper.b_floor)));
    }
    const Eigen::MatrixXd phi = full_library(prob, s.theta);
    const Eigen::MatrixXd target = lhs_values(prob, s.theta);
    // Ridge regression on unit-norm columns.
    Eigen::VectorXd norms = phi.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < m; ++j)
        if (!(norms(j) > 0)) norms(j) = 1.0;
    const Eigen::MatrixXd phin = phi * norms.cwiseInverse().asDiagonal();
    Eigen::MatrixXd gram = phin.transpose() * phin;
    gram.diagonal().array() += 1e-8;
    const Eigen::MatrixXd wn = gram.ldlt().solve(phin.transpose() * target);
    s.W = norms.cwiseInverse().asDiagonal() * wn;
    s.active = sparse::ActiveMask::Constant(m, d, true);
    const Eigen::MatrixXd eq = target - phi * s.W;
    for (Eigen::Index k = 0; k < d; ++k)
        s.log_p(k) = std::log(std::max(mean_square(eq.col(k)), variance_floor(target.col(k), hyper.p_floor)));
    if (!s.theta.allFinite() || !s.W.allFinite()) throw NumericalError("initial fit produced non-finite values");
    return s;
}

Eigen::VectorXd parameter_scales(const Problem& prob, const TrainState& state, const Packing& packing) {
    // Spline weights move in rough posterior standard deviations.
    const Eigen::Index nb = state.theta.rows();
    const Eigen::Index d = state.theta.cols();
    Eigen::VectorXd x(packing.size());
    Eigen::VectorXd colsq = Eigen::VectorXd::Zero(nb);
    for (Eigen::Index r = 0; r < prob.measure.values.outerSize(); ++r)
        for (spline::SparseRowMatrix::InnerIterator it(prob.measure.values, r); it; ++it)
            colsq(it.col()) += it.value() * it.value();
    const double floor = 1e-2 * std::max(colsq.mean(), 1e-300);
    for (Eigen::Index k = 0; k < d; ++k) {
        const double b = std::exp(state.log_b(k));
        for (Eigen::Index s = 0; s < nb; ++s) x(k * nb + s) = std::sqrt(b / std::max(colsq(s), floor));
    }
    // Coefficients move on the scale that would let one term alone explain the target.
    const Eigen::MatrixXd phi = full_library(prob, state.theta);
    const Eigen::MatrixXd target = lhs_values(prob, state.theta);
    const auto& wb = packing.blocks()[1];
    Eigen::Index i = wb.offset;
    for (Eigen::Index k = 0; k < d; ++k) {
        const double t2 = std::max(target.col(k).squaredNorm(), 1e-300);
        for (Eigen::Index j = 0; j < state.active.rows(); ++j)
            if (state.active(j, k)) x(i++) = std::sqrt(t2 / std::max(phi.col(j).squaredNorm(), 1e-300));
    }
    x.tail(2 * d).setOnes();
    return x;
}

DiscoveryResult ado_train(const Problem& prob, const Hyperparams& hyper) {
    hyper.validate();
    DiscoveryResult res;
    TrainState state = initial_state(prob, hyper);
    const Floors floors = variance_floors(prob, hyper, state);
    const Eigen::Index nb = state.theta.rows();
    auto loss_of = [&](const TrainState& s) { return neg_log_posterior(prob, hyper, s).total(); };

    auto train = [&](TrainState& s, int epochs, double lr) {
        const Packing packing(nb, s.active);
        Eigen::VectorXd x = packing.pack(s);
        OptimizeOptions opts;
        opts.scale = parameter_scales(prob, s, packing);
        opts.lower = lower_bounds(packing, floors);
        const auto r = optimize(x, make_loss(prob, hyper, packing, s, 1.0), epochs, lr, opts);
        if (r.restarts) {
            std::ostringstream msg;
            msg << "learning rate halved to " << r.final_lr << " after a loss increase";
            res.warnings.push_back(msg.str());
        }
        packing.unpack(x, s);
    };

    TrainState best = state;
    double best_loss = kInf;
    // Optional pruning pass on the initial fit, scored like any other iteration.
    const int first = hyper.initial_prune ? -1 : 0;
    for (int it = first; it < hyper.ado_iters; ++it) {
        if (it >= 0) train(state, hyper.ado_epochs, hyper.lr);
        const Eigen::MatrixXd phi = full_library(prob, state.theta);
        const Eigen::MatrixXd target = lhs_values(prob, state.theta);
        sparse::StResult st;
        if (it < 0) {
            // Before any training the ridge residual understates the model error, so the first pass
            // prunes against the variance of the target itself, then the ridge residual, and is
            // skipped when both empty a state.
            const Eigen::VectorXd p_target =
                (target.colwise().squaredNorm().transpose() / static_cast<double>(target.rows()))
                    .cwiseMax(floors.log_p.array().exp().matrix());
            bool pruned = false;
            for (const Eigen::VectorXd& p : {p_target, Eigen::VectorXd(state.P())}) {
                try {
                    st = prune(phi, target, p, hyper, state.active);
                    pruned = true;
                    break;
                } catch (const DiscoveryFailure&) {
                }
            }
            if (!pruned) {
                res.warnings.push_back("initial pruning pass skipped: it removed every term of a state");
                continue;
            }
        } else {
            st = prune(phi, target, state.P(), hyper, state.active);
        }
        const int before = state.active_count();
        TrainState cand = state;
        cand.W = st.W;
        cand.active = st.active;
        cand.log_p = st.P.array().log().max(floors.log_p.array()).matrix();
        const double l = loss_of(cand);
        AdoIteration rec{l, cand.active_count(), l < best_loss};
        res.iterations.push_back(rec);
        if (!rec.accepted) {
            res.loss_history.push_back(best_loss);
            break;
        }
        best = cand;
        best_loss = l;
        res.loss_history.push_back(best_loss);
        state = cand;
        if (it >= 0 && cand.active_count() == before) break;
    }

    state = best;
    if (hyper.post_epochs > 0) train(state, hyper.post_epochs, hyper.lr);
    res.state = state;
    res.packing = Packing(nb, state.active);
    res.W_mean = state.W;
    res.W_std = Eigen::MatrixXd::Zero(state.W.rows(), state.W.cols());
    res.theta_mean = state.theta;
    res.B = state.B();
    res.P = state.P();
    if (hyper.deterministic) return res;

    const Packing& packing = res.packing;
    std::mt19937_64 rng(hyper.seed);
    OptimizeOptions opts;
    opts.scale = parameter_scales(prob, state, packing);
    opts.lower = lower_bounds(packing, floors);
    opts.rng = &rng;
    // Cap the stored snapshots so long SWAG phases stay within memory.
    const int cadence = std::max(hyper.snapshot_every, (hyper.swag_epochs + 1999) / 2000);
    if (cadence != hyper.snapshot_every) {
        std::ostringstream msg;
        msg << "SWAG snapshot cadence raised to every " << cadence << " steps";
        res.warnings.push_back(msg.str());
    }
    SwagPosterior post = swag_collect(packing.pack(state), make_loss(prob, hyper, packing, state, hyper.swag_batch_fraction),
                                      hyper.swag_epochs, hyper.swag_lr, cadence, hyper.swag_rank, packing.blocks(), opts);
    for (const auto& w : post.warnings) res.warnings.push_back(w);
    TrainState mean = state;
    packing.unpack(post.mean, mean);
    TrainState sd = state;
    packing.unpack(post.stddev(), sd);
    res.W_mean = mean.W;
    res.W_std = sd.W;
    res.theta_mean = mean.theta;
    res.B = mean.B();
    res.P = mean.P();
    res.posterior = std::move(post);
    return res;
}

std::vector<TrainState> sample_states(const DiscoveryResult& res, int n, std::uint64_t seed) {
    std::vector<TrainState> out;
    if (!res.posterior) {
        out.assign(static_cast<std::size_t>(std::max(n, 1)), res.state);
        return out;
    }
    for (const auto& x : swag_sample(*res.posterior, n, seed)) {
        TrainState s = res.state;
        res.packing.unpack(x, s);
        out.push_back(std::move(s));
    }
    return out;
}

void ensemble_quantiles(EnsembleResult& res) {
    if (res.members.empty()) {
        res.q05.resize(0, 0);
        res.q50.resize(0, 0);
        res.q95.resize(0, 0);
        return;
    }
    const Eigen::Index rows = res.members[0].rows();
    const Eigen::Index cols = res.members[0].cols();
    res.q05.resize(rows, cols);
    res.q50.resize(rows, cols);
    res.q95.resize(rows, cols);
    std::vector<double> buf(res.members.size());
    auto quantile = [&](double q) {
        // Linear interpolation between order statistics.
        const double pos = q * static_cast<double>(buf.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, buf.size() - 1);
        return buf[lo] + (pos - static_cast<double>(lo)) * (buf[hi] - buf[lo]);
    };
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) {
            for (std::size_t s = 0; s < buf.size(); ++s) buf[s] = res.members[s](i, j);
            std::sort(buf.begin(), buf.end());
            res.q05(i, j) = quantile(0.05);
            res.q50(i, j) = quantile(0.5);
            res.q95(i, j) = quantile(0.95);
        }
}

EnsembleResult propagate_ode(const std::vector<library::TermDescriptor>& terms,
                             const std::vector<Eigen::MatrixXd>& W_samples,
                             const std::vector<Eigen::VectorXd>& initial, const std::vector<double>& times,
                             double dt) {
    if (W_samples.size() != initial.size()) throw ArgumentError("one initial state per sample is required");
    if (times.empty() || !(dt > 0)) throw ArgumentError("propagation needs output times and a positive step");
    EnsembleResult res;
    res.times = times;
    const auto n = static_cast<int>(W_samples.size());
    std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(n));
    std::vector<char> ok(static_cast<std::size_t>(n), 1);
    parallel_for(n, [&](int s) {
        const model::OdeModel mdl(terms, W_samples[static_cast<std::size_t>(s)]);
        const zoo::Rhs rhs = [&mdl](const Eigen::VectorXd& u, Eigen::VectorXd& f) { mdl.rhs(u, f); };
        Eigen::VectorXd u = initial[static_cast<std::size_t>(s)];
        Eigen::MatrixXd traj(static_cast<Eigen::Index>(times.size()), u.size());
        traj.row(0) = u.transpose();
        for (std::size_t i = 1; i < times.size(); ++i) {
            const double span = times[i] - times[i - 1];
            const int steps = std::max(1, static_cast<int>(std::ceil(span / dt - 1e-9)));
            for (int k = 0; k < steps; ++k) zoo::rk4_step(rhs, u, span / steps);
            if (!u.allFinite() || u.cwiseAbs().maxCoeff() > 1e12) {
                ok[static_cast<std::size_t>(s)] = 0;
                return;
            }
            traj.row(static_cast<Eigen::Index>(i)) = u.transpose();
        }
        out[static_cast<std::size_t>(s)] = std::move(traj);
    });
    for (int s = 0; s < n; ++s) {
        if (ok[static_cast<std::size_t>(s)])
            res.members.push_back(std::move(out[static_cast<std::size_t>(s)]));
        else
            ++res.dropped;
    }
    ensemble_quantiles(res);
    return res;
}

EnsembleResult propagate_pde(const std::vector<library::TermDescriptor>& terms,
                             const std::vector<Eigen::VectorXd>& w_samples,
                             const std::vector<Eigen::VectorXd>& initial, double x0, double dx,
                             const std::vector<double>& times) {
    if (w_samples.size() != initial.size()) throw ArgumentError("one initial field per sample is required");
    if (times.empty()) throw ArgumentError("propagation needs output times");
    EnsembleResult res;
    res.times = times;
    const auto n = static_cast<int>(w_samples.size());
    std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(n));
    std::vector<char> ok(static_cast<std::size_t>(n), 1);
    parallel_for(n, [&](int s) {
        Eigen::VectorXd u = initial[static_cast<std::size_t>(s)];
        const model::PdeModel mdl(terms, w_samples[static_cast<std::size_t>(s)], x0, dx, static_cast<int>(u.size()));
        Eigen::MatrixXd traj(static_cast<Eigen::Index>(times.size()), u.size());
        traj.row(0) = u.transpose();
        try {
            for (std::size_t i = 1; i < times.size(); ++i) {
                mdl.advance(times[i - 1], times[i] - times[i - 1], u);
                traj.row(static_cast<Eigen::Index>(i)) = u.transpose();
            }
        } catch (const NumericalError&) {
            ok[static_cast<std::size_t>(s)] = 0;
            return;
        }
        out[static_cast<std::size_t>(s)] = std::move(traj);
    });
    for (int s = 0; s < n; ++s) {
        if (ok[static_cast<std::size_t>(s)])
            res.members.push_back(std::move(out[static_cast<std::size_t>(s)]));
        else
            ++res.dropped;
    }
    ensemble_quantiles(res);
    return res;
}

int thread_count() {
    const char* env = std::getenv("BSL_THREADS");
    if (!env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || v < 1) return 1;
    return static_cast<int>(std::min<long>(v, 256));
}

void parallel_for(int n, const std::function<void(int)>& f) {
    const int workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace bsl::ado
