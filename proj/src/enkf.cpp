#include "bsl/enkf.hpp"

#include "bsl/errors.hpp"
#include "bsl/model.hpp"
#include "bsl/system_zoo.hpp"

#include <algorithm>
#include <cmath>

namespace bsl::enkf {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return std::mt19937_64(seq);
}

bool healthy(const Eigen::VectorXd& u) { return u.allFinite() && u.cwiseAbs().maxCoeff() < 1e12; }

}  // namespace

Eigen::VectorXd Ensemble::mean() const {
    if (members.empty()) throw ArgumentError("ensemble is empty");
    Eigen::VectorXd m = Eigen::VectorXd::Zero(members[0].size());
    for (const auto& u : members) m += u;
    return m / static_cast<double>(members.size());
}

void Ensemble::validate() const {
    if (members.size() < 2) throw ArgumentError("ensemble needs at least two members");
    if (weights.size() != members.size()) throw ArgumentError("one coefficient sample per member is required");
    const auto n = members[0].size();
    for (std::size_t j = 0; j < members.size(); ++j) {
        if (members[j].size() != n || weights[j].cols() != n)
            throw ArgumentError("ensemble members disagree in state dimension");
        if (!members[j].allFinite()) throw ArgumentError("ensemble member has non-finite entries");
    }
}

Eigen::VectorXd ObservationOp::apply(const Eigen::VectorXd& u) const {
    if (observed.empty()) return u;
    Eigen::VectorXd h(static_cast<Eigen::Index>(observed.size()));
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (observed[i] < 0 || observed[i] >= u.size()) throw ArgumentError("observed index out of range");
        h(static_cast<Eigen::Index>(i)) = u(observed[i]);
    }
    return h;
}

Eigen::Index ObservationOp::dim(Eigen::Index num_states) const {
    return observed.empty() ? num_states : static_cast<Eigen::Index>(observed.size());
}

ForecastReport forecast(Ensemble& e, const std::vector<library::TermDescriptor>& terms, double interval,
                        double substep, const Eigen::VectorXd& Q, std::uint64_t seed) {
    e.validate();
    if (!(interval > 0) || !(substep > 0)) throw ArgumentError("forecast interval and substep must be positive");
    const auto n = e.members[0].size();
    if (Q.size() != n || (Q.array() < 0).any()) throw ArgumentError("process variance must be nonnegative per state");
    const int J = e.size();
    const int steps = std::max(1, static_cast<int>(std::ceil(interval / substep - 1e-9)));
    const double h = interval / steps;
    std::vector<char> ok(static_cast<std::size_t>(J), 1);
    ado::parallel_for(J, [&](int j) {
        auto& u = e.members[static_cast<std::size_t>(j)];
        const model::OdeModel mdl(terms, e.weights[static_cast<std::size_t>(j)]);
        const zoo::Rhs rhs = [&mdl](const Eigen::VectorXd& x, Eigen::VectorXd& f) { mdl.rhs(x, f); };
        for (int s = 0; s < steps; ++s) {
            zoo::rk4_step(rhs, u, h);
            if (!healthy(u)) {
                ok[static_cast<std::size_t>(j)] = 0;
                return;
            }
        }
        auto rng = stream(seed, static_cast<std::uint64_t>(j), 0);
        std::normal_distribution<double> gauss;
        for (Eigen::Index k = 0; k < n; ++k) u(k) += std::sqrt(Q(k)) * gauss(rng);
    });
    ForecastReport rep;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    int good = 0;
    for (int j = 0; j < J; ++j) {
        if (ok[static_cast<std::size_t>(j)]) {
            mean += e.members[static_cast<std::size_t>(j)];
            ++good;
        } else {
            rep.reinitialized.push_back(j);
        }
    }
    if (good == 0) throw NumericalError("every ensemble member diverged");
    mean /= good;
    for (int j : rep.reinitialized) e.members[static_cast<std::size_t>(j)] = mean;
    e.time += interval;
    return rep;
}

Covariances covariances(const Ensemble& e, const ObservationOp& op) {
    e.validate();
    const int J = e.size();
    const auto n = e.members[0].size();
    const auto m = op.dim(n);
    if (op.B.size() != m) throw ArgumentError("observation noise must have one entry per observed coordinate");
    Eigen::MatrixXd X(n, J);
    Eigen::MatrixXd H(m, J);
    for (int j = 0; j < J; ++j) {
        X.col(j) = e.members[static_cast<std::size_t>(j)];
        H.col(j) = op.apply(e.members[static_cast<std::size_t>(j)]);
    }
    X.colwise() -= X.rowwise().mean();
    H.colwise() -= H.rowwise().mean();
    Covariances c;
    c.fh = X * H.transpose() / (J - 1);
    c.hh = H * H.transpose() / (J - 1);
    c.hh.diagonal() += op.B;
    return c;
}

Eigen::MatrixXd kalman_gain(const Ensemble& e, const ObservationOp& op) {
    const Covariances c = covariances(e, op);
    Eigen::LLT<Eigen::MatrixXd> llt(c.hh);
    if (llt.info() != Eigen::Success) throw SingularityError("innovation covariance is not positive definite");
    // K = C^fh S^-1 with S symmetric, solved as (S^-1 C^hf)^T.
    return llt.solve(c.fh.transpose()).transpose();
}

Eigen::MatrixXd analysis(Ensemble& e, const Eigen::VectorXd& obs, const ObservationOp& op,
                         const Eigen::MatrixXd& eps) {
    const Eigen::MatrixXd K = kalman_gain(e, op);
    if (obs.size() != K.cols()) throw ArgumentError("observation vector has the wrong length");
    if (eps.rows() != K.cols() || eps.cols() != e.size()) throw ArgumentError("perturbations must be obs dim x J");
    for (int j = 0; j < e.size(); ++j) {
        auto& u = e.members[static_cast<std::size_t>(j)];
        u += K * (obs - op.apply(u) - eps.col(j));
    }
    return K;
}

Eigen::MatrixXd analysis(Ensemble& e, const Eigen::VectorXd& obs, const ObservationOp& op, std::mt19937_64& rng) {
    const auto m = op.B.size();
    if ((op.B.array() < 0).any()) throw ArgumentError("observation noise variances must be nonnegative");
    Eigen::MatrixXd eps(m, e.size());
    std::normal_distribution<double> gauss;
    for (int j = 0; j < e.size(); ++j)
        for (Eigen::Index i = 0; i < m; ++i) eps(i, j) = std::sqrt(op.B(i)) * gauss(rng);
    return analysis(e, obs, op, eps);
}

AssimilationResult assimilate(Ensemble e, const std::vector<library::TermDescriptor>& terms,
                              const AssimilationConfig& cfg) {
    e.validate();
    const auto n = e.members[0].size();
    const auto& ts = cfg.obs_times;
    if (cfg.P.size() != n) throw ArgumentError("process variance must have one entry per state");
    if (!ts.empty() && cfg.obs.rows() != static_cast<Eigen::Index>(ts.size()))
        throw ArgumentError("one observation row per observation time is required");
    double interval = cfg.interval;
    if (ts.size() >= 2) {
        const double spacing = ts[1] - ts[0];
        if (!(spacing > 0)) throw ArgumentError("observation times must increase");
        for (std::size_t i = 2; i < ts.size(); ++i)
            if (std::abs(ts[i] - ts[i - 1] - spacing) > 1e-9 * std::max(1.0, std::abs(spacing)))
                throw ArgumentError("observation times must be uniformly spaced");
        if (interval <= 0) interval = spacing;
    }
    if (!(interval > 0)) throw ArgumentError("assimilation needs a positive step interval");
    const Eigen::VectorXd Q = cfg.P * interval * interval;

    AssimilationResult res;
    auto record = [&]() {
        res.ensemble.times.push_back(e.time);
        if (res.ensemble.members.empty()) res.ensemble.members.assign(e.members.size(), Eigen::MatrixXd());
        for (std::size_t j = 0; j < e.members.size(); ++j) {
            auto& traj = res.ensemble.members[j];
            traj.conservativeResize(traj.rows() + 1, n);
            traj.row(traj.rows() - 1) = e.members[j].transpose();
        }
    };

    std::mt19937_64 rng = stream(cfg.seed, ~std::uint64_t{0}, 0);
    std::uint64_t step = 0;
    auto advance = [&]() {
        const auto rep = forecast(e, terms, interval, cfg.substep, Q, cfg.seed + 0x9e3779b97f4a7c15ULL * ++step);
        res.reinitialized += static_cast<int>(rep.reinitialized.size());
    };
    e.time = ts.empty() ? cfg.t0 : ts[0];
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (i > 0) advance();
        e.time = ts[i];
        analysis(e, cfg.obs.row(static_cast<Eigen::Index>(i)).transpose(), cfg.op, rng);
        record();
    }
    res.window_end = e.time;
    if (ts.empty()) record();
    const int free_steps = std::max(0, static_cast<int>(std::ceil((cfg.horizon - e.time) / interval - 1e-9)));
    for (int s = 0; s < free_steps; ++s) {
        advance();
        record();
    }
    ado::ensemble_quantiles(res.ensemble);
    return res;
}

}  // namespace bsl::enkf
