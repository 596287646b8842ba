// Acceptance run: one PASS/FAIL line per criterion, nonzero exit when any fails.

#include "bsl/bayes_ado.hpp"
#include "bsl/enkf.hpp"
#include "bsl/errors.hpp"
#include "bsl/metrics.hpp"
#include "bsl/sparse_bayes.hpp"
#include "bsl/spline_basis.hpp"
#include "bsl/system_zoo.hpp"
#include "support/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace bsl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Run {
    zoo::Benchmark bench;
    zoo::Dataset data;
    ado::Problem prob;
    ado::DiscoveryResult res;
    metrics::ScoreCard score;
    double secs = 0;
    std::string error;

    [[nodiscard]] bool exact() const { return error.empty() && score.precision == 1.0 && score.recall == 1.0; }
};

Run discover(const std::string& id, double noise, std::uint64_t seed) {
    const auto t0 = Clock::now();
    const zoo::Benchmark bench = zoo::make_benchmark(id);
    const zoo::Dataset data = zoo::make_dataset(bench, noise, seed);
    ado::Hyperparams h = ado::default_hyperparams(id, ado::Schedule::Desk);
    h.seed = seed;
    Run r{bench, data, ado::make_problem(bench, data, h)};
    try {
        r.res = ado::ado_train(r.prob, h);
        const Eigen::MatrixXd truth = zoo::true_coefficients(r.bench, r.prob.terms);
        r.score = metrics::score(r.prob.terms, r.res.W_mean, truth, r.res.W_std, zoo::naming(r.bench));
    } catch (const Error& e) {
        r.error = e.what();
    }
    r.secs = seconds_since(t0);
    return r;
}

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

int failures = 0;

void report(int number, const std::string& name, Verdict& v, double secs) {
    if (!v.pass) ++failures;
    std::printf("%s  %d. %s (%.1f s)%s\n", v.pass ? "PASS" : "FAIL", number, name.c_str(), secs, v.detail.str().c_str());
    std::fflush(stdout);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct BenchmarkCase {
    std::string id;
    double noise;
    double runtime_limit;  ///< seconds per discovery
    double clean_limit;    ///< clean-data rmse bound
    double reference;      ///< tabulated large-noise rmse
};

const std::vector<BenchmarkCase> kCases{
    {"vdp", 0.05, 300, 5e-3, 18.04e-3},
    {"lorenz96", 0.10, 1800, 5e-3, 13.0e-3},
    {"advection", 0.20, 1200, 1e-2, 1.9e-3},
    {"burgers", 0.10, 1200, 2e-2, 6.38e-3},
};

std::map<std::string, std::vector<Run>> noisy_runs;
std::map<std::string, Run> clean_runs;

// 1 and 2 share the discovery runs.
void structure_and_accuracy() {
    const auto t0 = Clock::now();
    Verdict v1;
    Verdict v2;
    double secs1 = 0;
    for (const auto& c : kCases) {
        int exact = 0;
        double slowest = 0;
        std::vector<double> rmses;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            Run r = discover(c.id, c.noise, seed);
            exact += r.exact();
            slowest = std::max(slowest, r.secs);
            rmses.push_back(r.error.empty() ? r.score.rmse : INFINITY);
            std::printf("  %s noise %.2f seed %d: M_P %.3g M_R %.3g rmse %.4g (%.1f s)%s%s\n", c.id.c_str(), c.noise,
                        static_cast<int>(seed), r.score.precision, r.score.recall, r.score.rmse, r.secs,
                        r.error.empty() ? "" : " error: ", r.error.c_str());
            std::fflush(stdout);
            noisy_runs[c.id].push_back(std::move(r));
        }
        v1.detail << " " << c.id << " " << exact << "/5";
        v1.require(exact >= 4, c.id + " exact structure in fewer than 4 of 5 seeds");
        v1.require(slowest < c.runtime_limit, c.id + " runtime");

        const double med = median(rmses);
        v2.detail << " " << c.id << " noisy median " << med << " (limit " << 3 * c.reference << ")";
        v2.require(med <= 3 * c.reference, c.id + " noisy rmse");
    }
    secs1 = seconds_since(t0);
    report(1, "structure recovery", v1, secs1);

    const auto t1 = Clock::now();
    for (const auto& c : kCases) {
        Run r = discover(c.id, 0.0, 1);
        v2.detail << " " << c.id << " clean " << r.score.rmse << " (limit " << c.clean_limit << ")";
        v2.require(r.error.empty() && r.score.rmse <= c.clean_limit, c.id + " clean rmse");
        clean_runs.insert_or_assign(c.id, std::move(r));
    }
    report(2, "coefficient accuracy", v2, seconds_since(t1));
}

void spline_convergence() {
    const auto t0 = Clock::now();
    Verdict v;
    const auto r = oracle::spline_convergence({8, 16, 32, 64});
    const double sv = oracle::loglog_slope(r.spacing, r.value_error);
    const double sd = oracle::loglog_slope(r.spacing, r.deriv_error);
    v.detail << " value slope " << sv << ", derivative slope " << sd;
    v.require(std::abs(sv - 4.0) <= 0.3, "value slope");
    v.require(std::abs(sd - 3.0) <= 0.3, "derivative slope");
    const double secs = seconds_since(t0);
    v.require(secs < 10, "runtime");
    report(3, "spline convergence", v, secs);
}

void derivative_formula() {
    const auto t0 = Clock::now();
    Verdict v;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g;
    double worst = 0;
    for (int k = 2; k <= 5; ++k) {
        const auto kv = spline::KnotVector::clamped_uniform(0.0, 1.0, 14, k);
        Eigen::VectorXd theta(kv.num_basis());
        for (Eigen::Index s = 0; s < theta.size(); ++s) theta(s) = g(rng);
        auto curve = [&](double t, int q) {
            double acc = 0;
            for (int s = 0; s < kv.num_basis(); ++s) acc += theta(s) * spline::eval_basis_deriv(kv, s, t, q);
            return acc;
        };
        for (int i = 0; i < 1000; ++i) {
            const double t = 0.001 + 0.998 * u(rng);
            // Orders whose lower derivative is continuous, so central differences apply.
            for (int q = 1; q < k; ++q) {
                const double d = curve(t, q);
                const double fd = oracle::central_difference([&](double x) { return curve(x, q - 1); }, t, 1e-6);
                const double scale = std::max(std::abs(d), 1.0);
                worst = std::max(worst, std::abs(d - fd) / scale);
            }
        }
    }
    v.detail << " worst relative error " << worst;
    v.require(worst < 1e-5, "derivative mismatch");
    const double secs = seconds_since(t0);
    v.require(secs < 5, "runtime");
    report(4, "derivative formula", v, secs);
}

void gradient_oracle() {
    const auto t0 = Clock::now();
    Verdict v;
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g;
    const spline::SplineSpace space(spline::KnotVector::clamped_uniform(0.0, 1.0, 10, 3));
    Eigen::MatrixXd coords(40, 1), data(40, 2), colloc(30, 1);
    for (int i = 0; i < 40; ++i) {
        coords(i, 0) = u(rng);
        data(i, 0) = std::sin(3 * coords(i, 0)) + 0.1 * g(rng);
        data(i, 1) = std::cos(2 * coords(i, 0)) + 0.1 * g(rng);
    }
    for (int i = 0; i < 30; ++i) colloc(i, 0) = u(rng);
    const auto terms = library::build_monomials(2, {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}, {2, 1}, {0, 3}});
    const ado::Problem prob = ado::make_problem(space, coords, data, colloc, terms, {1, 0});
    ado::Hyperparams h;
    double worst = 0;
    for (int trial = 0; trial < 5; ++trial) {
        ado::TrainState s;
        s.theta = Eigen::MatrixXd(10, 2);
        s.W = Eigen::MatrixXd(8, 2);
        for (Eigen::Index i = 0; i < s.theta.size(); ++i) s.theta.data()[i] = g(rng);
        for (Eigen::Index i = 0; i < s.W.size(); ++i) s.W.data()[i] = g(rng);
        s.log_b = Eigen::Vector2d(g(rng), g(rng));
        s.log_p = Eigen::Vector2d(g(rng), g(rng));
        s.active = sparse::ActiveMask::Constant(8, 2, true);
        for (int j = 0; j < 8; ++j)
            for (int k = 0; k < 2; ++k)
                if (u(rng) < 0.2) {
                    s.active(j, k) = false;
                    s.W(j, k) = 0;
                }
        const ado::Packing pk(10, s.active);
        ado::TrainState grad;
        ado::neg_log_posterior(prob, h, s, &grad);
        const Eigen::VectorXd x = pk.pack(s);
        const Eigen::VectorXd ga = pk.pack(grad);
        const double gmax = ga.cwiseAbs().maxCoeff();
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double step = 1e-5 * std::max(1.0, std::abs(x(i)));
            Eigen::VectorXd xp = x, xm = x;
            xp(i) += step;
            xm(i) -= step;
            ado::TrainState sp = s, sm = s;
            pk.unpack(xp, sp);
            pk.unpack(xm, sm);
            const double fd =
                (ado::neg_log_posterior(prob, h, sp).total() - ado::neg_log_posterior(prob, h, sm).total()) / (2 * step);
            worst = std::max(worst, std::abs(fd - ga(i)) / std::max(std::abs(ga(i)), 1e-3 * gmax));
        }
    }
    v.detail << " worst relative error " << worst << " over theta, W, log b, log p";
    v.require(worst < 1e-4, "gradient mismatch");
    const double secs = seconds_since(t0);
    v.require(secs < 30, "runtime");
    report(5, "gradient oracle", v, secs);
}

Eigen::MatrixXd gaussian_matrix(int r, int c, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
}

void rvm_oracle() {
    const auto t0 = Clock::now();
    Verdict v;
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g;
    double worst = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::MatrixXd phi = gaussian_matrix(80, 10, rng);
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(10, 2);
        for (int k = 0; k < 2; ++k)
            for (int j = 0; j < 10; ++j)
                if ((j + k + trial) % 3 == 0) w(j, k) = (0.2 + std::abs(g(rng))) * (g(rng) < 0 ? -1 : 1);
        const Eigen::MatrixXd targets = phi * w;
        const auto st = sparse::st_sparse_bayes(phi, targets, Eigen::VectorXd::Constant(2, 1e-10), 0.05);
        for (int k = 0; k < 2; ++k) {
            std::vector<int> support;
            for (int j = 0; j < 10; ++j)
                if (w(j, k) != 0) support.push_back(j);
            Eigen::MatrixXd sub(80, static_cast<Eigen::Index>(support.size()));
            for (std::size_t a = 0; a < support.size(); ++a) sub.col(static_cast<Eigen::Index>(a)) = phi.col(support[a]);
            const Eigen::VectorXd ls = sub.colPivHouseholderQr().solve(targets.col(k));
            for (int j = 0; j < 10; ++j) {
                const auto it = std::find(support.begin(), support.end(), j);
                if (it == support.end()) {
                    if (st.W(j, k) != 0) worst = INFINITY;
                } else {
                    const double ref = ls(it - support.begin());
                    worst = std::max(worst, std::abs(st.W(j, k) - ref) / std::abs(ref));
                }
            }
        }
    }
    v.detail << " least-squares agreement " << worst;
    v.require(worst <= 1e-6, "true-support least squares");

    int ranked = 0, global = 0;
    const int trials = 10;
    for (int trial = 0; trial < trials; ++trial) {
        const Eigen::MatrixXd phi = gaussian_matrix(25, 6, rng);
        Eigen::VectorXd w = Eigen::VectorXd::Zero(6);
        w(trial % 6) = 1.0;
        w((trial + 2) % 6) = -0.6;
        w((trial + 5) % 6) = 0.25;
        Eigen::VectorXd t = phi * w;
        for (int i = 0; i < 25; ++i) t(i) += 0.2 * g(rng);
        const double s2 = 0.04;
        const auto m = sparse::rvm_fit(phi, t, s2);
        std::vector<double> ev;
        for (int mask = 0; mask < 64; ++mask) {
            std::vector<int> subset;
            for (int j = 0; j < 6; ++j)
                if (mask & (1 << j)) subset.push_back(j);
            ev.push_back(oracle::best_subset_evidence(phi, t, s2, subset));
        }
        const double chosen = oracle::best_subset_evidence(phi, t, s2, m.active);
        const auto better = std::count_if(ev.begin(), ev.end(), [&](double e) { return e > chosen + 1e-9; });
        ranked += better < 3;
        global += better == 0;
    }
    v.detail << "; top-3 support in " << ranked << "/" << trials << " (global best " << global << ")";
    v.require(ranked == trials, "exhaustive ranking");
    const double secs = seconds_since(t0);
    v.require(secs < 60, "runtime");
    report(6, "RVM oracle", v, secs);
}

// Ensemble-mean rmse over states at row i.
double mean_rmse(const ado::EnsembleResult& ens, Eigen::Index i, const Eigen::VectorXd& truth) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(truth.size());
    for (const auto& m : ens.members) mean += m.row(i).transpose();
    mean /= static_cast<double>(ens.members.size());
    return std::sqrt((mean - truth).squaredNorm() / static_cast<double>(truth.size()));
}

void enkf_checks() {
    const auto t0 = Clock::now();
    Verdict v;
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g;

    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
        enkf::Ensemble e;
        for (int j = 0; j < 5; ++j) {
            e.members.push_back(gaussian_matrix(3, 1, rng).col(0));
            e.weights.push_back(Eigen::MatrixXd::Zero(1, 3));
        }
        enkf::ObservationOp op;
        if (trial % 2) op.observed = {0, 2};
        const auto m = op.dim(3);
        op.B = (gaussian_matrix(static_cast<int>(m), 1, rng).col(0).array().square() + 0.1).matrix();
        const Eigen::VectorXd obs = gaussian_matrix(static_cast<int>(m), 1, rng).col(0);
        const Eigen::MatrixXd eps = gaussian_matrix(static_cast<int>(m), 5, rng);
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, 3);
        for (Eigen::Index i = 0; i < m; ++i) H(i, op.observed.empty() ? i : op.observed[static_cast<std::size_t>(i)]) = 1;
        Eigen::Vector3d ubar = Eigen::Vector3d::Zero();
        for (const auto& u : e.members) ubar += u / 5.0;
        Eigen::Matrix3d C = Eigen::Matrix3d::Zero();
        for (const auto& u : e.members) C += (u - ubar) * (u - ubar).transpose() / 4.0;
        Eigen::MatrixXd S = H * C * H.transpose();
        S.diagonal() += op.B;
        const Eigen::MatrixXd K = C * H.transpose() * S.inverse();
        std::vector<Eigen::VectorXd> expected;
        for (int j = 0; j < 5; ++j) {
            const auto& u = e.members[static_cast<std::size_t>(j)];
            expected.push_back(u + K * (obs - H * u - eps.col(j)));
        }
        enkf::analysis(e, obs, op, eps);
        for (int j = 0; j < 5; ++j)
            worst = std::max(worst, (e.members[static_cast<std::size_t>(j)] - expected[static_cast<std::size_t>(j)])
                                        .cwiseAbs()
                                        .maxCoeff());
    }
    v.detail << " brute-force difference " << worst;
    v.require(worst <= 1e-10, "Kalman update equivalence");

    // Twin experiment on the discovered Lorenz 96 model (seed 1 of criterion 1).
    const auto it = noisy_runs.find("lorenz96");
    if (it == noisy_runs.end() || !it->second.front().error.empty()) {
        v.require(false, "no Lorenz 96 discovery available");
        report(7, "EnKF", v, seconds_since(t0));
        return;
    }
    const Run& run = it->second.front();
    const zoo::Dataset& ds = run.data;
    const auto n = static_cast<int>(ds.values.cols());
    const double dt = ds.coords(1, 0) - ds.coords(0, 0);
    const int J = 100;
    const double window_start = 2.0, window_len = 3.0, obs_spacing = 0.05;
    const int stride = static_cast<int>(std::lround(obs_spacing / dt));
    const int first = static_cast<int>(std::lround((window_start - ds.coords(0, 0)) / dt));

    // Measurement noise actually injected: 10% of each state's standard deviation.
    double sigma = 0;
    for (int k = 0; k < n; ++k) {
        const Eigen::ArrayXd col = ds.truth.col(k).array();
        sigma += (col - col.mean()).square().mean() * ds.noise_level * ds.noise_level / n;
    }
    sigma = std::sqrt(sigma);

    // Truth continued past the data record with the true right-hand side.
    const zoo::Rhs rhs = zoo::ode_rhs(run.bench);
    const int sub = 10;
    const int rows = 1 + static_cast<int>(std::ceil(20.0 / dt));
    Eigen::MatrixXd truth(rows, n);
    Eigen::VectorXd u = ds.truth.row(first).transpose();
    truth.row(0) = u.transpose();
    for (int r = 1; r < rows; ++r) {
        for (int s = 0; s < sub; ++s) zoo::rk4_step(rhs, u, dt / sub);
        truth.row(r) = u.transpose();
    }
    const double t_first = ds.coords(first, 0);
    auto truth_at = [&](double t) {
        const auto r = static_cast<Eigen::Index>(std::lround((t - t_first) / dt));
        return Eigen::VectorXd(truth.row(std::clamp<Eigen::Index>(r, 0, rows - 1)).transpose());
    };

    enkf::AssimilationConfig cfg;
    for (int i = first; i < ds.values.rows() && ds.coords(i, 0) <= window_start + window_len + 1e-9; i += stride)
        cfg.obs_times.push_back(ds.coords(i, 0));
    cfg.obs.resize(static_cast<Eigen::Index>(cfg.obs_times.size()), n);
    for (std::size_t i = 0; i < cfg.obs_times.size(); ++i)
        cfg.obs.row(static_cast<Eigen::Index>(i)) = ds.values.row(first + static_cast<Eigen::Index>(i) * stride);
    cfg.op.B = run.res.B;
    cfg.P = run.res.P;
    cfg.horizon = t_first + 18.0;
    cfg.seed = 7;

    const auto samples = ado::sample_states(run.res, J, 11);
    enkf::Ensemble e;
    for (int j = 0; j < J; ++j) {
        Eigen::VectorXd m0 = cfg.obs.row(0).transpose();
        for (int k = 0; k < n; ++k) m0(k) += std::sqrt(run.res.B(k)) * g(rng);
        e.members.push_back(m0);
        e.weights.push_back(samples[static_cast<std::size_t>(j)].W);
    }

    // Free run from the same ensemble: predictability ends when the mean error passes 2 sigma.
    enkf::AssimilationConfig free_cfg;
    free_cfg.op.B = cfg.op.B;
    free_cfg.P = cfg.P;
    free_cfg.t0 = t_first;
    free_cfg.horizon = cfg.horizon;
    free_cfg.interval = cfg.obs_times[1] - cfg.obs_times[0];
    free_cfg.seed = 8;
    const auto free = enkf::assimilate(e, run.prob.terms, free_cfg);
    double free_horizon = free.ensemble.times.back() - t_first;
    for (std::size_t i = 0; i < free.ensemble.times.size(); ++i)
        if (mean_rmse(free.ensemble, static_cast<Eigen::Index>(i), truth_at(free.ensemble.times[i])) > 2 * sigma) {
            free_horizon = free.ensemble.times[i] - t_first;
            break;
        }

    const auto da = enkf::assimilate(e, run.prob.terms, cfg);
    double in_window = 0;
    int covered = 0, total = 0;
    const double horizon = 3 * std::max(free_horizon, 1.0);
    for (std::size_t i = 0; i < da.ensemble.times.size(); ++i) {
        const double t = da.ensemble.times[i];
        const auto row = static_cast<Eigen::Index>(i);
        const Eigen::VectorXd tr = truth_at(t);
        if (t <= da.window_end + 1e-9) {
            in_window = std::max(in_window, mean_rmse(da.ensemble, row, tr));
        } else if (t <= da.window_end + horizon + 1e-9) {
            for (int k = 0; k < n; ++k) {
                covered += tr(k) >= da.ensemble.q05(row, k) && tr(k) <= da.ensemble.q95(row, k);
                ++total;
            }
        }
    }
    const double coverage = total ? static_cast<double>(covered) / total : 0.0;
    v.detail << "; Lorenz 96 in-window rmse " << in_window << " (2 sigma " << 2 * sigma << "), free-run horizon "
             << free_horizon << " s, 5-95% band coverage " << coverage << " over " << horizon
             << " s after the window";
    v.require(in_window < 2 * sigma, "in-window rmse");
    v.require(coverage >= 0.9, "post-window bracketing");
    const double secs = seconds_since(t0);
    v.require(secs < 300, "runtime");
    report(7, "EnKF", v, secs);
}

void hare_lynx() {
    const auto t0 = Clock::now();
    Verdict v;
    const Run r = discover("hare_lynx", 0.0, 1);
    if (!r.error.empty()) {
        v.require(false, r.error);
    } else {
        for (const auto& row : r.score.terms)
            if (row.mean != 0 || row.truth != 0)
                v.detail << " " << row.term << "[" << row.state << "]=" << row.mean;
        v.detail << "; M_P " << r.score.precision << " M_R " << r.score.recall << " rmse " << r.score.rmse;
        v.require(r.exact(), "structure");
        v.require(r.score.rmse <= 0.1, "rmse");
    }
    v.require(r.secs < 600, "runtime");
    report(8, "hare-lynx", v, seconds_since(t0));
}

void invariants() {
    const auto t0 = Clock::now();
    Verdict v;

    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double unity = 0;
    for (int k = 0; k <= 5; ++k) {
        const auto kv = spline::KnotVector::clamped_uniform(-1.0, 2.0, 11, k);
        for (int i = 0; i < 1000; ++i) {
            const double t = i == 0 ? kv.hi() : -1.0 + 3.0 * u(rng);
            double sum = 0;
            for (int s = 0; s < kv.num_basis(); ++s) sum += spline::eval_basis(kv, s, t);
            unity = std::max(unity, std::abs(sum - 1.0));
        }
    }
    v.require(unity < 1e-12, "partition of unity");

    bool positive = true, pruning = true, retained = true;
    auto inspect = [&](const Run& r) {
        if (!r.error.empty()) return;
        positive = positive && (r.res.B.array() > 0).all() && (r.res.P.array() > 0).all() && r.res.B.allFinite() &&
                   r.res.P.allFinite();
        for (std::size_t i = 1; i < r.res.iterations.size(); ++i)
            pruning = pruning && r.res.iterations[i].active <= r.res.iterations[i - 1].active;
        for (std::size_t i = 1; i < r.res.loss_history.size(); ++i)
            retained = retained && r.res.loss_history[i] <= r.res.loss_history[i - 1];
    };
    for (const auto& [id, runs] : noisy_runs)
        for (const auto& r : runs) inspect(r);
    for (const auto& [id, r] : clean_runs) inspect(r);
    v.require(positive, "B and P positive");
    v.require(pruning, "active set nonincreasing");
    v.require(retained, "retained loss nonincreasing");

    std::normal_distribution<double> g;
    bool evidence = true;
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd phi = gaussian_matrix(50, 12, rng);
        Eigen::VectorXd w = Eigen::VectorXd::Zero(12);
        w(trial % 12) = 1.0;
        w((trial + 5) % 12) = -0.4;
        Eigen::VectorXd t = phi * w;
        for (int i = 0; i < 50; ++i) t(i) += 0.1 * g(rng);
        const auto m = sparse::rvm_fit(phi, t, 0.01);
        for (std::size_t i = 1; i < m.history.size(); ++i)
            evidence = evidence && m.history[i] >= m.history[i - 1] - 1e-9 * std::abs(m.history[i - 1]);
    }
    v.require(evidence, "marginal likelihood nondecreasing");

    bool identity = true;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd x = gaussian_matrix(15, 1, rng).col(0);
        for (int i = 0; i < 15; ++i)
            if (u(rng) < 0.5) x(i) = 0;
        if (x.cwiseAbs().maxCoeff() == 0) x(0) = 1;
        const auto s = metrics::score(x, x);
        identity = identity && s.rmse == 0 && s.precision == 1 && s.recall == 1;
    }
    v.require(identity, "score(x, x) = (0, 1, 1)");

    const Run a = discover("vdp", 0.05, 1);
    const Run b = discover("vdp", 0.05, 1);
    const bool same = a.error.empty() && b.error.empty() && a.res.W_mean == b.res.W_mean &&
                      a.res.W_std == b.res.W_std && a.res.loss_history == b.res.loss_history &&
                      a.res.B == b.res.B && a.res.P == b.res.P;
    v.require(same, "seed determinism");
    v.detail << " partition of unity " << unity << ", B/P positive, pruning and L* monotone over "
             << 5 * noisy_runs.size() + clean_runs.size() << " runs, evidence monotone, metric identity, "
             << "bit-identical repeat";
    report(9, "invariant suites", v, seconds_since(t0));
}

}  // namespace

int main() {
    const auto t0 = Clock::now();
    std::printf("threads: %d\n", ado::thread_count());
    structure_and_accuracy();
    spline_convergence();
    derivative_formula();
    gradient_oracle();
    rvm_oracle();
    enkf_checks();
    hare_lynx();
    invariants();
    std::printf("%d of 9 criteria failed, total %.1f s\n", failures, seconds_since(t0));
    return failures ? 1 : 0;
}
