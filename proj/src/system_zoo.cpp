#include "bsl/system_zoo.hpp"

#include "bsl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace bsl::zoo {

namespace {

constexpr double kPi = 3.14159265358979323846;

using library::TermDescriptor;

const std::vector<std::string> kIds{"vdp",      "lorenz96", "lotka_volterra", "advection", "burgers",
                                    "burgers_source", "heat", "poisson", "hare_lynx"};

std::map<std::string, double> default_params(const std::string& id) {
    if (id == "vdp") return {{"mu", 0.5}, {"x0", 2.0}, {"y0", 0.0}, {"samples", 500}, {"t_end", 10.0}, {"control", 0}};
    if (id == "lorenz96")
        return {{"n", 6}, {"F", 8.0}, {"spinup", 2.0}, {"samples", 2000}, {"t_end", 10.0}, {"control", 250}};
    if (id == "lotka_volterra")
        return {{"a", 0.4807}, {"b", -0.0248}, {"c", -0.9272}, {"d", 0.0276}, {"x0", 30.0},
                {"y0", 4.0},   {"samples", 500}, {"t_end", 20.0},  {"control", 0}};
    if (id == "advection")
        return {{"c", 1.0},   {"length", 12.0}, {"center", 3.0}, {"width", 0.8}, {"t_end", 5.0},
                {"nx", 50},   {"nt", 50},       {"control_x", 54}, {"control_t", 54}};
    if (id == "burgers")
        return {{"nu", 0.5},  {"x_lo", -8.0},  {"x_hi", 8.0},   {"t_end", 10.0},    {"amp", 1.0},
                {"center", -2.0}, {"width", 2.0}, {"nx", 128},  {"nt", 101},        {"control_x", 26},
                {"control_t", 19}, {"fd_points", 4096}};
    if (id == "burgers_source")
        return {{"nu", 0.1}, {"amp", 0.5},     {"t_end", 5.0},     {"nx", 201},        {"nt", 101},
                {"control_x", 103}, {"control_t", 103}, {"fd_points", 4096}};
    if (id == "heat") return {{"nx", 51}, {"ny", 51}, {"control_x", 11}, {"control_y", 11}};
    if (id == "poisson") return {{"amp", 0.5}, {"nx", 101}, {"ny", 101}, {"control_x", 53}, {"control_y", 53}};
    if (id == "hare_lynx") return {{"control", 21}};
    throw ConfigError("unknown benchmark '" + id + "'");
}

int as_count(const std::map<std::string, double>& p, const std::string& key) {
    const double v = p.at(key);
    if (v < 0 || v != std::floor(v)) throw ConfigError("parameter '" + key + "' must be a nonnegative integer");
    return static_cast<int>(v);
}

TermDescriptor mono(const std::vector<int>& exps) {
    TermDescriptor t;
    for (std::size_t s = 0; s < exps.size(); ++s)
        if (exps[s] > 0) t.factors.push_back({static_cast<int>(s), {}, exps[s]});
    return t.factors.empty() ? TermDescriptor::constant() : t;
}

std::string mono_key(int d, std::initializer_list<std::pair<int, int>> powers) {
    std::vector<int> e(static_cast<std::size_t>(d), 0);
    for (auto [s, p] : powers) e[static_cast<std::size_t>(s)] += p;
    return mono(e).key();
}

std::string field_key(int a, int q, int b) {
    TermDescriptor t;
    if (a > 0) t.factors.push_back({0, {}, a});
    if (b > 0) t.factors.push_back({0, {q, 0}, b});
    return t.key();
}

double column_std(const Eigen::VectorXd& v) {
    if (v.size() < 2) return 0.0;
    const double mean = v.mean();
    return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size()));
}

std::vector<double> linspace(double lo, double hi, int n, bool include_end) {
    std::vector<double> out(static_cast<std::size_t>(n));
    const double step = (hi - lo) / (include_end ? std::max(n - 1, 1) : n);
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + step * i;
    if (include_end && n > 1) out.back() = hi;
    return out;
}

// Explicit central differences for u_t = -(u^2/2)_x + nu u_xx + sin(x) g(t) on a periodic grid.
Eigen::MatrixXd burgers_fd(double nu, double lo, double length, int points, const std::vector<double>& times,
                           const std::function<double(double)>& u0,
                           const std::function<double(double)>& source) {
    const double dx = length / points;
    Eigen::VectorXd x(points);
    Eigen::VectorXd u(points);
    for (int i = 0; i < points; ++i) {
        x(i) = lo + dx * i;
        u(i) = u0(x(i));
    }
    Eigen::VectorXd sx(points);
    for (int i = 0; i < points; ++i) sx(i) = std::sin(x(i));
    Eigen::MatrixXd out(points, static_cast<Eigen::Index>(times.size()));
    Eigen::VectorXd next(points);
    const double dt_max = 0.4 * dx * dx / nu;
    double t = times.front();
    out.col(0) = u;
    for (std::size_t k = 1; k < times.size(); ++k) {
        const double span = times[k] - t;
        const int steps = std::max(1, static_cast<int>(std::ceil(span / dt_max)));
        const double dt = span / steps;
        for (int s = 0; s < steps; ++s) {
            const double ft = source ? source(t) : 0.0;
            for (int i = 0; i < points; ++i) {
                const int l = i == 0 ? points - 1 : i - 1;
                const int r = i == points - 1 ? 0 : i + 1;
                const double adv = (u(r) * u(r) - u(l) * u(l)) / (4 * dx);
                const double dif = nu * (u(r) - 2 * u(i) + u(l)) / (dx * dx);
                next(i) = u(i) + dt * (-adv + dif + ft * sx(i));
            }
            u.swap(next);
            t += dt;
        }
        if (!u.allFinite()) throw NumericalError("Burgers reference solver produced non-finite values");
        t = times[k];
        out.col(static_cast<Eigen::Index>(k)) = u;
    }
    return out;
}

Dataset grid_dataset(const std::vector<double>& xs, const std::vector<double>& ts,
                     const std::function<double(std::size_t, std::size_t)>& value,
                     std::vector<std::string> names) {
    Dataset d;
    d.coord_names = std::move(names);
    const auto rows = static_cast<Eigen::Index>(xs.size() * ts.size());
    d.coords.resize(rows, 2);
    d.truth.resize(rows, 1);
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = 0; j < ts.size(); ++j, ++r) {
            d.coords(r, 0) = xs[i];
            d.coords(r, 1) = ts[j];
            d.truth(r, 0) = value(i, j);
        }
    }
    d.values = d.truth;
    return d;
}

}  // namespace

std::vector<std::string> benchmark_ids() { return kIds; }

Benchmark make_benchmark(const std::string& id, const std::map<std::string, double>& overrides) {
    Benchmark b;
    b.id = id;
    b.params = default_params(id);
    for (const auto& [k, v] : overrides) {
        if (!b.params.count(k)) throw ConfigError("benchmark '" + id + "' has no parameter '" + k + "'");
        b.params[k] = v;
    }
    const auto& p = b.params;
    using LK = library::LibrarySpec::Kind;
    if (id == "vdp" || id == "lorenz96" || id == "lotka_volterra" || id == "hare_lynx") {
        b.kind = ProblemKind::Ode;
        if (id == "hare_lynx") {
            b.lo = {0.0};
            b.hi = {20.0};
            b.grid = {21};
            b.tabulated = true;
        } else {
            b.lo = {0.0};
            b.hi = {p.at("t_end")};
            b.grid = {as_count(p, "samples")};
            if (!(b.hi[0] > 0)) throw ConfigError("t_end must be positive");
            if (b.grid[0] < 4) throw ConfigError("need at least 4 samples");
        }
        b.control = {as_count(p, "control")};
        if (id == "lorenz96") {
            b.num_states = as_count(p, "n");
            if (b.num_states < 4) throw ConfigError("Lorenz 96 needs at least 4 states");
            b.library = {LK::Poly, 3, true, {}, 3, 3, {}};
        } else {
            b.num_states = 2;
            if (id == "vdp")
                b.library = {LK::Poly, 3, true, {}, 3, 3, {}};
            else
                b.library = {LK::Poly, 2, false, {{1, 0}, {0, 1}, {1, 1}, {2, 1}, {1, 2}}, 3, 3, {}};
        }
        if (id == "vdp" || id == "lotka_volterra") b.initial_state = {p.at("x0"), p.at("y0")};
        if (id == "hare_lynx") {
            const Eigen::MatrixXd tab = hare_lynx_table();
            b.initial_state = {tab(0, 1), tab(0, 2)};
        }
        if (id == "lorenz96") {
            const double f = p.at("F");
            Eigen::VectorXd u = Eigen::VectorXd::Constant(b.num_states, f);
            u(0) += 0.01;
            const double spin = p.at("spinup");
            if (spin > 0) {
                const int steps = static_cast<int>(std::ceil(spin / 1e-3));
                const Eigen::MatrixXd traj = integrate_rk4(ode_rhs(b), u, spin / steps, steps);
                u = traj.row(traj.rows() - 1).transpose();
            }
            b.initial_state.assign(u.data(), u.data() + u.size());
        }
        return b;
    }

    b.num_states = 1;
    if (id == "advection" || id == "burgers" || id == "burgers_source") {
        b.kind = ProblemKind::Evolution;
        b.periodic = true;
        b.grid = {as_count(p, "nx"), as_count(p, "nt")};
        b.control = {as_count(p, "control_x"), as_count(p, "control_t")};
        if (id == "advection") {
            b.lo = {0.0, 0.0};
            b.hi = {p.at("length"), p.at("t_end")};
            b.library = {LK::Pde, 3, true, {}, 3, 3, {}};
        } else if (id == "burgers") {
            b.lo = {p.at("x_lo"), 0.0};
            b.hi = {p.at("x_hi"), p.at("t_end")};
            b.library = {LK::Pde, 3, true, {}, 3, 3, {}};
        } else {
            b.lo = {0.0, 0.0};
            b.hi = {2 * kPi, p.at("t_end")};
            b.library = {LK::Pde, 3, true, {}, 3, 3,
                         {library::Forcing::SinXSinT, library::Forcing::SinXCosT, library::Forcing::SinX}};
        }
    } else {
        b.kind = ProblemKind::Steady;
        b.grid = {as_count(p, "nx"), as_count(p, "ny")};
        b.control = {as_count(p, "control_x"), as_count(p, "control_y")};
        b.lo = {0.0, 0.0};
        b.hi = {kPi, kPi};
        if (id == "heat")
            b.library = {LK::Pde, 2, true, {}, 2, 2, {}};
        else
            b.library = {LK::Pde, 2, true, {}, 2, 2, {library::Forcing::SinXSinY, library::Forcing::SinX}};
    }
    for (int g : b.grid)
        if (g < 4) throw ConfigError("grid needs at least 4 points per axis");
    if (!(b.hi[0] > b.lo[0]) || !(b.hi[1] > b.lo[1])) throw ConfigError("empty benchmark domain");
    return b;
}

void rk4_step(const Rhs& rhs, Eigen::VectorXd& u, double dt) {
    Eigen::VectorXd k1(u.size()), k2(u.size()), k3(u.size()), k4(u.size());
    rhs(u, k1);
    rhs(u + 0.5 * dt * k1, k2);
    rhs(u + 0.5 * dt * k2, k3);
    rhs(u + dt * k3, k4);
    u += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
}

Eigen::MatrixXd integrate_rk4(const Rhs& rhs, const Eigen::VectorXd& u0, double dt, int steps) {
    if (!(dt > 0)) throw ArgumentError("RK4 step must be positive");
    if (steps < 0) throw ArgumentError("RK4 step count must be nonnegative");
    Eigen::MatrixXd out(steps + 1, u0.size());
    Eigen::VectorXd u = u0;
    out.row(0) = u.transpose();
    for (int s = 1; s <= steps; ++s) {
        rk4_step(rhs, u, dt);
        if (!u.allFinite()) {
            std::ostringstream msg;
            msg << "RK4 produced a non-finite state at step " << s;
            throw NumericalError(msg.str());
        }
        out.row(s) = u.transpose();
    }
    return out;
}

Rhs ode_rhs(const Benchmark& b) {
    const auto& p = b.params;
    if (b.id == "vdp") {
        const double mu = p.at("mu");
        return [mu](const Eigen::VectorXd& u, Eigen::VectorXd& f) {
            f.resize(2);
            f(0) = u(1);
            f(1) = -u(0) + mu * u(1) - mu * u(0) * u(0) * u(1);
        };
    }
    if (b.id == "lorenz96") {
        const double force = p.at("F");
        return [force](const Eigen::VectorXd& u, Eigen::VectorXd& f) {
            const auto n = u.size();
            f.resize(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double up = u((i + 1) % n);
                const double m1 = u((i + n - 1) % n);
                const double m2 = u((i + n - 2) % n);
                f(i) = (up - m2) * m1 - u(i) + force;
            }
        };
    }
    if (b.id == "lotka_volterra" || b.id == "hare_lynx") {
        const double a = b.id == "hare_lynx" ? 0.4807 : p.at("a");
        const double bb = b.id == "hare_lynx" ? -0.0248 : p.at("b");
        const double c = b.id == "hare_lynx" ? -0.9272 : p.at("c");
        const double d = b.id == "hare_lynx" ? 0.0276 : p.at("d");
        return [a, bb, c, d](const Eigen::VectorXd& u, Eigen::VectorXd& f) {
            f.resize(2);
            f(0) = a * u(0) + bb * u(0) * u(1);
            f(1) = c * u(1) + d * u(0) * u(1);
        };
    }
    throw ConfigError("benchmark '" + b.id + "' is not an ODE");
}

Eigen::MatrixXd hare_lynx_table() {
    static const double rows[21][2] = {{30, 4},     {47.2, 6.1}, {70.2, 9.8},  {77.4, 35.2}, {36.3, 59.4},
                                       {20.6, 41.7}, {18.1, 19},  {21.4, 13},   {22, 8.3},    {25.4, 9.1},
                                       {27.1, 7.4},  {40.3, 8},   {57, 12.3},   {76.6, 19.5}, {52.3, 45.7},
                                       {19.5, 51.1}, {11.2, 29.7}, {7.6, 15.8}, {14.6, 9.7},  {16.2, 10.1},
                                       {24.7, 8.6}};
    Eigen::MatrixXd out(21, 3);
    for (int i = 0; i < 21; ++i) {
        out(i, 0) = i;
        out(i, 1) = rows[i][0];
        out(i, 2) = rows[i][1];
    }
    return out;
}

Dataset make_truth(const Benchmark& b) {
    const auto& p = b.params;
    if (b.id == "hare_lynx") {
        const Eigen::MatrixXd tab = hare_lynx_table();
        Dataset d;
        d.coord_names = {"t"};
        d.coords = tab.col(0);
        d.values = tab.rightCols(2);
        return d;
    }
    if (b.kind == ProblemKind::Ode) {
        const int n = b.grid[0];
        const double sample_dt = (b.hi[0] - b.lo[0]) / (n - 1);
        const int sub = std::max(1, static_cast<int>(std::ceil(sample_dt / 1e-3)));
        const Rhs rhs = ode_rhs(b);
        Dataset d;
        d.coord_names = {"t"};
        d.coords.resize(n, 1);
        d.truth.resize(n, b.num_states);
        Eigen::VectorXd u = Eigen::Map<const Eigen::VectorXd>(b.initial_state.data(),
                                                              static_cast<Eigen::Index>(b.initial_state.size()));
        for (int i = 0; i < n; ++i) {
            if (i > 0) {
                const Eigen::MatrixXd seg = integrate_rk4(rhs, u, sample_dt / sub, sub);
                u = seg.row(sub).transpose();
            }
            d.coords(i, 0) = b.lo[0] + sample_dt * i;
            d.truth.row(i) = u.transpose();
        }
        d.values = d.truth;
        return d;
    }
    if (b.id == "advection") {
        const double length = p.at("length");
        const double c = p.at("c");
        const double x0 = p.at("center");
        const double w = p.at("width");
        const auto xs = linspace(b.lo[0], b.hi[0], b.grid[0], false);
        const auto ts = linspace(b.lo[1], b.hi[1], b.grid[1], true);
        return grid_dataset(
            xs, ts,
            [&](std::size_t i, std::size_t j) {
                double v = 0;
                for (int k = -3; k <= 3; ++k) {
                    const double z = xs[i] - c * ts[j] - x0 + k * length;
                    v += std::exp(-z * z / (2 * w * w));
                }
                return v;
            },
            {"x", "t"});
    }
    if (b.id == "burgers" || b.id == "burgers_source") {
        const int nx = b.grid[0];
        const int factor = std::max(1, static_cast<int>(std::ceil(p.at("fd_points") / nx)));
        const auto xs = linspace(b.lo[0], b.hi[0], nx, false);
        const auto ts = linspace(b.lo[1], b.hi[1], b.grid[1], true);
        const double length = b.hi[0] - b.lo[0];
        Eigen::MatrixXd fine;
        if (b.id == "burgers") {
            const double amp = p.at("amp");
            const double c = p.at("center");
            const double w = p.at("width");
            fine = burgers_fd(p.at("nu"), b.lo[0], length, nx * factor, ts,
                              [=](double x) {
                                  double v = 0;
                                  for (int k = -3; k <= 3; ++k) {
                                      const double z = x - c + k * length;
                                      v += amp * std::exp(-z * z / (2 * w * w));
                                  }
                                  return v;
                              },
                              nullptr);
        } else {
            const double amp = p.at("amp");
            fine = burgers_fd(p.at("nu"), b.lo[0], length, nx * factor, ts,
                              [=](double x) { return amp * std::sin(x); },
                              [](double t) { return std::sin(t); });
        }
        return grid_dataset(
            xs, ts, [&](std::size_t i, std::size_t j) { return fine(static_cast<Eigen::Index>(i) * factor, static_cast<Eigen::Index>(j)); },
            {"x", "t"});
    }
    const auto xs = linspace(b.lo[0], b.hi[0], b.grid[0], true);
    const auto ys = linspace(b.lo[1], b.hi[1], b.grid[1], true);
    if (b.id == "heat") {
        return grid_dataset(
            xs, ys,
            [&](std::size_t i, std::size_t j) {
                return std::sin(xs[i]) * std::sinh(ys[j]) / std::sinh(kPi) +
                       std::sin(2 * xs[i]) * std::sinh(2 * ys[j]) / std::sinh(2 * kPi);
            },
            {"x", "y"});
    }
    const double amp = p.at("amp");
    return grid_dataset(
        xs, ys, [&](std::size_t i, std::size_t j) { return amp * std::sin(xs[i]) * std::sin(ys[j]); }, {"x", "y"});
}

void add_noise(Dataset& data, double level, std::uint64_t seed) {
    if (level < 0) throw ArgumentError("noise level must be nonnegative");
    data.noise_level = level;
    data.seed = seed;
    if (level == 0) return;
    const Eigen::MatrixXd& ref = data.has_truth() ? data.truth : data.values;
    std::vector<double> sigma(static_cast<std::size_t>(ref.cols()));
    for (Eigen::Index j = 0; j < ref.cols(); ++j) sigma[static_cast<std::size_t>(j)] = level * column_std(ref.col(j));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    for (Eigen::Index i = 0; i < data.values.rows(); ++i)
        for (Eigen::Index j = 0; j < data.values.cols(); ++j) data.values(i, j) += sigma[static_cast<std::size_t>(j)] * g(rng);
}

void subsample(Dataset& data, double fraction, std::uint64_t seed) {
    if (!(fraction > 0 && fraction <= 1)) throw ArgumentError("subsample fraction must lie in (0, 1]");
    if (fraction == 1.0) return;
    const auto n = data.values.rows();
    const auto keep = std::max<Eigen::Index>(2, static_cast<Eigen::Index>(std::llround(fraction * static_cast<double>(n))));
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(keep));
    std::sort(idx.begin(), idx.end());
    auto take = [&](const Eigen::MatrixXd& m) {
        if (m.size() == 0) return m;
        Eigen::MatrixXd out(keep, m.cols());
        for (Eigen::Index r = 0; r < keep; ++r) out.row(r) = m.row(idx[static_cast<std::size_t>(r)]);
        return out;
    };
    data.coords = take(data.coords);
    data.values = take(data.values);
    data.truth = take(data.truth);
}

Dataset make_dataset(const Benchmark& b, double noise_level, std::uint64_t seed, double fraction) {
    Dataset d = make_truth(b);
    add_noise(d, noise_level, seed);
    subsample(d, fraction, seed);
    return d;
}

std::vector<std::map<std::string, double>> true_terms(const Benchmark& b) {
    const auto& p = b.params;
    if (b.id == "vdp") {
        const double mu = p.at("mu");
        return {{{mono_key(2, {{1, 1}}), 1.0}},
                {{mono_key(2, {{0, 1}}), -1.0}, {mono_key(2, {{1, 1}}), mu}, {mono_key(2, {{0, 2}, {1, 1}}), -mu}}};
    }
    if (b.id == "lorenz96") {
        const int n = b.num_states;
        std::vector<std::map<std::string, double>> out(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            auto& m = out[static_cast<std::size_t>(i)];
            const int up = (i + 1) % n;
            const int m1 = (i + n - 1) % n;
            const int m2 = (i + n - 2) % n;
            m[mono_key(n, {{up, 1}, {m1, 1}})] += 1.0;
            m[mono_key(n, {{m2, 1}, {m1, 1}})] += -1.0;
            m[mono_key(n, {{i, 1}})] += -1.0;
            m[TermDescriptor::constant().key()] += p.at("F");
        }
        return out;
    }
    if (b.id == "lotka_volterra" || b.id == "hare_lynx") {
        const bool ref = b.id == "hare_lynx";
        const double a = ref ? 0.4807 : p.at("a");
        const double bb = ref ? -0.0248 : p.at("b");
        const double c = ref ? -0.9272 : p.at("c");
        const double d = ref ? 0.0276 : p.at("d");
        return {{{mono_key(2, {{0, 1}}), a}, {mono_key(2, {{0, 1}, {1, 1}}), bb}},
                {{mono_key(2, {{1, 1}}), c}, {mono_key(2, {{0, 1}, {1, 1}}), d}}};
    }
    const std::string sinsin_t = library::TermDescriptor::of_forcing(library::Forcing::SinXSinT).key();
    const std::string sinsin_y = library::TermDescriptor::of_forcing(library::Forcing::SinXSinY).key();
    if (b.id == "advection") return {{{field_key(0, 1, 1), -p.at("c")}}};
    if (b.id == "burgers") return {{{field_key(1, 1, 1), -1.0}, {field_key(0, 2, 1), p.at("nu")}}};
    if (b.id == "burgers_source")
        return {{{field_key(1, 1, 1), -1.0}, {field_key(0, 2, 1), p.at("nu")}, {sinsin_t, 1.0}}};
    if (b.id == "heat") return {{{field_key(0, 2, 1), -1.0}}};
    if (b.id == "poisson") return {{{field_key(0, 2, 1), -1.0}, {sinsin_y, -1.0}}};
    throw ConfigError("no true coefficients for '" + b.id + "'");
}

Eigen::MatrixXd true_coefficients(const Benchmark& b, const std::vector<TermDescriptor>& terms) {
    const auto truth = true_terms(b);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(terms.size()),
                                              static_cast<Eigen::Index>(truth.size()));
    for (std::size_t k = 0; k < truth.size(); ++k) {
        for (const auto& [key, value] : truth[k]) {
            auto it = std::find_if(terms.begin(), terms.end(), [&](const TermDescriptor& t) { return t.key() == key; });
            if (it == terms.end()) throw ConfigError("true term '" + key + "' is not in the library");
            w(it - terms.begin(), static_cast<Eigen::Index>(k)) = value;
        }
    }
    return w;
}

library::Naming naming(const Benchmark& b) {
    if (b.kind == ProblemKind::Ode) return library::ode_naming(b.num_states);
    library::Naming n;
    n.states = {"u"};
    n.axes = b.kind == ProblemKind::Steady ? std::vector<std::string>{"x", "y"} : std::vector<std::string>{"x", "t"};
    return n;
}

std::vector<std::string> lhs_names(const Benchmark& b) {
    if (b.kind == ProblemKind::Evolution) return {"u_t"};
    if (b.kind == ProblemKind::Steady) return {"u_yy"};
    std::vector<std::string> out;
    for (const auto& s : naming(b).states) out.push_back("d" + s + "/dt");
    return out;
}

spline::DerivOrder lhs_deriv(const Benchmark& b) {
    switch (b.kind) {
        case ProblemKind::Ode: return {1, 0};
        case ProblemKind::Evolution: return {0, 1};
        case ProblemKind::Steady: return {0, 2};
    }
    return {};
}

void write_csv(const Dataset& data, const std::filesystem::path& path, bool include_truth) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path.string());
    const bool truth = include_truth && data.has_truth();
    const auto d = data.values.cols();
    const bool ode = data.coords.cols() == 1;
    std::vector<std::string> header = data.coord_names;
    for (Eigen::Index k = 0; k < d; ++k) header.push_back(ode ? "u" + std::to_string(k + 1) : "u");
    if (truth)
        for (Eigen::Index k = 0; k < d; ++k) header.push_back(ode ? "u" + std::to_string(k + 1) + "_true" : "u_true");
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << '\n';
    os.precision(17);
    for (Eigen::Index r = 0; r < data.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < data.coords.cols(); ++c) os << (c ? "," : "") << data.coords(r, c);
        for (Eigen::Index k = 0; k < d; ++k) os << ',' << data.values(r, k);
        if (truth)
            for (Eigen::Index k = 0; k < d; ++k) os << ',' << data.truth(r, k);
        os << '\n';
    }
    if (!os) throw ConfigError("failed writing " + path.string());
}

Dataset read_csv(const std::filesystem::path& path, int dims) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw ConfigError(path.string() + " is empty");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (static_cast<int>(header.size()) <= dims) throw ConfigError(path.string() + ": header has no value columns");
    int truth_cols = 0;
    for (const auto& h : header)
        if (h.size() > 5 && h.substr(h.size() - 5) == "_true") ++truth_cols;
    const int value_cols = static_cast<int>(header.size()) - dims - truth_cols;
    if (value_cols < 1 || (truth_cols && truth_cols != value_cols))
        throw ConfigError(path.string() + ": inconsistent value/truth columns");
    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ConfigError(path.string() + ": bad number on line " + std::to_string(lineno));
            }
        }
        if (row.size() != header.size())
            throw ConfigError(path.string() + ": wrong column count on line " + std::to_string(lineno));
        rows.push_back(std::move(row));
    }
    Dataset d;
    d.coord_names.assign(header.begin(), header.begin() + dims);
    const auto n = static_cast<Eigen::Index>(rows.size());
    d.coords.resize(n, dims);
    d.values.resize(n, value_cols);
    if (truth_cols) d.truth.resize(n, truth_cols);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& row = rows[static_cast<std::size_t>(r)];
        for (int c = 0; c < dims; ++c) d.coords(r, c) = row[static_cast<std::size_t>(c)];
        for (int k = 0; k < value_cols; ++k) d.values(r, k) = row[static_cast<std::size_t>(dims + k)];
        for (int k = 0; k < truth_cols; ++k) d.truth(r, k) = row[static_cast<std::size_t>(dims + value_cols + k)];
    }
    return d;
}

}  // namespace bsl::zoo
