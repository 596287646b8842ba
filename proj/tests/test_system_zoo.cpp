#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bsl/errors.hpp"
#include "bsl/system_zoo.hpp"

#include <cmath>
#include <filesystem>

using namespace bsl;
using namespace bsl::zoo;

namespace {

// Eighth-order central first and second differences at index i of a uniformly spaced sequence.
double d1(const std::function<double(int)>& f, int i, double h) {
    static const double c[] = {4.0 / 5, -1.0 / 5, 4.0 / 105, -1.0 / 280};
    double s = 0;
    for (int k = 1; k <= 4; ++k) s += c[k - 1] * (f(i + k) - f(i - k));
    return s / h;
}

double d2(const std::function<double(int)>& f, int i, double h) {
    static const double c[] = {8.0 / 5, -1.0 / 5, 8.0 / 315, -1.0 / 560};
    double s = -205.0 / 72 * f(i);
    for (int k = 1; k <= 4; ++k) s += c[k - 1] * (f(i + k) + f(i - k));
    return s / (h * h);
}

}  // namespace

TEST_CASE("rk4 closed forms") {
    Eigen::VectorXd u0(1);
    u0 << 1.0;
    const auto zero = integrate_rk4([](const Eigen::VectorXd& u, Eigen::VectorXd& f) { f = Eigen::VectorXd::Zero(u.size()); },
                                    u0, 0.1, 10);
    CHECK(zero(10, 0) == 1.0);
    const auto grow = integrate_rk4([](const Eigen::VectorXd& u, Eigen::VectorXd& f) { f = u; }, u0, 1e-3, 1000);
    CHECK(std::abs(grow(1000, 0) - std::exp(1.0)) < 1e-9);

    Eigen::VectorXd h0(2);
    h0 << 1.0, 0.0;
    const int steps = static_cast<int>(std::round(10 * 2 * M_PI / 1e-3));
    const auto osc = integrate_rk4(
        [](const Eigen::VectorXd& u, Eigen::VectorXd& f) {
            f.resize(2);
            f << u(1), -u(0);
        },
        h0, 1e-3, steps);
    const double energy = osc.row(steps).squaredNorm();
    CHECK(std::abs(energy - 1.0) < 1e-6);

    CHECK_THROWS_AS(integrate_rk4([](const Eigen::VectorXd& u, Eigen::VectorXd& f) { f = u.array().square(); }, u0 * 10, 0.1, 100),
                    NumericalError);
}

TEST_CASE("benchmark registry") {
    CHECK(benchmark_ids().size() == 9);
    CHECK_THROWS_AS(make_benchmark("nonexistent"), ConfigError);
    CHECK_THROWS_AS(make_benchmark("vdp", {{"bogus", 1.0}}), ConfigError);
    for (const auto& id : benchmark_ids()) {
        const auto b = make_benchmark(id);
        const auto lib = library::build_library(b.library, b.num_states, b.spline_degree);
        CHECK_NOTHROW(true_coefficients(b, lib));
    }
}

TEST_CASE("true coefficients") {
    const auto vdp = make_benchmark("vdp");
    const auto lib = library::build_library(vdp.library, 2, 3);
    CHECK(lib.size() == 10);
    const Eigen::MatrixXd w = true_coefficients(vdp, lib);
    CHECK(w(2, 0) == 1.0);
    CHECK(w(1, 1) == -1.0);
    CHECK(w(2, 1) == 0.5);
    CHECK(w(7, 1) == -0.5);
    CHECK((w.array() != 0).count() == 4);

    const auto l96 = make_benchmark("lorenz96");
    const auto lib96 = library::build_library(l96.library, 6, 3);
    CHECK(lib96.size() == 84);
    const Eigen::MatrixXd w96 = true_coefficients(l96, lib96);
    CHECK((w96.array() != 0).count() == 24);
    for (int i = 0; i < w96.size(); ++i) {
        const double v = w96.data()[i];
        CHECK((v == 0 || v == 1 || v == -1 || v == 8));
    }
}

TEST_CASE("ode truth satisfies its equation") {
    for (const std::string id : {"vdp", "lorenz96", "lotka_volterra"}) {
        const auto b = make_benchmark(id);
        const auto d = make_truth(b);
        CHECK(d.values.rows() == b.grid[0]);
        CHECK(d.values.cols() == b.num_states);
        const double h = d.coords(1, 0) - d.coords(0, 0);
        const auto rhs = ode_rhs(b);
        double worst = 0;
        for (int i = 4; i < b.grid[0] - 4; i += 7) {
            Eigen::VectorXd f;
            rhs(d.truth.row(i).transpose(), f);
            for (int k = 0; k < b.num_states; ++k) {
                const double fd = d1([&](int j) { return d.truth(j, k); }, i, h);
                worst = std::max(worst, std::abs(fd - f(k)) / std::max(1.0, f.cwiseAbs().maxCoeff()));
            }
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("pde truth fields satisfy their equations") {
    SUBCASE("advection") {
        const auto b = make_benchmark("advection", {{"nt", 201}});
        const auto d = make_truth(b);
        const int nx = 50, nt = 201;
        const double hx = 12.0 / 50, ht = 5.0 / 200;
        auto u = [&](int i, int j) { return d.truth(((i % nx) + nx) % nx * nt + j, 0); };
        double worst = 0;
        for (int i = 0; i < nx; i += 3)
            for (int j = 4; j < nt - 4; j += 9) {
                const double ut = d1([&](int k) { return u(i, k); }, j, ht);
                const double ux = d1([&](int k) { return u(k, j); }, i, hx);
                worst = std::max(worst, std::abs(ut + ux));
            }
        // Coarse spatial grid: eighth-order stencil on h = 0.24 with a width-0.8 bump.
        CHECK(worst < 5e-3);
    }
    SUBCASE("burgers") {
        const auto b = make_benchmark("burgers", {{"t_end", 1.0}, {"nt", 201}});
        const auto d = make_truth(b);
        const int nx = 128, nt = 201;
        const double hx = 16.0 / 128, ht = 1.0 / 200;
        auto u = [&](int i, int j) { return d.truth(((i % nx) + nx) % nx * nt + j, 0); };
        double worst = 0, scale = 0;
        for (int i = 0; i < nx; i += 3)
            for (int j = 4; j < nt - 4; j += 9) {
                const double ut = d1([&](int k) { return u(i, k); }, j, ht);
                const double ux = d1([&](int k) { return u(k, j); }, i, hx);
                const double uxx = d2([&](int k) { return u(k, j); }, i, hx);
                worst = std::max(worst, std::abs(ut + u(i, j) * ux - 0.5 * uxx));
                scale = std::max(scale, std::abs(ut));
            }
        CHECK(worst / scale < 1e-4);
    }
    SUBCASE("heat and poisson") {
        for (const std::string id : {"heat", "poisson"}) {
            const auto b = make_benchmark(id);
            const auto d = make_truth(b);
            const int n = b.grid[0];
            const double h = M_PI / (n - 1);
            auto u = [&](int i, int j) { return d.truth(i * n + j, 0); };
            double worst = 0;
            for (int i = 4; i < n - 4; i += 3)
                for (int j = 4; j < n - 4; j += 3) {
                    const double uxx = d2([&](int k) { return u(k, j); }, i, h);
                    const double uyy = d2([&](int k) { return u(i, k); }, j, h);
                    const double src = id == "poisson" ? std::sin(d.coords(i * n + j, 0)) * std::sin(d.coords(i * n + j, 1)) : 0.0;
                    worst = std::max(worst, std::abs(uyy + uxx + src));
                }
            CHECK(worst < 1e-6);
        }
    }
}

TEST_CASE("noise injection") {
    const auto b = make_benchmark("vdp");
    const auto clean = make_dataset(b, 0.0, 7);
    CHECK(clean.values == clean.truth);
    const auto a = make_dataset(b, 0.05, 7);
    const auto c = make_dataset(b, 0.05, 7);
    CHECK(a.values == c.values);
    CHECK(a.truth == clean.truth);
    CHECK(a.values.rows() == clean.values.rows());
    for (int k = 0; k < 2; ++k) {
        const Eigen::VectorXd diff = a.values.col(k) - a.truth.col(k);
        const double mean = a.truth.col(k).mean();
        const double sd = std::sqrt((a.truth.col(k).array() - mean).square().mean());
        const double rms = std::sqrt(diff.squaredNorm() / 500);
        CHECK(rms == doctest::Approx(0.05 * sd).epsilon(0.15));
    }
    const auto other = make_dataset(b, 0.05, 8);
    CHECK(other.values != a.values);

    auto sub = make_dataset(b, 0.0, 3, 0.1);
    CHECK(sub.values.rows() == 50);
    for (int i = 1; i < 50; ++i) CHECK(sub.coords(i, 0) > sub.coords(i - 1, 0));
}

TEST_CASE("hare lynx table") {
    const auto d = make_truth(make_benchmark("hare_lynx"));
    REQUIRE(d.values.rows() == 21);
    CHECK(!d.has_truth());
    CHECK(d.values(0, 0) == 30);
    CHECK(d.values(0, 1) == 4);
    CHECK(d.values(4, 0) == 36.3);
    CHECK(d.values(4, 1) == 59.4);
    CHECK(d.values(13, 0) == 76.6);
    CHECK(d.values(20, 1) == 8.6);
    CHECK(d.coords(20, 0) == 20);
}

TEST_CASE("csv round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "bsl_zoo_csv";
    std::filesystem::create_directories(dir);
    const auto d = make_dataset(make_benchmark("vdp"), 0.05, 1);
    write_csv(d, dir / "vdp.csv", true);
    const auto r = read_csv(dir / "vdp.csv", 1);
    CHECK((r.values - d.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.truth - d.truth).cwiseAbs().maxCoeff() == 0.0);
    std::ifstream is(dir / "vdp.csv");
    std::string header;
    std::getline(is, header);
    CHECK(header == "t,u1,u2,u1_true,u2_true");

    const auto p = make_truth(make_benchmark("heat"));
    write_csv(p, dir / "heat.csv", false);
    const auto rp = read_csv(dir / "heat.csv", 2);
    CHECK(rp.coord_names == std::vector<std::string>{"x", "y"});
    CHECK(rp.values.rows() == 51 * 51);
    CHECK(!rp.has_truth());
    std::filesystem::remove_all(dir);
}
