#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bsl/errors.hpp"
#include "bsl/spline_basis.hpp"
#include "support/oracles.hpp"

#include <random>

using namespace bsl::spline;

namespace {

std::vector<double> to_vec(const KnotVector& kv) { return {kv.knots().begin(), kv.knots().end()}; }

}  // namespace

TEST_CASE("knot vector validation") {
    CHECK_THROWS_AS(KnotVector({0, 1}, 1), bsl::ArgumentError);
    CHECK_THROWS_AS(KnotVector({0, 2, 1, 3}, 1), bsl::ArgumentError);
    CHECK_THROWS_AS(KnotVector({0, 1, 2}, -1), bsl::ArgumentError);
    const auto kv = KnotVector::clamped_uniform(0, 1, 7, 3);
    CHECK(kv.num_basis() == 7);
    CHECK(kv.knots().size() == 11);
    for (int i = 0; i < 4; ++i) {
        CHECK(kv[i] == 0.0);
        CHECK(kv[10 - i] == 1.0);
    }
}

TEST_CASE("degree zero is the indicator of its interval") {
    const KnotVector kv({0, 1, 2, 3}, 0);
    CHECK(eval_basis(kv, 1, 1.0) == 1.0);
    CHECK(eval_basis(kv, 1, 1.5) == 1.0);
    CHECK(eval_basis(kv, 1, 2.0) == 0.0);
    CHECK(eval_basis(kv, 0, 1.5) == 0.0);
    CHECK(eval_basis(kv, 2, 3.0) == 1.0);
}

TEST_CASE("uniform cubic values at support center and adjacent knot") {
    const double h = 0.37;
    const auto kv = KnotVector::uniform(0.0, h, 8, 3);
    // N_{2,3} is supported on [2h, 6h].
    CHECK(eval_basis(kv, 2, 4 * h) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(eval_basis(kv, 2, 3 * h) == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
    CHECK(eval_basis(kv, 2, 5 * h) == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
}

TEST_CASE("matches the naive recursion on clamped and repeated-knot vectors") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k <= 5; ++k) {
        std::vector<KnotVector> cases{KnotVector::clamped_uniform(-1, 2, k + 6, k)};
        std::vector<double> rep{0, 0, 0.5, 0.5, 1, 2, 2.5, 3, 3, 3};
        if (static_cast<int>(rep.size()) >= k + 2) cases.emplace_back(rep, k);
        for (const auto& kv : cases) {
            const auto tau = to_vec(kv);
            for (int trial = 0; trial < 200; ++trial) {
                const double t = kv.lo() + (kv.hi() - kv.lo()) * u(rng);
                for (int s = 0; s < kv.num_basis(); ++s)
                    CHECK(eval_basis(kv, s, t) == doctest::Approx(oracle::naive_basis(tau, s, k, t)).epsilon(1e-13));
            }
            for (int s = 0; s < kv.num_basis(); ++s)
                CHECK(eval_basis(kv, s, kv.hi()) == doctest::Approx(oracle::naive_basis(tau, s, k, kv.hi())));
        }
    }
}

TEST_CASE("partition of unity for degrees 0 to 5") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k <= 5; ++k) {
        const auto kv = KnotVector::clamped_uniform(0, 4, 13, k);
        for (int trial = 0; trial < 500; ++trial) {
            const double t = 4 * u(rng);
            double sum = 0;
            double dsum = 0;
            for (int s = 0; s < kv.num_basis(); ++s) {
                sum += eval_basis(kv, s, t);
                dsum += eval_basis_deriv(kv, s, t, 1);
            }
            CHECK(std::abs(sum - 1.0) < 1e-12);
            CHECK(std::abs(dsum) < 1e-10);
        }
        double sum = 0;
        for (int s = 0; s < kv.num_basis(); ++s) sum += eval_basis(kv, s, 4.0);
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("hat function derivative is plus and minus one over h") {
    const double h = 0.25;
    const auto kv = KnotVector::uniform(0.0, h, 5, 1);
    CHECK(eval_basis_deriv(kv, 1, 1.2 * h, 1) == doctest::Approx(1 / h));
    CHECK(eval_basis_deriv(kv, 1, 2.7 * h, 1) == doctest::Approx(-1 / h));
    CHECK(eval_basis_deriv(kv, 1, 2.7 * h, 2) == 0.0);
    CHECK_THROWS_AS(eval_basis_deriv(kv, 1, 0.5, -1), bsl::ArgumentError);
}

TEST_CASE("cubic derivatives agree with central differences") {
    const auto kv = KnotVector::clamped_uniform(0, 1, 12, 3);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.02, 0.98);
    const double step = 1e-5;
    for (int trial = 0; trial < 300; ++trial) {
        const double t = u(rng);
        for (int s = 0; s < kv.num_basis(); ++s) {
            const double d = eval_basis_deriv(kv, s, t, 1);
            const double fd = oracle::central_difference([&](double x) { return eval_basis(kv, s, x); }, t, step);
            CHECK(std::abs(d - fd) <= 1e-6 * std::max(1.0, std::abs(d)));
        }
    }
}

TEST_CASE("local support") {
    const auto kv = KnotVector::clamped_uniform(0, 1, 9, 3);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const double t = u(rng);
        for (int s = 0; s < kv.num_basis(); ++s) {
            if (t < kv[s] || t > kv[s + 4]) CHECK(eval_basis(kv, s, t) == 0.0);
        }
    }
    Eigen::MatrixXd pts(50, 1);
    for (int i = 0; i < 50; ++i) pts(i, 0) = i / 49.0;
    const auto n = build_basis_matrix(SplineSpace(kv), pts);
    for (int i = 0; i < n.values.outerSize(); ++i) {
        int nnz = 0;
        for (SparseRowMatrix::InnerIterator it(n.values, i); it; ++it) {
            ++nnz;
            CHECK(pts(i, 0) >= kv[static_cast<int>(it.col())]);
            CHECK(pts(i, 0) <= kv[static_cast<int>(it.col()) + 4]);
        }
        CHECK(nnz <= 4);
    }
}

TEST_CASE("out-of-domain evaluation throws") {
    const auto kv = KnotVector::clamped_uniform(0, 1, 6, 3);
    CHECK_THROWS_AS(eval_basis(kv, 0, 1.5), bsl::DomainError);
    Eigen::MatrixXd pts(2, 1);
    pts << 0.5, -0.1;
    try {
        build_basis_matrix(SplineSpace(kv), pts);
        FAIL("expected DomainError");
    } catch (const bsl::DomainError& e) {
        CHECK(std::string(e.what()).find("point 1") != std::string::npos);
    }
}

TEST_CASE("tensor-product matrix") {
    const auto kx = KnotVector::clamped_uniform(0, 12, 54, 3);
    const auto kt = KnotVector::clamped_uniform(0, 5, 54, 3);
    const SplineSpace space(kx, kt);
    CHECK(space.num_basis() == 2916);

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd pts(40, 2);
    for (int i = 0; i < 40; ++i) {
        pts(i, 0) = 12 * u(rng);
        pts(i, 1) = 5 * u(rng);
    }
    const auto n00 = build_basis_matrix(space, pts);
    const auto n11 = build_basis_matrix(space, pts, {1, 1});
    const Eigen::VectorXd rows = n00.values * Eigen::VectorXd::Ones(space.num_basis());
    for (int i = 0; i < 40; ++i) CHECK(std::abs(rows(i) - 1.0) < 1e-12);
    for (int i = 0; i < 40; ++i) {
        int nnz = 0;
        for (SparseRowMatrix::InnerIterator it(n11.values, i); it; ++it) {
            ++nnz;
            const int s0 = static_cast<int>(it.col()) / 54;
            const int s1 = static_cast<int>(it.col()) % 54;
            const double expect = eval_basis_deriv(kx, s0, pts(i, 0), 1) * eval_basis_deriv(kt, s1, pts(i, 1), 1);
            CHECK(it.value() == expect);
        }
        CHECK(nnz <= 16);
    }
}

TEST_CASE("least squares recovers exact control points") {
    const auto kv = KnotVector::clamped_uniform(0, 2, 15, 3);
    const SplineSpace space(kv);
    Eigen::MatrixXd pts(200, 1);
    for (int i = 0; i < 200; ++i) pts(i, 0) = 2.0 * i / 199.0;
    const auto n = build_basis_matrix(space, pts);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    Eigen::VectorXd theta(15);
    for (int i = 0; i < 15; ++i) theta(i) = g(rng);
    const Eigen::VectorXd fit = fit_least_squares(n, n.values * theta);
    CHECK((fit - theta).cwiseAbs().maxCoeff() < 1e-10);

    const Eigen::VectorXd pen = fit_penalized(space, n, n.values * theta, 1e-10);
    CHECK((pen - theta).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("rank-deficient fit is reported") {
    const auto kv = KnotVector::clamped_uniform(0, 1, 20, 3);
    Eigen::MatrixXd pts(30, 1);
    for (int i = 0; i < 30; ++i) pts(i, 0) = 0.3 * i / 29.0;
    const auto n = build_basis_matrix(SplineSpace(kv), pts);
    CHECK_THROWS_AS(fit_least_squares(n, Eigen::VectorXd::Ones(30)), bsl::SingularityError);
    Eigen::MatrixXd few(5, 1);
    few << 0.1, 0.2, 0.3, 0.4, 0.5;
    CHECK_THROWS_AS(fit_least_squares(build_basis_matrix(SplineSpace(kv), few), Eigen::VectorXd::Ones(5)),
                    bsl::SingularityError);
}

TEST_CASE("fit error converges at order k+1 and derivative at order k") {
    const auto r = oracle::spline_convergence({8, 16, 32, 64});
    const double sv = oracle::loglog_slope(r.spacing, r.value_error);
    const double sd = oracle::loglog_slope(r.spacing, r.deriv_error);
    CHECK(sv == doctest::Approx(4.0).epsilon(0.075));
    CHECK(sd == doctest::Approx(3.0).epsilon(0.1));
    CHECK(r.value_error[0] / r.value_error[1] > 12.0);
}

TEST_CASE("default control points") {
    CHECK(default_control_points(500) == 125);
    CHECK(default_control_points(21) == 10);
    CHECK(default_control_points(6) == 6);
}
