#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bsl/errors.hpp"
#include "bsl/metrics.hpp"

#include <random>

using namespace bsl;
using namespace bsl::metrics;

TEST_CASE("identical vectors") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(12);
        for (int i = 0; i < 12; ++i)
            if (i % 3 == trial % 3) x(i) = g(rng);
        const auto c = score(x, x);
        CHECK(c.rmse == 0.0);
        CHECK(c.precision == 1.0);
        CHECK(c.recall == 1.0);
    }
}

TEST_CASE("hand-counted precision and recall") {
    Eigen::VectorXd truth(8), disc(8);
    truth << 1, 2, 3, 4, 0, 0, 0, 0;
    disc << 1, 2, 3, 0, 5, 6, 7, 0;
    const auto c = score(disc, truth);
    CHECK(c.precision == doctest::Approx(0.5));
    CHECK(c.recall == doctest::Approx(0.75));
}

TEST_CASE("rmse definition and permutation invariance") {
    Eigen::VectorXd truth(4), disc(4);
    truth << 1.0, -1.0, 0.0, 8.0;
    disc << 1.01, -0.98, 0.0, 8.02;
    const auto c = score(disc, truth);
    CHECK(c.rmse == doctest::Approx((disc - truth).norm() / truth.norm()));
    Eigen::VectorXd pt(4), pd(4);
    pt << truth(2), truth(0), truth(3), truth(1);
    pd << disc(2), disc(0), disc(3), disc(1);
    CHECK(score(pd, pt).rmse == doctest::Approx(c.rmse).epsilon(1e-15));
    CHECK(c.precision == c.recall);
}

TEST_CASE("undefined metric") {
    CHECK_THROWS_AS(score(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Zero(3)), UndefinedMetric);
    const auto c = score(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3));
    CHECK(std::isnan(c.precision));
    CHECK(c.recall == 0.0);
}

TEST_CASE("table units") { CHECK(table_units(0.01804) == doctest::Approx(18.04)); }

TEST_CASE("alignment by key") {
    const auto full = library::build_polynomial_library(2, 3, true);
    const std::vector<library::TermDescriptor> pruned{full[7], full[2]};
    Eigen::MatrixXd w(2, 1);
    w << -0.5, 0.5;
    const Eigen::MatrixXd a = align(pruned, w, full);
    CHECK(a(7, 0) == -0.5);
    CHECK(a(2, 0) == 0.5);
    CHECK(a.cwiseAbs().sum() == 1.0);
    const std::vector<library::TermDescriptor> small{full[1]};
    CHECK_THROWS_AS(align(pruned, w, small), ConfigError);
}

TEST_CASE("term table") {
    const auto lib = library::build_polynomial_library(2, 1, false);
    Eigen::MatrixXd truth(2, 2), disc(2, 2);
    truth << 0, 1, -1, 0;
    disc << 0, 1.01, -0.99, 0.02;
    const auto c = score(lib, disc, truth, Eigen::MatrixXd(), library::ode_naming(2));
    CHECK(c.terms.size() == 3);
    CHECK(c.precision == doctest::Approx(2.0 / 3.0));
    CHECK(c.recall == 1.0);
}
