#pragma once

#include "bsl/term_library.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace bsl::zoo {

enum class ProblemKind {
    Ode,        ///< coordinates (t), states x, y, ...
    Evolution,  ///< coordinates (x, t), single field u, lhs u_t
    Steady,     ///< coordinates (x, y), single field u, lhs u_yy
};

struct Benchmark {
    std::string id;
    ProblemKind kind = ProblemKind::Ode;
    std::map<std::string, double> params;
    /// Per-axis measurement domain and grid size; ODEs use axis 0 only.
    std::vector<double> lo;
    std::vector<double> hi;
    std::vector<int> grid;
    /// Per-axis control point counts; 0 selects the default rule.
    std::vector<int> control;
    int spline_degree = 3;
    library::LibrarySpec library;
    int num_states = 1;
    std::vector<double> initial_state;
    /// Periodic spatial axis 0 (used by forward PDE simulation).
    bool periodic = false;
    /// Tabulated data without an analytical truth (hare-lynx).
    bool tabulated = false;
};

std::vector<std::string> benchmark_ids();

/// Defaults for a benchmark id; `overrides` replaces entries of `params`
/// (keys such as "mu", "F", "n", "nu", "samples", "t_end").
/// Throws ConfigError for unknown ids or parameter names.
Benchmark make_benchmark(const std::string& id, const std::map<std::string, double>& overrides = {});

struct Dataset {
    std::vector<std::string> coord_names;
    Eigen::MatrixXd coords;  ///< rows = measurements, cols = axes
    Eigen::MatrixXd values;  ///< rows = measurements, cols = states
    Eigen::MatrixXd truth;   ///< same shape as values, or empty
    double noise_level = 0.0;
    std::uint64_t seed = 0;

    [[nodiscard]] bool has_truth() const { return truth.size() > 0; }
};

using Rhs = std::function<void(const Eigen::VectorXd& u, Eigen::VectorXd& dudt)>;

/// Classical RK4 states at steps + 1 time points (one row each).
/// Throws NumericalError naming the first step producing a non-finite state.
Eigen::MatrixXd integrate_rk4(const Rhs& rhs, const Eigen::VectorXd& u0, double dt, int steps);

/// Single RK4 step in place.
void rk4_step(const Rhs& rhs, Eigen::VectorXd& u, double dt);

/// Vector field of an ODE benchmark.
Rhs ode_rhs(const Benchmark& b);

/// Clean measurements on the benchmark grid (values == truth).
Dataset make_truth(const Benchmark& b);

/// Adds N(0, (level * std(truth_j))^2) to column j of `values`; truth is left unchanged.
void add_noise(Dataset& data, double level, std::uint64_t seed);

/// Keeps a seeded random subset of measurement rows (fraction in (0, 1]).
void subsample(Dataset& data, double fraction, std::uint64_t seed);

/// Truth plus noise plus optional subsampling.
Dataset make_dataset(const Benchmark& b, double noise_level, std::uint64_t seed, double fraction = 1.0);

/// True (or reference) coefficients per state, keyed by canonical term key.
std::vector<std::map<std::string, double>> true_terms(const Benchmark& b);

/// Coefficient matrix (terms x states) aligned to `terms`.
/// Throws ConfigError when a true term is absent from the library.
Eigen::MatrixXd true_coefficients(const Benchmark& b, const std::vector<library::TermDescriptor>& terms);

library::Naming naming(const Benchmark& b);
/// Left-hand-side labels: "dx/dt", ... for ODEs, "u_t" or "u_yy" for PDEs.
std::vector<std::string> lhs_names(const Benchmark& b);
/// Derivative order of the left-hand side on the benchmark's spline space.
spline::DerivOrder lhs_deriv(const Benchmark& b);

/// Hare-lynx pelt records 1900-1920 in thousands, years counted from 1900.
Eigen::MatrixXd hare_lynx_table();

/// CSV with a mandatory header. ODE: t,u1,...,ud[,u1_true,...]; PDE: x,t|y,u[,u_true].
void write_csv(const Dataset& data, const std::filesystem::path& path, bool include_truth);
/// Reads a CSV written by write_csv (or any file in that layout) for a problem of `dims` axes.
Dataset read_csv(const std::filesystem::path& path, int dims);

}  // namespace bsl::zoo
