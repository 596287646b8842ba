#pragma once

#include "bsl/bayes_ado.hpp"
#include "bsl/term_library.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace bsl::enkf {

/// J member states, each carrying its own coefficient sample.
struct Ensemble {
    std::vector<Eigen::VectorXd> members;
    std::vector<Eigen::MatrixXd> weights;  ///< terms x states per member
    double time = 0.0;

    [[nodiscard]] int size() const { return static_cast<int>(members.size()); }
    [[nodiscard]] Eigen::VectorXd mean() const;
    /// Throws ArgumentError unless J >= 2, shapes agree and every state is finite.
    void validate() const;
};

/// Observation of a subset of state coordinates with independent noise variances B.
struct ObservationOp {
    std::vector<int> observed;  ///< state indices; empty observes every state
    Eigen::VectorXd B;          ///< noise variance per observed coordinate

    [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& u) const;
    [[nodiscard]] Eigen::Index dim(Eigen::Index num_states) const;
};

struct ForecastReport {
    std::vector<int> reinitialized;  ///< members that diverged and were reset to the ensemble mean
};

/// Advances every member over `interval` with RK4 substeps no longer than `substep` under its own
/// coefficients, then adds N(0, diag(Q)). Member m draws from a stream seeded by (seed, m).
ForecastReport forecast(Ensemble& e, const std::vector<library::TermDescriptor>& terms, double interval,
                        double substep, const Eigen::VectorXd& Q, std::uint64_t seed);

/// Cross covariance C^fh and innovation covariance C^hh + B of the ensemble (1/(J-1) normalization).
struct Covariances {
    Eigen::MatrixXd fh;
    Eigen::MatrixXd hh;
};
Covariances covariances(const Ensemble& e, const ObservationOp& op);

/// K = C^fh (C^hh + B)^-1. Throws SingularityError when C^hh + B is not positive definite.
Eigen::MatrixXd kalman_gain(const Ensemble& e, const ObservationOp& op);

/// Perturbed-observation update u_j += K (obs - h(u_j) - eps_j) with the columns of `eps`
/// (obs dim x J) as the perturbations. Returns K.
Eigen::MatrixXd analysis(Ensemble& e, const Eigen::VectorXd& obs, const ObservationOp& op,
                         const Eigen::MatrixXd& eps);

/// As above with eps_j ~ N(0, diag(B)) drawn from `rng`.
Eigen::MatrixXd analysis(Ensemble& e, const Eigen::VectorXd& obs, const ObservationOp& op, std::mt19937_64& rng);

struct AssimilationConfig {
    /// Observation times, uniformly spaced; their spacing is the assimilation interval.
    std::vector<double> obs_times;
    Eigen::MatrixXd obs;  ///< obs_times x observed coordinates
    ObservationOp op;
    /// Equation-error variance per state (units of du/dt squared); one interval adds P dt^2.
    Eigen::VectorXd P;
    double t0 = 0.0;           ///< start time when there are no observations
    double horizon = 0.0;      ///< free-run end time
    double interval = 0.0;     ///< step used without observations (0 = observation spacing)
    double substep = 0.01;     ///< RK4 step bound
    std::uint64_t seed = 0;
};

struct AssimilationResult {
    ado::EnsembleResult ensemble;  ///< member trajectories and quantile bands at every step
    double window_end = 0.0;
    int reinitialized = 0;
};

/// Analysis at each observation time followed by a forecast to the next, then forecasts alone up to
/// the horizon. Records the analysed ensemble inside the window and the forecast ensemble after it.
AssimilationResult assimilate(Ensemble e, const std::vector<library::TermDescriptor>& terms,
                              const AssimilationConfig& cfg);

}  // namespace bsl::enkf
