#pragma once

#include "bsl/sparse_bayes.hpp"
#include "bsl/spline_basis.hpp"
#include "bsl/system_zoo.hpp"
#include "bsl/term_library.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace bsl::ado {

struct Hyperparams {
    /// Gamma hyperpriors on the coefficient precision (a0, b0) and spline weight precision (a1, b1).
    double a0 = 1e-6;
    double b0 = 1e-6;
    double a1 = 1e-6;
    double b1 = 1e-6;
    int ado_iters = 5;
    int ado_epochs = 20000;
    int post_epochs = 1000;
    int swag_epochs = 1500;
    double lr = 1e-2;
    double swag_lr = 1e-3;
    double threshold = 0.05;
    /// Apply the threshold to coefficients of unit-rms library columns against unit-rms targets.
    bool normalized_threshold = false;
    int swag_rank = 20;
    /// Steps between SWAG snapshots.
    int snapshot_every = 1;
    /// Collocation points per measurement point (spread over all axes).
    double collocation_factor = 4.0;
    /// Fraction of each axis left free of collocation points at either end, where clamped splines
    /// are least constrained by data.
    double collocation_margin = 0.0;
    /// Fraction of rows in each SWAG gradient; 1 keeps full-batch gradients.
    double swag_batch_fraction = 0.5;
    /// Roughness weight for the initial spline fit; 0 selects it by generalized cross-validation.
    double init_penalty = 0.0;
    /// Penalize the initial fit even when plain least squares is well posed.
    bool init_smooth = true;
    /// Lower bounds on the noise variances relative to the mean square of the data (b) and of the
    /// initial left-hand side (p).
    double b_floor = 1e-12;
    double p_floor = 1e-5;
    /// Run one pruning pass on the initial fit before the first training phase.
    bool initial_prune = true;
    bool deterministic = false;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class Schedule {
    Full,  ///< long epoch counts for accelerator-scale runs
    Desk,  ///< shortened phases that finish in minutes on one core
};

/// Training settings tuned per benchmark id; unknown ids get the generic defaults.
Hyperparams default_hyperparams(const std::string& id, Schedule schedule = Schedule::Full);

/// Measurement and collocation matrices for one discovery problem.
struct Problem {
    spline::SplineSpace space;
    spline::BasisMatrix measure;   ///< N_m
    Eigen::MatrixXd data;          ///< measurements x states
    Eigen::MatrixXd colloc;        ///< collocation coordinates
    library::BasisSet basis;       ///< collocation bases for every derivative order in use
    spline::DerivOrder lhs;        ///< derivative on the left-hand side
    std::vector<library::TermDescriptor> terms;
};

/// Collocation grid with round(n_axis * f^(1/dim)) points per axis, inclusive of the bounds.
Eigen::MatrixXd collocation_grid(const std::vector<double>& lo, const std::vector<double>& hi,
                                 const std::vector<int>& counts);

Problem make_problem(spline::SplineSpace space, const Eigen::MatrixXd& coords, const Eigen::MatrixXd& data,
                     const Eigen::MatrixXd& colloc, std::vector<library::TermDescriptor> terms, spline::DerivOrder lhs);

/// Problem for a benchmark dataset: knots span the data extent, control counts from the benchmark.
Problem make_problem(const zoo::Benchmark& bench, const zoo::Dataset& data, const Hyperparams& hyper);

struct TrainState {
    Eigen::MatrixXd theta;   ///< control points, num_basis x states
    Eigen::MatrixXd W;       ///< full library x states, exact zeros outside `active`
    Eigen::VectorXd log_b;   ///< observation-noise log-variances
    Eigen::VectorXd log_p;   ///< process-noise log-variances
    sparse::ActiveMask active;

    [[nodiscard]] Eigen::VectorXd B() const { return log_b.array().exp(); }
    [[nodiscard]] Eigen::VectorXd P() const { return log_p.array().exp(); }
    [[nodiscard]] int active_count() const { return static_cast<int>(active.count()); }
};

/// Loss split into its terms.
struct LossParts {
    double data = 0;
    double physics = 0;
    double prior_w = 0;
    double prior_theta = 0;
    [[nodiscard]] double total() const { return data + physics + prior_w + prior_theta; }
};

/// Optional row weights for stochastic gradients (empty = all ones).
struct RowWeights {
    Eigen::VectorXd measure;
    Eigen::VectorXd colloc;
};

/// Negative log posterior with the spline weight and coefficient precisions integrated out
/// against their Gamma hyperpriors. Fills `grad` (same shapes as the state) when non-null;
/// gradients of inactive coefficients are zero.
LossParts neg_log_posterior(const Problem& prob, const Hyperparams& hyper, const TrainState& state,
                            TrainState* grad = nullptr, const RowWeights* weights = nullptr);

/// Flattening of the trainable entries: theta (column-major), active W entries (column-major),
/// log_b, log_p.
struct Block {
    std::string name;
    Eigen::Index offset = 0;
    Eigen::Index size = 0;
};

class Packing {
public:
    Packing() = default;
    Packing(Eigen::Index num_basis, const sparse::ActiveMask& active);

    [[nodiscard]] Eigen::Index size() const { return size_; }
    [[nodiscard]] const std::vector<Block>& blocks() const { return blocks_; }
    [[nodiscard]] Eigen::VectorXd pack(const TrainState& s) const;
    /// Writes x into a state shaped like `like` (the active mask is taken from the packing).
    void unpack(const Eigen::VectorXd& x, TrainState& s) const;

private:
    Eigen::Index nb_ = 0;
    sparse::ActiveMask active_;
    std::vector<Block> blocks_;
    Eigen::Index size_ = 0;
};

/// Loss on a flat vector. `rng` is non-null for stochastic evaluations.
using LossFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad, std::mt19937_64* rng)>;

struct OptimizeOptions {
    /// Per-coordinate step scales (empty = ones).
    Eigen::VectorXd scale;
    /// Lower bounds applied after each step (empty = none).
    Eigen::VectorXd lower;
    std::mt19937_64* rng = nullptr;
    /// Called after every step with the step index and the accepted iterate.
    std::function<void(int, const Eigen::VectorXd&)> on_step;
};

struct OptimizeResult {
    std::vector<double> losses;
    int restarts = 0;
    double final_lr = 0;
};

/// Adaptive-moment descent for `epochs` steps. The loss is checked every 100 steps; a tenfold
/// rise or a non-finite value restores the last checkpoint with half the learning rate, and a
/// second occurrence throws NumericalError.
OptimizeResult optimize(Eigen::VectorXd& x, const LossFn& loss, int epochs, double lr,
                        const OptimizeOptions& opts = {});

struct SwagPosterior {
    Eigen::VectorXd mean;
    std::vector<Block> blocks;
    /// Per-block low-rank factor Lambda (block size x rank) with Cov ~ Lambda Lambda^T.
    std::vector<Eigen::MatrixXd> factors;
    int rank = 0;
    int snapshots = 0;
    std::vector<std::string> warnings;

    /// Marginal standard deviations sqrt(diag(Lambda Lambda^T)).
    [[nodiscard]] Eigen::VectorXd stddev() const;
};

/// Constant-rate steps from x, snapshotting every `snapshot_every` steps. The running mean includes
/// the starting point as snapshot zero; factors come from the PCA of the snapshot deviations.
SwagPosterior swag_collect(const Eigen::VectorXd& x0, const LossFn& loss, int epochs, double lr, int snapshot_every,
                           int rank, const std::vector<Block>& blocks, const OptimizeOptions& opts = {});

/// mean + Lambda z per block with independent standard normal z, reproducible under `seed`.
std::vector<Eigen::VectorXd> swag_sample(const SwagPosterior& post, int n, std::uint64_t seed);

struct AdoIteration {
    double loss = 0;        ///< loss after pruning
    int active = 0;         ///< active entries after pruning
    bool accepted = false;
};

struct DiscoveryResult {
    TrainState state;                  ///< point estimate after post-training
    Packing packing;
    std::optional<SwagPosterior> posterior;
    Eigen::MatrixXd W_mean;            ///< posterior mean (SWA average, or the point estimate)
    Eigen::MatrixXd W_std;             ///< marginal stds (zeros when deterministic)
    Eigen::MatrixXd theta_mean;
    Eigen::VectorXd B;
    Eigen::VectorXd P;
    std::vector<double> loss_history;  ///< retained best loss L* after each ADO iteration
    std::vector<AdoIteration> iterations;
    std::vector<std::string> warnings;
};

/// Initial state: least-squares (or penalized) spline fit, ridge coefficients, residual variances.
TrainState initial_state(const Problem& prob, const Hyperparams& hyper);

/// Per-coordinate Adam scales for a packing (theta by data spread, W by target/column magnitudes).
Eigen::VectorXd parameter_scales(const Problem& prob, const TrainState& state, const Packing& packing);

/// Alternating gradient training and sequential-threshold pruning, then post-training and SWAG.
DiscoveryResult ado_train(const Problem& prob, const Hyperparams& hyper);

/// Unpacks SWAG samples into states.
std::vector<TrainState> sample_states(const DiscoveryResult& res, int n, std::uint64_t seed);

struct EnsembleResult {
    std::vector<double> times;
    /// One matrix per surviving member: times x states (ODE) or times x grid points (PDE).
    std::vector<Eigen::MatrixXd> members;
    Eigen::MatrixXd q05;
    Eigen::MatrixXd q50;
    Eigen::MatrixXd q95;
    int dropped = 0;
};

/// Per-time 5/50/95% quantiles over members.
void ensemble_quantiles(EnsembleResult& res);

/// RK4 forward simulation of every coefficient sample from its own initial state.
EnsembleResult propagate_ode(const std::vector<library::TermDescriptor>& terms,
                             const std::vector<Eigen::MatrixXd>& W_samples,
                             const std::vector<Eigen::VectorXd>& initial, const std::vector<double>& times,
                             double dt);

/// Method-of-lines simulation on a uniform periodic grid x0 + i dx.
EnsembleResult propagate_pde(const std::vector<library::TermDescriptor>& terms,
                             const std::vector<Eigen::VectorXd>& w_samples,
                             const std::vector<Eigen::VectorXd>& initial, double x0, double dx,
                             const std::vector<double>& times);

/// Number of worker threads from BSL_THREADS (default 1).
int thread_count();

/// Runs f(i) for i in [0, n) over thread_count() workers.
void parallel_for(int n, const std::function<void(int)>& f);

}  // namespace bsl::ado
