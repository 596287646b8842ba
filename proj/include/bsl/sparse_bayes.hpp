#pragma once

#include <Eigen/Dense>

#include <vector>

namespace bsl::sparse {

struct RvmOptions {
    int max_iter = 1000;
    /// Stop when the best available action improves the log marginal likelihood by less than
    /// tol * max(1, |L|).
    double tol = 1e-8;
    /// Precisions above the cap count as deleted.
    double alpha_cap = 1e12;
};

/// Relevance vector regression of one target on the library columns.
struct RvmModel {
    /// Library column indices in the model, ascending.
    std::vector<int> active;
    /// Per-column precision; +inf for columns outside the model.
    Eigen::VectorXd alpha;
    /// Posterior mean over all columns (exact zero outside the model).
    Eigen::VectorXd mean;
    /// Posterior covariance over `active`.
    Eigen::MatrixXd cov;
    double noise_var = 0.0;
    double log_marginal = 0.0;
    int iterations = 0;
    /// Log marginal likelihood after initialization and after every accepted action.
    std::vector<double> history;

    [[nodiscard]] bool empty() const { return active.empty(); }
};

/// Fast marginal-likelihood maximization with fixed noise variance. `candidates` restricts the
/// columns that may enter (all columns when empty). Returns an empty model when no column has
/// positive relevance at the start.
RvmModel rvm_fit(const Eigen::MatrixXd& phi, const Eigen::VectorXd& target, double noise_var,
                 const std::vector<int>& candidates = {}, const RvmOptions& opts = {});

/// Log marginal likelihood log N(t | 0, s2 I + Phi_S diag(1/alpha_S) Phi_S^T), evaluated through the
/// low-rank identity (exact for any subset size).
double log_marginal_likelihood(const Eigen::MatrixXd& phi, const Eigen::VectorXd& target, double noise_var,
                               const std::vector<int>& subset, const Eigen::VectorXd& alpha_subset);

using ActiveMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct StResult {
    Eigen::MatrixXd W;  ///< terms x states, exact zeros for pruned entries
    ActiveMask active;  ///< terms x states
    Eigen::VectorXd P;  ///< residual variances per state
    Eigen::MatrixXd W_std;  ///< posterior standard deviations from the final fits
    int iterations = 0;
    std::vector<RvmModel> models;
};

/// Sequential thresholding around per-state RVM fits: fit, zero |w| <= epsilon, shrink each state's
/// library to its survivors, repeat until the active sets stop changing. `mask` is the starting active
/// set (all true when empty). Throws DiscoveryFailure when a state loses every term.
StResult st_sparse_bayes(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& targets, const Eigen::VectorXd& P_init,
                         double epsilon, const ActiveMask& mask = {}, const RvmOptions& opts = {});

}  // namespace bsl::sparse
