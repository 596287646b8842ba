#pragma once

#include "bsl/term_library.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace bsl::metrics {

struct TermRow {
    std::string term;
    int state = 0;
    double truth = 0.0;
    double mean = 0.0;
    double std = 0.0;
};

struct ScoreCard {
    double rmse = 0.0;
    /// NaN when the discovered vector has no nonzero entry.
    double precision = 0.0;
    double recall = 0.0;
    std::vector<TermRow> terms;
};

/// rmse = |c_disc - c_true| / |c_true|; precision and recall from nonzero counts of the elementwise product.
/// Throws UndefinedMetric when c_true is all zero.
ScoreCard score(const Eigen::VectorXd& discovered, const Eigen::VectorXd& truth);

/// Column-stacked matrices (terms x states) with a per-term table; `std` may be empty.
ScoreCard score(const std::vector<library::TermDescriptor>& terms, const Eigen::MatrixXd& discovered,
                const Eigen::MatrixXd& truth, const Eigen::MatrixXd& std, const library::Naming& naming);

/// Re-indexes rows of W from `from` terms onto `to` terms by canonical key; absent terms are zero.
/// Throws ConfigError if a nonzero row of W has no counterpart in `to`.
Eigen::MatrixXd align(const std::vector<library::TermDescriptor>& from, const Eigen::MatrixXd& W,
                      const std::vector<library::TermDescriptor>& to);

/// Rmse in the reporting unit of 1e-3.
inline double table_units(double rmse) { return rmse * 1e3; }

}  // namespace bsl::metrics
