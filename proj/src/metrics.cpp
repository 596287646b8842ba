#include "bsl/metrics.hpp"

#include "bsl/errors.hpp"

#include <cmath>
#include <limits>
#include <map>

namespace bsl::metrics {

ScoreCard score(const Eigen::VectorXd& discovered, const Eigen::VectorXd& truth) {
    if (discovered.size() != truth.size()) throw ArgumentError("coefficient vectors differ in length");
    const double norm_true = truth.norm();
    if (norm_true == 0.0) throw UndefinedMetric("true coefficient vector is all zero");
    ScoreCard card;
    card.rmse = (discovered - truth).norm() / norm_true;
    const auto nz_disc = (discovered.array() != 0.0).count();
    const auto nz_true = (truth.array() != 0.0).count();
    const auto nz_both = ((discovered.array() != 0.0) && (truth.array() != 0.0)).count();
    card.precision = nz_disc == 0 ? std::numeric_limits<double>::quiet_NaN()
                                  : static_cast<double>(nz_both) / static_cast<double>(nz_disc);
    card.recall = static_cast<double>(nz_both) / static_cast<double>(nz_true);
    return card;
}

ScoreCard score(const std::vector<library::TermDescriptor>& terms, const Eigen::MatrixXd& discovered,
                const Eigen::MatrixXd& truth, const Eigen::MatrixXd& std, const library::Naming& naming) {
    if (discovered.rows() != truth.rows() || discovered.cols() != truth.cols())
        throw ArgumentError("coefficient matrices differ in shape");
    if (discovered.rows() != static_cast<Eigen::Index>(terms.size())) throw ArgumentError("term count mismatch");
    ScoreCard card = score(Eigen::VectorXd(discovered.reshaped()), Eigen::VectorXd(truth.reshaped()));
    for (Eigen::Index k = 0; k < discovered.cols(); ++k) {
        for (Eigen::Index j = 0; j < discovered.rows(); ++j) {
            if (discovered(j, k) == 0.0 && truth(j, k) == 0.0) continue;
            TermRow row;
            row.term = library::render_term(terms[static_cast<std::size_t>(j)], naming);
            if (row.term.empty()) row.term = "1";
            row.state = static_cast<int>(k);
            row.truth = truth(j, k);
            row.mean = discovered(j, k);
            row.std = std.size() ? std(j, k) : 0.0;
            card.terms.push_back(row);
        }
    }
    return card;
}

Eigen::MatrixXd align(const std::vector<library::TermDescriptor>& from, const Eigen::MatrixXd& W,
                      const std::vector<library::TermDescriptor>& to) {
    if (W.rows() != static_cast<Eigen::Index>(from.size())) throw ArgumentError("W rows differ from term count");
    std::map<std::string, Eigen::Index> index;
    for (std::size_t j = 0; j < to.size(); ++j) index[to[j].key()] = static_cast<Eigen::Index>(j);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(to.size()), W.cols());
    for (std::size_t j = 0; j < from.size(); ++j) {
        const auto it = index.find(from[j].key());
        if (it == index.end()) {
            if (W.row(static_cast<Eigen::Index>(j)).cwiseAbs().maxCoeff() > 0)
                throw ConfigError("term '" + from[j].key() + "' is missing from the target library");
            continue;
        }
        out.row(it->second) = W.row(static_cast<Eigen::Index>(j));
    }
    return out;
}

}  // namespace bsl::metrics
