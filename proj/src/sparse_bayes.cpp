#include "bsl/sparse_bayes.hpp"

#include "bsl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace bsl::sparse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

// Working state on unit-norm columns.
struct Work {
    Eigen::MatrixXd gram;  // normalized Gram matrix
    Eigen::VectorXd proj;  // normalized Phi^T t
    double tt = 0;
    double beta = 0;
    Eigen::Index n = 0;
};

struct Posterior {
    Eigen::MatrixXd sigma;
    Eigen::VectorXd mu;
    double log_ml = 0;
};

Posterior posterior(const Work& w, const std::vector<int>& act, const Eigen::VectorXd& alpha) {
    const auto k = static_cast<Eigen::Index>(act.size());
    Posterior p;
    double logdet_c = static_cast<double>(w.n) * std::log(1.0 / w.beta);
    double quad = w.beta * w.tt;
    if (k > 0) {
        Eigen::MatrixXd prec(k, k);
        Eigen::VectorXd h(k);
        for (Eigen::Index a = 0; a < k; ++a) {
            h(a) = w.proj(act[static_cast<std::size_t>(a)]);
            for (Eigen::Index b = 0; b < k; ++b)
                prec(a, b) = w.beta * w.gram(act[static_cast<std::size_t>(a)], act[static_cast<std::size_t>(b)]);
            prec(a, a) += alpha(act[static_cast<std::size_t>(a)]);
        }
        Eigen::LLT<Eigen::MatrixXd> llt(prec);
        if (llt.info() != Eigen::Success) throw NumericalError("RVM posterior precision is not positive definite");
        p.sigma = llt.solve(Eigen::MatrixXd::Identity(k, k));
        p.mu = w.beta * llt.solve(h);
        const Eigen::MatrixXd l = llt.matrixL();
        logdet_c += 2.0 * l.diagonal().array().log().sum();
        for (int i : act) logdet_c -= std::log(alpha(i));
        quad -= w.beta * h.dot(p.mu);
    }
    p.log_ml = -0.5 * (static_cast<double>(w.n) * kLog2Pi + logdet_c + quad);
    return p;
}

}  // namespace

double log_marginal_likelihood(const Eigen::MatrixXd& phi, const Eigen::VectorXd& target, double noise_var,
                               const std::vector<int>& subset, const Eigen::VectorXd& alpha_subset) {
    Work w;
    w.gram = phi.transpose() * phi;
    w.proj = phi.transpose() * target;
    w.tt = target.squaredNorm();
    w.beta = 1.0 / noise_var;
    w.n = phi.rows();
    Eigen::VectorXd alpha = Eigen::VectorXd::Constant(phi.cols(), kInf);
    for (std::size_t i = 0; i < subset.size(); ++i) alpha(subset[i]) = alpha_subset(static_cast<Eigen::Index>(i));
    return posterior(w, subset, alpha).log_ml;
}

RvmModel rvm_fit(const Eigen::MatrixXd& phi, const Eigen::VectorXd& target, double noise_var,
                 const std::vector<int>& candidates, const RvmOptions& opts) {
    if (phi.rows() != target.size()) throw ArgumentError("library rows differ from target length");
    if (!(noise_var > 0) || !std::isfinite(noise_var)) throw ArgumentError("RVM noise variance must be positive");
    if (!phi.allFinite() || !target.allFinite()) throw NumericalError("non-finite library or target values");
    const Eigen::Index m = phi.cols();

    std::vector<int> allowed = candidates;
    if (allowed.empty())
        for (int i = 0; i < m; ++i) allowed.push_back(i);
    Eigen::VectorXd norms = phi.colwise().norm().transpose();
    std::vector<char> usable(static_cast<std::size_t>(m), 0);
    for (int i : allowed) {
        if (i < 0 || i >= m) throw ArgumentError("candidate column out of range");
        if (norms(i) > 0) usable[static_cast<std::size_t>(i)] = 1;
    }

    Work w;
    Eigen::MatrixXd scaled = phi;
    for (Eigen::Index i = 0; i < m; ++i)
        if (norms(i) > 0) scaled.col(i) /= norms(i);
    w.gram = scaled.transpose() * scaled;
    w.proj = scaled.transpose() * target;
    w.tt = target.squaredNorm();
    w.beta = 1.0 / noise_var;
    w.n = phi.rows();

    RvmModel model;
    model.noise_var = noise_var;
    Eigen::VectorXd alpha = Eigen::VectorXd::Constant(m, kInf);
    std::vector<int> act;

    // Start from the single column best aligned with the target.
    int best = -1;
    double best_q = 0;
    for (int i = 0; i < m; ++i) {
        if (!usable[static_cast<std::size_t>(i)]) continue;
        const double q = std::abs(w.proj(i));
        if (q > best_q) {
            best_q = q;
            best = i;
        }
    }
    auto finish = [&](const Posterior& p) {
        model.active = act;
        model.alpha = Eigen::VectorXd::Constant(m, kInf);
        model.mean = Eigen::VectorXd::Zero(m);
        model.cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(act.size()), static_cast<Eigen::Index>(act.size()));
        for (std::size_t a = 0; a < act.size(); ++a) {
            const int i = act[a];
            model.alpha(i) = alpha(i) * norms(i) * norms(i);
            model.mean(i) = p.mu(static_cast<Eigen::Index>(a)) / norms(i);
            for (std::size_t b = 0; b < act.size(); ++b)
                model.cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                    p.sigma(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) / (norms(i) * norms(act[b]));
        }
        model.log_marginal = p.log_ml;
        return model;
    };
    if (best < 0 || best_q * best_q <= noise_var) {
        model.history.push_back(posterior(w, act, alpha).log_ml);
        return finish(posterior(w, act, alpha));
    }
    alpha(best) = 1.0 / (best_q * best_q / 1.0 - noise_var);
    act.push_back(best);
    Posterior post = posterior(w, act, alpha);
    model.history.push_back(post.log_ml);

    Eigen::VectorXd S(m), Q(m);
    for (int iter = 0; iter < opts.max_iter; ++iter) {
        model.iterations = iter + 1;
        // Sparsity and quality factors for every column from the current posterior.
        const auto k = static_cast<Eigen::Index>(act.size());
        Eigen::MatrixXd ga(m, k);
        Eigen::VectorXd ha(k);
        for (Eigen::Index a = 0; a < k; ++a) {
            ga.col(a) = w.gram.col(act[static_cast<std::size_t>(a)]);
            ha(a) = w.proj(act[static_cast<std::size_t>(a)]);
        }
        const Eigen::MatrixXd gs = ga * post.sigma;
        for (Eigen::Index i = 0; i < m; ++i) {
            S(i) = w.beta * w.gram(i, i) - w.beta * w.beta * gs.row(i).dot(ga.row(i));
            Q(i) = w.beta * w.proj(i) - w.beta * w.beta * gs.row(i).dot(ha);
        }

        int pick = -1;
        double pick_gain = 0;
        double pick_alpha = kInf;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (!usable[static_cast<std::size_t>(i)]) continue;
            const bool in = std::isfinite(alpha(i));
            double s = S(i), q = Q(i);
            if (in) {
                s = alpha(i) * S(i) / (alpha(i) - S(i));
                q = alpha(i) * Q(i) / (alpha(i) - S(i));
            }
            const double eta = q * q - s;
            double gain = 0;
            double new_alpha = kInf;
            if (eta > 0) new_alpha = s * s / eta;
            if (new_alpha > opts.alpha_cap) new_alpha = kInf;
            if (std::isfinite(new_alpha) && !in) {
                gain = 0.5 * ((Q(i) * Q(i) - S(i)) / S(i) + std::log(S(i) / (Q(i) * Q(i))));
            } else if (std::isfinite(new_alpha) && in) {
                const double delta = 1.0 / new_alpha - 1.0 / alpha(i);
                gain = 0.5 * (Q(i) * Q(i) / (S(i) + 1.0 / delta) - std::log1p(S(i) * delta));
                if (delta == 0) gain = 0;
            } else if (in && act.size() > 1) {
                gain = 0.5 * (Q(i) * Q(i) / (S(i) - alpha(i)) - std::log1p(-S(i) / alpha(i)));
            } else {
                continue;
            }
            if (std::isfinite(gain) && gain > pick_gain) {
                pick_gain = gain;
                pick = static_cast<int>(i);
                pick_alpha = new_alpha;
            }
        }
        if (pick < 0 || pick_gain <= opts.tol * std::max(1.0, std::abs(post.log_ml))) break;

        const Eigen::VectorXd old_alpha = alpha;
        const std::vector<int> old_act = act;
        alpha(pick) = pick_alpha;
        act.clear();
        for (int i = 0; i < m; ++i)
            if (std::isfinite(alpha(i))) act.push_back(i);
        Posterior next = posterior(w, act, alpha);
        if (next.log_ml < post.log_ml - 1e-9 * std::max(1.0, std::abs(post.log_ml))) {
            // Rounding made the predicted gain unattainable; keep the previous model.
            alpha = old_alpha;
            act = old_act;
            break;
        }
        post = std::move(next);
        model.history.push_back(post.log_ml);
    }
    return finish(post);
}

StResult st_sparse_bayes(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& targets, const Eigen::VectorXd& P_init,
                         double epsilon, const ActiveMask& mask, const RvmOptions& opts) {
    if (epsilon < 0) throw ArgumentError("threshold must be nonnegative");
    const Eigen::Index m = phi.cols();
    const Eigen::Index d = targets.cols();
    if (targets.rows() != phi.rows()) throw ArgumentError("targets and library differ in rows");
    if (P_init.size() != d) throw ArgumentError("P_init length differs from state count");
    StResult res;
    res.active = mask.size() ? mask : ActiveMask::Constant(m, d, true);
    if (res.active.rows() != m || res.active.cols() != d) throw ArgumentError("active mask shape mismatch");
    res.W = Eigen::MatrixXd::Zero(m, d);
    res.W_std = Eigen::MatrixXd::Zero(m, d);
    res.P = P_init;
    res.models.resize(static_cast<std::size_t>(d));

    const int max_rounds = static_cast<int>(m) + 2;
    for (int round = 0; round < max_rounds; ++round) {
        res.iterations = round + 1;
        bool changed = false;
        for (Eigen::Index k = 0; k < d; ++k) {
            std::vector<int> cand;
            for (int j = 0; j < m; ++j)
                if (res.active(j, k)) cand.push_back(j);
            if (cand.empty()) {
                std::ostringstream msg;
                msg << "all terms pruned for state " << k;
                throw DiscoveryFailure(msg.str());
            }
            RvmModel model = rvm_fit(phi, targets.col(k), P_init(k), cand, opts);
            res.W.col(k) = model.mean;
            res.W_std.col(k).setZero();
            for (std::size_t a = 0; a < model.active.size(); ++a)
                res.W_std(model.active[a], k) =
                    std::sqrt(std::max(0.0, model.cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a))));
            for (int j = 0; j < m; ++j) {
                const bool keep = res.active(j, k) && std::abs(res.W(j, k)) > epsilon;
                if (!keep) {
                    res.W(j, k) = 0.0;
                    res.W_std(j, k) = 0.0;
                }
                if (keep != res.active(j, k)) changed = true;
                res.active(j, k) = keep;
            }
            if (!res.active.col(k).any()) {
                std::ostringstream msg;
                msg << "all terms pruned for state " << k;
                throw DiscoveryFailure(msg.str());
            }
            res.models[static_cast<std::size_t>(k)] = std::move(model);
        }
        if (!changed) break;
    }
    const Eigen::MatrixXd resid = targets - phi * res.W;
    for (Eigen::Index k = 0; k < d; ++k)
        res.P(k) = std::max(resid.col(k).squaredNorm() / static_cast<double>(phi.rows()), 1e-300);
    return res;
}

}  // namespace bsl::sparse
