#include "jbsde/regression.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "jbsde/errors.hpp"
#include "jbsde/parallel.hpp"

namespace jbsde {

namespace {

void enumerate(std::size_t dim, std::size_t degree, std::vector<unsigned>& cur, std::size_t pos,
               std::size_t remaining, std::vector<std::vector<unsigned>>& out) {
    if (pos == dim) {
        out.push_back(cur);
        return;
    }
    for (std::size_t e = 0; e <= remaining; ++e) {
        cur[pos] = static_cast<unsigned>(e);
        enumerate(dim, degree, cur, pos + 1, remaining - e, out);
    }
    cur[pos] = 0;
}

}  // namespace

RegressionBasis::RegressionBasis(std::size_t dim_x, std::size_t degree, double ridge)
    : dim_x_(dim_x), degree_(degree), ridge_(ridge) {
    if (dim_x == 0) throw ConfigError("regression basis needs dim_x >= 1");
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw ConfigError("ridge must be finite and >= 0");
    std::vector<std::vector<unsigned>> all;
    std::vector<unsigned> cur(dim_x, 0);
    enumerate(dim_x, degree, cur, 0, degree, all);
    // order by total degree, constant first
    for (std::size_t deg = 0; deg <= degree; ++deg) {
        for (const auto& e : all) {
            std::size_t s = 0;
            for (unsigned v : e) s += v;
            if (s == deg) exponents_.push_back(e);
        }
    }
}

void RegressionBasis::evaluate(std::span<const double> x, std::span<double> out) const {
    for (std::size_t k = 0; k < exponents_.size(); ++k) {
        double v = 1.0;
        for (std::size_t j = 0; j < dim_x_; ++j) {
            for (unsigned p = 0; p < exponents_[k][j]; ++p) v *= x[j];
        }
        out[k] = v;
    }
}

// ---------------------------------------------------------------------------

double FittedSurface::evaluate(const RegressionBasis& basis, std::span<const double> x) const {
    if (degenerate) return intercept;
    std::vector<double> phi(basis.size());
    basis.evaluate(x, phi);
    double v = intercept;
    for (Eigen::Index k = 0; k < slope.size(); ++k) {
        if (feature_scale[k] > 0.0) {
            v += slope[k] * (phi[static_cast<std::size_t>(k) + 1] - feature_mean[k]) / feature_scale[k];
        }
    }
    return v;
}

bool FittedSurface::in_hull(std::span<const double> x, double rel_tol) const {
    for (Eigen::Index j = 0; j < lower.size(); ++j) {
        const double pad = rel_tol * std::max({1.0, std::abs(lower[j]), std::abs(upper[j])});
        const double v = x[static_cast<std::size_t>(j)];
        if (v < lower[j] - pad || v > upper[j] + pad) return false;
    }
    return true;
}

Eigen::VectorXd FittedSurface::raw_coefficients() const {
    Eigen::VectorXd raw = Eigen::VectorXd::Zero(slope.size() + 1);
    raw[0] = intercept;
    for (Eigen::Index k = 0; k < slope.size(); ++k) {
        if (feature_scale[k] > 0.0) {
            raw[k + 1] = slope[k] / feature_scale[k];
            raw[0] -= slope[k] * feature_mean[k] / feature_scale[k];
        }
    }
    return raw;
}

// ---------------------------------------------------------------------------

namespace {

struct Moments {
    Eigen::VectorXd sum;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
};

}  // namespace

NodeDesign::NodeDesign(const RegressionBasis& basis, std::vector<std::span<const double>> states,
                       std::size_t workers)
    : basis_(basis), n_(states.size()), workers_(workers) {
    const auto K = static_cast<Eigen::Index>(basis.size());
    const auto F = K - 1;
    const auto m = static_cast<Eigen::Index>(basis.dim_x());
    mean_ = Eigen::VectorXd::Zero(F);
    scale_ = Eigen::VectorXd::Zero(F);
    lower_ = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::infinity());
    upper_ = Eigen::VectorXd::Constant(m, -std::numeric_limits<double>::infinity());
    if (n_ == 0) return;

    Eigen::MatrixXd raw(static_cast<Eigen::Index>(n_), F);
    const std::size_t n_blocks = block_count(n_);
    std::vector<Moments> parts(n_blocks);
    parallel_blocks(n_, workers_, kReductionBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
        std::vector<double> phi(basis.size());
        Moments mom{Eigen::VectorXd::Zero(F), Eigen::VectorXd::Constant(m, std::numeric_limits<double>::infinity()),
                    Eigen::VectorXd::Constant(m, -std::numeric_limits<double>::infinity())};
        for (std::size_t r = begin; r < end; ++r) {
            basis.evaluate(states[r], phi);
            for (Eigen::Index k = 0; k < F; ++k) {
                raw(static_cast<Eigen::Index>(r), k) = phi[static_cast<std::size_t>(k) + 1];
                mom.sum[k] += phi[static_cast<std::size_t>(k) + 1];
            }
            for (Eigen::Index j = 0; j < m; ++j) {
                mom.lower[j] = std::min(mom.lower[j], states[r][static_cast<std::size_t>(j)]);
                mom.upper[j] = std::max(mom.upper[j], states[r][static_cast<std::size_t>(j)]);
            }
        }
        parts[b] = std::move(mom);
    });
    const Moments total = tree_reduce(std::move(parts), [](const Moments& a, const Moments& b) {
        return Moments{a.sum + b.sum, a.lower.cwiseMin(b.lower), a.upper.cwiseMax(b.upper)};
    });
    lower_ = total.lower;
    upper_ = total.upper;
    const double n = static_cast<double>(n_);
    mean_ = total.sum / n;

    // second pass: spread of each feature
    std::vector<Eigen::VectorXd> sq(n_blocks);
    parallel_blocks(n_, workers_, kReductionBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
        Eigen::VectorXd s = Eigen::VectorXd::Zero(F);
        for (std::size_t r = begin; r < end; ++r) {
            s += (raw.row(static_cast<Eigen::Index>(r)).transpose() - mean_).cwiseAbs2();
        }
        sq[b] = std::move(s);
    });
    const Eigen::VectorXd var =
        tree_reduce(std::move(sq), [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return Eigen::VectorXd(a + b); }) / n;
    for (Eigen::Index k = 0; k < F; ++k) {
        const double sd = std::sqrt(var[k]);
        if (sd > 1e-12 * std::max(1.0, std::abs(mean_[k]))) {
            scale_[k] = sd;
            active_.push_back(k);
        }
    }

    const auto A = static_cast<Eigen::Index>(active_.size());
    features_.resize(static_cast<Eigen::Index>(n_), A);
    for (Eigen::Index a = 0; a < A; ++a) {
        const Eigen::Index k = active_[static_cast<std::size_t>(a)];
        features_.col(a) = (raw.col(k).array() - mean_[k]) / scale_[k];
    }
    if (A == 0) return;

    std::vector<Eigen::MatrixXd> grams(n_blocks);
    parallel_blocks(n_, workers_, kReductionBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
        const auto rows = features_.middleRows(static_cast<Eigen::Index>(begin),
                                               static_cast<Eigen::Index>(end - begin));
        grams[b] = rows.transpose() * rows;
    });
    Eigen::MatrixXd gram =
        tree_reduce(std::move(grams), [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return Eigen::MatrixXd(a + b); }) / n;
    gram.diagonal().array() += basis.ridge();
    gram_.compute(gram);
}

std::vector<FittedSurface> NodeDesign::fit(const Eigen::MatrixXd& targets, std::size_t node) const {
    const auto F = static_cast<Eigen::Index>(basis_.size()) - 1;
    const auto T = targets.cols();
    if (static_cast<std::size_t>(targets.rows()) != n_) {
        throw NumericalError("regression target length mismatch at node " + std::to_string(node));
    }
    if (n_ == 0) {
        throw NumericalError("regression failed at node " + std::to_string(node) + ": no active paths");
    }
    if (!targets.allFinite()) {
        throw NumericalError("regression failed at node " + std::to_string(node) + ": non-finite target");
    }
    const auto A = static_cast<Eigen::Index>(active_.size());
    const std::size_t n_blocks = block_count(n_);
    const double n = static_cast<double>(n_);

    std::vector<Eigen::VectorXd> sums(n_blocks);
    parallel_blocks(n_, workers_, kReductionBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
        sums[b] = targets.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin))
                      .colwise()
                      .sum()
                      .transpose();
    });
    const Eigen::VectorXd target_mean =
        tree_reduce(std::move(sums), [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return Eigen::VectorXd(a + b); }) / n;

    Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(A, T);
    if (A > 0) {
        std::vector<Eigen::MatrixXd> cross(n_blocks);
        parallel_blocks(n_, workers_, kReductionBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
            const auto len = static_cast<Eigen::Index>(end - begin);
            const auto start = static_cast<Eigen::Index>(begin);
            cross[b] = features_.middleRows(start, len).transpose() * targets.middleRows(start, len);
        });
        const Eigen::MatrixXd rhs =
            tree_reduce(std::move(cross), [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return Eigen::MatrixXd(a + b); }) / n;
        if (gram_.info() != Eigen::Success) {
            throw NumericalError("regression failed at node " + std::to_string(node) + ": singular design");
        }
        beta = gram_.solve(rhs);
        if (!beta.allFinite()) {
            throw NumericalError("regression failed at node " + std::to_string(node) +
                                 ": non-finite coefficients (increase ridge)");
        }
    }

    std::vector<FittedSurface> out(static_cast<std::size_t>(T));
    for (Eigen::Index t = 0; t < T; ++t) {
        auto& s = out[static_cast<std::size_t>(t)];
        s.intercept = target_mean[t];
        s.feature_mean = mean_;
        s.feature_scale = scale_;
        s.slope = Eigen::VectorXd::Zero(F);
        for (Eigen::Index a = 0; a < A; ++a) s.slope[active_[static_cast<std::size_t>(a)]] = beta(a, t);
        s.lower = lower_;
        s.upper = upper_;
        s.degenerate = A == 0;
    }
    return out;
}

double NodeDesign::fitted(const FittedSurface& s, std::size_t r) const {
    double v = s.intercept;
    for (Eigen::Index a = 0; a < static_cast<Eigen::Index>(active_.size()); ++a) {
        v += s.slope[active_[static_cast<std::size_t>(a)]] * features_(static_cast<Eigen::Index>(r), a);
    }
    return v;
}

}  // namespace jbsde
