#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "jbsde/model.hpp"

namespace jbsde {

/// Monomials in the state coordinates up to a total degree, constant first.
class RegressionBasis {
public:
    explicit RegressionBasis(std::size_t dim_x, std::size_t degree = 2, double ridge = 1e-8);

    std::size_t dim_x() const { return dim_x_; }
    std::size_t degree() const { return degree_; }
    double ridge() const { return ridge_; }
    std::size_t size() const { return exponents_.size(); }
    const std::vector<std::vector<unsigned>>& exponents() const { return exponents_; }

    /// Writes the basis values at x into out (size()).
    void evaluate(std::span<const double> x, std::span<double> out) const;

private:
    std::size_t dim_x_;
    std::size_t degree_;
    double ridge_;
    std::vector<std::vector<unsigned>> exponents_;
};

/// Fitted conditional expectation x ↦ E[target | X = x] at one node.
///
/// Non-constant features are centred and scaled before the ridge solve, so
/// the intercept is never penalised and equals the sample mean of the target.
/// Features with no spread on the sample are dropped; when all drop the fit
/// is the plain sample mean.
struct FittedSurface {
    double intercept = 0.0;
    Eigen::VectorXd feature_mean;   // per non-constant basis function
    Eigen::VectorXd feature_scale;  // 0 marks a dropped feature
    Eigen::VectorXd slope;
    Eigen::VectorXd lower;  // bounding box of the sample
    Eigen::VectorXd upper;
    bool degenerate = true;

    double evaluate(const RegressionBasis& basis, std::span<const double> x) const;
    bool in_hull(std::span<const double> x, double rel_tol = 1e-9) const;
    /// Coefficients on the raw basis (index 0 = constant).
    Eigen::VectorXd raw_coefficients() const;
};

/// Cross-path regression design for one node. Rows are the active paths.
/// Moments are assembled in fixed-size blocks and combined pairwise, so the
/// fit is independent of the worker count.
class NodeDesign {
public:
    NodeDesign(const RegressionBasis& basis, std::vector<std::span<const double>> states,
               std::size_t workers);

    std::size_t rows() const { return n_; }
    /// Fits every target column; targets are (rows x n_targets), column-major.
    /// Throws NumericalError naming `node` when the solve fails.
    std::vector<FittedSurface> fit(const Eigen::MatrixXd& targets, std::size_t node) const;
    /// Fitted value of surface at row r (uses the cached features).
    double fitted(const FittedSurface& s, std::size_t r) const;

private:
    const RegressionBasis& basis_;
    std::size_t n_;
    std::size_t workers_;
    Eigen::MatrixXd features_;  // rows x (K-1), standardised, dropped columns zeroed
    std::vector<Eigen::Index> active_;  // kept feature columns
    Eigen::VectorXd mean_;
    Eigen::VectorXd scale_;
    Eigen::VectorXd lower_;
    Eigen::VectorXd upper_;
    Eigen::LDLT<Eigen::MatrixXd> gram_;
};

}  // namespace jbsde
