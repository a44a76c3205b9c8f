#pragma once

#include <Eigen/Dense>
#include <memory>
#include <ostream>
#include <vector>

#include "spdae/chebyshev.hpp"
#include "spdae/problem.hpp"

namespace spdae {

/// The regular (outer) part of the expansion: term k sampled on a shared
/// Chebyshev grid over [0, T], with barycentric evaluation and spectral
/// differentiation. Immutable once an order has been filled.
class SeriesField {
public:
    SeriesField(double T, int degree, int n)
        : grid_(std::make_shared<ChebyshevGrid>(0.0, T, degree)), n_(n) {}

    const ChebyshevGrid& grid() const { return *grid_; }
    int dim() const { return n_; }
    int orders_filled() const { return static_cast<int>(values_.size()); }

    /// Samples of term k: an n x (degree+1) matrix, one column per grid node.
    const Eigen::MatrixXd& samples(int k) const { return values_.at(k); }

    void push_order(Eigen::MatrixXd samples) {
        if (samples.rows() != n_ || samples.cols() != grid_->size())
            throw Error("series term has the wrong sample shape");
        values_.push_back(std::move(samples));
        derivs_.push_back(values_.back() * grid_->diff().transpose());
    }

    Eigen::VectorXd eval(int k, double t) const {
        return interp(values_.at(k), t);
    }
    Eigen::VectorXd deriv(int k, double t) const {
        return interp(derivs_.at(k), t);
    }

    /// j-th t-derivative samples of term k (repeated spectral differentiation).
    Eigen::MatrixXd deriv_samples(int k, int j) const {
        Eigen::MatrixXd v = values_.at(k);
        for (int r = 0; r < j; ++r) v = v * grid_->diff().transpose();
        return v;
    }

    void to_csv(std::ostream& os) const;

private:
    Eigen::VectorXd interp(const Eigen::MatrixXd& data, double t) const {
        Eigen::VectorXd out(n_);
        for (int i = 0; i < n_; ++i)
            out(i) = grid_->interpolate(data.row(i).transpose(), t);
        return out;
    }

    std::shared_ptr<ChebyshevGrid> grid_;
    int n_;
    std::vector<Eigen::MatrixXd> values_;
    std::vector<Eigen::MatrixXd> derivs_;
};

/// Solves the reduced equation f(x, t, 0) = 0 along the grid by damped-Newton
/// continuation and returns the order-0 series.
SeriesField solve_reduced(const BVPProblem& problem, int degree = 32, double tol = 1e-12);

/// g-bar_k(t): the k-th eps-coefficient of f composed with the partial sum
/// through order k-1 (no order-k contribution).
Eigen::VectorXd extract_gbar(const BVPProblem& problem, const SeriesField& series, int k, double t);

/// Fills term k of the series from the explicit linear recursion.
void regular_term(const BVPProblem& problem, SeriesField& series, int k);

/// eps-jet of the regular partial sum along the stretched ray t = anchor + eps * stretched,
/// truncated at order K. anchor is t = 0 (at_start) or t = T. Term i enters at orders >= i,
/// with its t-dependence re-expanded through spectral derivatives at the anchor.
JetVec regular_sum_layer_jet(const SeriesField& series, bool at_start, double stretched, int K);

} // namespace spdae
