#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "spdae/errors.hpp"

namespace spdae {

/// Chebyshev-Gauss-Lobatto grid on [a, b] with spectral differentiation and
/// barycentric interpolation. Nodes are stored in ascending order.
class ChebyshevGrid {
public:
    ChebyshevGrid(double a, double b, int degree) : a_(a), b_(b), m_(degree) {
        if (degree < 2) throw Error("Chebyshev degree must be at least 2");
        nodes_.resize(m_ + 1);
        bary_.resize(m_ + 1);
        for (int j = 0; j <= m_; ++j) {
            double x = std::cos(M_PI * j / m_); // 1 ... -1
            nodes_(j) = a + 0.5 * (b - a) * (1.0 - x);
            bary_(j) = (j % 2 == 0 ? 1.0 : -1.0);
        }
        bary_(0) *= 0.5;
        bary_(m_) *= 0.5;
        diff_ = build_diff();
    }

    double a() const { return a_; }
    double b() const { return b_; }
    int degree() const { return m_; }
    int size() const { return m_ + 1; }
    const Eigen::VectorXd& nodes() const { return nodes_; }
    double node(int j) const { return nodes_(j); }

    /// Differentiation matrix in the ascending node ordering: (D v) samples dv/dt.
    const Eigen::MatrixXd& diff() const { return diff_; }

    /// Barycentric interpolation of sampled values (one sample per node).
    double interpolate(const Eigen::VectorXd& values, double t) const {
        double num = 0.0, den = 0.0;
        for (int j = 0; j <= m_; ++j) {
            double d = t - nodes_(j);
            if (d == 0.0) return values(j);
            double w = bary_(j) / d;
            num += w * values(j);
            den += w;
        }
        return num / den;
    }

private:
    Eigen::MatrixXd build_diff() const {
        // Trefethen's formulas on x_j = cos(j pi / m), then the affine map to [a, b].
        int n = m_ + 1;
        Eigen::VectorXd x(n), c(n);
        for (int j = 0; j < n; ++j) {
            x(j) = std::cos(M_PI * j / m_);
            c(j) = (j == 0 || j == m_) ? 2.0 : 1.0;
            if (j % 2 == 1) c(j) = -c(j);
        }
        Eigen::MatrixXd D(n, n);
        for (int i = 0; i < n; ++i) {
            double rowsum = 0.0;
            for (int j = 0; j < n; ++j) {
                if (i != j) {
                    D(i, j) = (c(i) / c(j)) / (x(i) - x(j));
                    rowsum += D(i, j);
                }
            }
            D(i, i) = -rowsum; // negative-sum trick
        }
        // d/dt = (dx/dt) d/dx with t = a + (b-a)(1-x)/2.
        return D * (-2.0 / (b_ - a_));
    }

    double a_, b_;
    int m_;
    Eigen::VectorXd nodes_;
    Eigen::VectorXd bary_;
    Eigen::MatrixXd diff_;
};

/// Not-a-knot cubic spline through vector-valued samples on a strictly
/// increasing abscissa. Used for layer-solution evaluation between nodes.
class CubicSpline {
public:
    CubicSpline() = default;
    CubicSpline(Eigen::VectorXd xs, Eigen::MatrixXd ys) : x_(std::move(xs)), y_(std::move(ys)) {
        const int n = static_cast<int>(x_.size());
        if (n < 4) throw Error("cubic spline needs at least 4 samples");
        if (y_.cols() != n) throw Error("spline sample count mismatch");
        build();
    }

    bool valid() const { return x_.size() > 0; }
    double x_min() const { return x_(0); }
    double x_max() const { return x_(x_.size() - 1); }

    Eigen::VectorXd eval(double t) const {
        auto [i, h, u] = locate(t);
        double h2 = h * h;
        return y_.col(i) * (1 - u) + y_.col(i + 1) * u +
               h2 / 6.0 * ((u * u * u - u) * m_.col(i + 1) +
                           ((1 - u) * (1 - u) * (1 - u) - (1 - u)) * m_.col(i));
    }

    Eigen::VectorXd deriv(double t) const {
        auto [i, h, u] = locate(t);
        return (y_.col(i + 1) - y_.col(i)) / h +
               h / 6.0 * ((3 * u * u - 1) * m_.col(i + 1) -
                          (3 * (1 - u) * (1 - u) - 1) * m_.col(i));
    }

private:
    std::tuple<int, double, double> locate(double t) const {
        const int n = static_cast<int>(x_.size());
        int lo = 0, hi = n - 1;
        if (t <= x_(0)) {
            lo = 0;
        } else if (t >= x_(n - 1)) {
            lo = n - 2;
        } else {
            while (hi - lo > 1) {
                int mid = (lo + hi) / 2;
                (x_(mid) <= t ? lo : hi) = mid;
            }
        }
        double h = x_(lo + 1) - x_(lo);
        return {lo, h, (t - x_(lo)) / h};
    }

    void build() {
        // Solve for second derivatives with not-a-knot end conditions.
        const int n = static_cast<int>(x_.size());
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, y_.rows());
        auto h = [&](int i) { return x_(i + 1) - x_(i); };
        for (int i = 1; i < n - 1; ++i) {
            A(i, i - 1) = h(i - 1);
            A(i, i) = 2.0 * (h(i - 1) + h(i));
            A(i, i + 1) = h(i);
            rhs.row(i) =
                6.0 * ((y_.col(i + 1) - y_.col(i)) / h(i) - (y_.col(i) - y_.col(i - 1)) / h(i - 1))
                          .transpose();
        }
        // not-a-knot: third derivative continuous across x_1 and x_{n-2}
        A(0, 0) = h(1);
        A(0, 1) = -(h(0) + h(1));
        A(0, 2) = h(0);
        A(n - 1, n - 3) = h(n - 2);
        A(n - 1, n - 2) = -(h(n - 3) + h(n - 2));
        A(n - 1, n - 1) = h(n - 3);
        Eigen::MatrixXd sol = A.partialPivLu().solve(rhs);
        m_ = sol.transpose();
    }

    Eigen::VectorXd x_;
    Eigen::MatrixXd y_; // dim x samples
    Eigen::MatrixXd m_; // second derivatives, dim x samples
};

} // namespace spdae
