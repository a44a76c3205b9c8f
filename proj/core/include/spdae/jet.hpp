#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "spdae/errors.hpp"

namespace spdae {

/// Truncated Taylor polynomial in the small parameter, coefficient 0 first.
/// All arithmetic is exact truncated-polynomial arithmetic: the product uses
/// the Cauchy convolution of the inputs, cut at the common order.
class Jet {
public:
    Jet() : c_(1, 0.0) {}
    explicit Jet(int order, double value = 0.0) : c_(order + 1, 0.0) { c_[0] = value; }
    static Jet constant(int order, double value) { return Jet(order, value); }
    /// The jet of the parameter itself: value + eps (to the requested order).
    static Jet variable(int order, double value) {
        Jet j(order, value);
        if (order >= 1) j.c_[1] = 1.0;
        return j;
    }

    int order() const { return static_cast<int>(c_.size()) - 1; }
    double operator[](int k) const { return c_[static_cast<std::size_t>(k)]; }
    double& operator[](int k) { return c_[static_cast<std::size_t>(k)]; }
    double value() const { return c_[0]; }

    Jet& operator+=(const Jet& o) {
        align(o);
        for (int k = 0; k <= order(); ++k) c_[k] += o.coeff(k);
        return *this;
    }
    Jet& operator-=(const Jet& o) {
        align(o);
        for (int k = 0; k <= order(); ++k) c_[k] -= o.coeff(k);
        return *this;
    }
    Jet& operator*=(double s) {
        for (double& v : c_) v *= s;
        return *this;
    }
    Jet& operator+=(double s) { c_[0] += s; return *this; }
    Jet& operator-=(double s) { c_[0] -= s; return *this; }

    friend Jet operator+(Jet a, const Jet& b) { a += b; return a; }
    friend Jet operator-(Jet a, const Jet& b) { a -= b; return a; }
    friend Jet operator+(Jet a, double b) { a += b; return a; }
    friend Jet operator-(Jet a, double b) { a -= b; return a; }
    friend Jet operator+(double a, Jet b) { b += a; return b; }
    friend Jet operator-(double a, const Jet& b) { return (-b) + a; }
    friend Jet operator*(Jet a, double b) { a *= b; return a; }
    friend Jet operator*(double a, Jet b) { b *= a; return b; }
    Jet operator-() const {
        Jet r = *this;
        for (double& v : r.c_) v = -v;
        return r;
    }

    friend Jet operator*(const Jet& a, const Jet& b) {
        int n = std::max(a.order(), b.order());
        Jet r(n);
        for (int k = 0; k <= n; ++k) {
            double s = 0.0;
            for (int i = 0; i <= k; ++i) s += a.coeff(i) * b.coeff(k - i);
            r.c_[k] = s;
        }
        return r;
    }

    friend Jet operator/(const Jet& a, const Jet& b) {
        if (b.coeff(0) == 0.0) throw Error("jet division by a jet with zero leading coefficient");
        int n = std::max(a.order(), b.order());
        Jet r(n);
        for (int k = 0; k <= n; ++k) {
            double s = a.coeff(k);
            for (int i = 0; i < k; ++i) s -= r.c_[i] * b.coeff(k - i);
            r.c_[k] = s / b.coeff(0);
        }
        return r;
    }

    /// Composes an analytic scalar function, supplied through the derivatives of
    /// its value at the jet's leading coefficient, with this jet.
    template <class DerivFn>
    Jet compose(DerivFn deriv) const {
        // Taylor-recompose: g(x0 + h) with h the nilpotent part of the jet.
        int n = order();
        Jet h = *this;
        h.c_[0] = 0.0;
        Jet pw = Jet(n, 1.0);
        Jet out(n, 0.0);
        double fact = 1.0;
        for (int k = 0; k <= n; ++k) {
            if (k > 0) {
                pw = pw * h;
                fact *= k;
            }
            out += pw * (deriv(k) / fact);
        }
        return out;
    }

private:
    double coeff(int k) const {
        return k <= order() ? c_[static_cast<std::size_t>(k)] : 0.0;
    }
    void align(const Jet& o) {
        if (o.order() > order()) c_.resize(o.c_.size(), 0.0);
    }

    std::vector<double> c_;
};

inline Jet exp(const Jet& x) {
    double e = std::exp(x.value());
    return x.compose([e](int) { return e; });
}

inline Jet sin(const Jet& x) {
    double s = std::sin(x.value()), c = std::cos(x.value());
    const double tab[4] = {s, c, -s, -c};
    return x.compose([&tab](int k) { return tab[k % 4]; });
}

inline Jet cos(const Jet& x) {
    double s = std::sin(x.value()), c = std::cos(x.value());
    const double tab[4] = {c, -s, -c, s};
    return x.compose([&tab](int k) { return tab[k % 4]; });
}

/// An n-vector of jets, stored as Taylor coefficient vectors.
/// coeff(k) is the n-vector multiplying eps^k.
class JetVec {
public:
    JetVec() = default;
    JetVec(int n, int order) : n_(n), coeffs_(order + 1, Eigen::VectorXd::Zero(n)) {}

    int dim() const { return n_; }
    int order() const { return static_cast<int>(coeffs_.size()) - 1; }

    const Eigen::VectorXd& coeff(int k) const { return coeffs_[static_cast<std::size_t>(k)]; }
    Eigen::VectorXd& coeff(int k) { return coeffs_[static_cast<std::size_t>(k)]; }

    Jet component(int i) const {
        Jet j(order());
        for (int k = 0; k <= order(); ++k) j[k] = coeffs_[k](i);
        return j;
    }
    void set_component(int i, const Jet& j) {
        for (int k = 0; k <= order(); ++k) coeffs_[k](i) = k <= j.order() ? j[k] : 0.0;
    }

    JetVec& operator+=(const JetVec& o) {
        for (int k = 0; k <= std::min(order(), o.order()); ++k) coeffs_[k] += o.coeff(k);
        return *this;
    }

private:
    int n_ = 0;
    std::vector<Eigen::VectorXd> coeffs_;
};

} // namespace spdae
