#pragma once

#include <Eigen/Dense>
#include <complex>
#include <ostream>
#include <string>
#include <vector>

#include "spdae/problem.hpp"
#include "spdae/regular.hpp"

namespace spdae {

/// Spectrum of the pencil J - w A at a fixed time.
struct PencilSpectrum {
    std::vector<std::complex<double>> finite; // sorted by descending real part
    int infinite_count = 0;
    double t = 0.0;
};

/// Turning-point classification and the normalizations used by the layer solvers.
struct PencilStructure {
    int p = 0;
    int q = 0;
    std::complex<double> eta1;
    std::complex<double> eta2;
    Eigen::MatrixXd P; // t = 0 left normalizer:  P A(0,0) Q = diag{0, I_{n-1}}
    Eigen::MatrixXd Q; // t = 0 right normalizer: P J(0) Q = diag{1, Lambda+, Lambda-}
    Eigen::MatrixXd U; // t = T eigenvector matrix of A^{-1}(T,0) J(T)
    Eigen::VectorXd W; // eigenvalues at t = T, descending real part
    double alpha_star = 0.0; // min{Re eta1, -Re eta2}
    double beta_star = 0.0;  // min_i |Re w_i(T,0)|
};

enum class Verdict { Pass, Fail, Untestable };

struct ConditionCheck {
    std::string name;
    Verdict verdict = Verdict::Untestable;
    double witness_t = 0.0;
    double witness_value = 0.0;
    std::string detail;
};

struct StructureReport {
    std::vector<ConditionCheck> checks;
    int grid_size = 0;
    double t_floor = 0.0;

    bool all_pass() const {
        for (const auto& c : checks)
            if (c.verdict != Verdict::Pass) return false;
        return true;
    }
    const ConditionCheck* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
    void to_text(std::ostream& os) const;
    void to_csv(std::ostream& os) const;
};

/// Generalized spectrum of J - w A. Eigenvalues whose denominator magnitude is
/// below tol * ||A|| are classified infinite.
PencilSpectrum pencil_spectrum(const Eigen::MatrixXd& J, const Eigen::MatrixXd& A,
                               double tol = 1e-10);

/// Two-sided normalization of the turning-point pencil: P A0 Q = diag{0, I_{n-1}},
/// P J0 Q = diag{1, Lambda+, Lambda-}.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> weierstrass_normalize(const Eigen::MatrixXd& A0,
                                                                  const Eigen::MatrixXd& J0,
                                                                  int p, int q);

/// Eigen-decomposition of A^{-1}(T,0) J(T); columns sorted by descending real
/// part, unit length, first nonzero entry positive.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> diagonalize_at_T(const Eigen::MatrixXd& A_T,
                                                             const Eigen::MatrixXd& J_T,
                                                             double gap_tol = 1e-9);

/// Classifies the pencil structure and verifies conditions 3-8 and 14 on
/// [t_floor, T], given the reduced solution.
std::pair<PencilStructure, StructureReport> classify_and_verify(const BVPProblem& problem,
                                                                const SeriesField& reduced,
                                                                double t_floor = 1e-3,
                                                                int grid_size = 64);

} // namespace spdae
