#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>

#include "sweep/errors.hpp"
#include "sweep/kernels.hpp"
#include "sweep/measures.hpp"

namespace sweep {

// Potential values U^mu, either at the shared nodes (points left empty) or
// at explicit off-node evaluation points.
struct PotentialField {
    NodeSetPtr nodes;                  // carrier of mu
    std::optional<Eigen::MatrixXd> points;  // explicit evaluation points, one per row
    Eigen::VectorXd values;
};

namespace detail {

inline void require_same_nodes(const KernelMatrix& M, const DiscreteMeasure& mu,
                               const char* who) {
    if (!same_nodes(M.nodes_ptr(), mu.nodes_ptr()))
        throw ParameterError(std::string(who) + ": measure over a different node set");
}

} // namespace detail

// U^mu(x_i) = sum_j M[i][j] w_j at the shared nodes; with explicit points,
// U^mu(p) = sum_j kappa_eps(p, x_j) w_j (eps = 0 is allowed off-node and
// produces the infinite sentinel on coincidence).
inline PotentialField potential(const KernelMatrix& M, const DiscreteMeasure& mu,
                                const std::optional<Eigen::MatrixXd>& at = std::nullopt) {
    detail::require_same_nodes(M, mu, "potential");
    PotentialField f;
    f.nodes = M.nodes_ptr();
    if (!at) {
        f.values = M.entries() * mu.weights();
        return f;
    }
    const Eigen::MatrixXd& pts = *at;
    if (pts.cols() != M.spec().dimension)
        throw ParameterError("potential: evaluation point dimension != kernel dimension");
    const NodeSet& nodes = M.nodes();
    Eigen::VectorXd vals(pts.rows());
    for (Eigen::Index p = 0; p < pts.rows(); ++p) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < nodes.count(); ++j) {
            const double w = mu.weights()[j];
            if (w == 0.0) continue;
            const double r2 = (pts.row(p) - nodes.point(j)).squaredNorm();
            acc += w * M.spec().value_r2(r2);
        }
        vals[p] = acc;
    }
    f.points = pts;
    f.values = std::move(vals);
    return f;
}

// I(mu, nu) = w^T M v; symmetric in its arguments.
inline double mutual_energy(const KernelMatrix& M, const DiscreteMeasure& mu,
                            const DiscreteMeasure& nu) {
    detail::require_same_nodes(M, mu, "mutual_energy");
    detail::require_same_nodes(M, nu, "mutual_energy");
    return mu.weights().dot(M.entries() * nu.weights());
}

// ||mu|| = sqrt(I(mu, mu)); tiny negative rounding clamped to zero.
inline double energy_norm(const KernelMatrix& M, const DiscreteMeasure& mu) {
    return std::sqrt(std::max(0.0, mutual_energy(M, mu, mu)));
}

// Energy-norm distance ||mu - nu|| computed on the signed difference.
inline double strong_distance(const KernelMatrix& M, const DiscreteMeasure& mu,
                              const DiscreteMeasure& nu) {
    detail::require_same_nodes(M, mu, "strong_distance");
    detail::require_same_nodes(M, nu, "strong_distance");
    const Eigen::VectorXd d = mu.weights() - nu.weights();
    return std::sqrt(std::max(0.0, d.dot(M.entries() * d)));
}

// Gauss functional with external field f = -U^omega:
//     I_f(mu) = ||mu||^2 - 2 int U^omega dmu = w^T M w - 2 w^T M w_omega.
// Its minimizer over the admissible cone is the swept measure.
inline double gauss_functional(const KernelMatrix& M, const DiscreteMeasure& mu,
                               const DiscreteMeasure& omega) {
    detail::require_same_nodes(M, mu, "gauss_functional");
    detail::require_same_nodes(M, omega, "gauss_functional");
    const Eigen::VectorXd Mw = M.entries() * mu.weights();
    return mu.weights().dot(Mw) - 2.0 * omega.weights().dot(Mw);
}

// |I(omega_swept, lambda) - I(lambda_swept, omega)|: the residual of the
// symmetry relation that defines sweeping.
inline double symmetry_residual(const KernelMatrix& M, const DiscreteMeasure& omega_swept,
                                const DiscreteMeasure& omega, const DiscreteMeasure& lambda,
                                const DiscreteMeasure& lambda_swept) {
    return std::abs(mutual_energy(M, omega_swept, lambda) -
                    mutual_energy(M, lambda_swept, omega));
}

// Signed counterparts, computed on net weight vectors.

inline Eigen::VectorXd potential_values(const KernelMatrix& M,
                                        const SignedDiscreteMeasure& xi) {
    if (!same_nodes(M.nodes_ptr(), xi.nodes_ptr()))
        throw ParameterError("potential: signed measure over a different node set");
    return M.entries() * xi.net_weights();
}

inline double mutual_energy(const KernelMatrix& M, const SignedDiscreteMeasure& xi,
                            const SignedDiscreteMeasure& theta) {
    if (!same_nodes(M.nodes_ptr(), xi.nodes_ptr()) ||
        !same_nodes(M.nodes_ptr(), theta.nodes_ptr()))
        throw ParameterError("mutual_energy: signed measure over a different node set");
    return xi.net_weights().dot(M.entries() * theta.net_weights());
}

inline double energy_norm(const KernelMatrix& M, const SignedDiscreteMeasure& xi) {
    return std::sqrt(std::max(0.0, mutual_energy(M, xi, xi)));
}

} // namespace sweep
