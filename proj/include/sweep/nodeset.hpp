#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sweep/errors.hpp"

namespace sweep {

// Immutable carrier of the discretized space: m points in R^n plus a
// positive quadrature weight per node (the volume of the cell the node
// represents). Every measure, mask and kernel matrix references one shared
// NodeSet, so mismatches are caught by identity instead of by accident.
class NodeSet {
public:
    // points: one row per node. quad_weights: one positive entry per node.
    NodeSet(Eigen::MatrixXd points, Eigen::VectorXd quad_weights,
            std::vector<std::string> labels = {})
        : points_(std::move(points)),
          quad_weights_(std::move(quad_weights)),
          labels_(std::move(labels)) {
        if (points_.rows() < 1)
            throw ParameterError("NodeSet: needs at least one point");
        if (points_.cols() < 1)
            throw ParameterError("NodeSet: ambient dimension must be >= 1");
        if (quad_weights_.size() != points_.rows())
            throw ParameterError("NodeSet: quad weight count != point count");
        if (!points_.allFinite())
            throw ParameterError("NodeSet: non-finite coordinate");
        for (Eigen::Index i = 0; i < quad_weights_.size(); ++i) {
            if (!(quad_weights_[i] > 0.0) || !std::isfinite(quad_weights_[i]))
                throw ParameterError("NodeSet: quad weights must be positive and finite");
        }
        if (!labels_.empty() && labels_.size() != static_cast<size_t>(points_.rows()))
            throw ParameterError("NodeSet: label count != point count");
        min_spacing_sq_ = scan_pairwise_min_sq();
    }

    static NodeSet with_unit_weights(Eigen::MatrixXd points,
                                     std::vector<std::string> labels = {}) {
        const Eigen::Index m = points.rows();
        return NodeSet(std::move(points), Eigen::VectorXd::Ones(m), std::move(labels));
    }

    [[nodiscard]] Eigen::Index count() const { return points_.rows(); }
    [[nodiscard]] int dimension() const { return static_cast<int>(points_.cols()); }
    [[nodiscard]] const Eigen::MatrixXd& points() const { return points_; }
    [[nodiscard]] Eigen::RowVectorXd point(Eigen::Index i) const { return points_.row(i); }
    [[nodiscard]] const Eigen::VectorXd& quad_weights() const { return quad_weights_; }
    [[nodiscard]] double quad_weight(Eigen::Index i) const { return quad_weights_[i]; }
    [[nodiscard]] const std::vector<std::string>& labels() const { return labels_; }

    // Smallest pairwise distance; defined only for >= 2 nodes.
    [[nodiscard]] double min_spacing() const {
        if (count() < 2)
            throw ParameterError("NodeSet: min_spacing needs at least two points");
        return std::sqrt(min_spacing_sq_);
    }

    [[nodiscard]] double squared_distance(Eigen::Index i, Eigen::Index j) const {
        return (points_.row(i) - points_.row(j)).squaredNorm();
    }

private:
    // Single O(m^2) pass: finds the minimum spacing and rejects coincident
    // points (which would make the kernel matrix singular by construction).
    double scan_pairwise_min_sq() const {
        double best = std::numeric_limits<double>::infinity();
        const Eigen::Index m = points_.rows();
        for (Eigen::Index i = 0; i < m; ++i) {
            for (Eigen::Index j = i + 1; j < m; ++j) {
                const double d2 = (points_.row(i) - points_.row(j)).squaredNorm();
                if (d2 == 0.0)
                    throw ParameterError("NodeSet: points must be pairwise distinct");
                if (d2 < best) best = d2;
            }
        }
        return best;
    }

    Eigen::MatrixXd points_;
    Eigen::VectorXd quad_weights_;
    std::vector<std::string> labels_;
    double min_spacing_sq_ = std::numeric_limits<double>::infinity();
};

using NodeSetPtr = std::shared_ptr<const NodeSet>;

inline NodeSetPtr make_nodes(Eigen::MatrixXd points, Eigen::VectorXd quad_weights,
                             std::vector<std::string> labels = {}) {
    return std::make_shared<const NodeSet>(std::move(points), std::move(quad_weights),
                                           std::move(labels));
}

inline NodeSetPtr make_nodes(Eigen::MatrixXd points) {
    const Eigen::Index m = points.rows();
    return make_nodes(std::move(points), Eigen::VectorXd::Ones(m));
}

inline bool same_nodes(const NodeSetPtr& a, const NodeSetPtr& b) {
    return a.get() == b.get();
}

} // namespace sweep
