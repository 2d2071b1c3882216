#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "sweep/errors.hpp"
#include "sweep/nodeset.hpp"

namespace sweep {

// Non-negative weight vector over a shared NodeSet: mu = sum_i w_i delta_{x_i}.
class DiscreteMeasure {
public:
    DiscreteMeasure(NodeSetPtr nodes, Eigen::VectorXd weights)
        : nodes_(std::move(nodes)), weights_(std::move(weights)) {
        if (!nodes_)
            throw ParameterError("DiscreteMeasure: null node set");
        if (weights_.size() != nodes_->count())
            throw ParameterError("DiscreteMeasure: weight count != node count");
        for (Eigen::Index i = 0; i < weights_.size(); ++i) {
            if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i]))
                throw ParameterError("DiscreteMeasure: weights must be finite and >= 0");
        }
    }

    static DiscreteMeasure zero(NodeSetPtr nodes) {
        const Eigen::Index m = nodes->count();
        return DiscreteMeasure(std::move(nodes), Eigen::VectorXd::Zero(m));
    }

    [[nodiscard]] const NodeSetPtr& nodes_ptr() const { return nodes_; }
    [[nodiscard]] const NodeSet& nodes() const { return *nodes_; }
    [[nodiscard]] const Eigen::VectorXd& weights() const { return weights_; }
    [[nodiscard]] Eigen::Index size() const { return weights_.size(); }

    [[nodiscard]] double total_mass() const { return weights_.sum(); }

    [[nodiscard]] std::vector<Eigen::Index> support(double threshold = 0.0) const {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < weights_.size(); ++i)
            if (weights_[i] > threshold) idx.push_back(i);
        return idx;
    }

private:
    NodeSetPtr nodes_;
    Eigen::VectorXd weights_;
};

inline double total_mass(const DiscreteMeasure& mu) { return mu.total_mass(); }

// Node subset playing the role of the target set A (and of the compacts K
// and sub-targets Q). Non-emptiness is required only where a mask is used
// as a balayage target.
class RegionMask {
public:
    RegionMask(NodeSetPtr nodes, std::vector<char> member)
        : nodes_(std::move(nodes)), member_(std::move(member)) {
        if (!nodes_)
            throw ParameterError("RegionMask: null node set");
        if (member_.size() != static_cast<size_t>(nodes_->count()))
            throw ParameterError("RegionMask: flag count != node count");
    }

    static RegionMask full(NodeSetPtr nodes) {
        std::vector<char> m(static_cast<size_t>(nodes->count()), 1);
        return RegionMask(std::move(nodes), std::move(m));
    }

    static RegionMask from_indices(NodeSetPtr nodes, const std::vector<Eigen::Index>& idx) {
        std::vector<char> m(static_cast<size_t>(nodes->count()), 0);
        for (Eigen::Index i : idx) {
            if (i < 0 || i >= nodes->count())
                throw ParameterError("RegionMask: index out of range");
            m[static_cast<size_t>(i)] = 1;
        }
        return RegionMask(std::move(nodes), std::move(m));
    }

    template <typename Pred>
    static RegionMask from_predicate(NodeSetPtr nodes, Pred&& pred) {
        std::vector<char> m(static_cast<size_t>(nodes->count()), 0);
        for (Eigen::Index i = 0; i < nodes->count(); ++i)
            if (pred(nodes->point(i))) m[static_cast<size_t>(i)] = 1;
        return RegionMask(std::move(nodes), std::move(m));
    }

    [[nodiscard]] const NodeSetPtr& nodes_ptr() const { return nodes_; }
    [[nodiscard]] bool contains(Eigen::Index i) const {
        return member_[static_cast<size_t>(i)] != 0;
    }
    [[nodiscard]] Eigen::Index count() const {
        return static_cast<Eigen::Index>(std::count(member_.begin(), member_.end(), char(1)));
    }
    [[nodiscard]] bool empty() const { return count() == 0; }

    [[nodiscard]] std::vector<Eigen::Index> indices() const {
        std::vector<Eigen::Index> idx;
        for (size_t i = 0; i < member_.size(); ++i)
            if (member_[i]) idx.push_back(static_cast<Eigen::Index>(i));
        return idx;
    }

    [[nodiscard]] bool is_subset_of(const RegionMask& other) const {
        if (!same_nodes(nodes_, other.nodes_))
            throw ParameterError("RegionMask: node-set mismatch");
        for (size_t i = 0; i < member_.size(); ++i)
            if (member_[i] && !other.member_[i]) return false;
        return true;
    }

    [[nodiscard]] bool operator==(const RegionMask& other) const {
        return same_nodes(nodes_, other.nodes_) && member_ == other.member_;
    }

private:
    NodeSetPtr nodes_;
    std::vector<char> member_;
};

// Signed measure as an ordered pair of positives, xi = pos - neg. The
// Hahn-Jordan (disjoint-support) form is produced by hahn_jordan_normalize;
// the constructor deliberately admits overlapping supports so that
// normalization is an observable operation.
class SignedDiscreteMeasure {
public:
    SignedDiscreteMeasure(DiscreteMeasure positive_part, DiscreteMeasure negative_part)
        : pos_(std::move(positive_part)), neg_(std::move(negative_part)) {
        if (!same_nodes(pos_.nodes_ptr(), neg_.nodes_ptr()))
            throw ParameterError("SignedDiscreteMeasure: parts over different node sets");
    }

    [[nodiscard]] const DiscreteMeasure& positive_part() const { return pos_; }
    [[nodiscard]] const DiscreteMeasure& negative_part() const { return neg_; }
    [[nodiscard]] const NodeSetPtr& nodes_ptr() const { return pos_.nodes_ptr(); }

    [[nodiscard]] Eigen::VectorXd net_weights() const {
        return pos_.weights() - neg_.weights();
    }

    [[nodiscard]] bool is_normalized() const {
        for (Eigen::Index i = 0; i < pos_.size(); ++i)
            if (pos_.weights()[i] > 0.0 && neg_.weights()[i] > 0.0) return false;
        return true;
    }

private:
    DiscreteMeasure pos_;
    DiscreteMeasure neg_;
};

// mu restricted to a region: weights zeroed outside, unchanged inside.
inline DiscreteMeasure trace(const DiscreteMeasure& mu, const RegionMask& region) {
    if (!same_nodes(mu.nodes_ptr(), region.nodes_ptr()))
        throw ParameterError("trace: node-set mismatch");
    Eigen::VectorXd w = mu.weights();
    for (Eigen::Index i = 0; i < w.size(); ++i)
        if (!region.contains(i)) w[i] = 0.0;
    return DiscreteMeasure(mu.nodes_ptr(), std::move(w));
}

// Componentwise cancellation: per node exactly one part keeps mass, and the
// net signed vector pos - neg is preserved bit-exactly.
inline SignedDiscreteMeasure hahn_jordan_normalize(const SignedDiscreteMeasure& xi) {
    const Eigen::Index m = xi.positive_part().size();
    Eigen::VectorXd net = xi.net_weights();
    Eigen::VectorXd pos = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd neg = Eigen::VectorXd::Zero(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        if (net[i] > 0.0) pos[i] = net[i];
        else if (net[i] < 0.0) neg[i] = -net[i];
    }
    return SignedDiscreteMeasure(DiscreteMeasure(xi.nodes_ptr(), std::move(pos)),
                                 DiscreteMeasure(xi.nodes_ptr(), std::move(neg)));
}

// Nested increasing masks whose last stage equals the target: the discrete
// stand-in for the upward-directed net of compacts K exhausting A.
struct Exhaustion {
    std::vector<RegionMask> stages;

    void validate() const {
        if (stages.empty())
            throw ParameterError("Exhaustion: no stages");
        for (size_t j = 0; j + 1 < stages.size(); ++j)
            if (!stages[j].is_subset_of(stages[j + 1]))
                throw ParameterError("Exhaustion: stages must be nested increasing");
        // Nestedness makes the union equal to the last stage.
    }
};

enum class ExhaustionStrategy { radial, random_nested };

// Stage generator. radial: nodes ordered by distance from the target's
// centroid, stages are prefixes. random_nested: seeded random prefixes.
// Duplicate stage sizes collapse, so the stage count may come out smaller
// than requested.
inline Exhaustion build_exhaustion(const RegionMask& target, int n_stages,
                                   ExhaustionStrategy strategy, std::uint64_t seed = 0) {
    if (n_stages < 1)
        throw ParameterError("build_exhaustion: n_stages must be >= 1");
    if (target.empty())
        throw ParameterError("build_exhaustion: empty target");

    const std::vector<Eigen::Index> members = target.indices();
    const auto k = static_cast<Eigen::Index>(members.size());
    std::vector<Eigen::Index> order = members;

    if (strategy == ExhaustionStrategy::radial) {
        const NodeSet& nodes = *target.nodes_ptr();
        Eigen::RowVectorXd centroid = Eigen::RowVectorXd::Zero(nodes.dimension());
        for (Eigen::Index i : members) centroid += nodes.point(i);
        centroid /= static_cast<double>(k);
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            const double da = (nodes.point(a) - centroid).squaredNorm();
            const double db = (nodes.point(b) - centroid).squaredNorm();
            if (da != db) return da < db;
            return a < b;
        });
    } else {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
    }

    std::vector<Eigen::Index> sizes;
    for (int j = 1; j <= n_stages; ++j) {
        const auto s = static_cast<Eigen::Index>(
            std::llround(static_cast<double>(j) * static_cast<double>(k) /
                         static_cast<double>(n_stages)));
        const Eigen::Index clamped = std::max<Eigen::Index>(1, std::min(s, k));
        if (sizes.empty() || clamped > sizes.back()) sizes.push_back(clamped);
    }
    if (sizes.back() != k) sizes.push_back(k);

    Exhaustion ex;
    for (Eigen::Index s : sizes) {
        std::vector<Eigen::Index> prefix(order.begin(), order.begin() + s);
        ex.stages.push_back(RegionMask::from_indices(target.nodes_ptr(), prefix));
    }
    ex.validate();
    return ex;
}

} // namespace sweep
