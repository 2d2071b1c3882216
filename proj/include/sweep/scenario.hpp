#pragma once

// Config-driven scenario assembly and the report-emitting runners behind the
// command line tool. A scenario is: node geometry, kernel, target region,
// source measure, solver options, seed. Reports are deterministic: same
// config + same seed gives byte-identical files (no timestamps, fixed float
// formatting).

#include <json.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sweep/balayage.hpp"
#include "sweep/energy.hpp"
#include "sweep/errors.hpp"
#include "sweep/kernels.hpp"
#include "sweep/measures.hpp"
#include "sweep/nodeset.hpp"
#include "sweep/oracles.hpp"
#include "sweep/solvers.hpp"
#include "sweep/version.hpp"

namespace sweep {

using ordered_json = nlohmann::ordered_json;

struct KernelConfig {
    int dimension = 3;
    double order = 2.0;
    std::optional<double> epsilon;  // absent = auto: epsilon_factor * min node spacing
    double epsilon_factor = 0.5;
    double frostman_h = 1.0;
};

struct GeometryConfig {
    std::string type;  // "grid" | "ball_shell" | "point_list"
    // grid
    Eigen::VectorXd origin;
    Eigen::VectorXd spacing;
    std::vector<int> shape;
    // ball_shell
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    double radius = 1.0;
    int count = 0;
    // point_list
    Eigen::MatrixXd points;
    std::optional<Eigen::VectorXd> quad_weights;
};

struct RegionConfig {
    std::string type;  // "ball" | "box" | "indices"
    Eigen::VectorXd center;
    double radius = 0.0;
    Eigen::VectorXd box_min, box_max;
    std::vector<Eigen::Index> indices;
};

struct SourceConfig {
    std::string type;  // "point_masses" | "uniform_on_region"
    Eigen::MatrixXd points;
    Eigen::VectorXd weights;
    double total_mass = 1.0;
};

struct SolverOptions {
    double tol = 1e-9;
    int max_iter = 0;  // 0 = default budget
    BalayageMode mode = BalayageMode::gauss_capped;
};

struct ExhaustionConfig {
    int stages = 3;
    ExhaustionStrategy strategy = ExhaustionStrategy::radial;
};

struct OracleConfig {
    int levels = 3;
    int base_count = 125;
    double epsilon_factor = 0.5;
};

struct ScenarioConfig {
    KernelConfig kernel;
    GeometryConfig geometry;
    RegionConfig region;
    SourceConfig source;
    SolverOptions solver;
    ExhaustionConfig exhaustion;
    OracleConfig oracle;
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// JSON -> config, with strict unknown-key rejection.

namespace cfg {

inline void require_object(const ordered_json& j, const std::string& path) {
    if (!j.is_object())
        throw ConfigError("config: " + path + " must be an object");
}

inline void check_keys(const ordered_json& obj, const std::string& path,
                       std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) { known = true; break; }
        if (!known)
            throw ConfigError("config: unknown key \"" + it.key() + "\" in " + path);
    }
}

inline double as_number(const ordered_json& j, const std::string& path) {
    if (!j.is_number())
        throw ConfigError("config: " + path + " must be a number");
    return j.get<double>();
}

inline int as_int(const ordered_json& j, const std::string& path) {
    if (!j.is_number_integer())
        throw ConfigError("config: " + path + " must be an integer");
    return j.get<int>();
}

inline std::string as_string(const ordered_json& j, const std::string& path) {
    if (!j.is_string())
        throw ConfigError("config: " + path + " must be a string");
    return j.get<std::string>();
}

inline Eigen::VectorXd as_vector(const ordered_json& j, const std::string& path) {
    if (!j.is_array() || j.empty())
        throw ConfigError("config: " + path + " must be a non-empty array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (size_t i = 0; i < j.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = as_number(j[i], path + "[" + std::to_string(i) + "]");
    return v;
}

inline Eigen::MatrixXd as_points(const ordered_json& j, const std::string& path) {
    if (!j.is_array() || j.empty())
        throw ConfigError("config: " + path + " must be a non-empty array of points");
    const Eigen::VectorXd first = as_vector(j[0], path + "[0]");
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(j.size()), first.size());
    pts.row(0) = first.transpose();
    for (size_t i = 1; i < j.size(); ++i) {
        const Eigen::VectorXd row = as_vector(j[i], path + "[" + std::to_string(i) + "]");
        if (row.size() != first.size())
            throw ConfigError("config: " + path + " rows have mixed dimensions");
        pts.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return pts;
}

inline KernelConfig parse_kernel(const ordered_json& j) {
    require_object(j, "kernel");
    check_keys(j, "kernel", {"dimension", "order", "epsilon", "epsilon_factor", "frostman_h"});
    KernelConfig k;
    if (j.contains("dimension")) k.dimension = as_int(j["dimension"], "kernel.dimension");
    if (j.contains("order")) k.order = as_number(j["order"], "kernel.order");
    if (j.contains("epsilon")) {
        const auto& e = j["epsilon"];
        if (e.is_string()) {
            if (e.get<std::string>() != "auto")
                throw ConfigError("config: kernel.epsilon must be a number or \"auto\"");
        } else {
            k.epsilon = as_number(e, "kernel.epsilon");
        }
    }
    if (j.contains("epsilon_factor"))
        k.epsilon_factor = as_number(j["epsilon_factor"], "kernel.epsilon_factor");
    if (j.contains("frostman_h")) k.frostman_h = as_number(j["frostman_h"], "kernel.frostman_h");
    if (!(k.epsilon_factor > 0.0))
        throw ConfigError("config: kernel.epsilon_factor must be positive");
    return k;
}

inline GeometryConfig parse_geometry(const ordered_json& j) {
    require_object(j, "geometry");
    if (!j.contains("type"))
        throw ConfigError("config: geometry.type is required");
    GeometryConfig g;
    g.type = as_string(j["type"], "geometry.type");
    if (g.type == "grid") {
        check_keys(j, "geometry", {"type", "origin", "spacing", "shape"});
        if (!j.contains("origin") || !j.contains("spacing") || !j.contains("shape"))
            throw ConfigError("config: grid geometry needs origin, spacing, shape");
        g.origin = as_vector(j["origin"], "geometry.origin");
        if (j["spacing"].is_array())
            g.spacing = as_vector(j["spacing"], "geometry.spacing");
        else
            g.spacing = Eigen::VectorXd::Constant(g.origin.size(),
                                                  as_number(j["spacing"], "geometry.spacing"));
        if (!j["shape"].is_array() || j["shape"].empty())
            throw ConfigError("config: geometry.shape must be a non-empty integer array");
        for (size_t i = 0; i < j["shape"].size(); ++i) {
            const int s = as_int(j["shape"][i], "geometry.shape[" + std::to_string(i) + "]");
            if (s < 1) throw ConfigError("config: geometry.shape entries must be >= 1");
            g.shape.push_back(s);
        }
        if (static_cast<Eigen::Index>(g.shape.size()) != g.origin.size() ||
            g.spacing.size() != g.origin.size())
            throw ConfigError("config: grid origin/spacing/shape dimensions disagree");
        if ((g.spacing.array() <= 0.0).any())
            throw ConfigError("config: geometry.spacing must be positive");
    } else if (g.type == "ball_shell") {
        check_keys(j, "geometry", {"type", "center", "radius", "count"});
        if (!j.contains("center") || !j.contains("radius") || !j.contains("count"))
            throw ConfigError("config: ball_shell geometry needs center, radius, count");
        const Eigen::VectorXd c = as_vector(j["center"], "geometry.center");
        if (c.size() != 3)
            throw ConfigError("config: ball_shell center must have 3 coordinates");
        g.center = c;
        g.radius = as_number(j["radius"], "geometry.radius");
        g.count = as_int(j["count"], "geometry.count");
        if (!(g.radius > 0.0)) throw ConfigError("config: geometry.radius must be positive");
        if (g.count < 4) throw ConfigError("config: geometry.count must be >= 4");
    } else if (g.type == "point_list") {
        check_keys(j, "geometry", {"type", "points", "quad_weights"});
        if (!j.contains("points"))
            throw ConfigError("config: point_list geometry needs points");
        g.points = as_points(j["points"], "geometry.points");
        if (j.contains("quad_weights")) {
            g.quad_weights = as_vector(j["quad_weights"], "geometry.quad_weights");
            if (g.quad_weights->size() != g.points.rows())
                throw ConfigError("config: geometry.quad_weights count != point count");
        }
    } else {
        throw ConfigError("config: geometry.type must be grid, ball_shell or point_list");
    }
    return g;
}

inline RegionConfig parse_region(const ordered_json& j) {
    require_object(j, "region");
    if (!j.contains("type"))
        throw ConfigError("config: region.type is required");
    RegionConfig r;
    r.type = as_string(j["type"], "region.type");
    if (r.type == "ball") {
        check_keys(j, "region", {"type", "center", "radius"});
        if (!j.contains("center") || !j.contains("radius"))
            throw ConfigError("config: ball region needs center and radius");
        r.center = as_vector(j["center"], "region.center");
        r.radius = as_number(j["radius"], "region.radius");
        if (!(r.radius > 0.0)) throw ConfigError("config: region.radius must be positive");
    } else if (r.type == "box") {
        check_keys(j, "region", {"type", "min", "max"});
        if (!j.contains("min") || !j.contains("max"))
            throw ConfigError("config: box region needs min and max");
        r.box_min = as_vector(j["min"], "region.min");
        r.box_max = as_vector(j["max"], "region.max");
        if (r.box_min.size() != r.box_max.size())
            throw ConfigError("config: region min/max dimensions disagree");
    } else if (r.type == "indices") {
        check_keys(j, "region", {"type", "indices"});
        if (!j.contains("indices") || !j["indices"].is_array() || j["indices"].empty())
            throw ConfigError("config: indices region needs a non-empty index array");
        for (size_t i = 0; i < j["indices"].size(); ++i) {
            const int v = as_int(j["indices"][i], "region.indices[" + std::to_string(i) + "]");
            if (v < 0) throw ConfigError("config: region.indices entries must be >= 0");
            r.indices.push_back(v);
        }
    } else {
        throw ConfigError("config: region.type must be ball, box or indices");
    }
    return r;
}

inline SourceConfig parse_source(const ordered_json& j) {
    require_object(j, "source");
    if (!j.contains("type"))
        throw ConfigError("config: source.type is required");
    SourceConfig s;
    s.type = as_string(j["type"], "source.type");
    if (s.type == "point_masses") {
        check_keys(j, "source", {"type", "points", "weights"});
        if (!j.contains("points") || !j.contains("weights"))
            throw ConfigError("config: point_masses source needs points and weights");
        s.points = as_points(j["points"], "source.points");
        s.weights = as_vector(j["weights"], "source.weights");
        if (s.weights.size() != s.points.rows())
            throw ConfigError("config: source weight count != source point count");
        if ((s.weights.array() < 0.0).any())
            throw ConfigError("config: source weights must be >= 0");
    } else if (s.type == "uniform_on_region") {
        check_keys(j, "source", {"type", "total_mass"});
        if (j.contains("total_mass"))
            s.total_mass = as_number(j["total_mass"], "source.total_mass");
        if (!(s.total_mass > 0.0))
            throw ConfigError("config: source.total_mass must be positive");
    } else {
        throw ConfigError("config: source.type must be point_masses or uniform_on_region");
    }
    return s;
}

inline SolverOptions parse_solver(const ordered_json& j) {
    require_object(j, "solver");
    check_keys(j, "solver", {"tol", "max_iter", "mode"});
    SolverOptions s;
    if (j.contains("tol")) s.tol = as_number(j["tol"], "solver.tol");
    if (j.contains("max_iter")) s.max_iter = as_int(j["max_iter"], "solver.max_iter");
    if (j.contains("mode")) {
        const std::string m = as_string(j["mode"], "solver.mode");
        if (m == "gauss_capped") s.mode = BalayageMode::gauss_capped;
        else if (m == "projection") s.mode = BalayageMode::projection;
        else throw ConfigError("config: solver.mode must be gauss_capped or projection");
    }
    if (!(s.tol > 0.0)) throw ConfigError("config: solver.tol must be positive");
    return s;
}

inline ExhaustionConfig parse_exhaustion(const ordered_json& j) {
    require_object(j, "exhaustion");
    check_keys(j, "exhaustion", {"stages", "strategy"});
    ExhaustionConfig e;
    if (j.contains("stages")) e.stages = as_int(j["stages"], "exhaustion.stages");
    if (e.stages < 1) throw ConfigError("config: exhaustion.stages must be >= 1");
    if (j.contains("strategy")) {
        const std::string s = as_string(j["strategy"], "exhaustion.strategy");
        if (s == "radial") e.strategy = ExhaustionStrategy::radial;
        else if (s == "random_nested") e.strategy = ExhaustionStrategy::random_nested;
        else throw ConfigError("config: exhaustion.strategy must be radial or random_nested");
    }
    return e;
}

inline OracleConfig parse_oracle(const ordered_json& j) {
    require_object(j, "oracle");
    check_keys(j, "oracle", {"levels", "base_count", "epsilon_factor"});
    OracleConfig o;
    if (j.contains("levels")) o.levels = as_int(j["levels"], "oracle.levels");
    if (j.contains("base_count")) o.base_count = as_int(j["base_count"], "oracle.base_count");
    if (j.contains("epsilon_factor"))
        o.epsilon_factor = as_number(j["epsilon_factor"], "oracle.epsilon_factor");
    if (o.levels < 2) throw ConfigError("config: oracle.levels must be >= 2");
    if (o.base_count < 4) throw ConfigError("config: oracle.base_count must be >= 4");
    if (!(o.epsilon_factor > 0.0))
        throw ConfigError("config: oracle.epsilon_factor must be positive");
    return o;
}

} // namespace cfg

inline ScenarioConfig parse_scenario_config(const ordered_json& j) {
    cfg::require_object(j, "top level");
    cfg::check_keys(j, "top level",
                    {"kernel", "geometry", "region", "source", "solver", "exhaustion",
                     "oracle", "seed"});
    for (const char* required : {"kernel", "geometry", "region", "source"})
        if (!j.contains(required))
            throw ConfigError(std::string("config: missing required section \"") + required +
                              "\"");
    ScenarioConfig c;
    c.kernel = cfg::parse_kernel(j["kernel"]);
    c.geometry = cfg::parse_geometry(j["geometry"]);
    c.region = cfg::parse_region(j["region"]);
    c.source = cfg::parse_source(j["source"]);
    if (j.contains("solver")) c.solver = cfg::parse_solver(j["solver"]);
    if (j.contains("exhaustion")) c.exhaustion = cfg::parse_exhaustion(j["exhaustion"]);
    if (j.contains("oracle")) c.oracle = cfg::parse_oracle(j["oracle"]);
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
            throw ConfigError("config: seed must be a non-negative integer");
        const auto s = j["seed"].get<std::int64_t>();
        if (s < 0) throw ConfigError("config: seed must be a non-negative integer");
        c.seed = static_cast<std::uint64_t>(s);
    }
    return c;
}

inline ScenarioConfig load_scenario_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: parse failure in " + path + ": " + e.what());
    }
    return parse_scenario_config(j);
}

// ---------------------------------------------------------------------------
// Scenario assembly.

struct BuiltScenario {
    NodeSetPtr nodes;
    KernelSpec spec;  // epsilon resolved to a number
    std::shared_ptr<const KernelMatrix> matrix;
    RegionMask region;
    DiscreteMeasure omega;
    SolverOptions solver;
    std::uint64_t seed = 0;

    [[nodiscard]] const KernelMatrix& M() const { return *matrix; }
};

namespace cfg {

inline Eigen::MatrixXd grid_points(const GeometryConfig& g) {
    const auto dim = static_cast<Eigen::Index>(g.shape.size());
    Eigen::Index total = 1;
    for (int s : g.shape) total *= s;
    Eigen::MatrixXd pts(total, dim);
    std::vector<int> idx(g.shape.size(), 0);
    for (Eigen::Index row = 0; row < total; ++row) {
        for (Eigen::Index d = 0; d < dim; ++d)
            pts(row, d) = g.origin[d] + g.spacing[d] * idx[static_cast<size_t>(d)];
        for (Eigen::Index d = dim - 1; d >= 0; --d) { // last axis fastest
            if (++idx[static_cast<size_t>(d)] < g.shape[static_cast<size_t>(d)]) break;
            idx[static_cast<size_t>(d)] = 0;
        }
    }
    return pts;
}

} // namespace cfg

inline BuiltScenario build_scenario(const ScenarioConfig& c) {
    // Base geometry.
    Eigen::MatrixXd pts;
    Eigen::VectorXd quad;
    if (c.geometry.type == "grid") {
        pts = cfg::grid_points(c.geometry);
        double cell = 1.0;
        for (Eigen::Index d = 0; d < c.geometry.spacing.size(); ++d)
            cell *= c.geometry.spacing[d];
        quad = Eigen::VectorXd::Constant(pts.rows(), cell);
    } else if (c.geometry.type == "ball_shell") {
        const NodeSetPtr shell = shell_nodes(c.geometry.center, c.geometry.radius,
                                             c.geometry.count);
        pts = shell->points();
        quad = shell->quad_weights();
    } else { // point_list
        pts = c.geometry.points;
        quad = c.geometry.quad_weights
                   ? *c.geometry.quad_weights
                   : Eigen::VectorXd::Ones(pts.rows());
    }
    const Eigen::Index base_count = pts.rows();
    const Eigen::Index dim = pts.cols();
    if (dim != c.kernel.dimension)
        throw ConfigError("config: kernel.dimension does not match the geometry dimension");

    // Source measure; off-node point masses are appended as extra nodes.
    Eigen::VectorXd omega_w = Eigen::VectorXd::Zero(base_count);
    std::vector<Eigen::VectorXd> appended_pts;
    std::vector<double> appended_w;
    if (c.source.type == "point_masses") {
        if (c.source.points.cols() != dim)
            throw ConfigError("config: source point dimension does not match the geometry");
        for (Eigen::Index s = 0; s < c.source.points.rows(); ++s) {
            const Eigen::RowVectorXd p = c.source.points.row(s);
            Eigen::Index hit = -1;
            for (Eigen::Index i = 0; i < base_count; ++i)
                if ((pts.row(i).array() == p.array()).all()) { hit = i; break; }
            if (hit >= 0) {
                omega_w[hit] += c.source.weights[s];
            } else {
                appended_pts.emplace_back(p.transpose());
                appended_w.push_back(c.source.weights[s]);
            }
        }
    }

    const auto extra = static_cast<Eigen::Index>(appended_pts.size());
    Eigen::MatrixXd all_pts(base_count + extra, dim);
    all_pts.topRows(base_count) = pts;
    Eigen::VectorXd all_quad(base_count + extra);
    all_quad.head(base_count) = quad;
    std::vector<std::string> labels;
    if (extra > 0) {
        labels.assign(static_cast<size_t>(base_count), "node");
        for (Eigen::Index e = 0; e < extra; ++e) {
            all_pts.row(base_count + e) = appended_pts[static_cast<size_t>(e)].transpose();
            all_quad[base_count + e] = 1.0;
            labels.emplace_back("source");
        }
    }
    NodeSetPtr nodes;
    try {
        nodes = make_nodes(std::move(all_pts), std::move(all_quad), std::move(labels));
    } catch (const ParameterError& e) {
        throw ConfigError(std::string("config: invalid node geometry: ") + e.what());
    }

    // Region mask: predicates see every node (including appended sources);
    // explicit indices refer to base geometry nodes only.
    std::vector<Eigen::Index> members;
    if (c.region.type == "ball") {
        if (c.region.center.size() != dim)
            throw ConfigError("config: region.center dimension does not match the geometry");
        const double slack = c.region.radius + 1e-9 * (1.0 + c.region.radius);
        for (Eigen::Index i = 0; i < nodes->count(); ++i)
            if ((nodes->point(i).transpose() - c.region.center).norm() <= slack)
                members.push_back(i);
    } else if (c.region.type == "box") {
        if (c.region.box_min.size() != dim)
            throw ConfigError("config: region box dimension does not match the geometry");
        for (Eigen::Index i = 0; i < nodes->count(); ++i) {
            const Eigen::VectorXd x = nodes->point(i).transpose();
            if ((x.array() >= c.region.box_min.array()).all() &&
                (x.array() <= c.region.box_max.array()).all())
                members.push_back(i);
        }
    } else { // indices
        for (Eigen::Index v : c.region.indices) {
            if (v >= base_count)
                throw ConfigError("config: region index out of range of the base geometry");
            members.push_back(v);
        }
    }
    if (members.empty())
        throw ConfigError("config: region contains no nodes");
    RegionMask region = RegionMask::from_indices(nodes, members);

    // Source weights on the final node set.
    Eigen::VectorXd w = Eigen::VectorXd::Zero(nodes->count());
    if (c.source.type == "point_masses") {
        w.head(base_count) = omega_w;
        for (Eigen::Index e = 0; e < extra; ++e)
            w[base_count + e] = appended_w[static_cast<size_t>(e)];
    } else { // uniform_on_region
        double qsum = 0.0;
        for (Eigen::Index i : members) qsum += nodes->quad_weight(i);
        for (Eigen::Index i : members)
            w[i] = c.source.total_mass * nodes->quad_weight(i) / qsum;
    }

    // Kernel with resolved epsilon.
    double eps;
    if (c.kernel.epsilon) {
        eps = *c.kernel.epsilon;
    } else {
        if (nodes->count() < 2)
            throw ConfigError("config: kernel.epsilon \"auto\" needs at least two nodes");
        eps = c.kernel.epsilon_factor * nodes->min_spacing();
    }
    KernelSpec spec;
    try {
        spec = KernelSpec(c.kernel.dimension, c.kernel.order, eps, c.kernel.frostman_h);
    } catch (const ParameterError& e) {
        throw ConfigError(std::string("config: invalid kernel: ") + e.what());
    }
    auto matrix = std::make_shared<const KernelMatrix>(spec, nodes);

    return BuiltScenario{nodes,  spec,     std::move(matrix), std::move(region),
                         DiscreteMeasure(nodes, std::move(w)), c.solver, c.seed};
}

// ---------------------------------------------------------------------------
// Report plumbing.

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline ordered_json kernel_json(const KernelSpec& s) {
    return ordered_json{{"dimension", s.dimension},
                        {"order", s.order},
                        {"epsilon", s.epsilon},
                        {"frostman_h", s.frostman_h}};
}

inline ordered_json kkt_json(const KKTReport& k) {
    return ordered_json{{"stationarity_residual", k.stationarity_residual},
                        {"complementarity_residual", k.complementarity_residual},
                        {"feasibility_violation", k.feasibility_violation},
                        {"iterations", k.iterations},
                        {"active_count", k.active_set.size()},
                        {"mass_cap_multiplier", k.mass_cap_multiplier},
                        {"cap_binding", k.cap_binding},
                        {"converged", k.converged},
                        {"objective", k.objective},
                        {"tolerance", k.tolerance}};
}

inline ordered_json balayage_json(const BalayageResult& b) {
    return ordered_json{{"mass", b.mass},
                        {"gauss_value", b.gauss_value},
                        {"potential_on_A_max_gap", b.potential_on_A_max_gap},
                        {"domination_violation", b.domination_violation},
                        {"energy_identity_gap", b.energy_identity_gap},
                        {"kkt", kkt_json(b.kkt)}};
}

inline ordered_json resolved_config_json(const ScenarioConfig& c, const BuiltScenario& b) {
    ordered_json geometry{{"type", c.geometry.type}};
    if (c.geometry.type == "grid") {
        geometry["origin"] = std::vector<double>(c.geometry.origin.begin(),
                                                 c.geometry.origin.end());
        geometry["spacing"] = std::vector<double>(c.geometry.spacing.begin(),
                                                  c.geometry.spacing.end());
        geometry["shape"] = c.geometry.shape;
    } else if (c.geometry.type == "ball_shell") {
        geometry["center"] = std::vector<double>(c.geometry.center.begin(),
                                                 c.geometry.center.end());
        geometry["radius"] = c.geometry.radius;
        geometry["count"] = c.geometry.count;
    } else {
        geometry["points"] = c.geometry.points.rows();  // echoed by size, not content
    }

    ordered_json region{{"type", c.region.type}};
    if (c.region.type == "ball") {
        region["center"] = std::vector<double>(c.region.center.begin(), c.region.center.end());
        region["radius"] = c.region.radius;
    } else if (c.region.type == "box") {
        region["min"] = std::vector<double>(c.region.box_min.begin(), c.region.box_min.end());
        region["max"] = std::vector<double>(c.region.box_max.begin(), c.region.box_max.end());
    } else {
        region["indices"] = c.region.indices;
    }
    region["node_count"] = b.region.count();

    ordered_json source{{"type", c.source.type}};
    if (c.source.type == "point_masses") {
        source["count"] = c.source.points.rows();
        source["total_mass"] = c.source.weights.sum();
    } else {
        source["total_mass"] = c.source.total_mass;
    }

    return ordered_json{
        {"kernel", kernel_json(b.spec)},
        {"geometry", std::move(geometry)},
        {"region", std::move(region)},
        {"source", std::move(source)},
        {"solver",
         ordered_json{{"tol", b.solver.tol},
                      {"max_iter", b.solver.max_iter},
                      {"mode", b.solver.mode == BalayageMode::gauss_capped ? "gauss_capped"
                                                                           : "projection"}}},
        {"exhaustion",
         ordered_json{{"stages", c.exhaustion.stages},
                      {"strategy", c.exhaustion.strategy == ExhaustionStrategy::radial
                                       ? "radial"
                                       : "random_nested"}}},
        {"oracle", ordered_json{{"levels", c.oracle.levels},
                                {"base_count", c.oracle.base_count},
                                {"epsilon_factor", c.oracle.epsilon_factor}}},
        {"seed", b.seed},
        {"node_count", b.nodes->count()}};
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << content;
}

inline void write_report(const std::filesystem::path& out_dir, const ordered_json& report) {
    std::filesystem::create_directories(out_dir);
    write_text_file(out_dir / "report.json", report.dump(2) + "\n");
}

// Columnar per-node dump: index, coordinates, quadrature weight, source
// weight, swept weight, both potentials, region membership.
inline void write_nodes_csv(const std::filesystem::path& out_dir, const BuiltScenario& s,
                            const Eigen::VectorXd& swept_weights) {
    const Eigen::VectorXd pot_omega = s.M().entries() * s.omega.weights();
    const Eigen::VectorXd pot_swept = s.M().entries() * swept_weights;

    std::ostringstream os;
    os << "index";
    for (int d = 0; d < s.nodes->dimension(); ++d) os << ",x" << d;
    os << ",quad_weight,omega_weight,swept_weight,potential_omega,potential_swept,in_region\n";
    for (Eigen::Index i = 0; i < s.nodes->count(); ++i) {
        os << i;
        for (int d = 0; d < s.nodes->dimension(); ++d)
            os << ',' << format_g17(s.nodes->points()(i, d));
        os << ',' << format_g17(s.nodes->quad_weight(i)) << ','
           << format_g17(s.omega.weights()[i]) << ',' << format_g17(swept_weights[i]) << ','
           << format_g17(pot_omega[i]) << ',' << format_g17(pot_swept[i]) << ','
           << (s.region.contains(i) ? 1 : 0) << "\n";
    }
    std::filesystem::create_directories(out_dir);
    write_text_file(out_dir / "nodes.csv", os.str());
}

inline ordered_json report_header(const char* command, const ScenarioConfig& c,
                                  const BuiltScenario& b) {
    return ordered_json{{"tool", ordered_json{{"name", tool_name}, {"version", version_string}}},
                        {"command", command},
                        {"config", resolved_config_json(c, b)}};
}

// ---------------------------------------------------------------------------
// Subcommand runners. Return the process exit code: 0 all assertions pass,
// 3 convergence failure (partial report written), 4 assertion failure.

namespace runners {

struct Check {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string note;
};

inline void add_check(std::vector<Check>& checks, std::string name, double value,
                      double threshold, bool pass, std::string note = "") {
    checks.push_back(Check{std::move(name), pass, value, threshold, std::move(note)});
}

inline ordered_json checks_json(const std::vector<Check>& checks) {
    ordered_json arr = ordered_json::array();
    for (const Check& c : checks) {
        ordered_json j{{"name", c.name},
                       {"pass", c.pass},
                       {"value", c.value},
                       {"threshold", c.threshold}};
        if (!c.note.empty()) j["note"] = c.note;
        arr.push_back(std::move(j));
    }
    return arr;
}

inline bool all_pass(const std::vector<Check>& checks) {
    for (const Check& c : checks)
        if (!c.pass) return false;
    return true;
}

inline int finish(const std::filesystem::path& out_dir, ordered_json& report,
                  std::vector<Check>& checks) {
    const bool ok = all_pass(checks);
    report["checks"] = checks_json(checks);
    report["pass"] = ok;
    write_report(out_dir, report);
    return ok ? 0 : 4;
}

inline int write_convergence_failure(const std::filesystem::path& out_dir,
                                     ordered_json& report, const ConvergenceError& e) {
    report["error"] = e.what();
    report["best_iterate_kkt"] = kkt_json(e.best.report);
    report["pass"] = false;
    write_report(out_dir, report);
    return 3;
}

inline int run_equilibrium(const ScenarioConfig& cfg, const std::filesystem::path& out_dir) {
    const BuiltScenario s = build_scenario(cfg);
    ordered_json report = report_header("equilibrium", cfg, s);
    std::vector<Check> checks;
    try {
        const EquilibriumResult eq = equilibrium_measure(s.M(), s.region, s.solver.tol);
        report["results"] =
            ordered_json{{"capacity", eq.capacity},
                         {"mass", eq.gamma.total_mass()},
                         {"potential_min_on_A", eq.potential_min_on_A},
                         {"potential_max_on_support", eq.potential_max_on_support},
                         {"identity_gap", eq.identity_gap},
                         {"kkt", kkt_json(eq.kkt)}};
        add_check(checks, "solver_converged", eq.kkt.stationarity_residual, eq.kkt.tolerance,
                  eq.kkt.converged);
        add_check(checks, "equilibrium_identity", eq.identity_gap,
                  s.solver.tol * std::max(eq.capacity, 1e-300),
                  eq.identity_gap <= s.solver.tol * std::max(eq.capacity, 1e-300));
        const double pot_gap = std::abs(eq.potential_max_on_support - 1.0);
        add_check(checks, "support_potential_is_one", pot_gap, 10.0 * s.solver.tol,
                  pot_gap <= 10.0 * s.solver.tol);
        write_nodes_csv(out_dir, s, eq.gamma.weights());
    } catch (const ConvergenceError& e) {
        return write_convergence_failure(out_dir, report, e);
    }
    return finish(out_dir, report, checks);
}

inline int run_balayage(const ScenarioConfig& cfg, const std::filesystem::path& out_dir) {
    const BuiltScenario s = build_scenario(cfg);
    ordered_json report = report_header("balayage", cfg, s);
    std::vector<Check> checks;
    try {
        const BalayageResult bal =
            inner_balayage(s.M(), s.omega, s.region, s.solver.mode, s.solver.tol);
        report["results"] = balayage_json(bal);
        report["results"]["omega_mass"] = s.omega.total_mass();

        const Eigen::VectorXd pot_omega = s.M().entries() * s.omega.weights();
        double pot_scale = 1.0;
        for (Eigen::Index i : s.region.indices())
            pot_scale = std::max(pot_scale, std::abs(pot_omega[i]));

        add_check(checks, "solver_converged", bal.kkt.stationarity_residual,
                  bal.kkt.tolerance, bal.kkt.converged);
        const double mass_thr = s.spec.frostman_h * s.omega.total_mass() + 1e-9;
        add_check(checks, "mass_bound", bal.mass, mass_thr, bal.mass <= mass_thr);
        const double self_energy =
            bal.swept.weights().dot(s.M().entries() * bal.swept.weights());
        const double en_thr = 1e-8 * std::max(self_energy, 1e-300);
        add_check(checks, "energy_identity", bal.energy_identity_gap, en_thr,
                  bal.energy_identity_gap <= en_thr);
        add_check(checks, "potential_match_on_support", bal.potential_on_A_max_gap,
                  1e-7 * pot_scale, bal.potential_on_A_max_gap <= 1e-7 * pot_scale);
        write_nodes_csv(out_dir, s, bal.swept.weights());
    } catch (const ConvergenceError& e) {
        return write_convergence_failure(out_dir, report, e);
    }
    return finish(out_dir, report, checks);
}

inline int run_exhaust(const ScenarioConfig& cfg, const std::filesystem::path& out_dir) {
    const BuiltScenario s = build_scenario(cfg);
    ordered_json report = report_header("exhaust", cfg, s);
    std::vector<Check> checks;
    try {
        const Exhaustion ex = build_exhaustion(s.region, cfg.exhaustion.stages,
                                               cfg.exhaustion.strategy, s.seed);
        const ExhaustionReport rep =
            exhaust_and_sweep(s.M(), s.omega, ex, s.solver.tol, s.solver.mode);

        ordered_json stages = ordered_json::array();
        std::ostringstream series;
        series << "stage,region_nodes,mass,distance_to_final,capacity\n";
        for (size_t j = 0; j < rep.stages.size(); ++j) {
            stages.push_back(ordered_json{
                {"region_nodes", ex.stages[j].count()},
                {"mass", rep.stages[j].mass},
                {"gauss_value", rep.stages[j].gauss_value},
                {"distance_to_final", rep.distances_to_final[j]},
                {"capacity", rep.equilibria[j].capacity}});
            series << j << ',' << ex.stages[j].count() << ','
                   << format_g17(rep.stages[j].mass) << ','
                   << format_g17(rep.distances_to_final[j]) << ','
                   << format_g17(rep.equilibria[j].capacity) << "\n";
        }
        report["results"] = ordered_json{
            {"stages", std::move(stages)},
            {"potential_monotonicity_defect", rep.potential_monotonicity_defect},
            {"equilibrium_monotonicity_defect", rep.equilibrium_monotonicity_defect},
            {"distance_monotonicity_defect", rep.distance_monotonicity_defect}};

        const Eigen::VectorXd pot_omega = s.M().entries() * s.omega.weights();
        const double pot_scale = std::max(1.0, pot_omega.cwiseAbs().maxCoeff());
        add_check(checks, "potential_sequence_nondecreasing",
                  rep.potential_monotonicity_defect, 1e-7 * pot_scale,
                  rep.potential_monotonicity_defect <= 1e-7 * pot_scale);
        add_check(checks, "equilibrium_sequence_nondecreasing",
                  rep.equilibrium_monotonicity_defect, 1e-7 * pot_scale,
                  rep.equilibrium_monotonicity_defect <= 1e-7 * pot_scale);
        const double dist_scale = std::max(rep.distances_to_final.front(), 1e-12);
        add_check(checks, "distance_to_final_nonincreasing",
                  rep.distance_monotonicity_defect, 1e-9 * dist_scale,
                  rep.distance_monotonicity_defect <= 1e-9 * dist_scale);

        std::filesystem::create_directories(out_dir);
        write_text_file(out_dir / "series.csv", series.str());
        write_nodes_csv(out_dir, s, rep.stages.back().swept.weights());
    } catch (const ConvergenceError& e) {
        return write_convergence_failure(out_dir, report, e);
    }
    return finish(out_dir, report, checks);
}

inline int run_verify(const ScenarioConfig& cfg, const std::filesystem::path& out_dir,
                      bool perturb) {
    const BuiltScenario s = build_scenario(cfg);
    ordered_json report = report_header("verify", cfg, s);
    report["perturbed_candidate"] = perturb;
    std::vector<Check> checks;
    try {
        const KernelMatrix& M = s.M();
        const double tol = s.solver.tol;
        const BalayageResult bal =
            inner_balayage(M, s.omega, s.region, BalayageMode::gauss_capped, tol);

        // The candidate under test; --perturb scales it to exercise the
        // negative control (every certification check must then fail).
        const DiscreteMeasure candidate =
            perturb ? DiscreteMeasure(s.nodes, 1.1 * bal.swept.weights()) : bal.swept;

        const Eigen::VectorXd pot_omega = M.entries() * s.omega.weights();
        const Eigen::VectorXd pot_cand = M.entries() * candidate.weights();
        double pot_scale = 1.0;
        for (Eigen::Index i : s.region.indices())
            pot_scale = std::max(pot_scale, std::abs(pot_omega[i]));

        add_check(checks, "solver_converged", bal.kkt.stationarity_residual,
                  bal.kkt.tolerance, bal.kkt.converged);

        double cand_gap = 0.0;
        for (Eigen::Index i : bal.kkt.active_set)
            cand_gap = std::max(cand_gap, std::abs(pot_cand[i] - pot_omega[i]));
        add_check(checks, "potential_match_on_support", cand_gap, 1e-7 * pot_scale,
                  cand_gap <= 1e-7 * pot_scale);

        const double self = candidate.weights().dot(M.entries() * candidate.weights());
        const double cross = candidate.weights().dot(pot_omega);
        const double en_gap = std::abs(self - cross);
        add_check(checks, "energy_identity", en_gap, 1e-8 * std::max(self, 1e-300),
                  en_gap <= 1e-8 * std::max(self, 1e-300));

        const double mass_thr = s.spec.frostman_h * s.omega.total_mass() + 1e-9;
        add_check(checks, "mass_bound", candidate.total_mass(), mass_thr,
                  candidate.total_mass() <= mass_thr);

        if (!bal.kkt.cap_binding) {
            const ProjectionResult proj = projection_onto_cone(M, s.omega, s.region, tol);
            const Eigen::VectorXd diff = candidate.weights() - proj.weights;
            const double dist = std::sqrt(std::max(0.0, diff.dot(M.entries() * diff)));
            const double scale = std::max(energy_norm(M, bal.swept), 1e-300);
            add_check(checks, "mode_agreement", dist, 1e-6 * scale, dist <= 1e-6 * scale);
        } else {
            add_check(checks, "mode_agreement", 0.0, 0.0, true,
                      "skipped: mass cap binding, modes legitimately differ");
        }

        const UniquenessReport uniq =
            uniqueness_battery(M, candidate, s.omega, s.region, 16, s.seed, 1e-6);
        add_check(checks, "symmetry_battery", uniq.max_residual, uniq.threshold,
                  uniq.is_balayage);

        const UniquenessReport neg = uniqueness_battery(
            M, DiscreteMeasure(s.nodes, 1.1 * bal.swept.weights()), s.omega, s.region, 16,
            s.seed, 1e-6);
        add_check(checks, "battery_rejects_perturbation", neg.max_residual,
                  100.0 * neg.threshold, neg.max_residual >= 100.0 * neg.threshold);

        const std::vector<Eigen::Index> reg = s.region.indices();
        if (reg.size() >= 2) {
            const std::vector<Eigen::Index> inner_idx(reg.begin(),
                                                      reg.begin() + reg.size() / 2);
            const RegionMask inner = RegionMask::from_indices(s.nodes, inner_idx);
            const RestReport rest = balayage_with_rest(M, s.omega, s.region, inner, tol);
            const double scale = std::max(energy_norm(M, rest.direct.swept), 1e-300);
            add_check(checks, "rest_identity", rest.strong_distance, 1e-6 * scale,
                      rest.strong_distance <= 1e-6 * scale);
        } else {
            add_check(checks, "rest_identity", 0.0, 0.0, true, "skipped: region too small");
        }

        const int stages = std::min<int>(3, static_cast<int>(reg.size()));
        const Exhaustion ex =
            build_exhaustion(s.region, stages, ExhaustionStrategy::radial, s.seed);
        const ExhaustionReport exr = exhaust_and_sweep(M, s.omega, ex, tol);
        const double ex_defect = std::max(exr.potential_monotonicity_defect,
                                          exr.equilibrium_monotonicity_defect);
        add_check(checks, "exhaustion_monotone", ex_defect, 1e-7 * pot_scale,
                  ex_defect <= 1e-7 * pot_scale);

        const MassFormulaReport mf = mass_formula_check(M, s.omega, s.region, tol);
        if (mf.support_alignment_gap <= 1e-6 * pot_scale) {
            add_check(checks, "mass_formula", mf.gap, 1e-6 * std::max(mf.lhs, 1e-300),
                      mf.gap <= 1e-6 * std::max(mf.lhs, 1e-300));
        } else {
            add_check(checks, "mass_formula", mf.gap, 0.0, true,
                      "skipped: region equilibrium potential not uniform on the sweep support");
        }

        const MassProbeReport mp = minimum_mass_check(M, s.omega, s.region, 20, s.seed, tol);
        add_check(checks, "minimum_mass", mp.max_violation, 1e-9,
                  mp.max_violation <= 1e-9);

        const std::vector<DiscreteMeasure> parts = make_battery(s.nodes, 2, s.seed + 17);
        const SignedDiscreteMeasure xi(s.omega, parts[0]);
        const SignedSymmetryReport ss = signed_symmetry_battery(M, xi, s.region, 8, s.seed);
        add_check(checks, "signed_symmetry", ss.max_residual, ss.threshold, ss.pass);

        add_check(checks, "domination_defect_reported", bal.domination_violation,
                  std::numeric_limits<double>::infinity(), true,
                  "informational: kernel-regularization defect");

        report["results"] = ordered_json{{"balayage", balayage_json(bal)},
                                         {"mass_formula",
                                          ordered_json{{"lhs", mf.lhs},
                                                       {"rhs", mf.rhs},
                                                       {"gap", mf.gap},
                                                       {"support_alignment_gap",
                                                        mf.support_alignment_gap}}},
                                         {"symmetry_max_residual", uniq.max_residual},
                                         {"minimum_mass_swept", mp.swept_mass}};
        write_nodes_csv(out_dir, s, candidate.weights());
    } catch (const ConvergenceError& e) {
        return write_convergence_failure(out_dir, report, e);
    }
    return finish(out_dir, report, checks);
}

inline int run_oracle_compare(const ScenarioConfig& cfg, const std::filesystem::path& out_dir,
                              std::optional<int> levels_override) {
    if (cfg.geometry.type != "ball_shell")
        throw ConfigError("oracle-compare: geometry.type must be ball_shell");
    if (cfg.source.type != "point_masses" || cfg.source.points.rows() != 1)
        throw ConfigError("oracle-compare: source must be a single point mass");
    if (cfg.kernel.dimension != 3 || cfg.kernel.order != 2.0)
        throw UnsupportedError("oracle-compare: closed forms exist only for order 2 in "
                               "dimension 3");
    const double source_weight = cfg.source.weights[0];
    if (!(source_weight > 0.0))
        throw ConfigError("oracle-compare: source weight must be positive");

    const BallScenario scenario(cfg.geometry.center, cfg.geometry.radius,
                                cfg.source.points.row(0).transpose());
    const int levels = levels_override.value_or(cfg.oracle.levels);

    const RefinementReport rep = refinement_oracle(scenario, levels, cfg.oracle.base_count,
                                                   cfg.oracle.epsilon_factor, cfg.solver.tol);

    // The library oracle is for a unit source; masses scale linearly.
    const double oracle_mass = source_weight * rep.oracle_mass;

    ordered_json levels_json = ordered_json::array();
    std::ostringstream series;
    series << "level,node_count,epsilon,swept_mass,mass_oracle_gap,capacity,capacity_gap,"
              "density_l1_rel\n";
    std::vector<Check> checks;
    double prev_gap = std::numeric_limits<double>::infinity();
    bool decreasing = true;
    for (size_t l = 0; l < rep.levels.size(); ++l) {
        const RefinementLevel& lvl = rep.levels[l];
        const double mass = source_weight * lvl.swept_mass;
        const double gap = std::abs(mass - oracle_mass);
        decreasing = decreasing && gap < prev_gap;
        prev_gap = gap;
        levels_json.push_back(ordered_json{{"node_count", lvl.node_count},
                                           {"epsilon", lvl.epsilon},
                                           {"swept_mass", mass},
                                           {"mass_oracle_gap", gap},
                                           {"capacity", lvl.capacity},
                                           {"capacity_gap", lvl.capacity_gap},
                                           {"density_l1_rel", lvl.density_l1_rel},
                                           {"potential_gap", lvl.potential_gap},
                                           {"domination_violation", lvl.domination_violation}});
        series << l << ',' << lvl.node_count << ',' << format_g17(lvl.epsilon) << ','
               << format_g17(mass) << ',' << format_g17(gap) << ','
               << format_g17(lvl.capacity) << ',' << format_g17(lvl.capacity_gap) << ','
               << format_g17(lvl.density_l1_rel) << "\n";
    }
    const RefinementLevel& finest = rep.levels.back();

    ordered_json report{{"tool", ordered_json{{"name", tool_name}, {"version", version_string}}},
                        {"command", "oracle-compare"},
                        {"oracle_mass", oracle_mass},
                        {"levels", std::move(levels_json)},
                        {"config",
                         ordered_json{{"radius", cfg.geometry.radius},
                                      {"source_distance", scenario.source_distance()},
                                      {"source_weight", source_weight},
                                      {"levels", levels},
                                      {"base_count", cfg.oracle.base_count},
                                      {"epsilon_factor", cfg.oracle.epsilon_factor},
                                      {"tol", cfg.solver.tol}}}};

    add_check(checks, "mass_gap_strictly_decreasing", prev_gap, oracle_mass, decreasing);
    const double mass_rel = std::abs(finest.swept_mass - rep.oracle_mass) / rep.oracle_mass;
    add_check(checks, "finest_mass_within_5pct", mass_rel, 0.05, mass_rel <= 0.05);
    const double cap_rel = finest.capacity_gap / scenario.radius;
    add_check(checks, "capacity_within_5pct", cap_rel, 0.05, cap_rel <= 0.05);
    add_check(checks, "density_l1_within_10pct", finest.density_l1_rel, 0.10,
              finest.density_l1_rel <= 0.10);

    std::filesystem::create_directories(out_dir);
    write_text_file(out_dir / "series.csv", series.str());
    return finish(out_dir, report, checks);
}

} // namespace runners

} // namespace sweep
