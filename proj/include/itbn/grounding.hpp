#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "itbn/model.hpp"
#include "itbn/observations.hpp"

namespace itbn {

enum class ParentKind { autoregressive, gamma };

struct ParentRef {
    int node = -1;
    ParentKind kind = ParentKind::gamma;
    int gamma_index = 0; // position in the child's gamma coefficient vector
};

struct GroundedNode {
    int process = 0;
    int slice = 0; // invented nodes anchor to the slice that reads them
    double time = 0.0;
    double gap = 0.0; // realized slice gap, 0 at slice 0
    bool invented = false;
    bool pre_grid = false; // read time precedes the grid start
    std::vector<ParentRef> parents;
};

// Time match tolerance for binding delayed reads onto grid nodes.
inline constexpr double kTimeMatchTol = 1e-9;

struct UnrollOptions {
    // Learning wants rows dropped rather than a hard failure when a delayed
    // read points before the grid start; inference keeps the error.
    bool allow_pre_grid_reads = false;
};

// The ITBN template instantiated on a concrete sequence of slice times: one
// node per (process, slice) plus invented nodes for delayed reads that fall
// off the grid.
class GroundedNetwork {
public:
    GroundedNetwork(const ItbnStructure& structure, std::vector<double> slice_times,
                    std::string entity, const UnrollOptions& options) {
        require_valid(structure);
        if (slice_times.empty()) throw_data("cannot ground on an empty timeline");
        for (std::size_t j = 1; j < slice_times.size(); ++j)
            if (!(slice_times[j] > slice_times[j - 1]))
                throw_data("slice times must be strictly increasing");
        structure_ = &structure;
        slice_times_ = std::move(slice_times);
        entity_ = std::move(entity);
        build(options);
    }

    const ItbnStructure& structure() const { return *structure_; }
    const std::string& entity() const { return entity_; }

    int process_count() const { return structure_->process_count(); }
    int slice_count() const { return static_cast<int>(slice_times_.size()); }
    double slice_time(int j) const { return slice_times_[static_cast<std::size_t>(j)]; }
    const std::vector<double>& slice_times() const { return slice_times_; }

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t regular_count() const {
        return slice_times_.size() * static_cast<std::size_t>(process_count());
    }
    std::size_t invented_count() const { return nodes_.size() - regular_count(); }

    const GroundedNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    const std::vector<GroundedNode>& nodes() const { return nodes_; }

    int node_of(int process, int slice) const {
        if (process < 0 || process >= process_count() || slice < 0 || slice >= slice_count())
            throw_usage("node (" + std::to_string(process) + ", " + std::to_string(slice) +
                        ") is outside the grounded network");
        return slice * process_count() + process;
    }

    std::string node_name(int id) const {
        const GroundedNode& n = node(id);
        const std::string& p = structure_->processes[static_cast<std::size_t>(n.process)].name;
        if (n.invented) return p + "@t=" + std::to_string(n.time);
        return p + "@" + std::to_string(n.slice);
    }

    // Kahn order with node-id tie break; throws if the graph has a cycle.
    std::vector<int> topological_order() const {
        const int n = static_cast<int>(nodes_.size());
        std::vector<int> indegree(static_cast<std::size_t>(n), 0);
        std::vector<std::vector<int>> children(static_cast<std::size_t>(n));
        for (int v = 0; v < n; ++v)
            for (const ParentRef& ref : nodes_[static_cast<std::size_t>(v)].parents) {
                ++indegree[static_cast<std::size_t>(v)];
                children[static_cast<std::size_t>(ref.node)].push_back(v);
            }
        std::vector<int> ready;
        for (int v = 0; v < n; ++v)
            if (indegree[static_cast<std::size_t>(v)] == 0) ready.push_back(v);
        std::vector<int> order;
        order.reserve(static_cast<std::size_t>(n));
        while (!ready.empty()) {
            std::pop_heap(ready.begin(), ready.end(), std::greater<>());
            const int v = ready.back();
            ready.pop_back();
            order.push_back(v);
            for (int w : children[static_cast<std::size_t>(v)])
                if (--indegree[static_cast<std::size_t>(w)] == 0) {
                    ready.push_back(w);
                    std::push_heap(ready.begin(), ready.end(), std::greater<>());
                }
        }
        if (order.size() != nodes_.size()) throw_numeric("grounded network contains a cycle");
        return order;
    }

private:
    void build(const UnrollOptions& options) {
        const int m = process_count();
        const int n = slice_count();
        nodes_.resize(static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < m; ++i) {
                GroundedNode& node = nodes_[static_cast<std::size_t>(node_of(i, j))];
                node.process = i;
                node.slice = j;
                node.time = slice_times_[static_cast<std::size_t>(j)] +
                            structure_->processes[static_cast<std::size_t>(i)].offset;
                node.gap = j > 0 ? slice_times_[static_cast<std::size_t>(j)] -
                                       slice_times_[static_cast<std::size_t>(j - 1)]
                                 : 0.0;
            }
        }
        // Slice 0 carries the initial marginals; edges instantiate from slice 1.
        for (int j = 1; j < n; ++j) {
            for (int i = 0; i < m; ++i) {
                GroundedNode& child = nodes_[static_cast<std::size_t>(node_of(i, j))];
                if (structure_->has_autoregressive(i))
                    child.parents.push_back({node_of(i, j - 1), ParentKind::autoregressive, 0});
                const auto gamma_edges = structure_->gamma_edges_into(i);
                for (std::size_t g = 0; g < gamma_edges.size(); ++g) {
                    const EdgeDecl& edge = structure_->edges[static_cast<std::size_t>(gamma_edges[g])];
                    const int parent = structure_->process_index(edge.parent);
                    if (edge.slice_lag == 1) {
                        child.parents.push_back({node_of(parent, j - 1), ParentKind::gamma,
                                                 static_cast<int>(g)});
                    } else if (edge.delay == 0.0) {
                        child.parents.push_back({node_of(parent, j), ParentKind::gamma,
                                                 static_cast<int>(g)});
                    } else {
                        const double read_time = child.time - edge.delay;
                        const int bound = bind_delayed(parent, read_time, j, options);
                        child.parents.push_back({bound, ParentKind::gamma, static_cast<int>(g)});
                    }
                }
            }
        }
    }

    // Binds a delayed read: an exact grid node at or before the reading slice
    // when one exists, otherwise an invented node at the read time.
    int bind_delayed(int parent, double read_time, int reader_slice, const UnrollOptions& options) {
        const double offset = structure_->processes[static_cast<std::size_t>(parent)].offset;
        for (int l = reader_slice; l >= 0; --l) {
            const double node_time = slice_times_[static_cast<std::size_t>(l)] + offset;
            if (std::abs(node_time - read_time) <= kTimeMatchTol) return node_of(parent, l);
            if (node_time < read_time - kTimeMatchTol) break;
        }
        const bool pre_grid = read_time < slice_times_.front() + offset - kTimeMatchTol;
        if (pre_grid && !options.allow_pre_grid_reads)
            throw_data("delay out of range: " +
                       structure_->processes[static_cast<std::size_t>(parent)].name + " read at t=" +
                       std::to_string(read_time) + " before the grid start");
        const auto key = std::make_pair(parent, read_time);
        auto it = invented_index_.find(key);
        if (it != invented_index_.end()) return it->second;
        GroundedNode node;
        node.process = parent;
        node.slice = reader_slice;
        node.time = read_time;
        node.invented = true;
        node.pre_grid = pre_grid;
        nodes_.push_back(std::move(node));
        const int id = static_cast<int>(nodes_.size()) - 1;
        invented_index_.emplace(key, id);
        return id;
    }

    const ItbnStructure* structure_ = nullptr;
    std::vector<double> slice_times_;
    std::string entity_;
    std::vector<GroundedNode> nodes_;
    std::map<std::pair<int, double>, int> invented_index_;
};

inline GroundedNetwork unroll(const ItbnStructure& structure, const Timeline& timeline,
                              const UnrollOptions& options = {}) {
    return GroundedNetwork(structure, timeline.times(), timeline.entity(), options);
}

inline GroundedNetwork unroll(const ItbnStructure& structure, std::vector<double> slice_times,
                              std::string entity = "", const UnrollOptions& options = {}) {
    return GroundedNetwork(structure, std::move(slice_times), std::move(entity), options);
}

// Per-node linear conditionals materialized against concrete parameters.
// Invented nodes carry no conditional; they must be bound to evidence.
struct ResolvedCpds {
    std::vector<Family> family;
    std::vector<double> intercept;           // alpha(gap) or the initial mean/logit
    std::vector<double> noise_precision;     // tau (Gaussian only)
    std::vector<std::vector<double>> weight; // aligned with node.parents

    bool all_gaussian = true;
};

inline ResolvedCpds resolve(const GroundedNetwork& grounded, const ItbnParams& params) {
    const ItbnStructure& structure = grounded.structure();
    const std::size_t n = grounded.node_count();
    ResolvedCpds out;
    out.family.resize(n, Family::gaussian);
    out.intercept.assign(n, 0.0);
    out.noise_precision.assign(n, 0.0);
    out.weight.resize(n);
    for (std::size_t id = 0; id < n; ++id) {
        const GroundedNode& node = grounded.node(static_cast<int>(id));
        const ProcessDecl& decl = structure.processes[static_cast<std::size_t>(node.process)];
        out.family[id] = decl.family;
        if (decl.family != Family::gaussian) out.all_gaussian = false;
        if (node.invented) continue;
        const ProcessParams& pp = params.for_process(decl.name);
        if (node.slice == 0) {
            pp.initial.check();
            if (pp.initial.family != decl.family)
                throw_data("initial CPD family mismatch for process '" + decl.name + "'");
            if (decl.family == Family::gaussian) {
                out.intercept[id] = pp.initial.mean;
                out.noise_precision[id] = pp.initial.precision;
            } else {
                const double p = pp.initial.probability;
                out.intercept[id] = std::log(p / (1.0 - p));
            }
            continue;
        }
        if (family_of(pp.cpd) != decl.family)
            throw_data("CPD family mismatch for process '" + decl.name + "'");
        const CpdTemplate& tmpl = predictor_of(pp.cpd);
        out.intercept[id] = eval_coefficient(tmpl.alpha, node.gap);
        if (const auto* g = std::get_if<GaussianLinearCpd>(&pp.cpd)) {
            g->check();
            out.noise_precision[id] = g->precision;
        }
        out.weight[id].reserve(node.parents.size());
        for (const ParentRef& ref : node.parents) {
            if (ref.kind == ParentKind::autoregressive) {
                if (!tmpl.beta)
                    throw_data("process '" + decl.name + "' has an AR edge but no beta spline");
                out.weight[id].push_back(eval_coefficient(*tmpl.beta, node.gap));
            } else {
                if (ref.gamma_index >= tmpl.gamma.size())
                    throw_data("gamma coefficient vector too short for process '" + decl.name + "'");
                out.weight[id].push_back(tmpl.gamma(ref.gamma_index));
            }
        }
    }
    return out;
}

// Evidence: values bound to grounded node ids.
class Evidence {
public:
    void set(int node, double value) { values_[node] = value; }
    bool has(int node) const { return values_.count(node) > 0; }
    double value(int node) const { return values_.at(node); }
    const std::map<int, double>& values() const { return values_; }
    std::size_t size() const { return values_.size(); }

    static Evidence none() { return Evidence{}; }

private:
    std::map<int, double> values_;
};

struct BindOptions {
    bool interpolate = false;
};

struct BindResult {
    Evidence evidence;
    int interpolated = 0;            // invented-node values filled by interpolation
    std::vector<int> unresolved;     // invented nodes without a value
};

// Binds an entity's observations onto a grounded network: regular nodes take
// observed values at their slice; invented nodes resolve by exact time match,
// then by interpolation when enabled.
inline BindResult bind_observations(const GroundedNetwork& grounded, const ObservationSet& data,
                                    const std::string& entity_id, const BindOptions& options = {}) {
    const auto& entity = data.entity(entity_id);
    BindResult out;
    const int m = grounded.process_count();
    const int n = grounded.slice_count();
    if (static_cast<int>(entity.timeline.size()) != n)
        throw_data("entity '" + entity_id + "' timeline does not match the grounded network");
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i)
            if (auto v = entity.value(i, j)) out.evidence.set(grounded.node_of(i, j), *v);
    for (std::size_t id = grounded.regular_count(); id < grounded.node_count(); ++id) {
        const GroundedNode& node = grounded.node(static_cast<int>(id));
        std::optional<double> value;
        if (!node.pre_grid) {
            const auto& row = entity.values[static_cast<std::size_t>(node.process)];
            for (std::size_t j = 0; j < entity.timeline.size(); ++j)
                if (row[j] && std::abs(entity.timeline.time(j) - node.time) <= kTimeMatchTol) {
                    value = row[j];
                    break;
                }
            if (!value && options.interpolate) {
                value = data.interpolate(entity, node.process, node.time);
                if (value) ++out.interpolated;
            }
        }
        if (value)
            out.evidence.set(static_cast<int>(id), *value);
        else
            out.unresolved.push_back(static_cast<int>(id));
    }
    return out;
}

struct NodeCountComparison {
    long long itbn_nodes = 0;
    long long dbn_nodes = 0;
};

// Compactness comparison for a plain hidden-process count per slice.
inline NodeCountComparison node_count_comparison(int hidden_processes,
                                                 const std::vector<Timeline>& timelines) {
    if (hidden_processes < 1) throw_usage("hidden process count must be at least 1");
    NodeCountComparison out;
    for (const Timeline& t : timelines) {
        out.itbn_nodes += static_cast<long long>(hidden_processes) * static_cast<long long>(t.size());
        out.dbn_nodes += static_cast<long long>(hidden_processes) * discrete_expansion_size(t);
    }
    return out;
}

// Structure overload: counts every unrolled node (including invented ones)
// against the discrete-time expansion of the same processes.
inline NodeCountComparison node_count_comparison(const ItbnStructure& structure,
                                                 const std::vector<Timeline>& timelines) {
    NodeCountComparison out;
    for (const Timeline& t : timelines) {
        const GroundedNetwork grounded = unroll(structure, t);
        out.itbn_nodes += static_cast<long long>(grounded.node_count());
        out.dbn_nodes += static_cast<long long>(structure.process_count()) * discrete_expansion_size(t);
    }
    return out;
}

} // namespace itbn
