#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "itbn/decimal.hpp"
#include "itbn/errors.hpp"
#include "itbn/splines.hpp"

namespace itbn {

enum class Family { gaussian, bernoulli_logit };

inline const char* family_name(Family f) {
    return f == Family::gaussian ? "gaussian" : "bernoulli-logit";
}

// Spline hyperparameters before knots are resolved against data.
struct SplineConfig {
    int degree = 0;
    std::optional<std::vector<double>> knots; // explicit; nullopt = quantile rule
    int knot_count = 0;                       // used when knots is nullopt
};

struct ProcessDecl {
    std::string name;
    Family family = Family::gaussian;
    double offset = 0.0; // node placement offset within a slice
    SplineConfig alpha;  // varying intercept alpha(gap)
    SplineConfig beta;   // varying autoregressive coefficient beta(gap)
    double lambda = 0.0; // ridge weight on knot coefficients
};

enum class EdgeRole { gamma, autoregressive };

// Parent link in the template. slice_lag 0 binds the parent inside the child's
// slice, 1 binds the previous slice. Effect delays (parent value read at
// child-time minus delay) are only meaningful on intra-slice gamma edges.
struct EdgeDecl {
    std::string parent;
    std::string child;
    int slice_lag = 0;
    double delay = 0.0;
    EdgeRole role = EdgeRole::gamma;
};

struct ItbnStructure {
    std::vector<ProcessDecl> processes;
    std::vector<EdgeDecl> edges;
    Resolution resolution;

    int process_index(const std::string& name) const {
        for (std::size_t i = 0; i < processes.size(); ++i)
            if (processes[i].name == name) return static_cast<int>(i);
        return -1;
    }

    const ProcessDecl& process(int index) const { return processes.at(static_cast<std::size_t>(index)); }

    int process_count() const { return static_cast<int>(processes.size()); }

    // Gamma edges into a process, in declaration order; this order defines the
    // layout of the gamma coefficient vector.
    std::vector<int> gamma_edges_into(int process) const {
        std::vector<int> out;
        const std::string& name = processes.at(static_cast<std::size_t>(process)).name;
        for (std::size_t e = 0; e < edges.size(); ++e)
            if (edges[e].child == name && edges[e].role == EdgeRole::gamma)
                out.push_back(static_cast<int>(e));
        return out;
    }

    std::optional<int> autoregressive_edge(int process) const {
        const std::string& name = processes.at(static_cast<std::size_t>(process)).name;
        for (std::size_t e = 0; e < edges.size(); ++e)
            if (edges[e].child == name && edges[e].role == EdgeRole::autoregressive)
                return static_cast<int>(e);
        return std::nullopt;
    }

    bool has_autoregressive(int process) const { return autoregressive_edge(process).has_value(); }
};

// Reports every violated template invariant; empty means the structure is
// well formed.
inline std::vector<std::string> validate(const ItbnStructure& structure) {
    std::vector<std::string> violations;
    const int m = structure.process_count();
    if (m == 0) violations.push_back("structure declares no processes");
    for (int i = 0; i < m; ++i) {
        const ProcessDecl& p = structure.processes[static_cast<std::size_t>(i)];
        if (p.name.empty()) violations.push_back("process " + std::to_string(i) + " has an empty name");
        for (int j = i + 1; j < m; ++j)
            if (p.name == structure.processes[static_cast<std::size_t>(j)].name)
                violations.push_back("duplicate process name '" + p.name + "'");
        if (p.alpha.degree < 0 || p.beta.degree < 0)
            violations.push_back("process '" + p.name + "': spline degree must be nonnegative");
        if (p.alpha.knot_count < 0 || p.beta.knot_count < 0)
            violations.push_back("process '" + p.name + "': knot count must be nonnegative");
        for (const SplineConfig* cfg : {&p.alpha, &p.beta}) {
            if (!cfg->knots) continue;
            for (std::size_t k = 1; k < cfg->knots->size(); ++k)
                if (!((*cfg->knots)[k] > (*cfg->knots)[k - 1]))
                    violations.push_back("process '" + p.name + "': knots must be strictly increasing");
        }
        if (p.lambda < 0.0) violations.push_back("process '" + p.name + "': lambda must be nonnegative");
    }
    std::map<std::string, int> ar_edges_per_child;
    for (std::size_t e = 0; e < structure.edges.size(); ++e) {
        const EdgeDecl& edge = structure.edges[e];
        const std::string tag = "edge " + edge.parent + " -> " + edge.child;
        if (structure.process_index(edge.parent) < 0)
            violations.push_back(tag + ": unknown parent process");
        if (structure.process_index(edge.child) < 0)
            violations.push_back(tag + ": unknown child process");
        if (edge.slice_lag < 0 || edge.slice_lag > 1)
            violations.push_back(tag + ": parent outside the child's own or previous slice (slice lag " +
                                 std::to_string(edge.slice_lag) + ")");
        if (edge.delay < 0.0) violations.push_back(tag + ": delay must be nonnegative");
        if (edge.role == EdgeRole::autoregressive) {
            if (edge.slice_lag != 1 || edge.parent != edge.child)
                violations.push_back(tag + ": autoregressive role is only allowed on previous-slice self-edges");
            if (edge.delay != 0.0)
                violations.push_back(tag + ": autoregressive edges cannot carry a delay");
            ++ar_edges_per_child[edge.child];
        } else if (edge.slice_lag == 1 && edge.delay != 0.0) {
            violations.push_back(tag + ": delays are only supported on intra-slice edges");
        }
    }
    for (const auto& [child, count] : ar_edges_per_child)
        if (count > 1)
            violations.push_back("process '" + child + "' has " + std::to_string(count) +
                                 " autoregressive edges (at most one is allowed)");

    // Cycle check over the zero-delay intra-slice subgraph.
    std::vector<std::vector<int>> adjacency(static_cast<std::size_t>(std::max(m, 0)));
    for (const EdgeDecl& edge : structure.edges) {
        if (edge.slice_lag != 0 || edge.delay != 0.0) continue;
        const int a = structure.process_index(edge.parent);
        const int b = structure.process_index(edge.child);
        if (a < 0 || b < 0) continue;
        adjacency[static_cast<std::size_t>(a)].push_back(b);
    }
    std::vector<int> state(static_cast<std::size_t>(std::max(m, 0)), 0);
    std::vector<int> stack;
    bool cycle = false;
    auto dfs = [&](auto&& self, int v) -> void {
        state[static_cast<std::size_t>(v)] = 1;
        stack.push_back(v);
        for (int w : adjacency[static_cast<std::size_t>(v)]) {
            if (cycle) return;
            if (state[static_cast<std::size_t>(w)] == 1) {
                std::ostringstream path;
                path << "intra-slice cycle: ";
                auto it = std::find(stack.begin(), stack.end(), w);
                for (; it != stack.end(); ++it)
                    path << structure.processes[static_cast<std::size_t>(*it)].name << " -> ";
                path << structure.processes[static_cast<std::size_t>(w)].name;
                violations.push_back(path.str());
                cycle = true;
                return;
            }
            if (state[static_cast<std::size_t>(w)] == 0) self(self, w);
        }
        stack.pop_back();
        state[static_cast<std::size_t>(v)] = 2;
    };
    for (int v = 0; v < m && !cycle; ++v)
        if (state[static_cast<std::size_t>(v)] == 0) dfs(dfs, v);

    return violations;
}

inline void require_valid(const ItbnStructure& structure) {
    const auto violations = validate(structure);
    if (violations.empty()) return;
    std::string message = "invalid structure:";
    for (const auto& v : violations) message += "\n  " + v;
    throw_data(message);
}

// Shared predictor parts of an irregular-time generalized linear CPD.
struct CpdTemplate {
    SplineSpec alpha;                // varying intercept
    std::optional<SplineSpec> beta;  // varying AR coefficient, present iff an AR edge exists
    Eigen::VectorXd gamma;           // one per gamma edge, declaration order
};

struct GaussianLinearCpd {
    CpdTemplate predictor;
    double precision = 1.0; // tau > 0

    void check() const {
        if (!(precision > 0.0)) throw_data("gaussian precision must be positive");
    }
};

struct BernoulliLogitCpd {
    CpdTemplate predictor;
};

using Cpd = std::variant<GaussianLinearCpd, BernoulliLogitCpd>;

inline const CpdTemplate& predictor_of(const Cpd& cpd) {
    if (const auto* g = std::get_if<GaussianLinearCpd>(&cpd)) return g->predictor;
    return std::get<BernoulliLogitCpd>(cpd).predictor;
}

inline Family family_of(const Cpd& cpd) {
    return std::holds_alternative<GaussianLinearCpd>(cpd) ? Family::gaussian
                                                          : Family::bernoulli_logit;
}

// Per-process marginal for slice 0.
struct InitialCpd {
    Family family = Family::gaussian;
    double mean = 0.0;        // Gaussian mu0
    double precision = 1.0;   // Gaussian tau0 > 0
    double probability = 0.5; // Bernoulli p0 in (0, 1)

    void check() const {
        if (family == Family::gaussian) {
            if (!(precision > 0.0)) throw_data("initial precision must be positive");
        } else if (!(probability > 0.0 && probability < 1.0)) {
            throw_data("initial probability must lie in (0, 1)");
        }
    }
};

struct ProcessParams {
    Cpd cpd;
    InitialCpd initial;
};

struct ItbnParams {
    std::map<std::string, ProcessParams> processes;

    const ProcessParams& for_process(const std::string& name) const {
        auto it = processes.find(name);
        if (it == processes.end()) throw_data("no parameters for process '" + name + "'");
        return it->second;
    }
};

// eta_j = alpha(gap) + beta(gap) * y_prev + sum_i gamma_i x_i. Not defined for
// slice 0, where the initial CPD applies instead.
inline double predictor_eta(const CpdTemplate& cpd, double gap, double y_prev,
                            std::span<const double> parent_values) {
    if (static_cast<Eigen::Index>(parent_values.size()) != cpd.gamma.size())
        throw_usage("parent value count " + std::to_string(parent_values.size()) +
                    " does not match gamma length " + std::to_string(cpd.gamma.size()));
    double eta = eval_coefficient(cpd.alpha, gap);
    if (cpd.beta) eta += eval_coefficient(*cpd.beta, gap) * y_prev;
    for (std::size_t i = 0; i < parent_values.size(); ++i)
        eta += cpd.gamma(static_cast<Eigen::Index>(i)) * parent_values[i];
    return eta;
}

inline double predictor_eta(const Cpd& cpd, double gap, double y_prev,
                            std::span<const double> parent_values) {
    return predictor_eta(predictor_of(cpd), gap, y_prev, parent_values);
}

} // namespace itbn
