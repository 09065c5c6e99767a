#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "itbn/grounding.hpp"
#include "itbn/model.hpp"
#include "itbn/observations.hpp"
#include "itbn/splines.hpp"

namespace itbn {

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

struct LearnOptions {
    bool interpolate_parents = false;
};

// Alpha/beta bases for one process with knots fixed against the pooled gap
// samples (coefficients left at zero).
struct ProcessBases {
    SplineSpec alpha;
    std::optional<SplineSpec> beta;

    int width() const { return alpha.basis_size() + (beta ? beta->basis_size() : 0); }
};

inline std::vector<double> pooled_gap_samples(const ObservationSet& data) {
    std::vector<double> samples;
    for (const std::string& id : data.entity_ids()) {
        const auto& entity = data.entity(id);
        for (std::size_t j = 1; j < entity.timeline.size(); ++j)
            samples.push_back(entity.timeline.time(j) - entity.timeline.time(j - 1));
    }
    return samples;
}

inline SplineSpec resolve_spline(const SplineConfig& config, const std::vector<double>& samples,
                                 std::optional<int> knot_override) {
    SplineSpec spec;
    spec.degree = config.degree;
    if (config.knots && !knot_override)
        spec.knots = *config.knots;
    else
        spec.knots = choose_knots(samples, knot_override.value_or(config.knot_count));
    spec.coefficients = Eigen::VectorXd::Zero(spec.basis_size());
    spec.check();
    return spec;
}

inline ProcessBases resolve_bases(const ItbnStructure& structure, const ObservationSet& data,
                                  int process, std::optional<int> knot_override = std::nullopt) {
    const ProcessDecl& decl = structure.processes.at(static_cast<std::size_t>(process));
    const std::vector<double> samples = pooled_gap_samples(data);
    ProcessBases bases;
    bases.alpha = resolve_spline(decl.alpha, samples, knot_override);
    if (structure.has_autoregressive(process))
        bases.beta = resolve_spline(decl.beta, samples, knot_override);
    return bases;
}

struct RegressionProblem {
    Eigen::MatrixXd design;
    Eigen::VectorXd response;
    Eigen::MatrixXd penalty;
    int alpha_size = 0;
    int beta_size = 0;
    int gamma_size = 0;
    std::vector<double> gaps;                        // per row
    std::vector<std::pair<std::string, int>> rows;   // (entity, slice)
    int interpolated = 0;                            // values filled by interpolation
    int invented_nodes = 0;                          // off-grid parent reads
    int dropped_rows = 0;                            // rows dropped for pre-grid reads

    int width() const { return alpha_size + beta_size + gamma_size; }
};

// One row per observed child instance across all entities:
//   [ alpha basis(gap) | beta basis(gap) * y_prev | gamma parent values ]
inline RegressionProblem assemble_regression(const ItbnStructure& structure,
                                             const ObservationSet& data, int process,
                                             const ProcessBases& bases,
                                             const LearnOptions& options = {}) {
    require_valid(structure);
    const ProcessDecl& decl = structure.processes.at(static_cast<std::size_t>(process));
    RegressionProblem problem;
    problem.alpha_size = bases.alpha.basis_size();
    problem.beta_size = bases.beta ? bases.beta->basis_size() : 0;
    problem.gamma_size = static_cast<int>(structure.gamma_edges_into(process).size());
    const int width = problem.width();

    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> responses;

    for (const std::string& id : data.entity_ids()) {
        const auto& entity = data.entity(id);
        const GroundedNetwork grounded =
            unroll(structure, entity.timeline, UnrollOptions{.allow_pre_grid_reads = true});
        const BindResult bound = bind_observations(grounded, data, id,
                                                   BindOptions{.interpolate = options.interpolate_parents});
        std::vector<bool> invented_used(grounded.node_count(), false);

        for (int j = 1; j < grounded.slice_count(); ++j) {
            const int child_id = grounded.node_of(process, j);
            if (!bound.evidence.has(child_id)) continue; // rows exist per observed child
            const GroundedNode& child = grounded.node(child_id);

            Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(width);
            row.segment(0, problem.alpha_size) =
                design_row(bases.alpha.degree, bases.alpha.knots, child.gap);

            bool drop = false;
            int row_interpolated = 0;
            for (const ParentRef& ref : child.parents) {
                const GroundedNode& parent = grounded.node(ref.node);
                std::optional<double> value;
                if (bound.evidence.has(ref.node)) {
                    value = bound.evidence.value(ref.node);
                } else if (parent.invented) {
                    if (parent.pre_grid || options.interpolate_parents) {
                        drop = true; // unresolvable read; no information for this row
                        break;
                    }
                    throw_data("not fully observed: " + grounded.node_name(ref.node) +
                               " (needed by " + grounded.node_name(child_id) + " of entity '" +
                               id + "'); enable parent interpolation or supply the value");
                } else if (options.interpolate_parents) {
                    value = data.interpolate(entity, parent.process, parent.time);
                    if (!value) {
                        drop = true;
                        break;
                    }
                    ++row_interpolated;
                } else {
                    throw_data("not fully observed: " + grounded.node_name(ref.node) +
                               " (needed by " + grounded.node_name(child_id) + " of entity '" +
                               id + "')");
                }
                if (ref.kind == ParentKind::autoregressive) {
                    row.segment(problem.alpha_size, problem.beta_size) =
                        design_row(bases.beta->degree, bases.beta->knots, child.gap) * *value;
                } else {
                    row(problem.alpha_size + problem.beta_size + ref.gamma_index) = *value;
                }
                if (parent.invented && !invented_used[static_cast<std::size_t>(ref.node)]) {
                    invented_used[static_cast<std::size_t>(ref.node)] = true;
                    ++problem.invented_nodes;
                }
            }
            if (drop) {
                ++problem.dropped_rows;
                continue;
            }
            problem.interpolated += row_interpolated;
            rows.push_back(std::move(row));
            responses.push_back(bound.evidence.value(child_id));
            problem.gaps.push_back(child.gap);
            problem.rows.emplace_back(id, j);
        }
        problem.interpolated += bound.interpolated;
    }

    problem.design.resize(static_cast<Eigen::Index>(rows.size()), width);
    problem.response.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        problem.design.row(static_cast<Eigen::Index>(r)) = rows[r];
        problem.response(static_cast<Eigen::Index>(r)) = responses[r];
    }

    problem.penalty = Eigen::MatrixXd::Zero(width, width);
    problem.penalty.topLeftCorner(problem.alpha_size, problem.alpha_size) =
        penalty_matrix(bases.alpha.degree, static_cast<int>(bases.alpha.knots.size()), decl.lambda);
    if (bases.beta)
        problem.penalty.block(problem.alpha_size, problem.alpha_size, problem.beta_size,
                              problem.beta_size) =
            penalty_matrix(bases.beta->degree, static_cast<int>(bases.beta->knots.size()),
                           decl.lambda);
    return problem;
}

struct GaussianFit {
    Eigen::VectorXd coefficients;
    double precision = 0.0; // tau = N / RSS
    double rss = 0.0;
    int rows = 0;
    double edf = 0.0;                 // trace of the hat matrix
    double log_likelihood = 0.0;      // at (coefficients, precision)
    double penalized_objective = 0.0; // ||y - X theta||^2 + theta' P theta
    Eigen::VectorXd std_errors;
    double condition = 0.0;
};

// Penalized least squares through a QR of the penalty-augmented design; the
// truncated power basis is too ill-conditioned for normal equations.
inline GaussianFit fit_gaussian(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                                const Eigen::MatrixXd& penalty) {
    const Eigen::Index n = design.rows();
    const Eigen::Index k = design.cols();
    if (n == 0) throw_data("empty regression problem (no rows)");
    if (penalty.rows() != k || penalty.cols() != k)
        throw_usage("penalty size does not match the design width");

    Eigen::MatrixXd augmented(n + k, k);
    augmented.topRows(n) = design;
    augmented.bottomRows(k) = penalty.diagonal().array().sqrt().matrix().asDiagonal();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + k);
    rhs.head(n) = response;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(augmented);
    qr.setThreshold(1e-12);
    if (qr.rank() < k)
        throw_numeric("singular design (rank " + std::to_string(qr.rank()) + " of " +
                      std::to_string(k) + "); add a penalty (lambda > 0) or use fewer knots");

    GaussianFit fit;
    fit.coefficients = qr.solve(rhs);
    fit.rows = static_cast<int>(n);

    const Eigen::VectorXd residual = response - design * fit.coefficients;
    fit.rss = residual.squaredNorm();
    if (fit.rss <= 1e-12 * std::max(1.0, response.squaredNorm()))
        throw_numeric("zero residual (interpolating fit); the precision is unbounded");
    fit.precision = static_cast<double>(n) / fit.rss;
    fit.penalized_objective =
        fit.rss + fit.coefficients.dot(penalty * fit.coefficients);
    fit.log_likelihood =
        0.5 * static_cast<double>(n) * (std::log(fit.precision) - kLogTwoPi) -
        0.5 * fit.precision * fit.rss;

    const Eigen::MatrixXd xtx = design.transpose() * design;
    Eigen::LDLT<Eigen::MatrixXd> m_ldlt(xtx + penalty);
    const Eigen::MatrixXd b = m_ldlt.solve(xtx);
    fit.edf = b.trace();
    const Eigen::MatrixXd cov = m_ldlt.solve(b.transpose()) / fit.precision;
    fit.std_errors = cov.diagonal().array().max(0.0).sqrt();

    const Eigen::VectorXd rdiag = qr.matrixR().diagonal().cwiseAbs();
    fit.condition = rdiag.maxCoeff() / std::max(rdiag.minCoeff(), 1e-300);
    return fit;
}

struct LogitFit {
    Eigen::VectorXd coefficients;
    int iterations = 0;
    double gradient_norm = 0.0;
    int rows = 0;
    double edf = 0.0;
    double log_likelihood = 0.0;      // Bernoulli log likelihood
    double penalized_objective = 0.0; // -loglik + 0.5 theta' P theta
    Eigen::VectorXd std_errors;
};

inline double log1pexp(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

// Penalized Bernoulli maximum likelihood by damped Newton (IRLS) iterations to
// gradient max-norm 1e-8.
inline LogitFit fit_logit(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                          const Eigen::MatrixXd& penalty, int max_iterations = 200) {
    const Eigen::Index n = design.rows();
    const Eigen::Index k = design.cols();
    if (n == 0) throw_data("empty regression problem (no rows)");
    bool has_zero = false, has_one = false;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(response(i)) <= 1e-9)
            has_zero = true;
        else if (std::abs(response(i) - 1.0) <= 1e-9)
            has_one = true;
        else
            throw_data("logit responses must be 0 or 1 (found " + std::to_string(response(i)) + ")");
    }

    auto objective = [&](const Eigen::VectorXd& theta) {
        const Eigen::VectorXd eta = design * theta;
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) ll += response(i) * eta(i) - log1pexp(eta(i));
        return -ll + 0.5 * theta.dot(penalty * theta);
    };
    auto check_separation = [&](const Eigen::VectorXd& eta) {
        if (!has_zero || !has_one) return false; // one-class data is not separation
        double min_margin = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < n; ++i) {
            const double margin = (2.0 * response(i) - 1.0) * eta(i);
            min_margin = std::min(min_margin, margin);
        }
        return min_margin >= 5.0;
    };

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(k);
    double current = objective(theta);
    LogitFit fit;
    const double tol = 1e-8;
    bool converged = false;
    Eigen::VectorXd mu(n), weights(n);
    for (int iter = 0; iter < max_iterations; ++iter) {
        const Eigen::VectorXd eta = design * theta;
        for (Eigen::Index i = 0; i < n; ++i) {
            mu(i) = 1.0 / (1.0 + std::exp(-eta(i)));
            weights(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-10);
        }
        const Eigen::VectorXd score = design.transpose() * (response - mu) - penalty * theta;
        fit.gradient_norm = score.lpNorm<Eigen::Infinity>();
        fit.iterations = iter;
        if (fit.gradient_norm <= tol) {
            converged = true;
            break;
        }
        if (theta.lpNorm<Eigen::Infinity>() > 1e4)
            throw_numeric("logit fit diverged (coefficients exceed 1e4); the data may be separated");

        const Eigen::MatrixXd hessian =
            design.transpose() * weights.asDiagonal() * design + penalty;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
        Eigen::VectorXd step = ldlt.solve(score);
        double scale = 1.0;
        bool improved = false;
        for (int halving = 0; halving < 60; ++halving) {
            const double trial = objective(theta + scale * step);
            if (trial < current) {
                theta += scale * step;
                current = trial;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!improved) {
            if (check_separation(eta))
                throw_numeric("complete separation: the responses are perfectly classified and the "
                              "penalized likelihood has no maximizer");
            throw_numeric("logit line search failed at gradient norm " +
                          std::to_string(fit.gradient_norm));
        }
    }
    if (!converged)
        throw_numeric("logit fit did not converge in " + std::to_string(max_iterations) +
                      " iterations (gradient norm " + std::to_string(fit.gradient_norm) + ")");
    {
        const Eigen::VectorXd eta = design * theta;
        if (check_separation(eta))
            throw_numeric("complete separation: the responses are perfectly classified and the "
                          "penalized likelihood has no maximizer");
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) ll += response(i) * eta(i) - log1pexp(eta(i));
        fit.log_likelihood = ll;
        fit.penalized_objective = -ll + 0.5 * theta.dot(penalty * theta);
        for (Eigen::Index i = 0; i < n; ++i) {
            mu(i) = 1.0 / (1.0 + std::exp(-eta(i)));
            weights(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-10);
        }
        const Eigen::MatrixXd xwx = design.transpose() * weights.asDiagonal() * design;
        Eigen::LDLT<Eigen::MatrixXd> m_ldlt(xwx + penalty);
        const Eigen::MatrixXd b = m_ldlt.solve(xwx);
        fit.edf = b.trace();
        const Eigen::MatrixXd cov = m_ldlt.solve(b.transpose());
        fit.std_errors = cov.diagonal().array().max(0.0).sqrt();
    }
    fit.coefficients = theta;
    fit.rows = static_cast<int>(n);
    return fit;
}

struct ProcessFit {
    Cpd cpd;
    InitialCpd initial;
    Eigen::VectorXd coefficients; // stacked [alpha | beta | gamma]
    Eigen::VectorXd std_errors;
    double edf = 0.0;
    double regression_log_likelihood = 0.0;
    double initial_log_likelihood = 0.0;
    double penalized_objective = 0.0;
    double condition = 0.0;
    int rows = 0;
    int interpolated = 0;
    int invented_nodes = 0;
    int dropped_rows = 0;
    std::string initial_note;

    double log_likelihood() const {
        return regression_log_likelihood + initial_log_likelihood;
    }
};

struct FitResult {
    std::map<std::string, ProcessFit> processes;
    double total_log_likelihood = 0.0;
    double total_penalized_objective = 0.0;
    bool interpolate_parents = false;

    ItbnParams params() const {
        ItbnParams out;
        for (const auto& [name, fit] : processes)
            out.processes.emplace(name, ProcessParams{fit.cpd, fit.initial});
        return out;
    }
};

inline Cpd make_cpd(Family family, const ProcessBases& bases, const Eigen::VectorXd& theta,
                    int gamma_size, double precision) {
    CpdTemplate tmpl;
    tmpl.alpha = bases.alpha;
    tmpl.alpha.coefficients = theta.segment(0, bases.alpha.basis_size());
    if (bases.beta) {
        tmpl.beta = *bases.beta;
        tmpl.beta->coefficients =
            theta.segment(bases.alpha.basis_size(), bases.beta->basis_size());
    }
    tmpl.gamma = theta.tail(gamma_size);
    if (family == Family::gaussian) return GaussianLinearCpd{std::move(tmpl), precision};
    return BernoulliLogitCpd{std::move(tmpl)};
}

inline InitialCpd estimate_initial(const ItbnStructure& structure, const ObservationSet& data,
                                   int process, double* log_likelihood, std::string* note) {
    const ProcessDecl& decl = structure.processes.at(static_cast<std::size_t>(process));
    std::vector<double> values;
    for (const std::string& id : data.entity_ids())
        if (auto v = data.entity(id).value(process, 0)) values.push_back(*v);
    if (values.empty())
        throw_data("no slice-0 observations for process '" + decl.name + "'");
    InitialCpd initial;
    initial.family = decl.family;
    if (decl.family == Family::gaussian) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(values.size());
        initial.mean = mean;
        if (values.size() >= 2 && var > 1e-8) {
            initial.precision = 1.0 / var;
        } else {
            initial.precision = 1.0;
            if (note) *note = "slice-0 variance not estimable; precision defaulted to 1";
        }
    } else {
        int successes = 0;
        for (double v : values) {
            if (std::abs(v) <= 1e-9) continue;
            if (std::abs(v - 1.0) <= 1e-9)
                ++successes;
            else
                throw_data("slice-0 values of process '" + decl.name + "' must be 0 or 1");
        }
        initial.probability =
            (static_cast<double>(successes) + 1.0) / (static_cast<double>(values.size()) + 2.0);
        if (note && (successes == 0 || successes == static_cast<int>(values.size())))
            *note = "slice-0 probability Laplace-smoothed away from the boundary";
    }
    if (log_likelihood) {
        double ll = 0.0;
        for (double v : values) {
            if (decl.family == Family::gaussian)
                ll += 0.5 * (std::log(initial.precision) - kLogTwoPi) -
                      0.5 * initial.precision * (v - initial.mean) * (v - initial.mean);
            else
                ll += v * std::log(initial.probability) +
                      (1.0 - v) * std::log(1.0 - initial.probability);
        }
        *log_likelihood = ll;
    }
    return initial;
}

// Prop 8 learning: each process's CPD is fit by an independent per-node
// regression; the factorization makes the joint optimum the per-process
// optima.
inline FitResult fit_fully_observed(const ItbnStructure& structure, const ObservationSet& data,
                                    const LearnOptions& options = {}) {
    require_valid(structure);
    if (data.empty()) throw_data("no entities in the observation set");
    FitResult result;
    result.interpolate_parents = options.interpolate_parents;
    for (int k = 0; k < structure.process_count(); ++k) {
        const ProcessDecl& decl = structure.processes[static_cast<std::size_t>(k)];
        try {
            const ProcessBases bases = resolve_bases(structure, data, k);
            const RegressionProblem problem = assemble_regression(structure, data, k, bases, options);
            ProcessFit pf;
            if (decl.family == Family::gaussian) {
                const GaussianFit fit = fit_gaussian(problem.design, problem.response, problem.penalty);
                pf.coefficients = fit.coefficients;
                pf.std_errors = fit.std_errors;
                pf.edf = fit.edf;
                pf.regression_log_likelihood = fit.log_likelihood;
                pf.penalized_objective = fit.penalized_objective;
                pf.condition = fit.condition;
                pf.rows = fit.rows;
                pf.cpd = make_cpd(decl.family, bases, fit.coefficients, problem.gamma_size,
                                  fit.precision);
            } else {
                const LogitFit fit = fit_logit(problem.design, problem.response, problem.penalty);
                pf.coefficients = fit.coefficients;
                pf.std_errors = fit.std_errors;
                pf.edf = fit.edf;
                pf.regression_log_likelihood = fit.log_likelihood;
                pf.penalized_objective = fit.penalized_objective;
                pf.rows = fit.rows;
                pf.cpd = make_cpd(decl.family, bases, fit.coefficients, problem.gamma_size, 1.0);
            }
            pf.interpolated = problem.interpolated;
            pf.invented_nodes = problem.invented_nodes;
            pf.dropped_rows = problem.dropped_rows;
            pf.initial = estimate_initial(structure, data, k, &pf.initial_log_likelihood,
                                          &pf.initial_note);
            result.total_log_likelihood += pf.log_likelihood();
            result.total_penalized_objective += pf.penalized_objective;
            result.processes.emplace(decl.name, std::move(pf));
        } catch (const Error& e) {
            throw Error(e.kind(), "process '" + decl.name + "': " + e.what());
        }
    }
    return result;
}

// Fully observed log likelihood: slice-0 marginal terms plus conditional
// terms for every slice >= 1, summed over entities and processes. Mirrors the
// row rules of assemble_regression so the Prop 8 factorization identity holds
// exactly against per-process fits.
inline double log_likelihood(const ItbnStructure& structure, const ItbnParams& params,
                             const ObservationSet& data, const LearnOptions& options = {}) {
    require_valid(structure);
    double total = 0.0;
    for (const std::string& id : data.entity_ids()) {
        const auto& entity = data.entity(id);
        const GroundedNetwork grounded =
            unroll(structure, entity.timeline, UnrollOptions{.allow_pre_grid_reads = true});
        const BindResult bound = bind_observations(grounded, data, id,
                                                   BindOptions{.interpolate = options.interpolate_parents});
        const ResolvedCpds cpds = resolve(grounded, params);
        for (std::size_t idx = 0; idx < grounded.regular_count(); ++idx) {
            const int node_id = static_cast<int>(idx);
            const GroundedNode& node = grounded.node(node_id);
            if (!bound.evidence.has(node_id))
                throw_data("missing value " + grounded.node_name(node_id) + " (entity '" + id +
                           "'); the fully observed likelihood needs every node");
            const double value = bound.evidence.value(node_id);
            double eta = cpds.intercept[idx];
            bool skip = false;
            for (std::size_t a = 0; a < node.parents.size(); ++a) {
                const ParentRef& ref = node.parents[a];
                const GroundedNode& parent = grounded.node(ref.node);
                if (!bound.evidence.has(ref.node)) {
                    if (parent.invented && (parent.pre_grid || options.interpolate_parents)) {
                        skip = true; // same rule as assemble_regression row drops
                        break;
                    }
                    throw_data("missing value " + grounded.node_name(ref.node) + " (entity '" +
                               id + "')");
                }
                eta += cpds.weight[idx][a] * bound.evidence.value(ref.node);
            }
            if (skip) continue;
            if (cpds.family[idx] == Family::gaussian) {
                const double tau = cpds.noise_precision[idx];
                total += 0.5 * (std::log(tau) - kLogTwoPi) - 0.5 * tau * (value - eta) * (value - eta);
            } else {
                total += value * eta - log1pexp(eta);
            }
        }
    }
    return total;
}

struct KnotSelection {
    struct Candidate {
        int count = 0;
        double aicc = std::numeric_limits<double>::infinity();
        double edf = 0.0;
        double log_likelihood = 0.0;
        std::string error;
    };
    int best_count = 0;
    std::vector<Candidate> candidates;
};

// Corrected AIC over hypothesized knot counts: -2 ll + 2 edf N / (N - edf - 1)
// with edf the hat-matrix trace; ties break toward the smaller count.
inline KnotSelection select_knot_count(const ItbnStructure& structure, const ObservationSet& data,
                                       int process, std::span<const int> candidates,
                                       const LearnOptions& options = {}) {
    if (candidates.empty()) throw_usage("no knot-count candidates");
    const ProcessDecl& decl = structure.processes.at(static_cast<std::size_t>(process));
    KnotSelection selection;
    double best_aicc = std::numeric_limits<double>::infinity();
    bool any = false;
    for (int count : candidates) {
        KnotSelection::Candidate candidate;
        candidate.count = count;
        try {
            const ProcessBases bases = resolve_bases(structure, data, process, count);
            const RegressionProblem problem =
                assemble_regression(structure, data, process, bases, options);
            double ll = 0.0, edf = 0.0;
            int rows = 0;
            if (decl.family == Family::gaussian) {
                const GaussianFit fit = fit_gaussian(problem.design, problem.response, problem.penalty);
                ll = fit.log_likelihood;
                edf = fit.edf;
                rows = fit.rows;
            } else {
                const LogitFit fit = fit_logit(problem.design, problem.response, problem.penalty);
                ll = fit.log_likelihood;
                edf = fit.edf;
                rows = fit.rows;
            }
            candidate.edf = edf;
            candidate.log_likelihood = ll;
            const double denominator = static_cast<double>(rows) - edf - 1.0;
            candidate.aicc = denominator > 0.0
                                 ? -2.0 * ll + 2.0 * edf * static_cast<double>(rows) / denominator
                                 : std::numeric_limits<double>::infinity();
            if (std::isfinite(candidate.aicc) &&
                (candidate.aicc < best_aicc ||
                 (candidate.aicc == best_aicc && count < selection.best_count))) {
                best_aicc = candidate.aicc;
                selection.best_count = count;
                any = true;
            }
        } catch (const Error& e) {
            candidate.error = e.what();
        }
        selection.candidates.push_back(std::move(candidate));
    }
    if (!any) throw_numeric("every knot-count candidate failed for process '" + decl.name + "'");
    return selection;
}

struct OffsetSearch {
    struct Candidate {
        double delay = 0.0;
        double score = -std::numeric_limits<double>::infinity();
        double penalized_log_likelihood = 0.0;
        int invented_nodes = 0;
        int occurrences = 0; // frequency of the delay among pairwise differences
        std::string error;
    };
    double best_delay = 0.0;
    std::vector<Candidate> candidates;
};

// Delay-offset search over the differences that already appear in the data
// (Sec 3.1 hypothesis space), scored by penalized log likelihood minus a
// BIC-like compactness charge per invented node.
inline OffsetSearch search_offsets(const ItbnStructure& structure, const ObservationSet& data,
                                   int edge_index, int max_candidates,
                                   const LearnOptions& = {}) {
    if (edge_index < 0 || edge_index >= static_cast<int>(structure.edges.size()))
        throw_usage("edge index out of range");
    const EdgeDecl& edge = structure.edges[static_cast<std::size_t>(edge_index)];
    if (edge.role != EdgeRole::gamma) throw_usage("offset search requires a gamma edge");
    if (edge.slice_lag != 0) throw_usage("offset search requires an intra-slice edge");
    if (max_candidates < 1) throw_usage("max_candidates must be at least 1");
    const int child = structure.process_index(edge.child);
    const int parent = structure.process_index(edge.parent);
    const double child_offset = structure.processes[static_cast<std::size_t>(child)].offset;
    const double parent_offset = structure.processes[static_cast<std::size_t>(parent)].offset;

    std::map<double, int> difference_counts;
    for (const std::string& id : data.entity_ids()) {
        const auto& entity = data.entity(id);
        for (std::size_t j = 1; j < entity.timeline.size(); ++j) {
            if (!entity.value(child, static_cast<int>(j))) continue;
            const double child_time = entity.timeline.time(j) + child_offset;
            for (std::size_t l = 0; l < entity.timeline.size(); ++l) {
                if (!entity.value(parent, static_cast<int>(l))) continue;
                const double parent_time = entity.timeline.time(l) + parent_offset;
                const double difference = child_time - parent_time;
                if (difference >= -kTimeMatchTol)
                    ++difference_counts[std::max(difference, 0.0)];
            }
        }
    }
    if (difference_counts.empty())
        throw_data("no candidate delays: the data contain no usable time differences");

    std::vector<std::pair<double, int>> ranked(difference_counts.begin(), difference_counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<int>(ranked.size()) > max_candidates)
        ranked.resize(static_cast<std::size_t>(max_candidates));

    OffsetSearch search;
    const ProcessBases bases = resolve_bases(structure, data, child);
    bool any = false;
    double best_score = -std::numeric_limits<double>::infinity();
    int best_invented = 0;
    for (const auto& [delay, occurrences] : ranked) {
        OffsetSearch::Candidate candidate;
        candidate.delay = delay;
        candidate.occurrences = occurrences;
        try {
            ItbnStructure trial = structure;
            trial.edges[static_cast<std::size_t>(edge_index)].delay = delay;
            const RegressionProblem problem = assemble_regression(
                trial, data, child, bases, LearnOptions{.interpolate_parents = true});
            double penalized_ll = 0.0;
            const ProcessDecl& decl = structure.processes[static_cast<std::size_t>(child)];
            if (decl.family == Family::gaussian) {
                const GaussianFit fit = fit_gaussian(problem.design, problem.response, problem.penalty);
                penalized_ll = fit.log_likelihood -
                               0.5 * fit.coefficients.dot(problem.penalty * fit.coefficients);
            } else {
                const LogitFit fit = fit_logit(problem.design, problem.response, problem.penalty);
                penalized_ll = fit.log_likelihood -
                               0.5 * fit.coefficients.dot(problem.penalty * fit.coefficients);
            }
            candidate.invented_nodes = problem.invented_nodes;
            candidate.penalized_log_likelihood = penalized_ll;
            const double compactness =
                0.5 * std::log(std::max<double>(2.0, static_cast<double>(problem.design.rows())));
            candidate.score = penalized_ll - compactness * problem.invented_nodes;
            const bool better =
                !any || candidate.score > best_score ||
                (candidate.score == best_score &&
                 (candidate.invented_nodes < best_invented ||
                  (candidate.invented_nodes == best_invented && delay < search.best_delay)));
            if (better) {
                best_score = candidate.score;
                best_invented = candidate.invented_nodes;
                search.best_delay = delay;
                any = true;
            }
        } catch (const Error& e) {
            candidate.error = e.what();
        }
        search.candidates.push_back(std::move(candidate));
    }
    if (!any) throw_numeric("every candidate delay failed to fit");
    return search;
}

} // namespace itbn
