#include "sgne/solvers.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sgne/errors.hpp"

namespace sgne {

namespace {

using Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct AlgorithmName {
    Algorithm algorithm;
    std::string_view name;
};

constexpr std::array<AlgorithmName, 7> kAlgorithmNames{{
    {Algorithm::det_fb, "det_fb"},
    {Algorithm::stoch_fb_saa, "stoch_fb_saa"},
    {Algorithm::stoch_fb_sa_experimental, "stoch_fb_sa_experimental"},
    {Algorithm::sne_fb_sa, "sne_fb_sa"},
    {Algorithm::sne_fb_saa, "sne_fb_saa"},
    {Algorithm::fbf, "fbf"},
    {Algorithm::eg, "eg"},
}};

/// Sum_j w_ij (v_i - v_j) for agent i's m-block.
Eigen::VectorXd neighbor_diff(const DualGraph& graph, const Eigen::VectorXd& v, std::size_t i, Index m) {
    const auto vi = v.segment(idx(i) * m, m);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(m);
    for (const auto& nb : graph.neighbors(i))
        acc += nb.weight * (vi - v.segment(idx(nb.node) * m, m));
    return acc;
}

void log_neighbor_reads(MessageLog* log, const DualGraph& graph, int phase, std::size_t reader, char var,
                        std::size_t round) {
    if (log == nullptr)
        return;
    for (const auto& nb : graph.neighbors(reader))
        log->push_back({phase, reader, nb.node, var, round});
}

void require_finite(const StackedState& s, const char* where) {
    if (!s.all_finite())
        throw NumericalError(std::string(where) + ": non-finite value in update");
}

/// Shared first phase of FBF and EG (extrapolation from omega^k).
StackedState extrapolate(const StackedState& s, const GameDefinition& game, const DualGraph& graph,
                         const StepSizes& steps, const Eigen::VectorXd& forward_at_x) {
    const auto m = idx(game.num_constraints());
    const Eigen::VectorXd& b = game.local_bound();
    StackedState t = s;
    for (std::size_t i = 0; i < game.num_agents(); ++i) {
        const auto li = s.lambda.segment(idx(i) * m, m);
        const auto xi = game.agent_slice(s.x, i);
        const Eigen::MatrixXd& a = game.block(i);
        const double alpha = steps.alpha[idx(i)];
        const double nu = steps.nu[idx(i)];
        const double sigma = steps.sigma[idx(i)];
        game.agent_slice(t.x, i) =
            project_box(game.box(i), xi - alpha * (game.agent_slice(forward_at_x, i) + a.transpose() * li));
        const Eigen::VectorXd lap_l = neighbor_diff(graph, s.lambda, i, m);
        t.z.segment(idx(i) * m, m) = s.z.segment(idx(i) * m, m) - nu * lap_l;
        t.lambda.segment(idx(i) * m, m) =
            project_nonneg(li + sigma * (a * xi - b) + sigma * (neighbor_diff(graph, s.z, i, m) - lap_l));
    }
    return t;
}

} // namespace

std::string_view to_string(Algorithm algorithm) {
    for (const auto& entry : kAlgorithmNames)
        if (entry.algorithm == algorithm)
            return entry.name;
    return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
    for (const auto& entry : kAlgorithmNames)
        if (entry.name == name)
            return entry.algorithm;
    std::string valid;
    for (const auto& entry : kAlgorithmNames)
        valid += (valid.empty() ? "" : ", ") + std::string(entry.name);
    throw ConfigError("unknown algorithm '" + std::string(name) + "' (valid: " + valid + ")");
}

const std::vector<Algorithm>& all_algorithms() {
    static const std::vector<Algorithm> all = [] {
        std::vector<Algorithm> v;
        for (const auto& entry : kAlgorithmNames)
            v.push_back(entry.algorithm);
        return v;
    }();
    return all;
}

std::string_view to_string(EstimatorKind kind) {
    switch (kind) {
    case EstimatorKind::exact: return "exact";
    case EstimatorKind::sa: return "sa";
    case EstimatorKind::saa: return "saa";
    }
    return "unknown";
}

EstimatorKind parse_estimator(std::string_view name) {
    if (name == "exact") return EstimatorKind::exact;
    if (name == "sa") return EstimatorKind::sa;
    if (name == "saa") return EstimatorKind::saa;
    throw ConfigError("unknown estimator '" + std::string(name) + "' (valid: exact, sa, saa)");
}

std::string_view to_string(StopMetric metric) {
    switch (metric) {
    case StopMetric::rel_dist: return "rel_dist";
    case StopMetric::dual_disagreement: return "dual_disagreement";
    case StopMetric::kkt_stat: return "kkt_stat";
    case StopMetric::natural_residual: return "natural_residual";
    }
    return "unknown";
}

StopMetric parse_stop_metric(std::string_view name) {
    if (name == "rel_dist") return StopMetric::rel_dist;
    if (name == "dual_disagreement") return StopMetric::dual_disagreement;
    if (name == "kkt_stat") return StopMetric::kkt_stat;
    if (name == "natural_residual") return StopMetric::natural_residual;
    throw ConfigError("unknown stop metric '" + std::string(name) +
                      "' (valid: rel_dist, dual_disagreement, kkt_stat, natural_residual)");
}

EstimatorKind effective_estimator(const SolverConfig& config) {
    switch (config.algorithm) {
    case Algorithm::det_fb: return EstimatorKind::exact;
    case Algorithm::stoch_fb_saa:
    case Algorithm::sne_fb_saa: return EstimatorKind::saa;
    case Algorithm::stoch_fb_sa_experimental:
    case Algorithm::sne_fb_sa: return EstimatorKind::sa;
    case Algorithm::fbf:
    case Algorithm::eg: return config.estimator;
    }
    return EstimatorKind::exact;
}

void validate(const SolverConfig& config, const GameDefinition& game) {
    const auto name = std::string(to_string(config.algorithm));
    const bool snep = config.algorithm == Algorithm::sne_fb_sa || config.algorithm == Algorithm::sne_fb_saa;
    if (snep && game.num_constraints() != 0)
        throw ConfigError(name + ": requires a game without shared constraints");
    if (config.algorithm == Algorithm::stoch_fb_sa_experimental && !config.experimental)
        throw ConfigError(name + ": no convergence guarantee; set experimental = true to run it");
    if (config.experimental_decay && config.algorithm != Algorithm::stoch_fb_sa_experimental)
        throw ConfigError(name + ": experimental_decay only applies to stoch_fb_sa_experimental");
    if (effective_estimator(config) == EstimatorKind::exact && !game.has_exact())
        throw ConfigError(name + ": needs an exact pseudogradient oracle");
    if (effective_estimator(config) == EstimatorKind::saa)
        config.batch.validate();
    if (config.schedule)
        config.schedule->validate();
    if (config.steps) {
        const auto n = idx(game.num_agents());
        const auto& s = *config.steps;
        if (s.alpha.size() != n || s.nu.size() != n || s.sigma.size() != n)
            throw ConfigError(name + ": step sizes must have one entry per agent");
        if ((s.alpha.array() <= 0.0).any() || (s.nu.array() <= 0.0).any() || (s.sigma.array() <= 0.0).any())
            throw ConfigError(name + ": step sizes must be positive");
    }
    if (config.max_iters == 0)
        throw ConfigError(name + ": max_iters must be positive");
    if (!(config.rho_scale > 0.0))
        throw ConfigError(name + ": rho_scale must be positive");
}

std::size_t RunRecord::total_oracle_calls() const {
    std::size_t s = 0;
    for (const auto& r : rows)
        s += r.oracle_calls;
    return s;
}

std::size_t RunRecord::total_samples() const {
    std::size_t s = 0;
    for (const auto& r : rows)
        s += r.samples;
    return s;
}

std::int64_t RunRecord::total_elapsed_ns() const {
    std::int64_t s = 0;
    for (const auto& r : rows)
        s += r.elapsed_ns;
    return s;
}

std::optional<std::size_t> RunRecord::calls_to_accuracy(double accuracy) const {
    std::size_t calls = 0;
    for (const auto& r : rows) {
        calls += r.oracle_calls;
        if (r.rel_dist < accuracy)
            return calls;
    }
    return std::nullopt;
}

GradientEstimator::GradientEstimator(const GameDefinition& game, EstimatorKind kind, BatchSchedule batch,
                                     std::uint64_t seed)
    : game_(&game), kind_(kind), batch_(batch), stream_(seed, game.distribution()) {}

GradientEstimator::Evaluation GradientEstimator::evaluate(const Eigen::VectorXd& x, std::size_t k,
                                                          bool second) const {
    const GameDefinition& game = *game_;
    const std::size_t agents = game.num_agents();
    switch (kind_) {
    case EstimatorKind::exact: return {pseudogradient_exact(game, x), 0};
    case EstimatorKind::sa: {
        const SampleProfile xi = stream_.draw_profile(agents, k, second ? Channel::extra : Channel::primary);
        return {pseudogradient_sa(game, x, xi), agents};
    }
    case EstimatorKind::saa: {
        const std::size_t s = batch_size(batch_, k);
        if (game.affine_in_sample() && stream_.exact_batch_mean()) {
            // Averaging an affine-in-sample gradient equals evaluating it at
            // the batch mean, so only the mean's law is sampled.
            Eigen::VectorXd out(x.size());
            const Channel ch = second ? Channel::batch_mean_extra : Channel::batch_mean;
            for (std::size_t i = 0; i < agents; ++i)
                game.agent_slice(out, i) = game.sampled_partial(i, x, stream_.draw_batch_mean(i, k, s, ch));
            return {out, agents * s};
        }
        std::vector<SampleProfile> batch(s, SampleProfile(agents));
        const Channel ch = second ? Channel::extra : Channel::primary;
        for (std::size_t i = 0; i < agents; ++i) {
            auto draws = stream_.draw_batch(i, k, s, ch);
            for (std::size_t t = 0; t < s; ++t)
                batch[t][i] = std::move(draws[t]);
        }
        return {pseudogradient_saa(game, x, batch), agents * s};
    }
    }
    return {};
}

StackedState fb_iteration(const StackedState& s, const GameDefinition& game, const DualGraph& graph,
                          const StepSizes& steps, const Eigen::VectorXd& forward_value, MessageLog* log,
                          std::size_t round) {
    const auto m = idx(game.num_constraints());
    const Eigen::VectorXd& b = game.local_bound();
    StackedState next = s;

    // Phase 1: primal and auxiliary updates from round-k messages.
    for (std::size_t i = 0; i < game.num_agents(); ++i) {
        log_neighbor_reads(log, graph, 1, i, 'l', round);
        const auto li = s.lambda.segment(idx(i) * m, m);
        game.agent_slice(next.x, i) =
            project_box(game.box(i), game.agent_slice(s.x, i) -
                                         steps.alpha[idx(i)] * (game.agent_slice(forward_value, i) +
                                                                game.block(i).transpose() * li));
        next.z.segment(idx(i) * m, m) = s.z.segment(idx(i) * m, m) - steps.nu[idx(i)] * neighbor_diff(graph, s.lambda, i, m);
    }

    // Phase 2: dual update, using the fresh z and the previous round.
    const Eigen::VectorXd z_reflect = 2.0 * next.z - s.z;
    for (std::size_t i = 0; i < game.num_agents(); ++i) {
        log_neighbor_reads(log, graph, 2, i, 'z', round + 1);
        log_neighbor_reads(log, graph, 2, i, 'z', round);
        log_neighbor_reads(log, graph, 2, i, 'l', round);
        const double sigma = steps.sigma[idx(i)];
        const Eigen::VectorXd x_reflect = 2.0 * game.agent_slice(next.x, i) - game.agent_slice(s.x, i);
        next.lambda.segment(idx(i) * m, m) =
            project_nonneg(s.lambda.segment(idx(i) * m, m) + sigma * (game.block(i) * x_reflect - b) +
                           sigma * neighbor_diff(graph, z_reflect, i, m) -
                           sigma * neighbor_diff(graph, s.lambda, i, m));
    }
    require_finite(next, "fb_iteration");
    return next;
}

TwoStepResult fbf_iteration(const StackedState& s, const GameDefinition& game, const DualGraph& graph,
                            const StepSizes& steps, const Eigen::VectorXd& rho, const Eigen::VectorXd& forward_at_x,
                            const ForwardOracle& forward_at_intermediate) {
    const auto m = idx(game.num_constraints());
    TwoStepResult out;
    out.intermediate = extrapolate(s, game, graph, steps, forward_at_x);
    const StackedState& t = out.intermediate;
    const Eigen::VectorXd forward_t = forward_at_intermediate(t.x);

    out.next = t;
    const Eigen::VectorXd dl = s.lambda - t.lambda;
    const Eigen::VectorXd dz = s.z - t.z;
    for (std::size_t i = 0; i < game.num_agents(); ++i) {
        const Eigen::MatrixXd& a = game.block(i);
        const double alpha = steps.alpha[idx(i)];
        const double sigma = steps.sigma[idx(i)];
        const auto dli = dl.segment(idx(i) * m, m);
        game.agent_slice(out.next.x, i) +=
            alpha * (game.agent_slice(forward_at_x, i) - game.agent_slice(forward_t, i)) + rho[idx(i)] * a.transpose() * dli;
        const Eigen::VectorXd lap_dl = neighbor_diff(graph, dl, i, m);
        out.next.z.segment(idx(i) * m, m) += steps.nu[idx(i)] * lap_dl;
        out.next.lambda.segment(idx(i) * m, m) +=
            sigma * a * (game.agent_slice(t.x, i) - game.agent_slice(s.x, i)) - sigma * neighbor_diff(graph, dz, i, m) +
            sigma * lap_dl;
    }
    require_finite(out.next, "fbf_iteration");
    return out;
}

TwoStepResult eg_iteration(const StackedState& s, const GameDefinition& game, const DualGraph& graph,
                           const StepSizes& steps, const Eigen::VectorXd& forward_at_x,
                           const ForwardOracle& forward_at_intermediate) {
    const auto m = idx(game.num_constraints());
    const Eigen::VectorXd& b = game.local_bound();
    TwoStepResult out;
    out.intermediate = extrapolate(s, game, graph, steps, forward_at_x);
    const StackedState& t = out.intermediate;
    const Eigen::VectorXd forward_t = forward_at_intermediate(t.x);

    out.next = s;
    for (std::size_t i = 0; i < game.num_agents(); ++i) {
        const Eigen::MatrixXd& a = game.block(i);
        const double sigma = steps.sigma[idx(i)];
        const auto lti = t.lambda.segment(idx(i) * m, m);
        game.agent_slice(out.next.x, i) = project_box(
            game.box(i), game.agent_slice(s.x, i) -
                             steps.alpha[idx(i)] * (game.agent_slice(forward_t, i) + a.transpose() * lti));
        const Eigen::VectorXd lap_lt = neighbor_diff(graph, t.lambda, i, m);
        out.next.z.segment(idx(i) * m, m) = s.z.segment(idx(i) * m, m) - steps.nu[idx(i)] * lap_lt;
        out.next.lambda.segment(idx(i) * m, m) =
            project_nonneg(s.lambda.segment(idx(i) * m, m) + sigma * (a * game.agent_slice(t.x, i) - b) +
                           sigma * (neighbor_diff(graph, t.z, i, m) - lap_lt));
    }
    require_finite(out.next, "eg_iteration");
    return out;
}

Eigen::VectorXd sne_fb_iteration(const Eigen::VectorXd& x, const GameDefinition& game, double gamma_k,
                                 const Eigen::VectorXd& forward_value) {
    if (game.num_constraints() != 0)
        throw ConfigError("sne_fb_iteration: requires a game without shared constraints");
    game.check_decision(x);
    Eigen::VectorXd next(x.size());
    for (std::size_t i = 0; i < game.num_agents(); ++i)
        game.agent_slice(next, i) =
            project_box(game.box(i), game.agent_slice(x, i) - gamma_k * game.agent_slice(forward_value, i));
    if (!next.allFinite())
        throw NumericalError("sne_fb_iteration: non-finite value in update");
    return next;
}

double estimate_beta(const GameDefinition& game) {
    if (!game.has_exact())
        throw UnsupportedOperation("estimate_beta: needs an exact pseudogradient oracle");
    const Eigen::MatrixXd jac = affine_jacobian(game);
    // Probe affinity at a fixed interior-ish point.
    Eigen::VectorXd x(idx(game.total_dim()));
    for (std::size_t i = 0; i < game.num_agents(); ++i)
        game.agent_slice(x, i) = 0.5 * (game.box(i).lower + game.box(i).upper);
    const Eigen::VectorXd f0 = pseudogradient_exact(game, Eigen::VectorXd::Zero(x.size()));
    const Eigen::VectorXd predicted = f0 + jac * x;
    const Eigen::VectorXd actual = pseudogradient_exact(game, x);
    if ((predicted - actual).norm() > 1e-8 * std::max(1.0, actual.norm()))
        throw UnsupportedOperation("estimate_beta: pseudogradient is not affine; supply step sizes explicitly");
    const double beta = affine_cocoercivity(jac);
    if (!(beta > 0.0))
        throw NumericalError("estimate_beta: pseudogradient is not cocoercive");
    return beta;
}

StepSizes default_step_sizes(const GameDefinition& game, const DualGraph& graph) {
    const double beta = estimate_beta(game);
    const double theta = game.num_constraints() == 0 ? beta : cocoercivity_theta(beta, graph);
    return certified_step_sizes(game, graph, theta);
}

StepSizes lipschitz_step_sizes(const GameDefinition& game, const DualGraph& graph, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ConfigError("lipschitz_step_sizes: fraction must lie in (0, 1)");
    estimate_beta(game); // affinity probe
    const auto n = idx(game.total_dim());
    const auto m = idx(game.num_constraints());
    const auto nm = m * idx(game.num_agents());
    Eigen::MatrixXd jac = assemble_skew(game, graph);
    jac.topLeftCorner(n, n) = affine_jacobian(game);
    const Eigen::MatrixXd lap = graph.laplacian();
    for (Index i = 0; i < lap.rows(); ++i)
        for (Index j = 0; j < lap.cols(); ++j)
            jac.block(n + nm + i * m, n + nm + j * m, m, m) += lap(i, j) * Eigen::MatrixXd::Identity(m, m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jac.transpose() * jac, Eigen::EigenvaluesOnly);
    const double lip = std::sqrt(eig.eigenvalues().maxCoeff());
    const double tau = fraction / lip;
    const auto agents = idx(game.num_agents());
    StepSizes s;
    s.alpha = Eigen::VectorXd::Constant(agents, tau);
    s.nu = s.alpha;
    s.sigma = s.alpha;
    s.gamma = 1.0 / tau;
    return s;
}

StepSchedule default_step_schedule(const GameDefinition& game, const DualGraph& graph) {
    const StepSizes steps = default_step_sizes(game, graph);
    StepSchedule s;
    s.gamma0 = steps.alpha.minCoeff();
    s.eta = 0.6;
    s.cap = 2.0 * estimate_beta(game);
    return s;
}

RunRecord run(const SolverConfig& config, const GameDefinition& game, const DualGraph& graph,
              const ReferenceSolution* reference, const IterationCallback& callback) {
    validate(config, game);
    if (graph.num_nodes() != game.num_agents())
        throw ConfigError("run: graph and game disagree on the number of agents");

    const Algorithm algo = config.algorithm;
    const bool snep = algo == Algorithm::sne_fb_sa || algo == Algorithm::sne_fb_saa;
    const bool two_step = algo == Algorithm::fbf || algo == Algorithm::eg;
    const bool uses_schedule = snep || config.experimental_decay;

    RunRecord record;
    record.algorithm = algo;
    record.seed = config.seed;
    if (config.steps)
        record.steps = *config.steps;
    else
        record.steps = two_step ? lipschitz_step_sizes(game, graph) : default_step_sizes(game, graph);
    if (uses_schedule)
        record.schedule = config.schedule ? *config.schedule : default_step_schedule(game, graph);

    const GradientEstimator estimator(game, effective_estimator(config), config.batch, config.seed);
    const Eigen::VectorXd rho = config.rho_scale * record.steps.alpha;
    const double ref_norm = reference ? reference->x().norm() : kNaN;
    const bool exact = game.has_exact();

    StackedState state = StackedState::initial(game);
    record.rows.reserve(config.max_iters);

    for (std::size_t k = 0; k < config.max_iters; ++k) {
        IterationMetrics row;
        row.k = k;
        const auto start = std::chrono::steady_clock::now();
        try {
            const auto first = estimator.evaluate(state.x, k);
            row.oracle_calls = 1;
            row.samples = first.samples;
            if (snep) {
                state.x = sne_fb_iteration(state.x, game, step_at(*record.schedule, k), first.value);
            } else if (two_step) {
                const bool fresh = algo == Algorithm::fbf;
                auto second = [&](const Eigen::VectorXd& xt) {
                    auto e = estimator.evaluate(xt, k, fresh);
                    row.oracle_calls += 1;
                    row.samples += fresh ? e.samples : 0;
                    return e.value;
                };
                state = algo == Algorithm::fbf
                            ? fbf_iteration(state, game, graph, record.steps, rho, first.value, second).next
                            : eg_iteration(state, game, graph, record.steps, first.value, second).next;
            } else {
                if (config.experimental_decay) {
                    StepSizes decayed = record.steps;
                    decayed.alpha *= std::pow(static_cast<double>(k) + 1.0, -record.schedule->eta);
                    state = fb_iteration(state, game, graph, decayed, first.value);
                } else {
                    state = fb_iteration(state, game, graph, record.steps, first.value);
                }
            }
        } catch (const NumericalError& e) {
            record.aborted = true;
            record.message = e.what();
            record.final_state = state;
            std::string what = std::string(to_string(algo)) + ": " + record.message;
            throw RunAborted(what, std::move(record));
        }
        row.elapsed_ns =
            std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();

        row.rel_dist = reference ? (state.x - reference->x()).norm() / ref_norm : kNaN;
        row.dual_disagreement = laplacian_apply(graph, state.lambda).norm();
        if (exact) {
            const KktReport kkt = kkt_residual(game, graph, state);
            row.kkt_stat = kkt.stationarity;
            row.kkt_feas = kkt.feasibility;
            row.kkt_comp = kkt.complementarity;
            row.natural_residual = game.num_constraints() == 0 ? kkt.stationarity : kNaN;
        } else {
            row.kkt_stat = row.kkt_feas = row.kkt_comp = row.natural_residual = kNaN;
        }
        record.rows.push_back(row);
        if (callback)
            callback(row, state);

        const double size = reference ? row.rel_dist : state.flatten().norm();
        if (!std::isfinite(size) || size > config.divergence_threshold) {
            record.aborted = true;
            record.message = "divergence guard tripped at k = " + std::to_string(k);
            record.final_state = state;
            std::string what = std::string(to_string(algo)) + ": " + record.message;
            throw RunAborted(what, std::move(record));
        }
        if (config.tol) {
            double metric = kNaN;
            switch (config.stop_metric) {
            case StopMetric::rel_dist: metric = row.rel_dist; break;
            case StopMetric::dual_disagreement: metric = row.dual_disagreement; break;
            case StopMetric::kkt_stat: metric = row.kkt_stat; break;
            case StopMetric::natural_residual: metric = row.natural_residual; break;
            }
            if (metric < *config.tol)
                break;
        }
    }
    record.final_state = state;
    return record;
}

ReferenceSolution compute_reference(const GameDefinition& game, const DualGraph& graph, double tol,
                                    std::size_t max_iters, const std::optional<StepSizes>& steps) {
    if (!game.has_exact())
        throw UnsupportedOperation("compute_reference: needs an exact pseudogradient oracle");
    const StepSizes s = steps ? *steps : default_step_sizes(game, graph);
    StackedState state = StackedState::initial(game);
    for (std::size_t k = 0; k < max_iters; ++k) {
        state = fb_iteration(state, game, graph, s, pseudogradient_exact(game, state.x));
        const KktReport r = kkt_residual(game, graph, state);
        const double worst = std::max({r.stationarity, r.feasibility, r.complementarity, r.dual_disagreement});
        if (worst < tol) {
            ReferenceSolution ref;
            ref.state = state;
            ref.lambda = consensus_multiplier(state, game.num_agents());
            ref.iterations = k + 1;
            ref.stationarity = r.stationarity;
            return ref;
        }
    }
    throw NumericalError("compute_reference: no convergence within " + std::to_string(max_iters) +
                         " iterations; try different step sizes (gamma)");
}

std::filesystem::path ReferenceCache::path_for(const std::string& instance_hash) const {
    return dir_ / ("reference-" + instance_hash + ".json");
}

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const nlohmann::json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), idx(values.size()));
}

} // namespace

std::optional<ReferenceSolution> ReferenceCache::load(const std::string& instance_hash) const {
    std::ifstream in(path_for(instance_hash));
    if (!in)
        return std::nullopt;
    const auto doc = nlohmann::json::parse(in);
    if (doc.value("schema", "") != "sgne.reference/1" || doc.value("instance_hash", "") != instance_hash)
        return std::nullopt;
    ReferenceSolution ref;
    ref.state.x = vec_from(doc.at("x"));
    ref.state.z = vec_from(doc.at("z"));
    ref.state.lambda = vec_from(doc.at("lambda_local"));
    ref.lambda = vec_from(doc.at("lambda"));
    ref.iterations = doc.at("iterations").get<std::size_t>();
    ref.stationarity = doc.at("stationarity").get<double>();
    return ref;
}

void ReferenceCache::store(const std::string& instance_hash, const ReferenceSolution& ref) const {
    std::filesystem::create_directories(dir_);
    const nlohmann::json doc = {{"schema", "sgne.reference/1"},
                                {"instance_hash", instance_hash},
                                {"iterations", ref.iterations},
                                {"stationarity", ref.stationarity},
                                {"x", vec_json(ref.state.x)},
                                {"z", vec_json(ref.state.z)},
                                {"lambda_local", vec_json(ref.state.lambda)},
                                {"lambda", vec_json(ref.lambda)}};
    std::ofstream out(path_for(instance_hash));
    out << doc.dump(1) << '\n';
    if (!out)
        throw std::runtime_error("reference cache: cannot write " + path_for(instance_hash).string());
}

ReferenceSolution ReferenceCache::get_or_compute(const std::string& instance_hash, const GameDefinition& game,
                                                 const DualGraph& graph, double tol, bool* hit) const {
    if (auto cached = load(instance_hash); cached && cached->stationarity < tol) {
        if (hit)
            *hit = true;
        return *cached;
    }
    if (hit)
        *hit = false;
    ReferenceSolution ref = compute_reference(game, graph, tol);
    store(instance_hash, ref);
    return ref;
}

} // namespace sgne
