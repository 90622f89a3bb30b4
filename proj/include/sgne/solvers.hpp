#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sgne/game.hpp"
#include "sgne/graph.hpp"
#include "sgne/operators.hpp"
#include "sgne/sampling.hpp"

namespace sgne {

enum class Algorithm {
    det_fb,                    ///< preconditioned FB, exact pseudogradient
    stoch_fb_saa,              ///< preconditioned FB, SAA batches, constant steps
    stoch_fb_sa_experimental,  ///< preconditioned FB, one sample: no convergence guarantee
    sne_fb_sa,                 ///< no shared constraints, one sample, vanishing steps
    sne_fb_saa,                ///< no shared constraints, SAA batches, vanishing steps
    fbf,                       ///< forward-backward-forward
    eg,                        ///< extragradient
};

std::string_view to_string(Algorithm algorithm);
/// Throws ConfigError listing the valid names.
Algorithm parse_algorithm(std::string_view name);
const std::vector<Algorithm>& all_algorithms();

enum class EstimatorKind { exact, sa, saa };

std::string_view to_string(EstimatorKind kind);
EstimatorKind parse_estimator(std::string_view name);

enum class StopMetric { rel_dist, dual_disagreement, kkt_stat, natural_residual };

std::string_view to_string(StopMetric metric);
StopMetric parse_stop_metric(std::string_view name);

struct SolverConfig {
    Algorithm algorithm = Algorithm::stoch_fb_saa;
    /// Constant steps. When empty, run() uses default_step_sizes().
    std::optional<StepSizes> steps;
    /// Vanishing steps for the SNEP modes (and the opt-in decay of the
    /// experimental mode). When empty, default_step_schedule() is used.
    std::optional<StepSchedule> schedule;
    BatchSchedule batch;
    /// Gradient estimator for FBF and EG (other algorithms fix their own).
    EstimatorKind estimator = EstimatorKind::saa;
    std::size_t max_iters = 3000;
    std::optional<double> tol;
    StopMetric stop_metric = StopMetric::rel_dist;
    std::uint64_t seed = 0;
    /// FBF correction step rho_i = rho_scale * alpha_i.
    double rho_scale = 1.0;
    /// Required to run stoch_fb_sa_experimental.
    bool experimental = false;
    /// Experimental mode only: alpha_k = alpha * (k+1)^-eta.
    bool experimental_decay = false;
    double divergence_threshold = 1e6;
};

/// Estimator actually used by an algorithm under this config.
EstimatorKind effective_estimator(const SolverConfig& config);

/// Throws ConfigError for combinations outside the supported set.
void validate(const SolverConfig& config, const GameDefinition& game);

/// One row of a run: metrics of the iterate produced by iteration k.
struct IterationMetrics {
    std::size_t k = 0;
    double rel_dist = 0.0;
    double dual_disagreement = 0.0;
    double kkt_stat = 0.0;
    double kkt_feas = 0.0;
    double kkt_comp = 0.0;
    double natural_residual = 0.0;
    std::size_t oracle_calls = 0;  ///< this iteration
    std::size_t samples = 0;       ///< this iteration, summed over agents
    std::int64_t elapsed_ns = 0;   ///< this iteration
};

struct RunRecord {
    Algorithm algorithm = Algorithm::det_fb;
    std::uint64_t seed = 0;
    std::vector<IterationMetrics> rows;
    StackedState final_state;
    StepSizes steps;
    std::optional<StepSchedule> schedule;
    bool aborted = false;
    std::string message;

    std::size_t total_oracle_calls() const;
    std::size_t total_samples() const;
    std::int64_t total_elapsed_ns() const;
    /// Cumulative oracle calls up to the first row with rel_dist < accuracy,
    /// or nullopt if never reached.
    std::optional<std::size_t> calls_to_accuracy(double accuracy) const;
};

/// Carries the partial record of a run stopped by the divergence guard or
/// a non-finite update.
class RunAborted : public std::runtime_error {
public:
    RunAborted(const std::string& what, RunRecord partial)
        : std::runtime_error(what), record(std::move(partial)) {}
    RunRecord record;
};

struct ReferenceSolution {
    StackedState state;      ///< full fixed point (x*, z*, lambda*)
    Eigen::VectorXd lambda;  ///< consensus multiplier (m)
    std::size_t iterations = 0;
    double stationarity = 0.0;

    const Eigen::VectorXd& x() const { return state.x; }
};

/// Pseudogradient estimators: exact, one sample per agent, or SAA batches.
class GradientEstimator {
public:
    struct Evaluation {
        Eigen::VectorXd value;
        std::size_t samples = 0;
    };

    GradientEstimator(const GameDefinition& game, EstimatorKind kind, BatchSchedule batch,
                      std::uint64_t seed);

    /// `second` selects an independent channel (fresh samples) at the same k.
    Evaluation evaluate(const Eigen::VectorXd& x, std::size_t k, bool second = false) const;

    EstimatorKind kind() const { return kind_; }

private:
    const GameDefinition* game_;
    EstimatorKind kind_;
    BatchSchedule batch_;
    SampleStream stream_;
};

/// Read of a neighbour's message, for protocol instrumentation.
struct MessageRead {
    int phase = 0;
    std::size_t reader = 0;
    std::size_t sender = 0;
    char variable = '?';  ///< 'x', 'z' or 'l' (lambda)
    std::size_t round = 0;  ///< iterate index of the value read
};

using MessageLog = std::vector<MessageRead>;

/// One round of the preconditioned forward-backward scheme (two phases).
/// `round` only labels the message log.
StackedState fb_iteration(const StackedState& state, const GameDefinition& game, const DualGraph& graph,
                          const StepSizes& steps, const Eigen::VectorXd& forward_value,
                          MessageLog* log = nullptr, std::size_t round = 0);

struct TwoStepResult {
    StackedState intermediate;  ///< (x~, z~, lambda~)
    StackedState next;
};

using ForwardOracle = std::function<Eigen::VectorXd(const Eigen::VectorXd& x)>;

/// Forward-backward-forward round; `forward_at_intermediate` is evaluated
/// once, at x~, with a fresh sample.
TwoStepResult fbf_iteration(const StackedState& state, const GameDefinition& game, const DualGraph& graph,
                            const StepSizes& steps, const Eigen::VectorXd& rho,
                            const Eigen::VectorXd& forward_at_x, const ForwardOracle& forward_at_intermediate);

/// Extragradient round: extrapolation then a second resolvent step from
/// the same base point.
TwoStepResult eg_iteration(const StackedState& state, const GameDefinition& game, const DualGraph& graph,
                           const StepSizes& steps, const Eigen::VectorXd& forward_at_x,
                           const ForwardOracle& forward_at_intermediate);

/// x_i+ = proj_Omega_i(x_i - gamma_k F_hat_i) for every agent.
Eigen::VectorXd sne_fb_iteration(const Eigen::VectorXd& x, const GameDefinition& game, double gamma_k,
                                 const Eigen::VectorXd& forward_value);

/// Cocoercivity estimate of the exact pseudogradient (affine probe);
/// throws UnsupportedOperation without an exact oracle.
double estimate_beta(const GameDefinition& game);

/// certified_step_sizes with theta = min(beta, 1/(2 d*)) (beta alone when
/// there are no shared constraints).
StepSizes default_step_sizes(const GameDefinition& game, const DualGraph& graph);

/// Uniform steps tau = fraction / Lip(H) for FBF and EG, where H is the
/// affine monotone operator whose resolvent-free part both methods evaluate
/// twice. Requires an affine exact pseudogradient.
StepSizes lipschitz_step_sizes(const GameDefinition& game, const DualGraph& graph, double fraction = 0.95);

/// gamma0 = min alpha of the default steps, eta = 0.6, cap = 2 beta.
StepSchedule default_step_schedule(const GameDefinition& game, const DualGraph& graph);

using IterationCallback = std::function<void(const IterationMetrics&, const StackedState&)>;

/// Runs `config.algorithm` from StackedState::initial(game). Metrics that
/// need the expected pseudogradient are NaN when the game has no exact
/// oracle; rel_dist is NaN without a reference.
RunRecord run(const SolverConfig& config, const GameDefinition& game, const DualGraph& graph,
              const ReferenceSolution* reference = nullptr, const IterationCallback& callback = {});

/// Deterministic preconditioned FB until KKT stationarity < tol.
ReferenceSolution compute_reference(const GameDefinition& game, const DualGraph& graph, double tol = 1e-10,
                                    std::size_t max_iters = 10'000'000,
                                    const std::optional<StepSizes>& steps = std::nullopt);

/// On-disk cache of reference solutions keyed by instance hash.
class ReferenceCache {
public:
    explicit ReferenceCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

    std::optional<ReferenceSolution> load(const std::string& instance_hash) const;
    void store(const std::string& instance_hash, const ReferenceSolution& solution) const;
    std::filesystem::path path_for(const std::string& instance_hash) const;

    /// Loads on hit, otherwise computes and stores. `hit` reports which.
    ReferenceSolution get_or_compute(const std::string& instance_hash, const GameDefinition& game,
                                     const DualGraph& graph, double tol, bool* hit = nullptr) const;

private:
    std::filesystem::path dir_;
};

} // namespace sgne
