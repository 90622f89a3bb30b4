#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgne/game.hpp"
#include "sgne/graph.hpp"

namespace sgne {

/// omega = col(x, z, lambda). Also used for any vector living in the same
/// stacked space (e.g. the value of the forward operator).
struct StackedState {
    Eigen::VectorXd x;       ///< n
    Eigen::VectorXd z;       ///< N m
    Eigen::VectorXd lambda;  ///< N m

    static StackedState zeros(const GameDefinition& game);
    /// x = proj_Omega(0), z = 0, lambda = 0.
    static StackedState initial(const GameDefinition& game);

    Eigen::VectorXd flatten() const;
    static StackedState unflatten(const Eigen::VectorXd& v, std::size_t n, std::size_t nm);

    bool all_finite() const;
};

/// Per-agent constant steps alpha_i, nu_i, sigma_i plus the design
/// parameter gamma they were derived from.
struct StepSizes {
    Eigen::VectorXd alpha;
    Eigen::VectorXd nu;
    Eigen::VectorXd sigma;
    double gamma = 0.0;
};

struct KktReport {
    double stationarity = 0.0;
    double complementarity = 0.0;
    double feasibility = 0.0;
    double dual_disagreement = 0.0;
};

Eigen::VectorXd project_box(const Box& box, const Eigen::VectorXd& v);
Eigen::VectorXd project_nonneg(const Eigen::VectorXd& v);
/// Stacked projection onto Omega = prod_i Omega_i.
Eigen::VectorXd project_omega(const GameDefinition& game, const Eigen::VectorXd& x);

/// bold-A x = col(A_1 x_1, ..., A_N x_N).
Eigen::VectorXd block_apply(const GameDefinition& game, const Eigen::VectorXd& x);
/// bold-A^T lambda = col(A_1^T lambda_1, ..., A_N^T lambda_N).
Eigen::VectorXd block_apply_transpose(const GameDefinition& game, const Eigen::VectorXd& lambda);
/// col(b_1, ..., b_N).
Eigen::VectorXd stacked_local_bound(const GameDefinition& game);

/// Largest steps allowed by the diagonal-dominance bounds for a given gamma
/// (equality at each bound). Throws ConfigError for gamma <= 0.
StepSizes max_step_sizes(const GameDefinition& game, const DualGraph& graph, double gamma);

/// Preconditioner [[alpha^-1, 0, -A^T], [0, nu^-1, -L], [-A, -L, sigma^-1]].
Eigen::MatrixXd assemble_phi(const GameDefinition& game, const DualGraph& graph, const StepSizes& steps);
/// diag(alpha^-1, nu^-1, sigma^-1).
Eigen::VectorXd assemble_psi_diagonal(const GameDefinition& game, const StepSizes& steps);
/// Linear part of B-bar: [[0, 0, A^T], [0, 0, L], [-A, -L, 0]].
Eigen::MatrixXd assemble_skew(const GameDefinition& game, const DualGraph& graph);

/// ||Phi^-1||_2 by power iteration on Phi^-1 (via one LDLT factorization).
double inverse_spectral_norm(const Eigen::MatrixXd& phi, double rel_tol = 1e-12,
                             std::size_t max_iters = 100000);

/// theta = min(beta, 1 / (2 d*)).
double cocoercivity_theta(double beta, const DualGraph& graph);

/// Jacobian of an affine exact pseudogradient by probing unit directions.
Eigen::MatrixXd affine_jacobian(const GameDefinition& game);

/// Largest beta with <Md, d> >= beta ||Md||^2 for all d, i.e. the
/// cocoercivity constant of d -> M d. Returns 0 if M is singular or its
/// symmetric part is indefinite.
double affine_cocoercivity(const Eigen::MatrixXd& jacobian);

/// Steps of max_step_sizes with the smallest gamma for which
/// ||Phi^-1|| < 2 theta (bisection on gamma). Throws NumericalError if the
/// condition cannot be met.
StepSizes certified_step_sizes(const GameDefinition& game, const DualGraph& graph, double theta,
                               double margin = 1e-3);

/// Â(omega) = (F_hat, 0, b + (L kron I) lambda).
StackedState forward_eval(const GameDefinition& game, const DualGraph& graph, const StackedState& state,
                          const Eigen::VectorXd& forward_value);

struct InclusionReport {
    bool ok = true;
    double max_x_violation = 0.0;
    double max_z_violation = 0.0;
    double max_lambda_violation = 0.0;
    std::vector<std::string> violations;  ///< first few offending coordinates
};

/// Checks Phi (omega_k - omega_next) - Â(omega_k) in B-bar(omega_next):
/// normal-cone sign tests on active coordinates, equality elsewhere.
InclusionReport verify_fb_inclusion(const GameDefinition& game, const DualGraph& graph,
                                    const StackedState& current, const StackedState& next,
                                    const StackedState& forward_value, const StepSizes& steps,
                                    double tol = 1e-9);

/// KKT residuals of (x, lambda) with a single consensus multiplier.
KktReport kkt_residual(const GameDefinition& game, const Eigen::VectorXd& x, const Eigen::VectorXd& lambda);

/// Same, with lambda taken as the mean of the local copies and the dual
/// disagreement ||(L kron I) lambda|| filled in.
KktReport kkt_residual(const GameDefinition& game, const DualGraph& graph, const StackedState& state);

/// ||x - proj_Omega(x - F(x))||. Only defined without shared constraints.
double natural_residual(const GameDefinition& game, const Eigen::VectorXd& x);

/// Mean of the N local dual copies.
Eigen::VectorXd consensus_multiplier(const StackedState& state, std::size_t num_agents);

/// sqrt((a-b)^T Phi (a-b)).
double phi_distance(const Eigen::MatrixXd& phi, const StackedState& a, const StackedState& b);

} // namespace sgne
