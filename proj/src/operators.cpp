#include "sgne/operators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sgne/errors.hpp"

namespace sgne {

namespace {

using Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

std::size_t dual_dim(const GameDefinition& game) { return game.num_agents() * game.num_constraints(); }

void check_state(const GameDefinition& game, const StackedState& s) {
    game.check_decision(s.x);
    if (static_cast<std::size_t>(s.z.size()) != dual_dim(game) ||
        static_cast<std::size_t>(s.lambda.size()) != dual_dim(game))
        throw ConfigError("stacked state: z and lambda must have length N*m = " + std::to_string(dual_dim(game)));
}

double max_abs_row_sum(const Eigen::MatrixXd& a) {
    if (a.rows() == 0 || a.cols() == 0)
        return 0.0;
    return a.cwiseAbs().rowwise().sum().maxCoeff();
}

} // namespace

StackedState StackedState::zeros(const GameDefinition& game) {
    const auto nm = idx(dual_dim(game));
    return {Eigen::VectorXd::Zero(idx(game.total_dim())), Eigen::VectorXd::Zero(nm), Eigen::VectorXd::Zero(nm)};
}

StackedState StackedState::initial(const GameDefinition& game) {
    StackedState s = zeros(game);
    s.x = project_omega(game, s.x);
    return s;
}

Eigen::VectorXd StackedState::flatten() const {
    Eigen::VectorXd v(x.size() + z.size() + lambda.size());
    v << x, z, lambda;
    return v;
}

StackedState StackedState::unflatten(const Eigen::VectorXd& v, std::size_t n, std::size_t nm) {
    if (static_cast<std::size_t>(v.size()) != n + 2 * nm)
        throw ConfigError("unflatten: length mismatch");
    return {v.head(idx(n)), v.segment(idx(n), idx(nm)), v.tail(idx(nm))};
}

bool StackedState::all_finite() const { return x.allFinite() && z.allFinite() && lambda.allFinite(); }

Eigen::VectorXd project_box(const Box& box, const Eigen::VectorXd& v) {
    if (v.size() != box.lower.size())
        throw ConfigError("project_box: dimension mismatch");
    return v.cwiseMax(box.lower).cwiseMin(box.upper);
}

Eigen::VectorXd project_nonneg(const Eigen::VectorXd& v) { return v.cwiseMax(0.0); }

Eigen::VectorXd project_omega(const GameDefinition& game, const Eigen::VectorXd& x) {
    game.check_decision(x);
    Eigen::VectorXd out(x.size());
    for (std::size_t i = 0; i < game.num_agents(); ++i)
        game.agent_slice(out, i) = project_box(game.box(i), game.agent_slice(x, i));
    return out;
}

Eigen::VectorXd block_apply(const GameDefinition& game, const Eigen::VectorXd& x) {
    game.check_decision(x);
    const auto m = idx(game.num_constraints());
    Eigen::VectorXd out(m * idx(game.num_agents()));
    for (std::size_t i = 0; i < game.num_agents(); ++i)
        out.segment(idx(i) * m, m) = game.block(i) * game.agent_slice(x, i);
    return out;
}

Eigen::VectorXd block_apply_transpose(const GameDefinition& game, const Eigen::VectorXd& lambda) {
    const auto m = idx(game.num_constraints());
    if (static_cast<std::size_t>(lambda.size()) != dual_dim(game))
        throw ConfigError("block_apply_transpose: lambda must have length N*m");
    Eigen::VectorXd out(idx(game.total_dim()));
    for (std::size_t i = 0; i < game.num_agents(); ++i)
        game.agent_slice(out, i) = game.block(i).transpose() * lambda.segment(idx(i) * m, m);
    return out;
}

Eigen::VectorXd stacked_local_bound(const GameDefinition& game) {
    return game.local_bound().replicate(idx(game.num_agents()), 1);
}

StepSizes max_step_sizes(const GameDefinition& game, const DualGraph& graph, double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw ConfigError("max_step_sizes: gamma must be positive and finite");
    if (graph.num_nodes() != game.num_agents())
        throw ConfigError("max_step_sizes: graph and game disagree on the number of agents");
    const auto n = idx(game.num_agents());
    StepSizes s;
    s.gamma = gamma;
    s.alpha.resize(n);
    s.nu.resize(n);
    s.sigma.resize(n);
    for (std::size_t i = 0; i < game.num_agents(); ++i) {
        const Eigen::MatrixXd& a = game.block(i);
        const double d = graph.degree(i);
        s.alpha[idx(i)] = 1.0 / (gamma + max_abs_row_sum(a.transpose()));
        s.nu[idx(i)] = 1.0 / (gamma + 2.0 * d);
        s.sigma[idx(i)] = 1.0 / (gamma + 2.0 * d + max_abs_row_sum(a));
    }
    return s;
}

Eigen::VectorXd assemble_psi_diagonal(const GameDefinition& game, const StepSizes& steps) {
    const auto n = idx(game.total_dim());
    const auto m = idx(game.num_constraints());
    const auto nm = idx(dual_dim(game));
    Eigen::VectorXd d(n + 2 * nm);
    for (std::size_t i = 0; i < game.num_agents(); ++i) {
        d.segment(idx(game.offset(i)), idx(game.dim(i))).setConstant(1.0 / steps.alpha[idx(i)]);
        d.segment(n + idx(i) * m, m).setConstant(1.0 / steps.nu[idx(i)]);
        d.segment(n + nm + idx(i) * m, m).setConstant(1.0 / steps.sigma[idx(i)]);
    }
    return d;
}

Eigen::MatrixXd assemble_skew(const GameDefinition& game, const DualGraph& graph) {
    const auto n = idx(game.total_dim());
    const auto m = idx(game.num_constraints());
    const auto nm = idx(dual_dim(game));
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n + 2 * nm, n + 2 * nm);
    for (std::size_t i = 0; i < game.num_agents(); ++i) {
        const auto xi = idx(game.offset(i));
        const auto ni = idx(game.dim(i));
        const Index li = n + nm + idx(i) * m;
        s.block(xi, li, ni, m) = game.block(i).transpose();
        s.block(li, xi, m, ni) = -game.block(i);
    }
    const Eigen::MatrixXd lap = graph.laplacian();
    for (Index i = 0; i < lap.rows(); ++i) {
        for (Index j = 0; j < lap.cols(); ++j) {
            if (lap(i, j) == 0.0)
                continue;
            const auto block = lap(i, j) * Eigen::MatrixXd::Identity(m, m);
            s.block(n + i * m, n + nm + j * m, m, m) = block;
            s.block(n + nm + i * m, n + j * m, m, m) = -block;
        }
    }
    return s;
}

Eigen::MatrixXd assemble_phi(const GameDefinition& game, const DualGraph& graph, const StepSizes& steps) {
    // Phi = Psi + (the skew part with its upper-right blocks negated).
    Eigen::MatrixXd phi = assemble_skew(game, graph);
    const auto n = idx(game.total_dim());
    const auto nm = idx(dual_dim(game));
    phi.topRightCorner(n + nm, nm) *= -1.0;
    phi.diagonal() = assemble_psi_diagonal(game, steps);
    return phi;
}

double inverse_spectral_norm(const Eigen::MatrixXd& phi, double rel_tol, std::size_t max_iters) {
    if (phi.rows() != phi.cols() || phi.rows() == 0)
        throw ConfigError("inverse_spectral_norm: matrix must be square and nonempty");
    Eigen::LDLT<Eigen::MatrixXd> ldlt(phi);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() == 0.0).any())
        throw NumericalError("inverse_spectral_norm: matrix is singular");
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(phi.rows(), 1.0, 2.0);
    v.normalize();
    double rho = 0.0;
    for (std::size_t it = 0; it < max_iters; ++it) {
        Eigen::VectorXd w = ldlt.solve(v);
        const double next = w.norm();
        if (!std::isfinite(next) || next == 0.0)
            throw NumericalError("inverse_spectral_norm: power iteration broke down");
        v = w / next;
        if (std::abs(next - rho) <= rel_tol * next)
            return next;
        rho = next;
    }
    return rho;
}

double cocoercivity_theta(double beta, const DualGraph& graph) {
    const double dstar = max_weighted_degree(graph);
    return dstar > 0.0 ? std::min(beta, 1.0 / (2.0 * dstar)) : beta;
}

Eigen::MatrixXd affine_jacobian(const GameDefinition& game) {
    const auto n = idx(game.total_dim());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    const Eigen::VectorXd f0 = pseudogradient_exact(game, x);
    Eigen::MatrixXd jac(n, n);
    for (Index j = 0; j < n; ++j) {
        x[j] = 1.0;
        jac.col(j) = pseudogradient_exact(game, x) - f0;
        x[j] = 0.0;
    }
    return jac;
}

double affine_cocoercivity(const Eigen::MatrixXd& jacobian) {
    const Eigen::MatrixXd sym = 0.5 * (jacobian + jacobian.transpose());
    const double scale = std::max(1.0, jacobian.cwiseAbs().maxCoeff());
    if ((jacobian - jacobian.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (lo < -1e-12 * scale || hi <= 0.0)
            return 0.0;
        return 1.0 / hi;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jacobian);
    if (!lu.isInvertible())
        return 0.0;
    const Eigen::MatrixXd inv = lu.inverse();
    const Eigen::MatrixXd k = inv.transpose() * sym * inv;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (k + k.transpose()), Eigen::EigenvaluesOnly);
    return std::max(0.0, eig.eigenvalues().minCoeff());
}

StepSizes certified_step_sizes(const GameDefinition& game, const DualGraph& graph, double theta, double margin) {
    if (!(theta > 0.0))
        throw NumericalError("certified_step_sizes: cocoercivity constant must be positive");
    const double target = 2.0 * theta * (1.0 - margin);
    // Phi(gamma) = Phi(0) + gamma I, so lambda_min shifts exactly with gamma.
    const double probe = 1.0;
    const double lambda_min0 = 1.0 / inverse_spectral_norm(assemble_phi(game, graph, max_step_sizes(game, graph, probe))) - probe;
    double gamma = std::max(1.0 / target - lambda_min0, 1e-9);
    for (int attempt = 0; attempt < 60; ++attempt) {
        StepSizes steps = max_step_sizes(game, graph, gamma);
        const double norm = inverse_spectral_norm(assemble_phi(game, graph, steps));
        if (norm < 2.0 * theta)
            return steps;
        gamma *= 1.0 + 1e-6 * std::pow(2.0, attempt);
    }
    throw NumericalError("certified_step_sizes: could not reach ||Phi^-1|| < 2 theta");
}

StackedState forward_eval(const GameDefinition& game, const DualGraph& graph, const StackedState& state,
                          const Eigen::VectorXd& forward_value) {
    check_state(game, state);
    if (forward_value.size() != state.x.size())
        throw ConfigError("forward_eval: pseudogradient estimate has the wrong length");
    return {forward_value, Eigen::VectorXd::Zero(state.z.size()),
            stacked_local_bound(game) + laplacian_apply(graph, state.lambda)};
}

InclusionReport verify_fb_inclusion(const GameDefinition& game, const DualGraph& graph, const StackedState& current,
                                    const StackedState& next, const StackedState& forward_value,
                                    const StepSizes& steps, double tol) {
    check_state(game, current);
    check_state(game, next);
    const auto m = idx(game.num_constraints());
    const Eigen::VectorXd dx = current.x - next.x;
    const Eigen::VectorXd dz = current.z - next.z;
    const Eigen::VectorXd dl = current.lambda - next.lambda;

    // r = Phi (omega_k - omega_next) - Â(omega_k) - M omega_next, which must
    // lie in the normal-cone part of B-bar at omega_next.
    Eigen::VectorXd rx(dx.size());
    for (std::size_t i = 0; i < game.num_agents(); ++i)
        game.agent_slice(rx, i) = game.agent_slice(dx, i) / steps.alpha[idx(i)];
    rx -= block_apply_transpose(game, dl) + forward_value.x + block_apply_transpose(game, next.lambda);

    Eigen::VectorXd rz(dz.size());
    Eigen::VectorXd rl(dl.size());
    for (std::size_t i = 0; i < game.num_agents(); ++i) {
        rz.segment(idx(i) * m, m) = dz.segment(idx(i) * m, m) / steps.nu[idx(i)];
        rl.segment(idx(i) * m, m) = dl.segment(idx(i) * m, m) / steps.sigma[idx(i)];
    }
    rz -= laplacian_apply(graph, dl) + forward_value.z + laplacian_apply(graph, next.lambda);
    rl -= block_apply(game, dx) + laplacian_apply(graph, dz) + forward_value.lambda;
    rl += block_apply(game, next.x) + laplacian_apply(graph, next.z);

    InclusionReport report;
    auto note = [&report](const std::string& what, Index k, double v) {
        report.ok = false;
        if (report.violations.size() < 8)
            report.violations.push_back(what + "[" + std::to_string(k) + "] residual " + std::to_string(v));
    };

    for (std::size_t i = 0; i < game.num_agents(); ++i) {
        const Box& box = game.box(i);
        const auto off = idx(game.offset(i));
        for (Index j = 0; j < idx(game.dim(i)); ++j) {
            const double xv = next.x[off + j];
            const double r = rx[off + j];
            const bool at_lower = std::abs(xv - box.lower[j]) <= tol;
            const bool at_upper = std::abs(xv - box.upper[j]) <= tol;
            double violation = 0.0;
            if (xv < box.lower[j] - tol || xv > box.upper[j] + tol)
                violation = std::numeric_limits<double>::infinity();
            else if (at_lower && at_upper)
                violation = 0.0;
            else if (at_lower)
                violation = std::max(0.0, r);   // N = (-inf, 0]
            else if (at_upper)
                violation = std::max(0.0, -r);  // N = [0, inf)
            else
                violation = std::abs(r);
            report.max_x_violation = std::max(report.max_x_violation, violation);
            if (violation > tol)
                note("x", off + j, r);
        }
    }
    for (Index k = 0; k < rz.size(); ++k) {
        report.max_z_violation = std::max(report.max_z_violation, std::abs(rz[k]));
        if (std::abs(rz[k]) > tol)
            note("z", k, rz[k]);
    }
    for (Index k = 0; k < rl.size(); ++k) {
        const double lv = next.lambda[k];
        double violation = 0.0;
        if (lv < -tol)
            violation = std::numeric_limits<double>::infinity();
        else if (lv <= tol)
            violation = std::max(0.0, rl[k]);
        else
            violation = std::abs(rl[k]);
        report.max_lambda_violation = std::max(report.max_lambda_violation, violation);
        if (violation > tol)
            note("lambda", k, rl[k]);
    }
    return report;
}

KktReport kkt_residual(const GameDefinition& game, const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) {
    if (static_cast<std::size_t>(lambda.size()) != game.num_constraints())
        throw ConfigError("kkt_residual: multiplier must have length m");
    const Eigen::VectorXd f = pseudogradient_exact(game, x);
    Eigen::VectorXd grad = f;
    for (std::size_t i = 0; i < game.num_agents(); ++i)
        game.agent_slice(grad, i) += game.block(i).transpose() * lambda;
    const Eigen::VectorXd viol = constraint_violation(game, x);

    KktReport r;
    r.stationarity = (x - project_omega(game, x - grad)).norm();
    r.feasibility = viol.cwiseMax(0.0).norm();
    r.complementarity = std::abs(lambda.dot(viol));
    return r;
}

Eigen::VectorXd consensus_multiplier(const StackedState& state, std::size_t num_agents) {
    const auto m = state.lambda.size() / idx(num_agents);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(m);
    for (std::size_t i = 0; i < num_agents; ++i)
        mean += state.lambda.segment(idx(i) * m, m);
    return mean / static_cast<double>(num_agents);
}

KktReport kkt_residual(const GameDefinition& game, const DualGraph& graph, const StackedState& state) {
    check_state(game, state);
    KktReport r = kkt_residual(game, state.x, consensus_multiplier(state, game.num_agents()));
    r.dual_disagreement = laplacian_apply(graph, state.lambda).norm();
    return r;
}

double natural_residual(const GameDefinition& game, const Eigen::VectorXd& x) {
    if (game.num_constraints() != 0)
        throw UnsupportedOperation("natural_residual: defined only for games without shared constraints");
    return (x - project_omega(game, x - pseudogradient_exact(game, x))).norm();
}

double phi_distance(const Eigen::MatrixXd& phi, const StackedState& a, const StackedState& b) {
    const Eigen::VectorXd d = a.flatten() - b.flatten();
    return std::sqrt(std::max(0.0, d.dot(phi * d)));
}

} // namespace sgne
