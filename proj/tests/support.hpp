#pragma once

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sgne/cournot.hpp"
#include "sgne/game.hpp"
#include "sgne/graph.hpp"
#include "sgne/operators.hpp"

namespace sgne::testing {

/// F(x) = M x + c, sampled as F(x) + xi * 1 with xi ~ N(0, noise_var).
struct AffineSpec {
    Eigen::MatrixXd M;
    Eigen::VectorXd c;
    std::vector<Box> boxes;
    std::vector<Eigen::MatrixXd> blocks;
    Eigen::VectorXd b;
    double noise_var = 0.0;
};

inline GameDefinition affine_game(const AffineSpec& spec) {
    GameData data{spec.boxes, spec.blocks, spec.b};
    std::vector<std::size_t> offsets{0};
    for (const auto& box : spec.boxes)
        offsets.push_back(offsets.back() + box.dim());
    auto exact = [spec, offsets](std::size_t i, const Eigen::VectorXd& x) -> Eigen::VectorXd {
        const auto n = static_cast<Eigen::Index>(offsets[i + 1] - offsets[i]);
        const auto o = static_cast<Eigen::Index>(offsets[i]);
        return spec.M.middleRows(o, n) * x + spec.c.segment(o, n);
    };
    GameDefinition::Oracles oracles;
    oracles.sampled = [exact](std::size_t i, const Eigen::VectorXd& x, const SamplePoint& xi) -> Eigen::VectorXd {
        Eigen::VectorXd g = exact(i, x);
        return (g.array() + xi[0]).matrix();
    };
    oracles.exact = exact;
    oracles.affine_in_sample = true;
    return GameDefinition(data, SampleDistribution::normal(1, 0.0, spec.noise_var), oracles);
}

/// One agent, f(x) = (x - 1)^2 / 2 on [0, 2], no shared constraints.
inline GameDefinition scalar_quadratic_game(double noise_var = 0.0) {
    AffineSpec s;
    s.M = Eigen::MatrixXd::Identity(1, 1);
    s.c = Eigen::VectorXd::Constant(1, -1.0);
    s.boxes = {Box{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 2.0)}};
    s.blocks = {Eigen::MatrixXd(0, 1)};
    s.b = Eigen::VectorXd(0);
    s.noise_var = noise_var;
    return affine_game(s);
}

inline cournot::CournotParams small_params(std::size_t companies = 3, std::size_t markets = 2,
                                           bool shared = true) {
    cournot::CournotParams p;
    p.companies = companies;
    p.markets = markets;
    p.shared_constraints = shared;
    p.max_markets_per_company = std::min<std::size_t>(markets, 3);
    p.min_companies_per_market = std::min<std::size_t>(companies, 2);
    return p;
}

inline Eigen::VectorXd random_in_box(const GameDefinition& game, std::mt19937_64& rng, double margin = 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::VectorXd x(static_cast<Eigen::Index>(game.total_dim()));
    for (std::size_t i = 0; i < game.num_agents(); ++i) {
        const Box& b = game.box(i);
        for (Eigen::Index j = 0; j < b.lower.size(); ++j) {
            const double w = b.upper[j] - b.lower[j];
            game.agent_slice(x, i)[j] = b.lower[j] - margin * w + u(rng) * (1.0 + 2.0 * margin) * w;
        }
    }
    return x;
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = u(rng);
    return v;
}

inline Eigen::MatrixXd kron_identity(const Eigen::MatrixXd& a, Eigen::Index m) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows() * m, a.cols() * m);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * m, j * m, m, m) = a(i, j) * Eigen::MatrixXd::Identity(m, m);
    return out;
}

/// Dense block-diagonal A = diag(A_1, ..., A_N).
inline Eigen::MatrixXd dense_block_diag(const GameDefinition& game) {
    const auto m = static_cast<Eigen::Index>(game.num_constraints());
    const auto nm = m * static_cast<Eigen::Index>(game.num_agents());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(nm, static_cast<Eigen::Index>(game.total_dim()));
    for (std::size_t i = 0; i < game.num_agents(); ++i)
        out.block(static_cast<Eigen::Index>(i) * m, static_cast<Eigen::Index>(game.offset(i)), m,
                  static_cast<Eigen::Index>(game.dim(i))) = game.block(i);
    return out;
}

/// Stacked state with x in Omega, z free and lambda >= 0.
inline StackedState random_state(const GameDefinition& game, std::mt19937_64& rng) {
    const auto nm = static_cast<Eigen::Index>(game.num_constraints() * game.num_agents());
    StackedState s;
    s.x = random_in_box(game, rng);
    s.z = random_vector(nm, rng);
    s.lambda = random_vector(nm, rng, 0.0, 1.0);
    return s;
}

// Dense pieces of the monotone operator H(w) = (F(x) + A^T lambda, L lambda,
// b + L lambda - A x - L z) and the resolvent J = proj onto Omega x R x R+.
struct DenseModel {
    const GameDefinition& game;
    Eigen::MatrixXd a;  // block diagonal bold A
    Eigen::MatrixXd l;  // L kron I_m
    Eigen::VectorXd b;

    DenseModel(const GameDefinition& g, const DualGraph& graph)
        : game(g), a(dense_block_diag(g)),
          l(kron_identity(graph.laplacian(), static_cast<Eigen::Index>(g.num_constraints()))),
          b(stacked_local_bound(g)) {}

    Eigen::VectorXd h(const StackedState& w, const Eigen::VectorXd& f) const {
        StackedState out;
        out.x = f + a.transpose() * w.lambda;
        out.z = l * w.lambda;
        out.lambda = b + l * w.lambda - a * w.x - l * w.z;
        return out.flatten();
    }

    StackedState resolvent(const Eigen::VectorXd& v) const {
        const auto n = game.total_dim();
        const auto nm = game.num_agents() * game.num_constraints();
        StackedState s = StackedState::unflatten(v, n, nm);
        s.x = project_omega(game, s.x);
        s.lambda = project_nonneg(s.lambda);
        return s;
    }

    Eigen::VectorXd steps_diagonal(const StepSizes& steps) const {
        return assemble_psi_diagonal(game, steps).cwiseInverse();
    }
};

} // namespace sgne::testing
