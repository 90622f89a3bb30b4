#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "sgne/cournot.hpp"
#include "sgne/errors.hpp"
#include "sgne/operators.hpp"
#include "sgne/solvers.hpp"
#include "support.hpp"

using namespace sgne;

namespace {

// Three agents on a triangle, each with x_i in [0, 1]^2 and A_i = I_2.
testing::AffineSpec triangle_spec() {
    testing::AffineSpec s;
    s.M = Eigen::MatrixXd::Identity(6, 6) * 2.0;
    s.M(0, 3) = 0.5;
    s.M(3, 0) = 0.5;
    s.c = Eigen::VectorXd::Constant(6, -1.0);
    for (int i = 0; i < 3; ++i) {
        s.boxes.push_back({Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)});
        s.blocks.push_back(Eigen::MatrixXd::Identity(2, 2));
    }
    s.b = Eigen::VectorXd::Constant(2, 1.2);
    return s;
}

DualGraph triangle() { return build_dual_graph({{0, 1}, {1, 2}, {2, 0}}, 3); }

double min_eigenvalue(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

} // namespace

TEST_CASE("projections") {
    const Box box{Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 2)};
    CHECK(project_box(box, Eigen::Vector2d(-1, 3)) == Eigen::Vector2d(0, 2));
    CHECK(project_box(box, Eigen::Vector2d(0.5, 1)) == Eigen::Vector2d(0.5, 1));
    CHECK(project_nonneg(Eigen::Vector3d(-1, 0, 2)) == Eigen::Vector3d(0, 0, 2));
    CHECK_THROWS_AS(project_box(box, Eigen::Vector3d(0, 0, 0)), ConfigError);

    // Firm nonexpansiveness on random pairs.
    std::mt19937_64 rng(3);
    for (int t = 0; t < 1000; ++t) {
        const Eigen::VectorXd u = testing::random_vector(2, rng, -3, 3);
        const Eigen::VectorXd v = testing::random_vector(2, rng, -3, 3);
        const Eigen::VectorXd pu = project_box(box, u), pv = project_box(box, v);
        REQUIRE((pu - pv).squaredNorm() <= (pu - pv).dot(u - v) + 1e-15);
    }
}

TEST_CASE("step-size bounds") {
    const auto game = testing::affine_game(triangle_spec());
    const auto s = max_step_sizes(game, triangle(), 1.0);
    CHECK(s.alpha[0] == doctest::Approx(0.5));
    CHECK(s.nu[1] == doctest::Approx(0.2));
    CHECK(s.sigma[2] == doctest::Approx(1.0 / 6.0));
    CHECK_THROWS_AS(max_step_sizes(game, triangle(), 0.0), ConfigError);
    CHECK_THROWS_AS(max_step_sizes(game, triangle(), -1.0), ConfigError);

    auto spec = triangle_spec();
    for (auto& a : spec.blocks)
        a.setZero();
    const auto uncoupled = testing::affine_game(spec);
    CHECK(max_step_sizes(uncoupled, triangle(), 4.0).alpha[1] == doctest::Approx(0.25));
}

TEST_CASE("preconditioner structure") {
    const auto game = testing::affine_game(triangle_spec());
    for (double gamma : {0.5, 1.0, 3.0}) {
        const auto steps = max_step_sizes(game, triangle(), gamma);
        const Eigen::MatrixXd phi = assemble_phi(game, triangle(), steps);
        CHECK((phi - phi.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK(min_eigenvalue(phi) >= gamma - 1e-9);
        CHECK(inverse_spectral_norm(phi) == doctest::Approx(1.0 / min_eigenvalue(phi)).epsilon(1e-9));
    }

    const DualGraph single = build_dual_graph({}, 1);
    testing::AffineSpec one;
    one.M = Eigen::MatrixXd::Identity(2, 2);
    one.c = Eigen::VectorXd::Zero(2);
    one.boxes = {Box{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)}};
    one.blocks = {Eigen::MatrixXd::Zero(1, 2)};
    one.b = Eigen::VectorXd::Ones(1);
    const auto g1 = testing::affine_game(one);
    const Eigen::MatrixXd phi1 = assemble_phi(g1, single, max_step_sizes(g1, single, 2.0));
    // No coupling and no neighbours: Phi is diagonal.
    CHECK((phi1 - Eigen::MatrixXd(phi1.diagonal().asDiagonal())).norm() == 0.0);
    CHECK(max_step_sizes(g1, single, 2.0).alpha[0] == doctest::Approx(0.5));
}

TEST_CASE("skew operator is orthogonal to its argument") {
    const auto inst = cournot::generate_instance(42, cournot::CournotParams{});
    const auto game = cournot::make_game(inst);
    const auto graph = cournot::make_graph(inst);
    const Eigen::MatrixXd s = assemble_skew(game, graph);
    CHECK((s + s.transpose()).cwiseAbs().maxCoeff() == 0.0);
    std::mt19937_64 rng(1);
    for (int t = 0; t < 100; ++t) {
        const Eigen::VectorXd w = testing::random_vector(s.rows(), rng);
        REQUIRE(std::abs(w.dot(s * w)) <= 1e-12);
    }
}

TEST_CASE("forward operator against dense assembly") {
    const auto game = testing::affine_game(triangle_spec());
    const auto g = triangle();
    std::mt19937_64 rng(7);
    const StackedState s = testing::random_state(game, rng);
    const Eigen::VectorXd f = pseudogradient_exact(game, s.x);
    const StackedState a = forward_eval(game, g, s, f);
    CHECK(a.x == f);
    CHECK(a.z.norm() == 0.0);
    const Eigen::VectorXd dense = stacked_local_bound(game) + testing::kron_identity(g.laplacian(), 2) * s.lambda;
    CHECK((a.lambda - dense).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((block_apply(game, s.x) - testing::dense_block_diag(game) * s.x).norm() < 1e-14);
    CHECK((block_apply_transpose(game, s.lambda) - testing::dense_block_diag(game).transpose() * s.lambda).norm() <
          1e-14);
    CHECK_THROWS_AS(forward_eval(game, g, s, Eigen::VectorXd::Zero(5)), ConfigError);
}

TEST_CASE("fb inclusion check") {
    const auto game = testing::affine_game(triangle_spec());
    const auto g = triangle();
    const auto steps = default_step_sizes(game, g);
    std::mt19937_64 rng(9);
    StackedState s = testing::random_state(game, rng);
    for (int it = 0; it < 50; ++it) {
        const Eigen::VectorXd f = pseudogradient_exact(game, s.x);
        const StackedState next = fb_iteration(s, game, g, steps, f);
        const auto rep = verify_fb_inclusion(game, g, s, next, forward_eval(game, g, s, f), steps);
        REQUIRE(rep.ok);
        // A perturbed successor fails.
        StackedState bad = next;
        bad.z[0] += 1e-3;
        CHECK_FALSE(verify_fb_inclusion(game, g, s, bad, forward_eval(game, g, s, f), steps).ok);
        s = next;
    }
    // A fixed point maps onto itself.
    const auto ref = compute_reference(game, g, 1e-12, 1000000, steps);
    const Eigen::VectorXd f = pseudogradient_exact(game, ref.state.x);
    CHECK(verify_fb_inclusion(game, g, ref.state, ref.state, forward_eval(game, g, ref.state, f), steps, 1e-8).ok);
}

TEST_CASE("kkt residual") {
    const auto game = testing::scalar_quadratic_game();
    CHECK(kkt_residual(game, Eigen::VectorXd::Ones(1), Eigen::VectorXd(0)).stationarity == 0.0);
    CHECK(kkt_residual(game, Eigen::VectorXd::Zero(1), Eigen::VectorXd(0)).stationarity == doctest::Approx(1.0));
    CHECK(natural_residual(game, Eigen::VectorXd::Constant(1, 2.0)) == doctest::Approx(1.0));
    CHECK(natural_residual(game, Eigen::VectorXd::Ones(1)) == 0.0);

    // min (x-1)^2/2 on [0, 2] subject to x <= 0.5: x = 0.5, lambda = 0.5.
    testing::AffineSpec s;
    s.M = Eigen::MatrixXd::Identity(1, 1);
    s.c = Eigen::VectorXd::Constant(1, -1.0);
    s.boxes = {Box{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 2.0)}};
    s.blocks = {Eigen::MatrixXd::Identity(1, 1)};
    s.b = Eigen::VectorXd::Constant(1, 0.5);
    const auto c = testing::affine_game(s);
    const auto good = kkt_residual(c, Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Constant(1, 0.5));
    CHECK(good.stationarity == doctest::Approx(0.0));
    CHECK(good.feasibility == 0.0);
    CHECK(good.complementarity == 0.0);
    const auto bad = kkt_residual(c, Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, 0.2));
    CHECK(bad.feasibility == doctest::Approx(0.5));
    CHECK(bad.complementarity == doctest::Approx(0.1));
    CHECK_THROWS_AS(natural_residual(c, Eigen::VectorXd::Zero(1)), UnsupportedOperation);
    CHECK_THROWS_AS(kkt_residual(c, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(2)), ConfigError);
}

TEST_CASE("dual disagreement uses the laplacian") {
    const auto game = testing::affine_game(triangle_spec());
    auto s = StackedState::zeros(game);
    s.lambda << 1, 1, 1, 1, 1, 1;
    CHECK(kkt_residual(game, triangle(), s).dual_disagreement == 0.0);
    s.lambda[0] = 2;
    CHECK(kkt_residual(game, triangle(), s).dual_disagreement == doctest::Approx(std::sqrt(4.0 + 1.0 + 1.0)));
    CHECK(consensus_multiplier(s, 3)[0] == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("cocoercivity of affine maps") {
    CHECK(affine_cocoercivity(Eigen::Vector2d(1, 2).asDiagonal()) == doctest::Approx(0.5));
    Eigen::Matrix2d rot;
    rot << 1, 1, -1, 1;
    CHECK(affine_cocoercivity(rot) == doctest::Approx(0.5));
    Eigen::Matrix2d indefinite;
    indefinite << 1, 0, 0, -1;
    CHECK(affine_cocoercivity(indefinite) == 0.0);
    CHECK(affine_cocoercivity(Eigen::Matrix2d::Zero()) == 0.0);
}

TEST_CASE("certified steps on the benchmark") {
    const auto inst = cournot::generate_instance(42, cournot::CournotParams{});
    const auto game = cournot::make_game(inst);
    const auto graph = cournot::make_graph(inst);
    const double theta = cocoercivity_theta(estimate_beta(game), graph);
    CHECK(theta <= 1.0 / 6.0);
    const auto steps = certified_step_sizes(game, graph, theta);
    const Eigen::MatrixXd phi = assemble_phi(game, graph, steps);
    const double lmin = min_eigenvalue(phi);
    CHECK(lmin >= steps.gamma * (1 - 1e-6));
    CHECK(1.0 / lmin < 2.0 * theta);
    CHECK_THROWS_AS(certified_step_sizes(game, graph, 0.0), NumericalError);
}

TEST_CASE("stacked state helpers") {
    const auto game = testing::affine_game(triangle_spec());
    std::mt19937_64 rng(2);
    const auto s = testing::random_state(game, rng);
    const auto back = StackedState::unflatten(s.flatten(), 6, 6);
    CHECK(back.x == s.x);
    CHECK(back.lambda == s.lambda);
    CHECK_THROWS_AS(StackedState::unflatten(s.flatten(), 6, 5), ConfigError);
    const Eigen::MatrixXd phi = assemble_phi(game, triangle(), max_step_sizes(game, triangle(), 1.0));
    CHECK(phi_distance(phi, s, s) == 0.0);
    CHECK(phi_distance(phi, s, StackedState::zeros(game)) > 0.0);
}
