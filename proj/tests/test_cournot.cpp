#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "sgne/cournot.hpp"
#include "sgne/errors.hpp"
#include "sgne/operators.hpp"
#include "support.hpp"

using namespace sgne;
using namespace sgne::cournot;

TEST_CASE("benchmark instance shape and ranges") {
    const CournotParams p;
    const auto inst = generate_instance(42, p);
    REQUIRE(inst.participation.size() == 20);
    for (std::size_t i = 0; i < 20; ++i) {
        const auto ni = inst.participation[i].cols();
        CHECK(ni >= 1);
        CHECK(ni <= 3);
        CHECK(inst.capacity[i].minCoeff() >= 1.0);
        CHECK(inst.capacity[i].maxCoeff() <= 1.5);
        CHECK(inst.linear_cost[i].minCoeff() >= 0.1);
        CHECK(inst.linear_cost[i].maxCoeff() <= 0.6);
        CHECK(inst.quadratic_cost[static_cast<Eigen::Index>(i)] >= 1.0);
        CHECK(inst.quadratic_cost[static_cast<Eigen::Index>(i)] <= 8.0);
    }
    CHECK((inst.incidence.colwise().sum().array() >= 2).all());
    CHECK(inst.market_cap.minCoeff() >= 0.5);
    CHECK(inst.market_cap.maxCoeff() <= 1.0);
    CHECK(inst.price_intercept.minCoeff() >= 2.0);
    CHECK(inst.price_intercept.maxCoeff() <= 4.0);
    CHECK(inst.edges.size() == 22);

    const auto game = make_game(inst);
    CHECK(game.num_constraints() == 7);
    CHECK(game.global_matrix().rowwise().sum().cast<int>() == inst.incidence.colwise().sum().transpose());
}

TEST_CASE("same seed, same instance") {
    const auto a = generate_instance(5, CournotParams{});
    const auto b = generate_instance(5, CournotParams{});
    const auto c = generate_instance(6, CournotParams{});
    CHECK(instance_hash(a) == instance_hash(b));
    CHECK(instance_hash(a) != instance_hash(c));
}

TEST_CASE("given incidence is used verbatim") {
    auto p = testing::small_params(2, 1);
    Incidence inc(2, 1);
    inc << 1, 1;
    const auto inst = generate_instance(0, p, inc);
    const auto game = make_game(inst);
    Eigen::MatrixXd a = game.global_matrix();
    CHECK(a.rows() == 1);
    CHECK(a.cols() == 2);
    CHECK(a(0, 0) == 1.0);
    CHECK(a(0, 1) == 1.0);

    Incidence idle(2, 1);
    idle << 1, 0;
    CHECK_THROWS_AS(generate_instance(0, p, idle), ConfigError);
    Incidence wrong(3, 1);
    wrong << 1, 1, 1;
    CHECK_THROWS_AS(generate_instance(0, p, wrong), ConfigError);
}

TEST_CASE("hand computed gradient") {
    // Two companies in one market, slopes fixed at 0.5.
    auto p = testing::small_params(2, 1);
    Incidence inc(2, 1);
    inc << 1, 1;
    auto inst = generate_instance(0, p, inc);
    inst.quadratic_cost << 2.0, 3.0;
    inst.linear_cost = {Eigen::VectorXd::Constant(1, 0.2), Eigen::VectorXd::Constant(1, 0.4)};
    inst.price_intercept = Eigen::VectorXd::Constant(1, 3.0);
    const Eigen::VectorXd x = Eigen::Vector2d(0.5, 0.25);
    const Eigen::VectorXd d = Eigen::VectorXd::Constant(1, 0.5);
    // 2 pi_i x_i + q_i - (P - d (x1 + x2)) + d x_i
    CHECK(sampled_gradient(inst, 0, x, d)[0] == doctest::Approx(2 * 2 * 0.5 + 0.2 - (3 - 0.5 * 0.75) + 0.5 * 0.5));
    CHECK(sampled_gradient(inst, 1, x, d)[0] == doctest::Approx(2 * 3 * 0.25 + 0.4 - (3 - 0.5 * 0.75) + 0.5 * 0.25));
    CHECK(sampled_cost(inst, 0, x, d) == doctest::Approx(2 * 0.25 + 0.2 * 0.5 - (3 - 0.5 * 0.75) * 0.5));
}

TEST_CASE("gradient matches finite differences of the cost") {
    const auto inst = generate_instance(3, CournotParams{});
    const auto game = make_game(inst);
    std::mt19937_64 rng(5);
    const Eigen::VectorXd x = testing::random_in_box(game, rng);
    const Eigen::VectorXd slopes = testing::random_vector(7, rng, 0.5, 1.1);
    constexpr double h = 1e-6;
    for (std::size_t i = 0; i < 20; ++i) {
        const Eigen::VectorXd g = sampled_gradient(inst, i, x, slopes);
        for (Eigen::Index c = 0; c < g.size(); ++c) {
            Eigen::VectorXd xp = x, xm = x;
            xp[static_cast<Eigen::Index>(game.offset(i)) + c] += h;
            xm[static_cast<Eigen::Index>(game.offset(i)) + c] -= h;
            const double fd = (sampled_cost(inst, i, xp, slopes) - sampled_cost(inst, i, xm, slopes)) / (2 * h);
            REQUIRE(std::abs(fd - g[c]) < 1e-6);
        }
    }
}

TEST_CASE("sampled gradient averages to the exact one") {
    const auto inst = generate_instance(11, testing::small_params(4, 3));
    const auto game = make_game(inst);
    std::mt19937_64 rng(6);
    const Eigen::VectorXd x = testing::random_in_box(game, rng);
    const SampleStream s(2, game.distribution());
    constexpr std::size_t n = 100000;
    for (std::size_t i = 0; i < game.num_agents(); ++i) {
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(game.dim(i)));
        Eigen::VectorXd sq = sum;
        for (std::size_t t = 0; t < n; ++t) {
            const Eigen::VectorXd g = sampled_gradient(inst, i, x, s.draw(i, t, 0));
            sum += g;
            sq += g.cwiseProduct(g);
        }
        const Eigen::VectorXd mean = sum / n;
        const Eigen::VectorXd sd = (sq / n - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt();
        const Eigen::VectorXd err = (mean - exact_gradient(inst, i, x)).cwiseAbs();
        for (Eigen::Index c = 0; c < err.size(); ++c)
            CHECK(err[c] <= 3.0 * sd[c] / std::sqrt(double(n)) + 1e-14);
    }
}

TEST_CASE("strong monotonicity across seeds") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto c = strong_monotonicity_constants(generate_instance(seed, CournotParams{}));
        REQUIRE(c.mu > 0.0);
        CHECK(c.beta * c.lipschitz * c.lipschitz == doctest::Approx(c.mu));
    }
}

TEST_CASE("single company, single market constants") {
    auto p = testing::small_params(1, 1);
    p.quadratic_cost = {1.0, 1.0};
    p.min_companies_per_market = 1;
    const auto inst = generate_instance(0, p);
    // M = 2 pi + 2 d-bar.
    const auto c = strong_monotonicity_constants(inst);
    CHECK(c.mu == doctest::Approx(2.0 + 2 * 0.8));
    CHECK(c.lipschitz == doctest::Approx(2.0 + 2 * 0.8));
}

TEST_CASE("pseudogradient matrix is the jacobian of the exact oracle") {
    const auto inst = generate_instance(13, CournotParams{});
    const auto game = make_game(inst);
    CHECK((affine_jacobian(game) - pseudogradient_matrix(inst)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero production is a strict interior point of the shared constraints") {
    const auto inst = generate_instance(42, CournotParams{});
    const auto game = make_game(inst);
    const Eigen::VectorXd x = project_omega(game, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(game.total_dim())));
    CHECK(constraint_violation(game, x).maxCoeff() < 0.0);
}

TEST_CASE("instance json round trip") {
    const auto inst = generate_instance(21, CournotParams{});
    const auto back = instance_from_json(nlohmann::json::parse(to_json(inst).dump()));
    CHECK(instance_hash(back) == instance_hash(inst));
    CHECK(back.incidence == inst.incidence);
    CHECK(back.edges == inst.edges);

    auto doc = to_json(inst);
    doc["schema"] = "other";
    CHECK_THROWS_AS(instance_from_json(doc), ConfigError);
    doc = to_json(inst);
    doc["companies"][0]["capacity"] = std::vector<double>{1.0, 1.0, 1.0, 1.0};
    CHECK_THROWS_AS(instance_from_json(doc), ConfigError);
}

TEST_CASE("parameter validation") {
    CournotParams p;
    p.capacity = {2.0, 1.0};
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = CournotParams{};
    p.demand_variance = -1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = CournotParams{};
    p.companies = 2;
    p.max_markets_per_company = 1;
    p.min_companies_per_market = 2;
    CHECK_THROWS_AS(generate_instance(0, p), ConfigError);
    CHECK(params_from_json(to_json(CournotParams{})).companies == 20);
}
