#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "sgne/errors.hpp"
#include "sgne/graph.hpp"
#include "support.hpp"

using namespace sgne;

namespace {

Eigen::VectorXd sorted_eigenvalues(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    return eig.eigenvalues();
}

} // namespace

TEST_CASE("triangle laplacian") {
    const auto g = build_dual_graph({{0, 1}, {1, 2}, {2, 0}}, 3);
    Eigen::Matrix3d expected;
    expected << 2, -1, -1, -1, 2, -1, -1, -1, 2;
    CHECK(g.laplacian() == expected);
    const auto ev = sorted_eigenvalues(g.laplacian());
    CHECK(ev[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(ev[1] == doctest::Approx(3.0));
    CHECK(ev[2] == doctest::Approx(3.0));
    CHECK(g.algebraic_connectivity() == doctest::Approx(3.0));
}

TEST_CASE("weighted path") {
    const auto g = build_dual_graph({{0, 1, 2.5}}, 2);
    CHECK(g.degree(0) == 2.5);
    const auto ev = sorted_eigenvalues(g.laplacian());
    CHECK(ev[1] == doctest::Approx(5.0));
    CHECK(max_weighted_degree(g) == 2.5);
}

TEST_CASE("benchmark graph") {
    const auto edges = benchmark_edges(20);
    CHECK(edges.size() == 22);
    const auto g = build_dual_graph(edges, 20);
    const auto& d = g.degrees();
    CHECK(std::count(d.begin(), d.end(), 2.0) == 16);
    CHECK(std::count(d.begin(), d.end(), 3.0) == 4);
    CHECK(max_weighted_degree(g) == 3.0);
    CHECK(g.degree(1) == 3.0);
    CHECK(g.degree(14) == 3.0);
    CHECK(g.algebraic_connectivity() > 0.0);
    CHECK(benchmark_edges(2).size() == 1);
    CHECK(benchmark_edges(5).size() == 5);
}

TEST_CASE("star hub degree") {
    const auto g = build_dual_graph({{0, 1}, {0, 2}, {0, 3}, {0, 4}}, 5);
    CHECK(max_weighted_degree(g) == 4.0);
    CHECK(g.neighbors(0).size() == 4);
}

TEST_CASE("blockwise laplacian matches the dense kronecker product") {
    const auto g = build_dual_graph(benchmark_edges(20), 20);
    std::mt19937_64 rng(2);
    for (Eigen::Index m : {1, 3, 7}) {
        const Eigen::VectorXd lambda = testing::random_vector(20 * m, rng);
        const Eigen::VectorXd dense = testing::kron_identity(g.laplacian(), m) * lambda;
        CHECK((laplacian_apply(g, lambda) - dense).cwiseAbs().maxCoeff() < 1e-13);
    }
    // Consensus lies in the kernel.
    Eigen::VectorXd consensus(20 * 3);
    for (int i = 0; i < 20; ++i)
        consensus.segment(3 * i, 3) = Eigen::Vector3d(0.3, -1.0, 2.0);
    CHECK(laplacian_apply(g, consensus).norm() == 0.0);
    CHECK_THROWS_AS(laplacian_apply(g, Eigen::VectorXd::Zero(21)), ConfigError);
}

TEST_CASE("laplacian is cocoercive with constant 1/(2 d*)") {
    const auto g = build_dual_graph(benchmark_edges(20), 20);
    std::mt19937_64 rng(8);
    const double c = 1.0 / (2.0 * max_weighted_degree(g));
    for (int t = 0; t < 1000; ++t) {
        const Eigen::VectorXd u = testing::random_vector(40, rng);
        const Eigen::VectorXd lu = laplacian_apply(g, u);
        REQUIRE(lu.dot(u) >= c * lu.squaredNorm() - 1e-12);
    }
}

TEST_CASE("graph validation") {
    CHECK_THROWS_AS(build_dual_graph({{0, 1}}, 3), ConfigError);            // disconnected
    CHECK_THROWS_AS(build_dual_graph({{0, 0}, {0, 1}}, 2), ConfigError);    // self-loop
    CHECK_THROWS_AS(build_dual_graph({{0, 1}, {1, 0}}, 2), ConfigError);    // duplicate
    CHECK_THROWS_AS(build_dual_graph({{0, 5}}, 2), ConfigError);            // out of range
    CHECK_THROWS_AS(build_dual_graph({{0, 1, -1.0}}, 2), ConfigError);
    CHECK_THROWS_AS(build_dual_graph({}, 0), ConfigError);
    CHECK_NOTHROW(build_dual_graph({}, 1));
}

TEST_CASE("edge list text") {
    std::istringstream in("# ring\n0 1\n1 2 0.5\n\n2 0  # closing edge\n");
    const auto edges = parse_edge_list(in);
    REQUIRE(edges.size() == 3);
    CHECK(edges[0].weight == 1.0);
    CHECK(edges[1].weight == 0.5);
    std::istringstream again(format_edge_list(edges));
    CHECK(parse_edge_list(again) == edges);

    std::istringstream bad1("0\n");
    CHECK_THROWS_AS(parse_edge_list(bad1), ConfigError);
    std::istringstream bad2("0 1 x\n");
    CHECK_THROWS_AS(parse_edge_list(bad2), ConfigError);
    std::istringstream bad3("-1 2\n");
    CHECK_THROWS_AS(parse_edge_list(bad3), ConfigError);
    std::istringstream bad4("0 1 1 7\n");
    CHECK_THROWS_AS(parse_edge_list(bad4), ConfigError);
}
