#include "sgne/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <queue>
#include <set>
#include <sstream>

#include "sgne/errors.hpp"

namespace sgne {

DualGraph build_dual_graph(const std::vector<Edge>& edges, std::size_t num_nodes) {
    if (num_nodes == 0)
        throw ConfigError("dual graph: at least one node is required");
    DualGraph g;
    g.neighbors_.resize(num_nodes);
    g.degrees_.assign(num_nodes, 0.0);

    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const Edge& e : edges) {
        if (e.i >= num_nodes || e.j >= num_nodes)
            throw ConfigError("dual graph: edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) +
                              ") references a node outside [0, " + std::to_string(num_nodes) + ")");
        if (e.i == e.j)
            throw ConfigError("dual graph: self-loop at node " + std::to_string(e.i));
        if (!(e.weight > 0.0) || !std::isfinite(e.weight))
            throw ConfigError("dual graph: edge weights must be positive and finite");
        if (!seen.emplace(std::min(e.i, e.j), std::max(e.i, e.j)).second)
            throw ConfigError("dual graph: duplicate edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) + ")");
        g.neighbors_[e.i].push_back({e.j, e.weight});
        g.neighbors_[e.j].push_back({e.i, e.weight});
        g.degrees_[e.i] += e.weight;
        g.degrees_[e.j] += e.weight;
    }
    for (auto& nb : g.neighbors_)
        std::sort(nb.begin(), nb.end(), [](const auto& a, const auto& b) { return a.node < b.node; });
    g.edges_ = edges;

    std::vector<bool> visited(num_nodes, false);
    std::queue<std::size_t> frontier;
    frontier.push(0);
    visited[0] = true;
    std::size_t reached = 1;
    while (!frontier.empty()) {
        const auto u = frontier.front();
        frontier.pop();
        for (const auto& nb : g.neighbors_[u]) {
            if (!visited[nb.node]) {
                visited[nb.node] = true;
                ++reached;
                frontier.push(nb.node);
            }
        }
    }
    if (reached != num_nodes)
        throw ConfigError("dual graph: graph is disconnected (" + std::to_string(reached) + " of " +
                          std::to_string(num_nodes) + " nodes reachable from node 0)");
    return g;
}

Eigen::MatrixXd DualGraph::adjacency() const {
    const auto n = static_cast<Eigen::Index>(num_nodes());
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (const Edge& e : edges_) {
        w(static_cast<Eigen::Index>(e.i), static_cast<Eigen::Index>(e.j)) = e.weight;
        w(static_cast<Eigen::Index>(e.j), static_cast<Eigen::Index>(e.i)) = e.weight;
    }
    return w;
}

Eigen::MatrixXd DualGraph::laplacian() const {
    const Eigen::MatrixXd w = adjacency();
    Eigen::MatrixXd l = -w;
    l.diagonal() = w.rowwise().sum();
    return l;
}

double DualGraph::algebraic_connectivity() const {
    if (num_nodes() < 2)
        return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(laplacian(), Eigen::EigenvaluesOnly);
    return eig.eigenvalues()[1];
}

Eigen::VectorXd laplacian_apply(const DualGraph& graph, const Eigen::VectorXd& lambda) {
    const std::size_t n = graph.num_nodes();
    if (static_cast<std::size_t>(lambda.size()) % n != 0)
        throw ConfigError("laplacian_apply: length " + std::to_string(lambda.size()) +
                          " is not a multiple of the node count " + std::to_string(n));
    const auto m = lambda.size() / static_cast<Eigen::Index>(n);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(lambda.size());
    for (std::size_t i = 0; i < n; ++i) {
        auto oi = out.segment(static_cast<Eigen::Index>(i) * m, m);
        const auto li = lambda.segment(static_cast<Eigen::Index>(i) * m, m);
        for (const auto& nb : graph.neighbors(i))
            oi += nb.weight * (li - lambda.segment(static_cast<Eigen::Index>(nb.node) * m, m));
    }
    return out;
}

double max_weighted_degree(const DualGraph& graph) {
    return *std::max_element(graph.degrees().begin(), graph.degrees().end());
}

std::vector<Edge> parse_edge_list(std::istream& in) {
    std::vector<Edge> edges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        std::istringstream ls(line);
        long long i = 0, j = 0;
        if (!(ls >> i)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos)
                continue;
            throw ConfigError("edge list line " + std::to_string(lineno) + ": expected `i j [weight]`");
        }
        if (!(ls >> j) || i < 0 || j < 0)
            throw ConfigError("edge list line " + std::to_string(lineno) + ": expected two nonnegative node indices");
        double w = 1.0;
        if (!(ls >> w)) {
            if (!ls.eof())
                throw ConfigError("edge list line " + std::to_string(lineno) + ": malformed weight");
            w = 1.0;
        }
        std::string rest;
        if (ls >> rest)
            throw ConfigError("edge list line " + std::to_string(lineno) + ": trailing tokens");
        edges.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), w});
    }
    return edges;
}

std::string format_edge_list(const std::vector<Edge>& edges) {
    std::string out;
    char buf[64];
    for (const Edge& e : edges) {
        out += std::to_string(e.i) + ' ' + std::to_string(e.j) + ' ';
        const auto res = std::to_chars(buf, buf + sizeof buf, e.weight);
        out.append(buf, res.ptr);
        out += '\n';
    }
    return out;
}

std::vector<Edge> benchmark_edges(std::size_t num_nodes) {
    std::vector<Edge> edges;
    if (num_nodes < 2)
        return edges;
    if (num_nodes == 2)
        return {{0, 1, 1.0}};
    for (std::size_t i = 0; i < num_nodes; ++i)
        edges.push_back({i, (i + 1) % num_nodes, 1.0});
    if (num_nodes == 20) {
        edges.push_back({1, 14, 1.0});
        edges.push_back({5, 12, 1.0});
    }
    return edges;
}

} // namespace sgne
