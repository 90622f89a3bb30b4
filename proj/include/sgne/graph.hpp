#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace sgne {

struct Edge {
    std::size_t i = 0;
    std::size_t j = 0;
    double weight = 1.0;

    friend bool operator==(const Edge&, const Edge&) = default;
};

/// Undirected, connected, weighted communication graph over the agents.
///
/// Carries the exchange of dual copies lambda_i and auxiliaries z_i.
/// Immutable once built.
class DualGraph {
public:
    struct Neighbor {
        std::size_t node;
        double weight;
    };

    std::size_t num_nodes() const { return neighbors_.size(); }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<Neighbor>& neighbors(std::size_t i) const { return neighbors_[i]; }
    double degree(std::size_t i) const { return degrees_[i]; }
    const std::vector<double>& degrees() const { return degrees_; }

    Eigen::MatrixXd adjacency() const;
    /// Dense L = D - W. Only meant for verification.
    Eigen::MatrixXd laplacian() const;
    /// Second-smallest eigenvalue of L.
    double algebraic_connectivity() const;

private:
    friend DualGraph build_dual_graph(const std::vector<Edge>& edges, std::size_t num_nodes);

    std::vector<Edge> edges_;
    std::vector<std::vector<Neighbor>> neighbors_;
    std::vector<double> degrees_;
};

/// Rejects out-of-range nodes, self-loops, duplicate edges, nonpositive
/// weights and disconnected graphs (ConfigError).
DualGraph build_dual_graph(const std::vector<Edge>& edges, std::size_t num_nodes);

/// (L kron I_m) lambda, computed blockwise; m = lambda.size() / N.
Eigen::VectorXd laplacian_apply(const DualGraph& graph, const Eigen::VectorXd& lambda);

double max_weighted_degree(const DualGraph& graph);

/// `i j weight` per line, 0-based. Blank lines and `#` comments are skipped;
/// a missing weight means 1.
std::vector<Edge> parse_edge_list(std::istream& in);
std::string format_edge_list(const std::vector<Edge>& edges);

/// N-cycle; for N == 20 the extra chords between agents 2-15 and 6-13
/// (1-based labels) are added.
std::vector<Edge> benchmark_edges(std::size_t num_nodes);

} // namespace sgne
