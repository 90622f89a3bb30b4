#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "sgne/game.hpp"
#include "sgne/graph.hpp"

namespace sgne::cournot {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

/// Generator settings for the networked Cournot market.
struct CournotParams {
    std::size_t companies = 20;
    std::size_t markets = 7;
    Range capacity{1.0, 1.5};       ///< gamma_i coordinates
    Range market_cap{0.5, 1.0};     ///< b_j
    Range quadratic_cost{1.0, 8.0}; ///< pi_i
    Range linear_cost{0.1, 0.6};    ///< q_i coordinates
    Range price_intercept{2.0, 4.0};///< P-bar_j
    double demand_mean = 0.8;
    double demand_variance = 0.1;
    bool demand_clamp = false;       ///< clamp slope draws at zero
    std::size_t min_markets_per_company = 1;
    std::size_t max_markets_per_company = 3;
    std::size_t min_companies_per_market = 2;
    /// false: markets still set prices but impose no shared capacity
    /// (a plain Nash game).
    bool shared_constraints = true;

    void validate() const;
};

nlohmann::json to_json(const CournotParams& params);
CournotParams params_from_json(const nlohmann::json& doc);

/// Company-market participation: incidence(i, j) = 1 iff company i sells in market j.
using Incidence = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

/// All sampled numbers of one benchmark instance.
struct CournotInstance {
    CournotParams params;
    std::uint64_t seed = 0;
    Incidence incidence;
    std::vector<Eigen::MatrixXd> participation;  ///< A_i: m x n_i selection
    std::vector<Eigen::VectorXd> capacity;       ///< gamma_i
    Eigen::VectorXd market_cap;                  ///< b
    Eigen::VectorXd quadratic_cost;              ///< pi (N)
    std::vector<Eigen::VectorXd> linear_cost;    ///< q_i
    Eigen::VectorXd price_intercept;             ///< P-bar
    std::vector<Edge> edges;

    std::size_t total_dim() const;
    std::size_t offset(std::size_t i) const;
};

/// Draws every instance parameter from its range with a stream seeded by
/// `seed`. A given incidence is used verbatim; otherwise a random one with
/// per-company and per-market participation bounds is drawn.
/// Throws ConfigError if a company serves no market.
CournotInstance generate_instance(std::uint64_t seed, const CournotParams& params,
                                  const std::optional<Incidence>& incidence = std::nullopt);

GameDefinition make_game(const CournotInstance& instance);
DualGraph make_graph(const CournotInstance& instance);

/// grad_{x_i} of c_i(x_i) - (P-bar - D(xi) A x)^T A_i x_i with D(xi) = diag(xi).
Eigen::VectorXd sampled_gradient(const CournotInstance& instance, std::size_t i, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& slopes);

/// Same with the slopes replaced by their exact mean.
Eigen::VectorXd exact_gradient(const CournotInstance& instance, std::size_t i, const Eigen::VectorXd& x);

/// Sampled payoff f_i(x, xi); used by finite-difference checks.
double sampled_cost(const CournotInstance& instance, std::size_t i, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& slopes);

/// Matrix M of the affine expected pseudogradient F(x) = M x + c.
Eigen::MatrixXd pseudogradient_matrix(const CournotInstance& instance);

struct MonotonicityConstants {
    double mu = 0.0;        ///< lambda_min of sym(M)
    double lipschitz = 0.0; ///< ||M||_2
    double beta = 0.0;      ///< mu / L^2
};

/// Throws NumericalError when mu <= 0.
MonotonicityConstants strong_monotonicity_constants(const CournotInstance& instance);

nlohmann::json to_json(const CournotInstance& instance);
CournotInstance instance_from_json(const nlohmann::json& doc);

/// FNV-1a 64 over the canonical serialization, as 16 hex digits.
std::string instance_hash(const CournotInstance& instance);

inline constexpr const char* kInstanceSchema = "sgne.cournot-instance/1";

} // namespace sgne::cournot
