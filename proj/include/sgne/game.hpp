#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "sgne/sampling.hpp"

namespace sgne {

/// Local feasible set Omega_i = [lower, upper] (componentwise).
struct Box {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    std::size_t dim() const { return static_cast<std::size_t>(lower.size()); }
    bool contains(const Eigen::VectorXd& v, double tol = 0.0) const;
};

/// grad_{x_i} f_i(x, xi_i) for agent i at the stacked decision x.
using SampledGradient =
    std::function<Eigen::VectorXd(std::size_t agent, const Eigen::VectorXd& x, const SamplePoint& xi)>;

/// E[grad_{x_i} f_i(x, xi)].
using ExactGradient = std::function<Eigen::VectorXd(std::size_t agent, const Eigen::VectorXd& x)>;

/// Numeric part of an instance: everything except the cost oracles.
struct GameData {
    std::vector<Box> boxes;
    std::vector<Eigen::MatrixXd> blocks;  ///< A_i, each m x n_i
    Eigen::VectorXd shared_bound;         ///< global b (m)
};

nlohmann::json to_json(const GameData& data);
GameData game_data_from_json(const nlohmann::json& doc);

/// A stochastic generalized Nash game with box-indicator local costs and
/// affine shared constraints sum_i A_i x_i <= b.
///
/// Immutable after construction. Oracles must be reentrant.
class GameDefinition {
public:
    struct Oracles {
        SampledGradient sampled;
        std::optional<ExactGradient> exact;
        /// The sampled gradient is affine in the sample, so the batch average
        /// equals the gradient at the batch-mean sample.
        bool affine_in_sample = false;
    };

    GameDefinition(GameData data, SampleDistribution distribution, Oracles oracles);

    std::size_t num_agents() const { return data_.boxes.size(); }
    std::size_t num_constraints() const { return static_cast<std::size_t>(data_.shared_bound.size()); }
    std::size_t total_dim() const { return offsets_.back(); }
    std::size_t dim(std::size_t i) const { return data_.boxes[i].dim(); }
    std::size_t offset(std::size_t i) const { return offsets_[i]; }
    std::size_t sample_dim() const { return distribution_.dim(); }

    const GameData& data() const { return data_; }
    const Box& box(std::size_t i) const { return data_.boxes[i]; }
    const Eigen::MatrixXd& block(std::size_t i) const { return data_.blocks[i]; }
    const Eigen::VectorXd& shared_bound() const { return data_.shared_bound; }
    /// b_i = b / N.
    const Eigen::VectorXd& local_bound() const { return local_bound_; }
    const SampleDistribution& distribution() const { return distribution_; }

    bool has_exact() const { return oracles_.exact.has_value(); }
    bool affine_in_sample() const { return oracles_.affine_in_sample; }

    Eigen::VectorXd sampled_partial(std::size_t i, const Eigen::VectorXd& x, const SamplePoint& xi) const;
    Eigen::VectorXd exact_partial(std::size_t i, const Eigen::VectorXd& x) const;

    auto agent_slice(const Eigen::VectorXd& x, std::size_t i) const {
        return x.segment(static_cast<Eigen::Index>(offsets_[i]), static_cast<Eigen::Index>(dim(i)));
    }
    auto agent_slice(Eigen::VectorXd& x, std::size_t i) const {
        return x.segment(static_cast<Eigen::Index>(offsets_[i]), static_cast<Eigen::Index>(dim(i)));
    }

    void check_decision(const Eigen::VectorXd& x) const;

    /// Global A = [A_1, ..., A_N] (m x n).
    Eigen::MatrixXd global_matrix() const;

private:
    GameData data_;
    SampleDistribution distribution_;
    Oracles oracles_;
    std::vector<std::size_t> offsets_;
    Eigen::VectorXd local_bound_;
};

/// col_i grad_{x_i} f_i(x, xi_i), one realization per agent.
Eigen::VectorXd pseudogradient_sa(const GameDefinition& game, const Eigen::VectorXd& x,
                                  const SampleProfile& xi);

/// Batch average of pseudogradient_sa; batch[t][i] is agent i's t-th draw.
Eigen::VectorXd pseudogradient_saa(const GameDefinition& game, const Eigen::VectorXd& x,
                                   std::span<const SampleProfile> batch);

/// col_i E[grad_{x_i} f_i(x, xi)]. Throws UnsupportedOperation without an exact oracle.
Eigen::VectorXd pseudogradient_exact(const GameDefinition& game, const Eigen::VectorXd& x);

/// A x - b.
Eigen::VectorXd constraint_violation(const GameDefinition& game, const Eigen::VectorXd& x);

} // namespace sgne
