#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace sgne {

class GameDefinition;

/// One agent's realization of the random variable (a d-vector).
using SamplePoint = Eigen::VectorXd;

/// One draw per agent, indexed by agent.
using SampleProfile = std::vector<SamplePoint>;

/// Independent Gaussian law for each coordinate of a d-dimensional sample,
/// optionally clamped at zero.
///
/// The clamped law keeps draws economically meaningful (nonnegative price
/// slopes); `mean()` reports the exact mean of whichever law is in effect,
/// so expected-value oracles stay unbiased either way.
struct SampleDistribution {
    Eigen::VectorXd location;   ///< mean of the underlying normal
    Eigen::VectorXd variance;   ///< per-coordinate variance, >= 0
    bool clamp_at_zero = false;

    static SampleDistribution normal(std::size_t dim, double mean, double var,
                                     bool clamp = false);

    std::size_t dim() const { return static_cast<std::size_t>(location.size()); }
    Eigen::VectorXd mean() const;
    bool degenerate() const { return (variance.array() == 0.0).all(); }
    void validate() const;
};

/// Increasing batch sizes S_k = ceil(c (k + k0)^(a+1)).
struct BatchSchedule {
    double c = 1.0;
    double k0 = 1.0;
    double a = 1.0;

    void validate() const;
};

std::size_t batch_size(const BatchSchedule& schedule, std::size_t k);

/// Vanishing steps gamma_k = gamma0 / (k+1)^eta, never above `cap` (2 beta).
struct StepSchedule {
    double gamma0 = 0.0;
    double eta = 0.6;
    double cap = std::numeric_limits<double>::infinity();

    void validate() const;
};

double step_at(const StepSchedule& schedule, std::size_t k);

/// Sub-stream tag. Distinct channels at the same (agent, iteration) are
/// independent, e.g. the second forward evaluation of FBF.
enum class Channel : std::uint32_t {
    primary = 0,
    extra = 1,
    batch_mean = 2,
    batch_mean_extra = 3,
    diagnostics = 7,
};

/// Counter-based sample source. Every draw is a pure function of
/// (root seed, agent, iteration, channel, index), so iteration order and
/// threading never change the values.
class SampleStream {
public:
    SampleStream(std::uint64_t seed, SampleDistribution distribution);

    std::uint64_t seed() const { return seed_; }
    const SampleDistribution& distribution() const { return dist_; }

    std::vector<SamplePoint> draw_batch(std::size_t agent, std::size_t k, std::size_t count,
                                        Channel channel = Channel::primary) const;

    SamplePoint draw(std::size_t agent, std::size_t k, std::size_t index,
                     Channel channel = Channel::primary) const;

    /// True when the mean of S draws can be sampled exactly in one shot
    /// (unclamped normal: the mean is N(mu, var / S)).
    bool exact_batch_mean() const { return !dist_.clamp_at_zero; }

    /// Mean of `count` i.i.d. draws. Uses the closed-form law of the mean
    /// when available and falls back to explicit draws otherwise.
    SamplePoint draw_batch_mean(std::size_t agent, std::size_t k, std::size_t count,
                                Channel channel = Channel::primary) const;

    /// One draw per agent at iteration k.
    SampleProfile draw_profile(std::size_t num_agents, std::size_t k,
                               Channel channel = Channel::primary) const;

private:
    std::uint64_t seed_;
    SampleDistribution dist_;
};

struct ErrorMoments {
    double second_moment = 0.0;      ///< mean of ||F_SAA - F||^2
    Eigen::VectorXd mean_error;      ///< componentwise mean of F_SAA - F
    Eigen::VectorXd error_stddev;    ///< componentwise sample std of F_SAA - F
    std::size_t trials = 0;
};

/// Empirical moments of the SAA error eps = F_SAA(x, batch of S) - F(x),
/// using explicit per-sample draws (never the batch-mean shortcut).
ErrorMoments error_moments(const GameDefinition& game, const Eigen::VectorXd& x,
                           const SampleStream& stream, std::size_t batch, std::size_t trials);

double error_second_moment(const GameDefinition& game, const Eigen::VectorXd& x,
                           const SampleStream& stream, std::size_t batch, std::size_t trials);

} // namespace sgne
