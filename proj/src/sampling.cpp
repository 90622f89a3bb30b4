#include "sgne/sampling.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "sgne/errors.hpp"
#include "sgne/game.hpp"

namespace sgne {

namespace {

// Offsets the channel id for batch-mean draws so they never share an
// engine with explicit draws at the same key.
constexpr std::uint32_t kMeanChannelOffset = 64;

std::mt19937_64 keyed_engine(std::uint64_t seed, std::size_t agent, std::size_t k, std::uint32_t channel) {
    const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(seed), hi(seed), lo(agent), hi(agent), lo(k), hi(k), channel, 0x5347u};
    return std::mt19937_64(seq);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

SamplePoint draw_one(std::mt19937_64& engine, const SampleDistribution& dist) {
    std::normal_distribution<double> standard(0.0, 1.0);
    SamplePoint v(dist.location.size());
    for (Eigen::Index j = 0; j < v.size(); ++j) {
        v[j] = dist.location[j] + std::sqrt(dist.variance[j]) * standard(engine);
        if (dist.clamp_at_zero && v[j] < 0.0)
            v[j] = 0.0;
    }
    return v;
}

} // namespace

SampleDistribution SampleDistribution::normal(std::size_t dim, double mean, double var, bool clamp) {
    SampleDistribution d;
    d.location = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), mean);
    d.variance = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), var);
    d.clamp_at_zero = clamp;
    d.validate();
    return d;
}

Eigen::VectorXd SampleDistribution::mean() const {
    if (!clamp_at_zero)
        return location;
    // E[max(X, 0)] for X ~ N(mu, s^2)
    Eigen::VectorXd m(location.size());
    for (Eigen::Index j = 0; j < m.size(); ++j) {
        const double mu = location[j];
        const double s = std::sqrt(variance[j]);
        m[j] = s == 0.0 ? std::max(mu, 0.0) : mu * normal_cdf(mu / s) + s * normal_pdf(mu / s);
    }
    return m;
}

void SampleDistribution::validate() const {
    if (location.size() != variance.size())
        throw ConfigError("sample distribution: location and variance differ in length");
    if (!location.allFinite() || !variance.allFinite() || (variance.array() < 0.0).any())
        throw ConfigError("sample distribution: variances must be finite and nonnegative");
}

void BatchSchedule::validate() const {
    if (!(c > 0.0) || !(k0 > 0.0) || !(a > 0.0))
        throw ConfigError("batch schedule: c, k0 and a must be positive");
}

std::size_t batch_size(const BatchSchedule& schedule, std::size_t k) {
    const double raw = schedule.c * std::pow(static_cast<double>(k) + schedule.k0, schedule.a + 1.0);
    // Guard against ceil(16.000000000000004) style round-off on exact powers.
    const double nearest = std::round(raw);
    const double s = std::abs(raw - nearest) <= 1e-9 * std::max(1.0, raw) ? nearest : std::ceil(raw);
    return std::max<std::size_t>(1, static_cast<std::size_t>(s));
}

void StepSchedule::validate() const {
    if (!(gamma0 > 0.0))
        throw ConfigError("step schedule: gamma0 must be positive");
    if (!(eta > 0.5 && eta <= 1.0))
        throw ConfigError("step schedule: eta must lie in (0.5, 1]");
    if (!(cap > 0.0))
        throw ConfigError("step schedule: cap must be positive");
}

double step_at(const StepSchedule& schedule, std::size_t k) {
    return std::min(schedule.gamma0 / std::pow(static_cast<double>(k) + 1.0, schedule.eta), schedule.cap);
}

SampleStream::SampleStream(std::uint64_t seed, SampleDistribution distribution)
    : seed_(seed), dist_(std::move(distribution)) {
    dist_.validate();
}

std::vector<SamplePoint> SampleStream::draw_batch(std::size_t agent, std::size_t k, std::size_t count,
                                                  Channel channel) const {
    auto engine = keyed_engine(seed_, agent, k, static_cast<std::uint32_t>(channel));
    std::vector<SamplePoint> out;
    out.reserve(count);
    for (std::size_t t = 0; t < count; ++t)
        out.push_back(draw_one(engine, dist_));
    return out;
}

SamplePoint SampleStream::draw(std::size_t agent, std::size_t k, std::size_t index, Channel channel) const {
    auto engine = keyed_engine(seed_, agent, k, static_cast<std::uint32_t>(channel));
    SamplePoint v;
    for (std::size_t t = 0; t <= index; ++t)
        v = draw_one(engine, dist_);
    return v;
}

SamplePoint SampleStream::draw_batch_mean(std::size_t agent, std::size_t k, std::size_t count,
                                          Channel channel) const {
    if (count == 0)
        throw ConfigError("draw_batch_mean: empty batch");
    if (!exact_batch_mean()) {
        SamplePoint sum = SamplePoint::Zero(static_cast<Eigen::Index>(dist_.dim()));
        for (const auto& s : draw_batch(agent, k, count, channel))
            sum += s;
        return sum / static_cast<double>(count);
    }
    auto engine = keyed_engine(seed_, agent, k, static_cast<std::uint32_t>(channel) + kMeanChannelOffset);
    std::normal_distribution<double> standard(0.0, 1.0);
    SamplePoint v(dist_.location.size());
    const double n = static_cast<double>(count);
    for (Eigen::Index j = 0; j < v.size(); ++j)
        v[j] = dist_.location[j] + std::sqrt(dist_.variance[j] / n) * standard(engine);
    return v;
}

SampleProfile SampleStream::draw_profile(std::size_t num_agents, std::size_t k, Channel channel) const {
    SampleProfile p;
    p.reserve(num_agents);
    for (std::size_t i = 0; i < num_agents; ++i)
        p.push_back(draw(i, k, 0, channel));
    return p;
}

ErrorMoments error_moments(const GameDefinition& game, const Eigen::VectorXd& x, const SampleStream& stream,
                           std::size_t batch, std::size_t trials) {
    if (!game.has_exact())
        throw UnsupportedOperation("error_moments: game has no exact pseudogradient");
    if (batch == 0 || trials == 0)
        throw ConfigError("error_moments: batch and trials must be positive");

    const Eigen::VectorXd exact = pseudogradient_exact(game, x);
    const auto n = exact.size();
    const std::size_t agents = game.num_agents();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(n);
    double second = 0.0;

    std::vector<SampleProfile> profiles(batch, SampleProfile(agents));
    for (std::size_t trial = 0; trial < trials; ++trial) {
        for (std::size_t i = 0; i < agents; ++i) {
            auto draws = stream.draw_batch(i, trial, batch, Channel::diagnostics);
            for (std::size_t t = 0; t < batch; ++t)
                profiles[t][i] = std::move(draws[t]);
        }
        const Eigen::VectorXd err = pseudogradient_saa(game, x, profiles) - exact;
        sum += err;
        sum_sq += err.cwiseProduct(err);
        second += err.squaredNorm();
    }

    const double t = static_cast<double>(trials);
    ErrorMoments out;
    out.trials = trials;
    out.second_moment = second / t;
    out.mean_error = sum / t;
    const Eigen::VectorXd var = (sum_sq / t - out.mean_error.cwiseProduct(out.mean_error)).cwiseMax(0.0);
    out.error_stddev = (var * (t / std::max(1.0, t - 1.0))).cwiseSqrt();
    return out;
}

double error_second_moment(const GameDefinition& game, const Eigen::VectorXd& x, const SampleStream& stream,
                           std::size_t batch, std::size_t trials) {
    return error_moments(game, x, stream, batch, trials).second_moment;
}

} // namespace sgne
